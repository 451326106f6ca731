#include "piesn/optimizer.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>

namespace piesn {

std::string to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::gradient_tol: return "gradient_tol";
    case TerminationReason::max_iter: return "max_iter";
    case TerminationReason::line_search_failure: return "line_search_failure";
  }
  return "?";
}

namespace {

struct LineSearchResult {
  bool ok = false;
  double alpha = 0.0;
  double f = 0.0;
  Vec x;
  Vec grad;
};

// Minimizer of the quadratic through (lo, f_lo, g_lo) and (hi, f_hi),
// safeguarded to the interior of [lo, hi].
double interpolate(double lo, double f_lo, double g_lo, double hi, double f_hi) {
  const double d = hi - lo;
  const double denom = f_hi - f_lo - g_lo * d;
  double alpha = lo + 0.5 * d;  // bisection default
  if (std::abs(denom) > 1e-300) {
    const double cand = lo - 0.5 * g_lo * d * d / denom;
    const double lo_guard = std::min(lo, hi) + 0.05 * std::abs(d);
    const double hi_guard = std::max(lo, hi) - 0.05 * std::abs(d);
    if (std::isfinite(cand) && cand > lo_guard && cand < hi_guard) {
      alpha = cand;
    }
  }
  return alpha;
}

// Strong-Wolfe line search (bracket + zoom).
LineSearchResult line_search(const Objective& objective, const Vec& x0,
                             double f0, const Vec& g0, const Vec& dir,
                             const LbfgsConfig& cfg) {
  LineSearchResult best;
  const double dphi0 = g0.dot(dir);
  if (!(dphi0 < 0.0)) {
    return best;  // not a descent direction
  }
  int evals = 0;
  const auto eval = [&](double alpha, double& f, Vec& x, Vec& g) {
    x = x0 + alpha * dir;
    g.resize(x0.size());
    f = objective(x, g);
    ++evals;
  };

  const auto wolfe_ok = [&](double alpha, double f, const Vec& g) {
    return f <= f0 + cfg.wolfe_c1 * alpha * dphi0 &&
           std::abs(g.dot(dir)) <= cfg.wolfe_c2 * std::abs(dphi0);
  };

  struct Point {
    double alpha, f, dphi;
    Vec x, g;
  };

  const auto zoom = [&](Point lo, Point hi) {
    while (evals < cfg.max_line_search_steps) {
      const double alpha = interpolate(lo.alpha, lo.f, lo.dphi, hi.alpha, hi.f);
      Point p;
      p.alpha = alpha;
      eval(alpha, p.f, p.x, p.g);
      p.dphi = p.g.dot(dir);
      if (!std::isfinite(p.f) || p.f > f0 + cfg.wolfe_c1 * alpha * dphi0 ||
          p.f >= lo.f) {
        hi = std::move(p);
      } else {
        if (std::abs(p.dphi) <= cfg.wolfe_c2 * std::abs(dphi0)) {
          best.ok = true;
          best.alpha = p.alpha;
          best.f = p.f;
          best.x = std::move(p.x);
          best.grad = std::move(p.g);
          return;
        }
        if (p.dphi * (hi.alpha - lo.alpha) >= 0.0) {
          hi = lo;
        }
        lo = std::move(p);
      }
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) {
        break;
      }
    }
    // Fall back to the best sufficient-decrease point seen.
    if (lo.f < f0 && lo.alpha > 0.0) {
      best.ok = true;
      best.alpha = lo.alpha;
      best.f = lo.f;
      best.x = std::move(lo.x);
      best.grad = std::move(lo.g);
    }
  };

  Point prev{0.0, f0, dphi0, x0, g0};
  double alpha = 1.0;
  while (evals < cfg.max_line_search_steps) {
    Point cur;
    cur.alpha = alpha;
    eval(alpha, cur.f, cur.x, cur.g);
    cur.dphi = cur.g.dot(dir);
    if (!std::isfinite(cur.f) || cur.f > f0 + cfg.wolfe_c1 * alpha * dphi0 ||
        (prev.alpha > 0.0 && cur.f >= prev.f)) {
      zoom(std::move(prev), std::move(cur));
      return best;
    }
    if (std::abs(cur.dphi) <= cfg.wolfe_c2 * std::abs(dphi0)) {
      best.ok = true;
      best.alpha = cur.alpha;
      best.f = cur.f;
      best.x = std::move(cur.x);
      best.grad = std::move(cur.g);
      return best;
    }
    if (cur.dphi >= 0.0) {
      zoom(std::move(cur), std::move(prev));
      return best;
    }
    prev = std::move(cur);
    alpha *= 2.0;
  }
  return best;
}

}  // namespace

MinimizeResult minimize(const Objective& objective, const Vec& x0,
                        const LbfgsConfig& cfg,
                        const std::function<void(const Vec&, double)>& on_accept) {
  if (cfg.memory_pairs < 1 || !(cfg.wolfe_c1 > 0.0) ||
      !(cfg.wolfe_c1 < cfg.wolfe_c2) || !(cfg.wolfe_c2 < 1.0)) {
    throw std::invalid_argument("minimize: invalid L-BFGS configuration");
  }

  MinimizeResult result;
  Vec x = x0;
  Vec grad(x.size());
  double f = objective(x, grad);
  if (!std::isfinite(f) || !grad.allFinite()) {
    throw std::invalid_argument("minimize: non-finite objective at x0");
  }

  result.trace.iterations.push_back({f, grad.lpNorm<Eigen::Infinity>(), 0.0});

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;

  result.trace.termination = TerminationReason::max_iter;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= cfg.grad_tolerance) {
      result.trace.termination = TerminationReason::gradient_tol;
      break;
    }

    // Two-loop recursion.
    Vec q = grad;
    std::vector<double> alpha_coef(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha_coef[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha_coef[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const Vec& s = s_hist.back();
      const Vec& y = y_hist.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha_coef[i] - beta) * s_hist[i];
    }
    Vec dir = -q;

    LineSearchResult ls = line_search(objective, x, f, grad, dir, cfg);
    if (!ls.ok) {
      // Retry once with the steepest-descent direction before giving up.
      dir = -grad;
      ls = line_search(objective, x, f, grad, dir, cfg);
      if (!ls.ok) {
        result.trace.termination = TerminationReason::line_search_failure;
        break;
      }
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    const double dphi0 = grad.dot(dir);
    const double dphi_end = ls.grad.dot(dir);
    const Vec s = ls.x - x;
    const Vec y = ls.grad - grad;
    x = std::move(ls.x);
    f = ls.f;
    grad = std::move(ls.grad);

    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.memory_pairs) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    result.trace.iterations.push_back(
        {f, grad.lpNorm<Eigen::Infinity>(), ls.alpha, dphi0, dphi_end});
    if (on_accept) {
      on_accept(x, f);
    }

    if (grad.lpNorm<Eigen::Infinity>() <= cfg.grad_tolerance) {
      result.trace.termination = TerminationReason::gradient_tol;
      break;
    }
  }

  if (result.trace.iterations.size() == 1 &&
      result.trace.iterations[0].grad_inf_norm <= cfg.grad_tolerance) {
    result.trace.termination = TerminationReason::gradient_tol;
  }

  result.x = std::move(x);
  result.objective = f;
  return result;
}

double check_gradient(const Objective& objective, const Vec& x, double step,
                      int dim_limit, int n_directions) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("check_gradient: step must be > 0");
  }
  Vec analytic(x.size());
  objective(x, analytic);

  Vec dummy(x.size());
  const auto value = [&](const Vec& p) { return objective(p, dummy); };

  double worst = 0.0;
  const auto compare = [&](double fd, double an) {
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-10});
    worst = std::max(worst, std::abs(fd - an) / denom);
  };

  if (x.size() <= dim_limit) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Vec xp = x, xm = x;
      xp(i) += step;
      xm(i) -= step;
      compare((value(xp) - value(xm)) / (2.0 * step), analytic(i));
    }
  } else {
    std::mt19937_64 gen(0xd1ffULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < n_directions; ++k) {
      Vec d(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) d(i) = normal(gen);
      d.normalize();
      compare((value(x + step * d) - value(x - step * d)) / (2.0 * step),
              analytic.dot(d));
    }
  }
  return worst;
}

}  // namespace piesn
