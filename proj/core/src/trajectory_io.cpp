#include "piesn/trajectory_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace piesn {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_trajectory_csv(const Trajectory& traj,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << "t";
  for (Eigen::Index i = 0; i < traj.dim(); ++i) {
    out << ",u" << (i + 1);
  }
  out << "\n";
  for (Eigen::Index k = 0; k < traj.n_steps(); ++k) {
    out << format_double(static_cast<double>(k) * traj.dt);
    for (Eigen::Index i = 0; i < traj.dim(); ++i) {
      out << "," << format_double(traj.states(k, i));
    }
    out << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

Trajectory load_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open for reading: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty trajectory file: " + path.string());
  }
  Eigen::Index dim = 0;
  for (char c : line) {
    if (c == ',') ++dim;
  }
  if (dim < 1) {
    throw std::runtime_error("malformed trajectory header: " + path.string());
  }

  std::vector<double> times;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index col = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = std::stod(cell);
      if (col == 0) {
        times.push_back(v);
      } else {
        values.push_back(v);
      }
      ++col;
    }
    if (col != dim + 1) {
      throw std::runtime_error("row width mismatch in " + path.string());
    }
  }
  if (times.size() < 2) {
    throw std::runtime_error("trajectory needs at least 2 rows: " +
                             path.string());
  }
  Trajectory traj;
  traj.dt = times[1] - times[0];
  traj.states.resize(static_cast<Eigen::Index>(times.size()), dim);
  for (Eigen::Index k = 0; k < traj.states.rows(); ++k) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      traj.states(k, i) = values[static_cast<std::size_t>(k * dim + i)];
    }
  }
  return traj;
}

}  // namespace piesn
