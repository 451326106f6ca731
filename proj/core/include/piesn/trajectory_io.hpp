#pragma once

#include <filesystem>
#include <string>

#include "piesn/dynamics.hpp"

namespace piesn {

// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double v);

// CSV schema: header "t,u1,...,uN", one row per step.
void save_trajectory_csv(const Trajectory& traj,
                         const std::filesystem::path& path);
Trajectory load_trajectory_csv(const std::filesystem::path& path);

}  // namespace piesn
