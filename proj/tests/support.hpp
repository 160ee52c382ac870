#pragma once

// Helpers shared by the unit tests.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "drivemp/trace.hpp"

namespace drivemp::testing {

inline DrivingTrace make_trace(std::vector<double> theta, std::vector<double> v, std::vector<double> delta,
                               std::string id = "t") {
    DrivingTrace t;
    t.id = std::move(id);
    for (std::size_t i = 0; i < theta.size(); ++i) t.timestamps.push_back(grid_time(0.0, i));
    t.theta = std::move(theta);
    t.v = std::move(v);
    t.delta = std::move(delta);
    return t;
}

/// Trace whose course angle is the running sum of `dtheta` (dtheta[0] is ignored).
inline DrivingTrace trace_from_dtheta(const std::vector<double>& dtheta, double v = 40.0, std::string id = "t") {
    std::vector<double> theta(dtheta.size(), 0.0);
    for (std::size_t i = 1; i < dtheta.size(); ++i) theta[i] = theta[i - 1] + dtheta[i];
    return make_trace(theta, std::vector<double>(dtheta.size(), v), std::vector<double>(dtheta.size(), 0.0),
                      std::move(id));
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("drivemp_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace drivemp::testing
