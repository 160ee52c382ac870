#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "drivemp/error.hpp"

namespace drivemp {

inline constexpr double kSampleStep = 0.1;   // seconds
inline constexpr double kSampleRate = 10.0;  // Hz
inline constexpr double kStepTolerance = 1e-9;

/// Time of grid sample `i` relative to `t0`. Division keeps i/10 correctly rounded.
inline double grid_time(double t0, std::size_t i) { return t0 + static_cast<double>(i) / kSampleRate; }

/// One uniformly sampled recording: course angle (deg), speed (km/h), steering-wheel angle (deg).
struct DrivingTrace {
    std::string id;
    std::vector<double> timestamps;
    std::vector<double> theta;
    std::vector<double> v;
    std::vector<double> delta;

    std::size_t size() const { return timestamps.size(); }
};

/// O_t: course deviation and velocity at one sample.
struct PathPoint {
    double dtheta = 0.0;
    double v = 0.0;
};

/// Window of a motion primitive: `past` steps before t, the current step, `future` steps after.
/// past == -1 drops the current step as well as the past block.
struct MpWindowConfig {
    int past = 1;
    int future = 50;
    double dt = kSampleStep;

    void validate() const {
        if (past < -1) throw InputError("window: past steps must be >= -1");
        if (future < 1) throw InputError("window: future steps must be >= 1");
    }
    /// Samples required before t (t itself excluded).
    int history() const { return past > 0 ? past : 0; }
    /// Steps carried in the past+current block.
    int observed_steps() const { return past + 1; }
    /// Total samples covered by one window.
    int span() const { return history() + 1 + future; }
    /// Dimension of one training vector.
    int dimension() const { return 3 * observed_steps() + 3 * future; }
};

/// First difference of the course angle; the first entry is 0.
inline std::vector<double> course_deviation(std::span<const double> theta) {
    if (theta.empty()) throw InputError("course_deviation: empty series");
    std::vector<double> out(theta.size(), 0.0);
    for (std::size_t t = 1; t < theta.size(); ++t) out[t] = theta[t] - theta[t - 1];
    return out;
}

inline std::vector<PathPoint> path_points(const DrivingTrace& trace) {
    const auto dtheta = course_deviation(trace.theta);
    std::vector<PathPoint> out(trace.size());
    for (std::size_t t = 0; t < trace.size(); ++t) out[t] = {dtheta[t], trace.v[t]};
    return out;
}

struct ValidationReport {
    std::vector<std::string> issues;
    bool ok() const { return issues.empty(); }
};

inline ValidationReport validate_trace(const DrivingTrace& trace) {
    ValidationReport report;
    const std::size_t n = trace.timestamps.size();
    if (trace.theta.size() != n || trace.v.size() != n || trace.delta.size() != n) {
        report.issues.push_back("length mismatch: t=" + std::to_string(n) + " theta=" +
                                std::to_string(trace.theta.size()) + " v=" + std::to_string(trace.v.size()) +
                                " delta=" + std::to_string(trace.delta.size()));
        return report;
    }
    if (n < 2) report.issues.push_back("trace shorter than 2 samples");
    auto check_finite = [&](const std::vector<double>& series, const char* name) {
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (!std::isfinite(series[i])) {
                report.issues.push_back(std::string("non-finite at index ") + std::to_string(i) + " (" + name + ")");
                return;
            }
        }
    };
    check_finite(trace.timestamps, "t");
    check_finite(trace.theta, "theta");
    check_finite(trace.v, "v");
    check_finite(trace.delta, "delta");
    for (std::size_t i = 1; i < n; ++i) {
        const double step = trace.timestamps[i] - trace.timestamps[i - 1];
        if (std::abs(step - kSampleStep) > kStepTolerance) {
            report.issues.push_back("non-uniform step at index " + std::to_string(i));
            break;
        }
    }
    return report;
}

inline void require_valid(const DrivingTrace& trace) {
    const auto report = validate_trace(trace);
    if (!report.ok()) throw InputError("invalid trace '" + trace.id + "': " + report.issues.front());
}

}  // namespace drivemp
