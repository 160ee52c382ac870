#pragma once

// Synthetic driving corpus. Courses are built from three maneuver regimes: cruising on
// straights, quick direction corrections at high speed and slow sharp turns. Steering follows a
// kinematic bicycle law with understeer, evaluated on the path a regime-dependent lead time
// ahead, plus slowly varying driver noise whose level also depends on the regime.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "drivemp/ingest.hpp"
#include "drivemp/trace.hpp"

namespace drivemp {

/// An anticipated turn is a sharp turn that follows a correction: the driver, already busy
/// steering, sets up for it earlier than for a turn entered from a calm straight.
enum class Regime { Cruise = 0, Correction = 1, SharpTurn = 2, AnticipatedTurn = 3 };

inline bool is_turn(Regime r) { return r == Regime::SharpTurn || r == Regime::AnticipatedTurn; }

struct RegimeHabit {
    double lead_s;       // how far ahead the driver steers for
    double gain;         // steering gain relative to the kinematic law
    double noise_deg;    // stationary std of the driver noise
};

struct ScenarioConfig {
    int traces = 8;
    double trace_minutes = 5.0;
    bool noise = true;

    // Maneuver mix (relative frequencies of the events between straights) and their ranges.
    double p_correction = 0.5;
    double p_sharp = 0.5;
    std::array<double, 2> straight_s{3.0, 6.0};
    std::array<double, 2> cruise_kmh{50.0, 56.0};
    double wander_deg = 0.008;
    std::array<double, 2> correction_s{2.2, 3.0};
    std::array<double, 2> correction_deg{0.12, 0.18};
    std::array<double, 2> turn_s{6.0, 10.0};
    std::array<double, 2> turn_kmh{28.0, 33.0};
    std::array<double, 2> turn_deg{0.35, 0.6};

    // Vehicle and sensors.
    double wheelbase_m = 2.7;
    double steering_ratio = 16.0;
    double understeer_rad_per_mss = 0.0025;
    double speed_tau_s = 1.0;
    double theta_noise_deg = 0.01;
    double v_noise_kmh = 0.2;
    double delta_noise_deg = 0.1;
    double noise_tau_s = 2.5;

    double settle_ratio = 0.15;  // swing amplitude after a sharp turn, relative to its peak steering
    double settle_tau_s = 1.5;
    double settle_period_s = 3.0;

    RegimeHabit cruise{0.2, 1.0, 0.8};
    RegimeHabit correction{0.3, 0.95, 1.0};
    RegimeHabit sharp{0.4, 1.12, 2.0};
    RegimeHabit anticipated{1.2, 1.12, 2.0};
    int steering_smooth = 11;  // samples; moving average applied to the habitual steering

    const RegimeHabit& habit(Regime r) const {
        switch (r) {
            case Regime::Cruise: return cruise;
            case Regime::Correction: return correction;
            case Regime::SharpTurn: return sharp;
            case Regime::AnticipatedTurn: return anticipated;
        }
        return cruise;
    }
};

/// Per-sample plan of one course before vehicle and driver are simulated.
struct CoursePlan {
    std::vector<double> dtheta;        // deg per sample
    std::vector<double> target_speed;  // km/h
    std::vector<Regime> regime;

    std::size_t size() const { return dtheta.size(); }
};

namespace synth_detail {

inline void append(CoursePlan& plan, std::size_t n, double speed, Regime regime, auto&& dtheta_of) {
    for (std::size_t i = 0; i < n; ++i) {
        plan.dtheta.push_back(dtheta_of(i, n));
        plan.target_speed.push_back(speed);
        plan.regime.push_back(regime);
    }
}

inline std::size_t samples(double seconds) { return static_cast<std::size_t>(std::lround(seconds * kSampleRate)); }

}  // namespace synth_detail

/// Straight driving with slow lane-keeping wander well under typical segmentation thresholds.
inline void plan_cruise(CoursePlan& plan, double seconds, double speed, double wander_deg, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    const double a = std::exp(-kSampleStep / 1.0);
    double w = 0.0;
    synth_detail::append(plan, synth_detail::samples(seconds), speed, Regime::Cruise, [&](std::size_t, std::size_t) {
        w = a * w + std::sqrt(1.0 - a * a) * wander_deg * gauss(rng);
        return w;
    });
}

/// Lane-change style S: a sine period under a raised-cosine envelope, so the course deviation
/// leaves and rejoins zero smoothly; `amplitude_deg` is the peak.
inline void plan_correction(CoursePlan& plan, double seconds, double speed, double amplitude_deg) {
    const double peak = 0.75 * std::sqrt(3.0) / 2.0;
    synth_detail::append(plan, synth_detail::samples(seconds), speed, Regime::Correction,
                         [&](std::size_t i, std::size_t n) {
                             const double phase = 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) /
                                                  static_cast<double>(n);
                             return amplitude_deg * std::sin(phase) * 0.5 * (1.0 - std::cos(phase)) / peak;
                         });
}

/// Raised-cosine arc driven at `speed`; the driver speeds back up to `exit_speed` over the
/// last part of the arc.
inline void plan_sharp_turn(CoursePlan& plan, double seconds, double speed, double exit_speed, double peak_deg,
                            bool anticipated = false) {
    const std::size_t n = synth_detail::samples(seconds);
    const std::size_t first = plan.size();
    synth_detail::append(plan, n, speed, anticipated ? Regime::AnticipatedTurn : Regime::SharpTurn, [&](std::size_t i, std::size_t m) {
        const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
        return peak_deg * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * x));
    });
    for (std::size_t i = first + (7 * n) / 10; i < plan.size(); ++i) plan.target_speed[i] = exit_speed;
}

/// Runs the vehicle speed response and the driver's steering law over a plan.
inline DrivingTrace simulate(const CoursePlan& plan, const ScenarioConfig& cfg, std::uint64_t seed, std::string id,
                             double initial_speed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    const std::size_t n = plan.size();
    DrivingTrace trace;
    trace.id = std::move(id);
    std::vector<double> speed(n);
    double v = initial_speed;
    const double alpha = kSampleStep / cfg.speed_tau_s;
    for (std::size_t i = 0; i < n; ++i) {
        v += alpha * (plan.target_speed[i] - v);
        speed[i] = v;
    }

    auto kinematic = [&](std::size_t i) {
        const double omega = plan.dtheta[i] * std::numbers::pi / 180.0 / kSampleStep;  // rad/s
        const double vm = std::max(speed[i], 1.0) / 3.6;                                // m/s
        const double curvature = omega / vm;
        const double wheel = std::atan(cfg.wheelbase_m * curvature) + cfg.understeer_rad_per_mss * vm * vm * curvature;
        return cfg.steering_ratio * wheel * 180.0 / std::numbers::pi;
    };

    std::vector<double> habitual(n);
    double turn_peak = 0.0;  // signed steering peak of the turn currently being driven or left
    std::size_t since_turn = n;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& habit = cfg.habit(plan.regime[i]);
        const std::size_t ahead = std::min(n - 1, i + synth_detail::samples(habit.lead_s));
        double delta = habit.gain * kinematic(ahead);
        if (is_turn(plan.regime[i])) {
            if (i == 0 || !is_turn(plan.regime[i - 1])) turn_peak = 0.0;
            if (std::abs(delta) > std::abs(turn_peak)) turn_peak = delta;
            since_turn = 0;
        } else if (since_turn < n) {
            // Settling on the straight after a sharp turn: a decaying swing against the turn.
            const double t = static_cast<double>(++since_turn) * kSampleStep;
            delta -= cfg.settle_ratio * turn_peak * std::exp(-t / cfg.settle_tau_s) *
                     std::sin(2.0 * std::numbers::pi * t / cfg.settle_period_s);
            if (plan.regime[i] != Regime::Cruise) since_turn = n;
        }
        habitual[i] = delta;
    }
    habitual = smooth_moving_average(habitual, cfg.steering_smooth);

    const double a = std::exp(-kSampleStep / cfg.noise_tau_s);
    double e = 0.0;
    double theta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double delta = habitual[i];
        if (cfg.noise) {
            e = a * e + std::sqrt(1.0 - a * a) * cfg.habit(plan.regime[i]).noise_deg * gauss(rng);
            delta += e + cfg.delta_noise_deg * gauss(rng);
        }
        theta += plan.dtheta[i];
        trace.timestamps.push_back(grid_time(0.0, i));
        trace.theta.push_back(theta + (cfg.noise ? cfg.theta_noise_deg * gauss(rng) : 0.0));
        trace.v.push_back(speed[i] + (cfg.noise ? cfg.v_noise_kmh * gauss(rng) : 0.0));
        trace.delta.push_back(delta);
    }
    return trace;
}

/// Random course filling `seconds`: straights alternate with a correction or a sharp turn.
inline CoursePlan random_course(const ScenarioConfig& cfg, double seconds, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    auto sign = [&] { return u(rng) < 0.5 ? -1.0 : 1.0; };
    CoursePlan plan;
    const std::size_t total = synth_detail::samples(seconds);
    const double wander = cfg.noise ? cfg.wander_deg : 0.0;
    const double p_events = cfg.p_correction + cfg.p_sharp;
    bool after_correction = false;
    while (plan.size() < total) {
        const double cruise_speed = range(cfg.cruise_kmh[0], cfg.cruise_kmh[1]);
        plan_cruise(plan, range(cfg.straight_s[0], cfg.straight_s[1]), cruise_speed, wander, rng);
        const bool correction = u(rng) * p_events < cfg.p_correction;
        if (correction)
            plan_correction(plan, range(cfg.correction_s[0], cfg.correction_s[1]), cruise_speed,
                            sign() * range(cfg.correction_deg[0], cfg.correction_deg[1]));
        else
            plan_sharp_turn(plan, range(cfg.turn_s[0], cfg.turn_s[1]), range(cfg.turn_kmh[0], cfg.turn_kmh[1]),
                            cruise_speed, sign() * range(cfg.turn_deg[0], cfg.turn_deg[1]), after_correction);
        after_correction = correction;
    }
    plan.dtheta.resize(total);
    plan.target_speed.resize(total);
    plan.regime.resize(total);
    return plan;
}

inline std::vector<DrivingTrace> synth_corpus(const ScenarioConfig& cfg, std::uint64_t seed) {
    std::vector<DrivingTrace> out;
    std::mt19937_64 rng(seed);
    for (int t = 0; t < cfg.traces; ++t) {
        const auto plan = random_course(cfg, cfg.trace_minutes * 60.0, rng);
        char id[32];
        std::snprintf(id, sizeof(id), "trace_%03d", t);
        out.push_back(simulate(plan, cfg, rng(), id, plan.target_speed.front()));
    }
    return out;
}

/// Four situations in the spirit of typical road scenes, from slow sharp turning to fast straights.
enum class SceneKind { LowSpeedSharp, MediumSpeedGeneral, HighSpeedCorrection, HighSpeedStraight };

inline const char* to_string(SceneKind k) {
    switch (k) {
        case SceneKind::LowSpeedSharp: return "low-speed-sharp";
        case SceneKind::MediumSpeedGeneral: return "medium-speed-general";
        case SceneKind::HighSpeedCorrection: return "high-speed-correction";
        case SceneKind::HighSpeedStraight: return "high-speed-straight";
    }
    return "low-speed-sharp";
}

inline DrivingTrace synth_scene(SceneKind kind, const ScenarioConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double wander = cfg.noise ? cfg.wander_deg : 0.0;
    CoursePlan plan;
    double v0 = 50.0;
    switch (kind) {
        case SceneKind::LowSpeedSharp:
            plan_cruise(plan, 6.0, 45.0, wander, rng);
            plan_sharp_turn(plan, 9.0, 32.0, 45.0, 0.5);
            plan_cruise(plan, 8.0, 45.0, wander, rng);
            v0 = 45.0;
            break;
        case SceneKind::MediumSpeedGeneral:
            plan_cruise(plan, 6.0, 44.0, wander, rng);
            plan_sharp_turn(plan, 8.0, 40.0, 46.0, -0.3);
            plan_cruise(plan, 4.0, 46.0, wander, rng);
            plan_correction(plan, 3.0, 48.0, 0.1);
            plan_cruise(plan, 6.0, 48.0, wander, rng);
            v0 = 44.0;
            break;
        case SceneKind::HighSpeedCorrection:
            plan_cruise(plan, 6.0, 56.0, wander, rng);
            plan_correction(plan, 2.6, 56.0, 0.12);
            plan_cruise(plan, 3.0, 56.0, wander, rng);
            plan_correction(plan, 2.4, 56.0, -0.09);
            plan_cruise(plan, 8.0, 56.0, wander, rng);
            v0 = 56.0;
            break;
        case SceneKind::HighSpeedStraight:
            plan_cruise(plan, 25.0, 58.0, wander, rng);
            v0 = 58.0;
            break;
    }
    return simulate(plan, cfg, rng(), to_string(kind), v0);
}

}  // namespace drivemp
