#pragma once

// Offline evaluation: pooled per-step steering errors over every valid test window, the train /
// test split, the n1 x n2 x n4 parameter sweep, and the CSV writers for reports and plot data.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "drivemp/csv.hpp"
#include "drivemp/error.hpp"
#include "drivemp/motion_level.hpp"
#include "drivemp/predict.hpp"

namespace drivemp {

/// Running error statistics; the signed-error variance uses Welford's update.
class ErrorAccumulator {
public:
    void add(double predicted, double truth, double pred_var) {
        const double e = predicted - truth;
        ++n_;
        abs_sum_ += std::abs(e);
        const double d = e - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (e - mean_);
        pred_var_sum_ += pred_var;
        if (std::abs(e) <= std::sqrt(std::max(0.0, pred_var))) ++covered_;
    }

    std::size_t count() const { return n_; }
    double mean_abs() const { return n_ ? abs_sum_ / static_cast<double>(n_) : 0.0; }
    double mean_signed() const { return mean_; }
    double variance() const { return n_ ? m2_ / static_cast<double>(n_) : 0.0; }  // population
    double mean_pred_var() const { return n_ ? pred_var_sum_ / static_cast<double>(n_) : 0.0; }
    double coverage() const { return n_ ? static_cast<double>(covered_) / static_cast<double>(n_) : 0.0; }

private:
    std::size_t n_ = 0;
    std::size_t covered_ = 0;
    double abs_sum_ = 0.0;
    double mean_ = 0.0;
    double m2_ = 0.0;
    double pred_var_sum_ = 0.0;
};

struct EvalRow {
    int n1 = 27;
    int n2 = 1;
    int n3 = 50;
    int n4 = 3;
    double ave_err = 0.0;        // deg
    double err_var = 0.0;        // deg^2, signed errors
    double pred_var_mean = 0.0;  // deg^2, mean predicted variance
    double coverage = 0.0;       // share of steps inside the 1-sigma band
    std::size_t n_windows = 0;
    std::size_t n_steps = 0;
    std::optional<double> train_s;
    std::optional<double> eval_s;
};

struct EvalOptions {
    std::size_t stride = 1;  // evaluate every stride-th valid window
};

/// Number of windows `evaluate` visits for the given traces.
inline std::size_t expected_windows(const std::vector<DrivingTrace>& traces, const MpWindowConfig& w,
                                    std::size_t stride = 1) {
    std::size_t total = 0;
    for (const auto& t : traces) {
        const auto usable = window::usable_count(w, t.size());
        total += (usable + stride - 1) / stride;
    }
    return total;
}

inline EvalRow evaluate(const ModelBundle& bundle, const std::vector<DrivingTrace>& test, const EvalOptions& opt = {}) {
    if (opt.stride < 1) throw InputError("evaluation stride must be >= 1");
    const auto& w = bundle.window();
    ErrorAccumulator acc;
    std::size_t windows = 0;
    const auto history = static_cast<std::size_t>(bundle.config.resolver_history);
    for (const auto& trace : test) {
        require_valid(trace);
        const TraceView tv(trace);
        const std::size_t first = static_cast<std::size_t>(w.history());
        for (std::size_t t0 = first; window::fits(w, t0, tv.size()); t0 += opt.stride) {
            const auto q = query_from_trace(tv, t0, w, history);
            const auto r = predict_steering(bundle, q);
            for (std::size_t s = 0; s < r.delta_hat.size(); ++s) {
                const auto k = static_cast<Eigen::Index>(s);
                acc.add(r.delta_hat[s], trace.delta[t0 + 1 + s], r.covariance(k, k));
            }
            ++windows;
        }
    }
    if (windows == 0) throw InputError("evaluate: no test trace has a full window");
    EvalRow row;
    row.n1 = mode_value(bundle.mode());
    row.n2 = w.past;
    row.n3 = w.future;
    row.n4 = bundle.config.components;
    row.ave_err = acc.mean_abs();
    row.err_var = acc.variance();
    row.pred_var_mean = acc.mean_pred_var();
    row.coverage = acc.coverage();
    row.n_windows = windows;
    row.n_steps = acc.count();
    return row;
}

/// Seeded shuffle of trace indices; the first ceil(test_fraction * n) go to the test set (at
/// least one trace on each side).
inline std::pair<std::vector<DrivingTrace>, std::vector<DrivingTrace>> split_traces(std::vector<DrivingTrace> traces,
                                                                                    double test_fraction,
                                                                                    std::uint64_t seed) {
    if (traces.size() < 2) throw InputError("split: need at least two traces");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("split: test fraction must be in (0, 1)");
    std::vector<std::size_t> order(traces.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(detail::mix_seed(seed, 0x53504c4954ULL));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(traces.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, traces.size() - 1);
    std::vector<char> is_test(traces.size(), 0);
    for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = 1;
    std::pair<std::vector<DrivingTrace>, std::vector<DrivingTrace>> out;
    for (std::size_t i = 0; i < traces.size(); ++i) (is_test[i] ? out.second : out.first).push_back(std::move(traces[i]));
    return out;
}

struct SweepConfig {
    std::vector<int> n1{1, 3, 27};
    std::vector<int> n2{-1, 0, 1, 2, 3};
    std::vector<int> n4{3, 6, 9};
    int n3 = 50;
    double test_fraction = 0.25;
    std::uint64_t seed = 1;
    TrainConfig base;  // mode, window and components are overwritten per configuration
    EvalOptions eval;
    bool timing = false;

    void validate() const {
        if (n1.empty() || n2.empty() || n4.empty()) throw InputError("sweep: every parameter list must be nonempty");
        for (int v : n1) mode_from_value(v);
        for (int v : n2)
            if (v < -1) throw InputError("sweep: n2 must be >= -1");
        for (int v : n4)
            if (v < 1) throw InputError("sweep: n4 must be >= 1");
        if (n3 < 1) throw InputError("sweep: n3 must be >= 1");
    }
};

/// Trains and evaluates every (n1, n2, n4) configuration on one split. Rows come out ordered by
/// n1, then n2, then n4. Models are shared across n1 values through a fit cache, so the training
/// time of a finer grouping counts only the models it adds.
inline std::vector<EvalRow> sweep_split(std::vector<DrivingTrace> train, const std::vector<DrivingTrace>& test,
                                        const SweepConfig& cfg) {
    cfg.validate();
    TrainConfig base = cfg.base;
    base.fit.seed = cfg.seed;
    base.window.future = cfg.n3;
    base.validate();
    using clock = std::chrono::steady_clock;
    const auto seconds = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double>(b - a).count();
    };

    const auto t_prep = clock::now();
    const PreparedCorpus pc = prepare_corpus(std::move(train), base);
    const double prep_s = seconds(t_prep, clock::now());

    std::vector<int> n1 = cfg.n1;
    std::sort(n1.begin(), n1.end());
    n1.erase(std::unique(n1.begin(), n1.end()), n1.end());
    std::vector<EvalRow> rows;
    for (int n2 : cfg.n2) {
        for (int n4 : cfg.n4) {
            FitCache cache;
            for (int mode : n1) {
                TrainConfig tc = base;
                tc.mode = mode_from_value(mode);
                tc.window.past = n2;
                tc.components = n4;
                const auto t0 = clock::now();
                const auto bundle = train_mp_models(pc, tc, &cache);
                const auto t1 = clock::now();
                EvalRow row = evaluate(bundle, test, cfg.eval);
                const auto t2 = clock::now();
                if (cfg.timing) {
                    row.train_s = seconds(t0, t1) + (rows.empty() ? prep_s : 0.0);
                    row.eval_s = seconds(t1, t2);
                }
                rows.push_back(row);
            }
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [&](const EvalRow& a, const EvalRow& b) {
        if (a.n1 != b.n1) return a.n1 < b.n1;
        const auto pos = [](const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) - v.begin(); };
        if (a.n2 != b.n2) return pos(cfg.n2, a.n2) < pos(cfg.n2, b.n2);
        return pos(cfg.n4, a.n4) < pos(cfg.n4, b.n4);
    });
    return rows;
}

inline std::vector<EvalRow> sweep(std::vector<DrivingTrace> corpus, const SweepConfig& cfg) {
    auto [train, test] = split_traces(std::move(corpus), cfg.test_fraction, cfg.seed);
    return sweep_split(std::move(train), test, cfg);
}

inline std::string report_csv(const std::vector<EvalRow>& rows) {
    std::string out = "n1,n2,n3,n4,ave_err_deg,err_var,pred_var_mean,n_windows,train_s,eval_s\n";
    const auto opt = [](const std::optional<double>& v) { return v ? csv::format_fixed(*v, 3) : std::string("NA"); };
    for (const auto& r : rows) {
        out += std::to_string(r.n1) + ',' + std::to_string(r.n2) + ',' + std::to_string(r.n3) + ',' +
               std::to_string(r.n4) + ',' + csv::format(r.ave_err) + ',' + csv::format(r.err_var) + ',' +
               csv::format(r.pred_var_mean) + ',' + std::to_string(r.n_windows) + ',' + opt(r.train_s) + ',' +
               opt(r.eval_s) + '\n';
    }
    return out;
}

struct PlotRow {
    double t_s = 0.0;
    double dtheta_ref = 0.0;
    double v_ref = 0.0;
    double delta_true = 0.0;
    double delta_hat = 0.0;
    double stddev = 0.0;
    int type_id = 1;
};

/// Consecutive horizons started every `stride` samples (default: one horizon length) and
/// stitched into one predicted steering curve along the trace.
inline std::vector<PlotRow> plot_data(const ModelBundle& bundle, const DrivingTrace& trace, std::size_t stride = 0) {
    require_valid(trace);
    const auto& w = bundle.window();
    if (stride == 0) stride = static_cast<std::size_t>(w.future);
    const TraceView tv(trace);
    std::vector<PlotRow> out;
    const auto history = static_cast<std::size_t>(bundle.config.resolver_history);
    for (std::size_t t0 = static_cast<std::size_t>(w.history()); window::fits(w, t0, tv.size()); t0 += stride) {
        const auto q = query_from_trace(tv, t0, w, history);
        const auto r = predict_steering(bundle, q);
        const std::size_t steps = std::min<std::size_t>(stride, r.delta_hat.size());
        for (std::size_t s = 0; s < steps; ++s) {
            const std::size_t i = t0 + 1 + s;
            out.push_back({trace.timestamps[i], tv.dtheta[i], trace.v[i], trace.delta[i], r.delta_hat[s], r.stddev[s],
                           r.model_type_id});
        }
    }
    return out;
}

inline std::string plot_csv(const std::vector<PlotRow>& rows) {
    std::string out = "t_s,dtheta_ref,v_ref,delta_true,delta_hat,stddev,type_id\n";
    for (const auto& r : rows)
        out += csv::format(r.t_s) + ',' + csv::format(r.dtheta_ref) + ',' + csv::format(r.v_ref) + ',' +
               csv::format(r.delta_true) + ',' + csv::format(r.delta_hat) + ',' + csv::format(r.stddev) + ',' +
               std::to_string(r.type_id) + '\n';
    return out;
}

}  // namespace drivemp
