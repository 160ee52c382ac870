#pragma once

// Runtime generalization: pick the motion primitive for the current path type and regress the
// future steering sequence.
//
// The regression input is the observed (dtheta, v, delta) block plus the (dtheta, v) entries of
// the future reference path; the output block is the future steering only. Without the future
// path entries the desired path could never influence the prediction.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drivemp/csv.hpp"
#include "drivemp/error.hpp"
#include "drivemp/motion_level.hpp"
#include "drivemp/path_level.hpp"

namespace drivemp {

struct ModelChoice {
    ModelPtr model;
    int type_id = 1;         // id within the model's grouping level
    int fallback_level = 0;  // steps taken down triple -> label -> global
    PathTypeTriple triple;
};

/// Labels the concatenated recent + reference path with the bundle's path model and walks the
/// fallback chain until a trained model is found. `recent` ends with the current sample.
inline ModelChoice resolve_type(const ModelBundle& bundle, std::span<const PathPoint> recent,
                                std::span<const PathPoint> reference) {
    if (!bundle.global) throw InputError("bundle has no global model");
    ModelChoice choice;
    if (bundle.mode() == GroupingMode::Global || recent.empty()) {
        choice.model = bundle.global;
        choice.fallback_level = bundle.mode() == GroupingMode::Global ? 0 : static_cast<int>(ModelLevel::Global) -
                                                                              static_cast<int>(primary_level(bundle.mode()));
        return choice;
    }
    std::vector<double> dtheta;
    std::vector<double> v;
    dtheta.reserve(recent.size() + reference.size());
    v.reserve(recent.size() + reference.size());
    for (const auto* part : {&recent, &reference})
        for (const auto& p : *part) {
            dtheta.push_back(p.dtheta);
            v.push_back(p.v);
        }
    const auto segments = segment_course(dtheta, bundle.segmentation);
    const std::size_t current = recent.size() - 1;
    std::size_t s = 0;
    while (s + 1 < segments.size() && !segments[s].contains(current)) ++s;

    auto label_of = [&](std::size_t idx) {
        return label_features(bundle.path_model, extract_features(segments[idx], dtheta, v));
    };
    const int cur = label_of(s);
    choice.triple = {s > 0 ? label_of(s - 1) : cur, cur, s + 1 < segments.size() ? label_of(s + 1) : cur};

    const int primary = static_cast<int>(primary_level(bundle.mode()));
    if (bundle.mode() == GroupingMode::Triple) {
        // Both neighbours must be in view. One cut short by the query edges is labeled only once
        // enough of it is visible; a glimpse of a new primitive is too ambiguous to pick a triple.
        const auto min_visible = static_cast<std::size_t>(bundle.config.resolver_min_visible);
        const bool prev_ok = s > 0 && (segments[s - 1].start > 0 || segments[s - 1].size() >= min_visible);
        const bool next_ok =
            s + 1 < segments.size() && (segments[s + 1].end < dtheta.size() || segments[s + 1].size() >= min_visible);
        const auto it = bundle.triple_models.find(choice.triple.encode(bundle.clusters()));
        if (prev_ok && next_ok && it != bundle.triple_models.end()) {
            choice.model = it->second;
            choice.type_id = it->first;
            choice.fallback_level = 0;
            return choice;
        }
    }
    if (auto it = bundle.label_models.find(cur); it != bundle.label_models.end()) {
        choice.model = it->second;
        choice.type_id = cur;
        choice.fallback_level = static_cast<int>(ModelLevel::Label) - primary;
        return choice;
    }
    choice.model = bundle.global;
    choice.type_id = 1;
    choice.fallback_level = static_cast<int>(ModelLevel::Global) - primary;
    return choice;
}

struct PredictionQuery {
    std::vector<PathPoint> history;     // oldest first, ending at t0
    std::vector<double> history_delta;  // steering aligned with `history`
    std::vector<PathPoint> reference;   // t0 + 1 ... t0 + future, from the planner
    std::optional<ModelChoice> model;   // resolved from the path when absent
};

struct PredictionResult {
    std::vector<double> delta_hat;  // deg
    std::vector<double> stddev;     // deg
    MatrixXd covariance;
    int model_type_id = 1;
    int fallback_level = 0;
    ModelLevel level = ModelLevel::Global;
};

/// Query for time index t0 of a trace; up to `history_len` samples of history are attached.
inline PredictionQuery query_from_trace(const TraceView& tv, std::size_t t0, const MpWindowConfig& w,
                                        std::size_t history_len) {
    if (!window::fits(w, t0, tv.size()))
        throw InputError("query_from_trace: index " + std::to_string(t0) + " lacks a full window");
    PredictionQuery q;
    const std::size_t need = static_cast<std::size_t>(w.history()) + 1;
    const std::size_t len = std::min(t0 + 1, std::max(history_len, need));
    for (std::size_t i = t0 + 1 - len; i <= t0; ++i) {
        q.history.push_back({tv.dtheta[i], tv.trace->v[i]});
        q.history_delta.push_back(tv.trace->delta[i]);
    }
    for (std::size_t i = t0 + 1; i <= t0 + static_cast<std::size_t>(w.future); ++i)
        q.reference.push_back({tv.dtheta[i], tv.trace->v[i]});
    return q;
}

inline VectorXd regression_input(const MotionPrimitiveModel& m, const PredictionQuery& q) {
    const auto& w = m.window;
    const std::size_t need = w.past >= 0 ? static_cast<std::size_t>(w.past) + 1 : 0;
    if (q.history.size() < need || q.history_delta.size() != q.history.size())
        throw InputError("prediction query: need " + std::to_string(need) + " observed steps with steering, got " +
                         std::to_string(q.history.size()));
    if (q.reference.size() != static_cast<std::size_t>(w.future))
        throw InputError("prediction query: reference path must have " + std::to_string(w.future) + " steps, got " +
                         std::to_string(q.reference.size()));
    VectorXd full = VectorXd::Zero(w.dimension());
    const std::size_t h = q.history.size();
    for (int s : window::offsets(w)) {
        if (s <= 0) {
            const std::size_t i = h - 1 - static_cast<std::size_t>(-s);
            full[window::position(w, s, window::kDtheta)] = q.history[i].dtheta;
            full[window::position(w, s, window::kVelocity)] = q.history[i].v;
            full[window::position(w, s, window::kDelta)] = q.history_delta[i];
        } else {
            const auto& p = q.reference[static_cast<std::size_t>(s - 1)];
            full[window::position(w, s, window::kDtheta)] = p.dtheta;
            full[window::position(w, s, window::kVelocity)] = p.v;
        }
    }
    return detail::take(full, m.partition.input);
}

inline PredictionResult predict_steering(const ModelBundle& bundle, const PredictionQuery& query) {
    const ModelChoice choice =
        query.model ? *query.model : resolve_type(bundle, query.history, query.reference);
    const MotionPrimitiveModel& m = *choice.model;
    const auto est = m.regressor(regression_input(m, query));
    PredictionResult r;
    r.delta_hat.assign(est.mean.data(), est.mean.data() + est.mean.size());
    r.stddev.resize(r.delta_hat.size());
    for (std::size_t i = 0; i < r.stddev.size(); ++i)
        r.stddev[i] = std::sqrt(std::max(0.0, est.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
    r.covariance = est.covariance;
    r.model_type_id = choice.type_id;
    r.fallback_level = choice.fallback_level;
    r.level = m.level;
    return r;
}

/// Query CSV: `rel_step,dtheta_deg,v_kmh,delta_deg`. Rows with rel_step <= 0 are observed
/// history (steering required); rows 1..future are the reference path (steering ignored).
inline PredictionQuery load_query_csv(const std::string& path, const MpWindowConfig& w) {
    const auto table = csv::read_file(path);
    const auto cs = table.column("rel_step");
    const auto cth = table.column("dtheta_deg");
    const auto cv = table.column("v_kmh");
    const auto cd = table.column("delta_deg");
    std::vector<std::pair<long long, const csv::Row*>> rows;
    for (const auto& row : table.rows) rows.emplace_back(csv::parse_int(table, row, cs), &row);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    PredictionQuery q;
    long long expect_future = 1;
    long long last_history = 1;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& [step, row] = rows[i];
        if (i > 0 && rows[i - 1].first == step)
            throw InputError(path + ":" + std::to_string(row->line) + ": duplicate rel_step");
        const PathPoint p{csv::parse_double(table, *row, cth), csv::parse_double(table, *row, cv)};
        if (step <= 0) {
            if (i + 1 < rows.size() && rows[i + 1].first <= 0 && rows[i + 1].first != step + 1)
                throw InputError(path + ": history rel_step values must be contiguous");
            last_history = step;
            q.history.push_back(p);
            q.history_delta.push_back(csv::parse_double(table, *row, cd));
        } else {
            if (step != expect_future++) throw InputError(path + ": reference rel_step values must run 1.." + std::to_string(w.future));
            q.reference.push_back(p);
        }
    }
    if (q.history.empty() || last_history != 0)
        throw InputError(path + ": history must end at rel_step 0");
    if (q.reference.size() != static_cast<std::size_t>(w.future))
        throw InputError(path + ": expected " + std::to_string(w.future) + " reference rows, got " +
                         std::to_string(q.reference.size()));
    return q;
}

inline std::string query_csv(const PredictionQuery& q) {
    std::string out = "rel_step,dtheta_deg,v_kmh,delta_deg\n";
    const auto h = static_cast<long long>(q.history.size());
    for (long long i = 0; i < h; ++i) {
        const auto& p = q.history[static_cast<std::size_t>(i)];
        out += std::to_string(i - h + 1) + ',' + csv::format(p.dtheta) + ',' + csv::format(p.v) + ',' +
               csv::format(q.history_delta[static_cast<std::size_t>(i)]) + '\n';
    }
    for (std::size_t i = 0; i < q.reference.size(); ++i)
        out += std::to_string(i + 1) + ',' + csv::format(q.reference[i].dtheta) + ',' + csv::format(q.reference[i].v) + ",\n";
    return out;
}

inline std::string result_csv(const PredictionResult& r) {
    std::string out = "step,t_rel_s,delta_hat_deg,stddev_deg,model_type_id,fallback_level\n";
    for (std::size_t i = 0; i < r.delta_hat.size(); ++i) {
        out += std::to_string(i + 1) + ',' + csv::format(grid_time(0.0, i + 1)) + ',' + csv::format(r.delta_hat[i]) + ',' +
               csv::format(r.stddev[i]) + ',' + std::to_string(r.model_type_id) + ',' + std::to_string(r.fallback_level) +
               '\n';
    }
    return out;
}

}  // namespace drivemp
