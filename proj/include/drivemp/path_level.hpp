#pragma once

// Upper level: cut traces into left/right/neutral path primitives on the course deviation,
// summarize each primitive by four features, cluster them and form label triples.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "drivemp/csv.hpp"
#include "drivemp/error.hpp"
#include "drivemp/gmm.hpp"
#include "drivemp/trace.hpp"

namespace drivemp {

enum class Direction { Left, Right, Neutral };

inline const char* to_string(Direction d) {
    switch (d) {
        case Direction::Left: return "left";
        case Direction::Right: return "right";
        case Direction::Neutral: return "neutral";
    }
    return "neutral";
}

/// Half-open sample range [start, end) of one trace.
struct PathSegment {
    std::string trace_id;
    std::size_t start = 0;
    std::size_t end = 0;
    Direction direction = Direction::Neutral;

    std::size_t size() const { return end - start; }
    bool contains(std::size_t i) const { return i >= start && i < end; }
};

struct PathFeatures {
    double td = 0.0;       // s
    double ave_cd = 0.0;   // mean |dtheta|, deg
    double max_cd = 0.0;   // max |dtheta|, deg
    double ave_vel = 0.0;  // km/h

    Eigen::Vector4d as_vector() const { return {td, ave_cd, max_cd, ave_vel}; }
};

struct SegmentationConfig {
    double threshold_deg = 0.05;
    int min_len = 5;

    void validate() const {
        if (!(threshold_deg > 0.0)) throw InputError("segmentation threshold must be > 0");
        if (min_len < 1) throw InputError("segmentation min_len must be >= 1");
    }
};

inline Direction classify(double dtheta, double threshold) {
    if (dtheta > threshold) return Direction::Left;
    if (dtheta < -threshold) return Direction::Right;
    return Direction::Neutral;
}

/// Threshold the course deviation, form equal-direction runs, then repeatedly fold the
/// shortest run below `min_len` (earliest on ties) into its longer neighbour (left on ties).
inline std::vector<PathSegment> segment_course(std::span<const double> dtheta, const SegmentationConfig& cfg,
                                               const std::string& trace_id = {}) {
    cfg.validate();
    const std::size_t n = dtheta.size();
    std::vector<PathSegment> runs;
    if (n == 0) return runs;
    if (n < static_cast<std::size_t>(cfg.min_len)) return {{trace_id, 0, n, Direction::Neutral}};

    for (std::size_t i = 0; i < n; ++i) {
        const Direction d = classify(dtheta[i], cfg.threshold_deg);
        if (!runs.empty() && runs.back().direction == d)
            runs.back().end = i + 1;
        else
            runs.push_back({trace_id, i, i + 1, d});
    }

    const auto min_len = static_cast<std::size_t>(cfg.min_len);
    while (runs.size() > 1) {
        std::size_t victim = runs.size();
        for (std::size_t r = 0; r < runs.size(); ++r)
            if (runs[r].size() < min_len && (victim == runs.size() || runs[r].size() < runs[victim].size())) victim = r;
        if (victim == runs.size()) break;

        std::size_t into;
        if (victim == 0)
            into = 1;
        else if (victim + 1 == runs.size())
            into = victim - 1;
        else
            into = runs[victim + 1].size() > runs[victim - 1].size() ? victim + 1 : victim - 1;

        if (into < victim) {
            runs[into].end = runs[victim].end;
            runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(victim));
            if (into + 1 < runs.size() && runs[into + 1].direction == runs[into].direction) {
                runs[into].end = runs[into + 1].end;
                runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(into + 1));
            }
        } else {
            runs[into].start = runs[victim].start;
            runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(victim));
            const std::size_t merged = victim;  // the absorbing run shifted into the freed slot
            if (merged > 0 && runs[merged - 1].direction == runs[merged].direction) {
                runs[merged - 1].end = runs[merged].end;
                runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(merged));
            }
        }
    }
    return runs;
}

inline std::vector<PathSegment> segment_trace(const DrivingTrace& trace, const SegmentationConfig& cfg) {
    return segment_course(course_deviation(trace.theta), cfg, trace.id);
}

inline PathFeatures extract_features(const PathSegment& seg, std::span<const double> dtheta,
                                     std::span<const double> v) {
    if (seg.start >= seg.end || seg.end > dtheta.size() || seg.end > v.size())
        throw InputError("extract_features: segment indices out of range");
    PathFeatures f;
    f.td = static_cast<double>(seg.size()) * kSampleStep;
    double sum_cd = 0.0;
    double sum_v = 0.0;
    for (std::size_t i = seg.start; i < seg.end; ++i) {
        const double a = std::abs(dtheta[i]);
        sum_cd += a;
        f.max_cd = std::max(f.max_cd, a);
        sum_v += v[i];
    }
    f.ave_cd = sum_cd / static_cast<double>(seg.size());
    f.ave_vel = sum_v / static_cast<double>(seg.size());
    return f;
}

inline PathFeatures extract_features(const PathSegment& seg, const DrivingTrace& trace) {
    return extract_features(seg, course_deviation(trace.theta), trace.v);
}

/// Per-feature z-scoring (population standard deviation; constant columns keep scale 1).
struct Standardizer {
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    Eigen::Vector4d scale = Eigen::Vector4d::Ones();

    static Standardizer fit(const Eigen::MatrixXd& x) {
        Standardizer s;
        const double n = static_cast<double>(x.rows());
        s.mean = x.colwise().mean().transpose();
        for (int j = 0; j < 4; ++j) {
            const double var = (x.col(j).array() - s.mean[j]).square().sum() / n;
            s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        return s;
    }
    Eigen::Vector4d apply(const Eigen::Vector4d& f) const { return (f - mean).cwiseQuotient(scale); }
    Eigen::Vector4d invert(const Eigen::Vector4d& z) const { return z.cwiseProduct(scale) + mean; }
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }
};

struct PathModel {
    Standardizer standardizer;
    GaussianMixture gmm;  // in standardized feature space
    FitConfig fit;
    std::vector<int> k_candidates;
    std::vector<double> bics;

    int clusters() const { return gmm.k(); }
    /// Component mean mapped back to feature units.
    Eigen::Vector4d centroid(int label) const { return standardizer.invert(gmm.components.at(label - 1).mean); }
};

inline Eigen::MatrixXd feature_matrix(const std::vector<PathFeatures>& features) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(features.size()), 4);
    for (std::size_t i = 0; i < features.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = features[i].as_vector().transpose();
    return x;
}

inline PathModel fit_path_model(const Eigen::MatrixXd& features, const std::vector<int>& k_range,
                                const FitConfig& cfg = {}) {
    if (features.cols() != 4) throw InputError("fit_path_model: expected 4 feature columns");
    std::vector<int> ks;
    for (int k : k_range)
        if (k >= 1 && k < features.rows()) ks.push_back(k);
    if (ks.empty()) throw InputError("fit_path_model: not enough segments (" + std::to_string(features.rows()) + ") for the k range");
    PathModel model;
    model.standardizer = Standardizer::fit(features);
    const auto sel = select_k(model.standardizer.apply(features), ks, cfg);
    model.gmm = sel.best().mixture;
    model.fit = cfg;
    model.fit.k = sel.best_k;
    model.fit.seed = detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(sel.best_k));
    model.k_candidates = sel.ks;
    model.bics = sel.bics;
    return model;
}

inline PathModel fit_path_model(const std::vector<PathFeatures>& features, const std::vector<int>& k_range,
                                const FitConfig& cfg = {}) {
    return fit_path_model(feature_matrix(features), k_range, cfg);
}

/// 1-based label of the most responsible component (lowest index on ties).
inline int label_features(const PathModel& model, const PathFeatures& f) {
    const VectorXd z = model.standardizer.apply(f.as_vector());
    const auto r = responsibility(model.gmm, z);
    Eigen::Index best = 0;
    r.probabilities.maxCoeff(&best);
    return static_cast<int>(best) + 1;
}

inline std::vector<int> label_segments(const PathModel& model, const std::vector<PathFeatures>& features) {
    std::vector<int> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(label_features(model, f));
    return out;
}

/// (previous, current, next) labels around one segment.
struct PathTypeTriple {
    int prev = 1;
    int cur = 1;
    int next = 1;

    int encode(int n) const { return (prev - 1) * n * n + (cur - 1) * n + (next - 1) + 1; }
    static PathTypeTriple decode(int id, int n) {
        const int z = id - 1;
        return {z / (n * n) + 1, (z / n) % n + 1, z % n + 1};
    }
    bool operator==(const PathTypeTriple&) const = default;
};

/// Edge segments reuse their own label for the missing neighbour.
inline std::vector<PathTypeTriple> build_triples(const std::vector<int>& labels) {
    std::vector<PathTypeTriple> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int cur = labels[i];
        const int prev = i > 0 ? labels[i - 1] : cur;
        const int next = i + 1 < labels.size() ? labels[i + 1] : cur;
        out.push_back({prev, cur, next});
    }
    return out;
}

/// Segments, features, labels and triples of one trace.
struct LabeledTrace {
    std::vector<PathSegment> segments;
    std::vector<PathFeatures> features;
    std::vector<int> labels;
    std::vector<PathTypeTriple> triples;

    /// Index of the segment holding sample `i`.
    std::size_t segment_of(std::size_t i) const {
        const auto it = std::upper_bound(segments.begin(), segments.end(), i,
                                         [](std::size_t s, const PathSegment& seg) { return s < seg.end; });
        if (it == segments.end()) throw InputError("sample index beyond the segmented trace");
        return static_cast<std::size_t>(it - segments.begin());
    }
};

inline LabeledTrace segment_and_describe(const DrivingTrace& trace, const SegmentationConfig& cfg) {
    LabeledTrace out;
    const auto dtheta = course_deviation(trace.theta);
    out.segments = segment_course(dtheta, cfg, trace.id);
    for (const auto& seg : out.segments) out.features.push_back(extract_features(seg, dtheta, trace.v));
    return out;
}

inline void label_trace(LabeledTrace& lt, const PathModel& model) {
    lt.labels = label_segments(model, lt.features);
    lt.triples = build_triples(lt.labels);
}

inline std::string segment_report_csv(const std::vector<LabeledTrace>& traces, int clusters) {
    std::string out = "trace_id,start_idx,end_idx,direction,td,ave_cd,max_cd,ave_vel,label,type_id\n";
    for (const auto& lt : traces) {
        for (std::size_t i = 0; i < lt.segments.size(); ++i) {
            const auto& s = lt.segments[i];
            const auto& f = lt.features[i];
            out += s.trace_id + ',' + std::to_string(s.start) + ',' + std::to_string(s.end) + ',' + to_string(s.direction) +
                   ',' + csv::format(f.td) + ',' + csv::format(f.ave_cd) + ',' + csv::format(f.max_cd) + ',' +
                   csv::format(f.ave_vel) + ',' + std::to_string(lt.labels.at(i)) + ',' +
                   std::to_string(lt.triples.at(i).encode(clusters)) + '\n';
        }
    }
    return out;
}

}  // namespace drivemp
