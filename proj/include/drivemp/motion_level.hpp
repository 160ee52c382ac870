#pragma once

// Lower level: regroup samples by path type, assemble windowed training vectors and fit one
// motion-primitive mixture per group, plus the per-label and global fallbacks.
//
// Training vector layout, oldest step first, three channels per step:
//   [dtheta, v, delta](t - past) ... [dtheta, v, delta](t) [dtheta, v, delta](t + 1) ... (t + future)
// The past block exists only for past >= 1 and the current step only for past >= 0.

#include <Eigen/Core>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drivemp/error.hpp"
#include "drivemp/gmm.hpp"
#include "drivemp/gmr.hpp"
#include "drivemp/path_level.hpp"
#include "drivemp/trace.hpp"

namespace drivemp {

enum class GroupingMode { Global = 1, CurrentLabel = 3, Triple = 27 };

inline int mode_value(GroupingMode m) { return static_cast<int>(m); }

inline GroupingMode mode_from_value(int v) {
    switch (v) {
        case 1: return GroupingMode::Global;
        case 3: return GroupingMode::CurrentLabel;
        case 27: return GroupingMode::Triple;
        default: throw InputError("n1 must be one of 1, 3, 27 (got " + std::to_string(v) + ")");
    }
}

/// Grouping levels, most specific first. `fallback_level` counts steps down this chain.
enum class ModelLevel { Triple = 0, Label = 1, Global = 2 };

inline const char* to_string(ModelLevel l) {
    switch (l) {
        case ModelLevel::Triple: return "triple";
        case ModelLevel::Label: return "label";
        case ModelLevel::Global: return "global";
    }
    return "global";
}

inline ModelLevel primary_level(GroupingMode m) {
    switch (m) {
        case GroupingMode::Global: return ModelLevel::Global;
        case GroupingMode::CurrentLabel: return ModelLevel::Label;
        case GroupingMode::Triple: return ModelLevel::Triple;
    }
    return ModelLevel::Global;
}

namespace window {

enum Channel : int { kDtheta = 0, kVelocity = 1, kDelta = 2 };

/// Position of step offset `offset` (relative to t, in [-past, future]) and channel in the vector.
inline int position(const MpWindowConfig& w, int offset, int channel) {
    const int first = w.past >= 0 ? -w.past : 1;
    return 3 * (offset - first) + channel;
}

/// Offsets carried by the vector, in layout order.
inline std::vector<int> offsets(const MpWindowConfig& w) {
    std::vector<int> out;
    for (int s = (w.past >= 0 ? -w.past : 1); s <= w.future; ++s) out.push_back(s);
    return out;
}

/// Everything except the future steering block.
inline BlockPartition prediction_partition(const MpWindowConfig& w) {
    BlockPartition p;
    for (int s : offsets(w)) {
        for (int c = 0; c < 3; ++c) {
            const int pos = position(w, s, c);
            if (s > 0 && c == kDelta)
                p.output.push_back(pos);
            else
                p.input.push_back(pos);
        }
    }
    std::sort(p.input.begin(), p.input.end());
    return p;
}

/// True when sample t has a full window inside a trace of length n.
inline bool fits(const MpWindowConfig& w, std::size_t t, std::size_t n) {
    return t >= static_cast<std::size_t>(w.history()) && t + static_cast<std::size_t>(w.future) < n;
}

inline std::size_t usable_count(const MpWindowConfig& w, std::size_t n) {
    const auto span = static_cast<std::size_t>(w.span());
    return n >= span ? n - span + 1 : 0;
}

}  // namespace window

struct SampleRef {
    std::size_t trace = 0;
    std::size_t index = 0;
    bool operator==(const SampleRef&) const = default;
    auto operator<=>(const SampleRef&) const = default;
};

using GroupMap = std::map<int, std::vector<SampleRef>>;

/// Group id of every sample of one labeled trace under `mode`.
inline int group_id(const LabeledTrace& lt, std::size_t segment, GroupingMode mode, int clusters) {
    switch (mode) {
        case GroupingMode::Global: return 1;
        case GroupingMode::CurrentLabel: return lt.labels.at(segment);
        case GroupingMode::Triple: return lt.triples.at(segment).encode(clusters);
    }
    return 1;
}

/// Partition of the samples by path type. With a window, only samples that have a full window
/// are included; otherwise every sample is.
inline GroupMap regroup(const std::vector<LabeledTrace>& labeled, GroupingMode mode, int clusters,
                        const std::optional<MpWindowConfig>& win = std::nullopt) {
    GroupMap groups;
    for (std::size_t tr = 0; tr < labeled.size(); ++tr) {
        const auto& lt = labeled[tr];
        for (std::size_t s = 0; s < lt.segments.size(); ++s) {
            const int id = group_id(lt, s, mode, clusters);
            const std::size_t n = lt.segments.back().end;
            for (std::size_t i = lt.segments[s].start; i < lt.segments[s].end; ++i) {
                if (win && !window::fits(*win, i, n)) continue;
                groups[id].push_back({tr, i});
            }
        }
    }
    return groups;
}

/// Samples of one trace with the precomputed course deviation.
struct TraceView {
    const DrivingTrace* trace = nullptr;
    std::vector<double> dtheta;

    explicit TraceView(const DrivingTrace& t) : trace(&t), dtheta(course_deviation(t.theta)) {}
    std::size_t size() const { return trace->size(); }
    double channel(std::size_t i, int c) const {
        switch (c) {
            case window::kDtheta: return dtheta[i];
            case window::kVelocity: return trace->v[i];
            default: return trace->delta[i];
        }
    }
};

struct TrainingMatrix {
    MatrixXd vectors;  // one row per window
    std::size_t skipped = 0;
};

inline void fill_window(const TraceView& tv, std::size_t t, const MpWindowConfig& w, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
    const int base = w.past >= 0 ? -w.past : 1;
    int col = 0;
    for (int s = base; s <= w.future; ++s) {
        const auto i = static_cast<std::size_t>(static_cast<long long>(t) + s);
        for (int c = 0; c < 3; ++c) row[col++] = tv.channel(i, c);
    }
}

/// Rows for the windows centered at `indices`; indices without a full window are skipped.
inline TrainingMatrix build_training_vectors(const TraceView& tv, const std::vector<std::size_t>& indices,
                                             const MpWindowConfig& w) {
    w.validate();
    TrainingMatrix out;
    std::vector<std::size_t> keep;
    keep.reserve(indices.size());
    for (auto i : indices) {
        if (window::fits(w, i, tv.size()))
            keep.push_back(i);
        else
            ++out.skipped;
    }
    out.vectors.resize(static_cast<Eigen::Index>(keep.size()), w.dimension());
    for (std::size_t r = 0; r < keep.size(); ++r) fill_window(tv, keep[r], w, out.vectors.row(static_cast<Eigen::Index>(r)));
    return out;
}

inline TrainingMatrix build_training_vectors(const DrivingTrace& trace, const std::vector<std::size_t>& indices,
                                             const MpWindowConfig& w) {
    return build_training_vectors(TraceView(trace), indices, w);
}

/// One fitted motion primitive, ready for regression.
struct MotionPrimitiveModel {
    ModelLevel level = ModelLevel::Global;
    int type_id = 1;
    MpWindowConfig window;
    GaussianMixture gmm;
    FitConfig fit;
    BlockPartition partition;
    std::size_t samples = 0;
    std::size_t skipped = 0;
    GmrRegressor regressor;

    MotionPrimitiveModel() = default;
    MotionPrimitiveModel(ModelLevel lvl, int id, const MpWindowConfig& w, GaussianMixture g, FitConfig f,
                         std::size_t n, std::size_t skip)
        : level(lvl), type_id(id), window(w), gmm(std::move(g)), fit(f),
          partition(window::prediction_partition(w)), samples(n), skipped(skip), regressor(gmm, partition) {}
};

using ModelPtr = std::shared_ptr<const MotionPrimitiveModel>;

struct TrainConfig {
    GroupingMode mode = GroupingMode::Triple;
    MpWindowConfig window{1, 50, kSampleStep};
    int components = 3;           // n4
    std::size_t min_samples = 0;  // 0 selects 20 * d
    std::size_t stride = 1;       // keep every stride-th window of a group
    SegmentationConfig segmentation;
    std::vector<int> path_k_range{1, 2, 3, 4, 5, 6};
    FitConfig fit{.k = 3, .max_iters = 300, .tol = 1e-6, .seed = 1, .cov_floor = 1e-6, .kmeans_restarts = 5,
                  .kmeans_max_iters = 100};
    int fit_attempts = 3;
    int resolver_history = 300;    // samples of history used to label the current path type
    int resolver_min_visible = 20;  // samples a cut-off neighbour needs before its label is trusted

    std::size_t effective_min_samples() const {
        return min_samples > 0 ? min_samples : 20 * static_cast<std::size_t>(window.dimension());
    }
    void validate() const {
        window.validate();
        segmentation.validate();
        if (components < 1) throw InputError("n4 must be >= 1");
        if (stride < 1) throw InputError("stride must be >= 1");
        if (resolver_history < 1) throw InputError("resolver history must be >= 1");
        if (resolver_min_visible < 1) throw InputError("resolver min_visible must be >= 1");
        if (path_k_range.empty()) throw InputError("path k range must be nonempty");
        if (!(fit.tol > 0.0)) throw InputError("tol must be > 0");
        if (!(fit.cov_floor >= 0.0)) throw InputError("cov_floor must be >= 0");
    }
};

/// Everything the upper level produces for a training corpus.
struct PreparedCorpus {
    PreparedCorpus() = default;
    PreparedCorpus(PreparedCorpus&&) = default;
    PreparedCorpus& operator=(PreparedCorpus&&) = default;
    PreparedCorpus(const PreparedCorpus&) = delete;  // views point into `traces`
    PreparedCorpus& operator=(const PreparedCorpus&) = delete;

    std::vector<DrivingTrace> traces;
    std::vector<TraceView> views;
    std::vector<LabeledTrace> labeled;
    PathModel path_model;
    SegmentationConfig segmentation;

    int clusters() const { return path_model.clusters(); }
};

inline PreparedCorpus prepare_corpus(std::vector<DrivingTrace> traces, const SegmentationConfig& seg,
                                     const std::vector<int>& k_range, const FitConfig& path_fit) {
    if (traces.empty()) throw InputError("training corpus is empty");
    PreparedCorpus pc;
    pc.traces = std::move(traces);
    pc.segmentation = seg;
    std::vector<PathFeatures> all;
    for (const auto& t : pc.traces) {
        require_valid(t);
        pc.labeled.push_back(segment_and_describe(t, seg));
        // The first and last segments are cut by the recording and do not describe whole primitives.
        const auto& f = pc.labeled.back().features;
        const std::size_t trim = f.size() >= 3 ? 1 : 0;
        all.insert(all.end(), f.begin() + static_cast<std::ptrdiff_t>(trim), f.end() - static_cast<std::ptrdiff_t>(trim));
    }
    pc.views.reserve(pc.traces.size());
    for (const auto& t : pc.traces) pc.views.emplace_back(t);
    pc.path_model = fit_path_model(all, k_range, path_fit);
    for (auto& lt : pc.labeled) label_trace(lt, pc.path_model);
    return pc;
}

inline FitConfig path_fit_config(const TrainConfig& cfg) {
    FitConfig f = cfg.fit;
    f.seed = detail::mix_seed(cfg.fit.seed, 0x5041'5448ULL);
    f.kmeans_restarts = std::max(f.kmeans_restarts, 10);
    return f;
}

inline PreparedCorpus prepare_corpus(std::vector<DrivingTrace> traces, const TrainConfig& cfg) {
    return prepare_corpus(std::move(traces), cfg.segmentation, cfg.path_k_range, path_fit_config(cfg));
}

struct ModelBundle {
    PathModel path_model;
    SegmentationConfig segmentation;
    TrainConfig config;
    std::map<int, ModelPtr> triple_models;
    std::map<int, ModelPtr> label_models;
    ModelPtr global;
    std::map<int, std::size_t> group_sizes;  // regroup counts at the primary level, before stride

    GroupingMode mode() const { return config.mode; }
    const MpWindowConfig& window() const { return config.window; }
    int clusters() const { return path_model.clusters(); }

    std::vector<ModelPtr> all_models() const {
        std::vector<ModelPtr> out;
        for (const auto& [id, m] : triple_models) out.push_back(m);
        for (const auto& [id, m] : label_models) out.push_back(m);
        if (global) out.push_back(global);
        return out;
    }
};

/// Fitted models shared between bundles that differ only in grouping mode.
class FitCache {
public:
    ModelPtr find(const std::string& key) const {
        const auto it = models_.find(key);
        return it == models_.end() ? nullptr : it->second;
    }
    void store(const std::string& key, ModelPtr m) { models_[key] = std::move(m); }
    std::size_t size() const { return models_.size(); }

private:
    std::map<std::string, ModelPtr> models_;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

inline std::string fit_key(ModelLevel level, int id, const TrainConfig& cfg) {
    return std::string(to_string(level)) + ':' + std::to_string(id) + "|p" + std::to_string(cfg.window.past) + "f" +
           std::to_string(cfg.window.future) + "k" + std::to_string(cfg.components) + "s" +
           std::to_string(cfg.stride) + "m" + std::to_string(cfg.effective_min_samples());
}

/// Gathers the group's windows (every `stride`-th sample in corpus order) into one matrix.
inline TrainingMatrix group_matrix(const PreparedCorpus& pc, const std::vector<SampleRef>& refs,
                                   const MpWindowConfig& w, std::size_t stride) {
    std::map<std::size_t, std::vector<std::size_t>> per_trace;
    for (std::size_t i = 0; i < refs.size(); i += stride) per_trace[refs[i].trace].push_back(refs[i].index);
    TrainingMatrix out;
    std::vector<TrainingMatrix> parts;
    Eigen::Index rows = 0;
    for (const auto& [tr, idx] : per_trace) {
        parts.push_back(build_training_vectors(pc.views[tr], idx, w));
        rows += parts.back().vectors.rows();
        out.skipped += parts.back().skipped;
    }
    out.vectors.resize(rows, w.dimension());
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.vectors.middleRows(r, p.vectors.rows()) = p.vectors;
        r += p.vectors.rows();
    }
    return out;
}

inline ModelPtr fit_group(const PreparedCorpus& pc, const std::vector<SampleRef>& refs, ModelLevel level, int id,
                          const TrainConfig& cfg, bool required, FitCache* cache) {
    const std::string key = fit_key(level, id, cfg);
    if (cache)
        if (auto hit = cache->find(key)) return hit;

    auto data = group_matrix(pc, refs, cfg.window, cfg.stride);
    const auto n = static_cast<std::size_t>(data.vectors.rows());
    ModelPtr model;
    const bool enough = required ? n > static_cast<std::size_t>(cfg.components) : n >= cfg.effective_min_samples();
    if (enough) {
        // The global model must exist, so on data with fewer distinct modes than components
        // (a straight-only corpus, say) it steps down to fewer components.
        const int lowest = required ? 1 : cfg.components;
        FitConfig f = cfg.fit;
        for (f.k = cfg.components; f.k >= lowest && !model; --f.k) {
            for (int attempt = 0; attempt < std::max(1, cfg.fit_attempts) && !model; ++attempt) {
                f.seed = mix_seed(cfg.fit.seed, fnv1a(key) + static_cast<std::uint64_t>(attempt));
                try {
                    auto fit = em_fit(data.vectors, f);
                    model = std::make_shared<const MotionPrimitiveModel>(level, id, cfg.window, std::move(fit.mixture),
                                                                         f, n, data.skipped);
                } catch (const NumericalError&) {
                    model = nullptr;
                }
            }
        }
    }
    if (!model && required)
        throw NumericalError("global motion primitive model could not be fitted (" + std::to_string(n) + " windows)");
    if (cache && model) cache->store(key, model);
    return model;
}

}  // namespace detail

/// Fits the models for `cfg.mode` and every coarser fallback level.
inline ModelBundle train_mp_models(const PreparedCorpus& pc, const TrainConfig& cfg, FitCache* cache = nullptr) {
    cfg.validate();
    ModelBundle bundle;
    bundle.path_model = pc.path_model;
    bundle.segmentation = pc.segmentation;
    bundle.config = cfg;
    const int n = pc.clusters();

    const auto global = regroup(pc.labeled, GroupingMode::Global, n, cfg.window);
    static const std::vector<SampleRef> kEmpty;
    const auto& all = global.empty() ? kEmpty : global.begin()->second;
    bundle.global = detail::fit_group(pc, all, ModelLevel::Global, 1, cfg, true, cache);
    if (cfg.mode == GroupingMode::Global) bundle.group_sizes[1] = all.size();

    if (cfg.mode != GroupingMode::Global) {
        const auto by_label = regroup(pc.labeled, GroupingMode::CurrentLabel, n, cfg.window);
        for (const auto& [id, refs] : by_label) {
            if (auto m = detail::fit_group(pc, refs, ModelLevel::Label, id, cfg, false, cache))
                bundle.label_models[id] = std::move(m);
            if (cfg.mode == GroupingMode::CurrentLabel) bundle.group_sizes[id] = refs.size();
        }
    }
    if (cfg.mode == GroupingMode::Triple) {
        const auto by_triple = regroup(pc.labeled, GroupingMode::Triple, n, cfg.window);
        for (const auto& [id, refs] : by_triple) {
            if (auto m = detail::fit_group(pc, refs, ModelLevel::Triple, id, cfg, false, cache))
                bundle.triple_models[id] = std::move(m);
            bundle.group_sizes[id] = refs.size();
        }
    }
    return bundle;
}

inline ModelBundle train_bundle(std::vector<DrivingTrace> traces, const TrainConfig& cfg) {
    cfg.validate();
    const auto pc = prepare_corpus(std::move(traces), cfg);
    return train_mp_models(pc, cfg);
}

}  // namespace drivemp
