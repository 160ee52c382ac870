#pragma once

// A trained bundle on disk is a directory:
//   manifest.json        training configuration, path model and the model index
//   models/<level>_<id>.json   one drivemp.gmm document per motion primitive

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "drivemp/error.hpp"
#include "drivemp/gmm_io.hpp"
#include "drivemp/motion_level.hpp"

namespace drivemp {

inline constexpr const char* kBundleFormat = "drivemp.bundle";
inline constexpr int kBundleFormatVersion = 1;

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"n1", mode_value(c.mode)},
            {"n2", c.window.past},
            {"n3", c.window.future},
            {"n4", c.components},
            {"min_samples", c.min_samples},
            {"effective_min_samples", c.effective_min_samples()},
            {"stride", c.stride},
            {"threshold_deg", c.segmentation.threshold_deg},
            {"min_len", c.segmentation.min_len},
            {"path_k_range", c.path_k_range},
            {"fit", fit_config_to_json(c.fit)},
            {"fit_attempts", c.fit_attempts},
            {"resolver_history", c.resolver_history},
            {"resolver_min_visible", c.resolver_min_visible}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.mode = mode_from_value(j.at("n1").get<int>());
    c.window.past = j.at("n2").get<int>();
    c.window.future = j.at("n3").get<int>();
    c.components = j.at("n4").get<int>();
    c.min_samples = j.at("min_samples").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.segmentation.threshold_deg = j.at("threshold_deg").get<double>();
    c.segmentation.min_len = j.at("min_len").get<int>();
    c.path_k_range = j.at("path_k_range").get<std::vector<int>>();
    c.fit = fit_config_from_json(j.at("fit"));
    c.fit_attempts = j.at("fit_attempts").get<int>();
    c.resolver_history = j.at("resolver_history").get<int>();
    c.resolver_min_visible = j.at("resolver_min_visible").get<int>();
    c.validate();
    return c;
}

namespace detail {
// JSON has no NaN; failed BIC evaluations are stored as null.
inline nlohmann::json nullable(const std::vector<double>& xs) {
    auto out = nlohmann::json::array();
    for (double x : xs) out.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
    return out;
}
}  // namespace detail

inline nlohmann::json path_model_to_json(const PathModel& m) {
    const auto vec = [](const Eigen::Vector4d& v) { return std::vector<double>(v.data(), v.data() + 4); };
    return {{"mean", vec(m.standardizer.mean)},
            {"scale", vec(m.standardizer.scale)},
            {"gmm", gmm_to_json(m.gmm, m.fit)},
            {"k_candidates", m.k_candidates},
            {"bics", detail::nullable(m.bics)}};
}

inline PathModel path_model_from_json(const nlohmann::json& j) {
    PathModel m;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    if (mean.size() != 4 || scale.size() != 4) throw InputError("path model: standardizer must have 4 entries");
    m.standardizer.mean = Eigen::Map<const Eigen::Vector4d>(mean.data());
    m.standardizer.scale = Eigen::Map<const Eigen::Vector4d>(scale.data());
    auto stored = gmm_from_json(j.at("gmm"));
    if (stored.mixture.dim() != 4) throw InputError("path model: mixture must be 4-dimensional");
    m.gmm = std::move(stored.mixture);
    m.fit = stored.fit;
    m.k_candidates = j.at("k_candidates").get<std::vector<int>>();
    for (const auto& b : j.at("bics"))
        m.bics.push_back(b.is_null() ? std::numeric_limits<double>::quiet_NaN() : b.get<double>());
    return m;
}

inline std::string model_file_name(const MotionPrimitiveModel& m) {
    return std::string("models/") + to_string(m.level) + '_' + std::to_string(m.type_id) + ".json";
}

inline ModelLevel level_from_string(const std::string& s) {
    if (s == "triple") return ModelLevel::Triple;
    if (s == "label") return ModelLevel::Label;
    if (s == "global") return ModelLevel::Global;
    throw InputError("unknown model level '" + s + "'");
}

/// Writes the bundle into `dir` (created if needed). `extra` is stored as "run" in the manifest.
inline void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir,
                        const nlohmann::json& extra = nlohmann::json::object()) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "models");
    nlohmann::json manifest;
    manifest["format"] = kBundleFormat;
    manifest["version"] = kBundleFormatVersion;
    manifest["config"] = train_config_to_json(bundle.config);
    manifest["clusters"] = bundle.clusters();
    manifest["path_model"] = path_model_to_json(bundle.path_model);
    auto& index = manifest["models"] = nlohmann::json::array();
    for (const auto& m : bundle.all_models()) {
        const std::string file = model_file_name(*m);
        save_gmm((dir / file).string(), m->gmm, m->fit);
        index.push_back({{"level", to_string(m->level)},
                         {"id", m->type_id},
                         {"file", file},
                         {"samples", m->samples},
                         {"skipped", m->skipped}});
    }
    auto& sizes = manifest["group_sizes"] = nlohmann::json::array();
    for (const auto& [id, n] : bundle.group_sizes) sizes.push_back({id, n});
    manifest["run"] = extra;
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw InputError("cannot write '" + (dir / "manifest.json").string() + "'");
    out << manifest.dump(2) << '\n';
}

inline ModelBundle load_bundle(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw InputError("cannot open '" + manifest_path.string() + "'");
    try {
        const auto manifest = nlohmann::json::parse(in);
        if (manifest.value("format", std::string()) != kBundleFormat)
            throw InputError(manifest_path.string() + ": not a drivemp.bundle manifest");
        if (manifest.at("version").get<int>() != kBundleFormatVersion)
            throw InputError(manifest_path.string() + ": unsupported bundle version");
        ModelBundle b;
        b.config = train_config_from_json(manifest.at("config"));
        b.segmentation = b.config.segmentation;
        b.path_model = path_model_from_json(manifest.at("path_model"));
        for (const auto& e : manifest.at("models")) {
            const auto level = level_from_string(e.at("level").get<std::string>());
            const int id = e.at("id").get<int>();
            auto stored = load_gmm((dir / e.at("file").get<std::string>()).string());
            if (stored.mixture.dim() != b.config.window.dimension())
                throw InputError("model " + std::string(to_string(level)) + ' ' + std::to_string(id) +
                                 " does not match the window dimension");
            auto m = std::make_shared<const MotionPrimitiveModel>(level, id, b.config.window, std::move(stored.mixture),
                                                                  stored.fit, e.at("samples").get<std::size_t>(),
                                                                  e.at("skipped").get<std::size_t>());
            switch (level) {
                case ModelLevel::Triple: b.triple_models[id] = std::move(m); break;
                case ModelLevel::Label: b.label_models[id] = std::move(m); break;
                case ModelLevel::Global: b.global = std::move(m); break;
            }
        }
        for (const auto& e : manifest.at("group_sizes")) b.group_sizes[e.at(0).get<int>()] = e.at(1).get<std::size_t>();
        if (!b.global) throw InputError(manifest_path.string() + ": bundle has no global model");
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(manifest_path.string() + ": " + e.what());
    }
}

}  // namespace drivemp
