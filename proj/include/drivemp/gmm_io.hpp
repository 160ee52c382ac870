#pragma once

// Versioned JSON model files. Doubles are written in shortest round-trip form, so a
// save/load cycle reproduces every parameter exactly.

#include <fstream>
#include <string>

#include <json.hpp>

#include "drivemp/error.hpp"
#include "drivemp/gmm.hpp"

namespace drivemp {

inline constexpr const char* kGmmFormat = "drivemp.gmm";
inline constexpr int kGmmFormatVersion = 1;

inline nlohmann::json fit_config_to_json(const FitConfig& cfg) {
    return {{"k", cfg.k},
            {"max_iters", cfg.max_iters},
            {"tol", cfg.tol},
            {"seed", cfg.seed},
            {"cov_floor", cfg.cov_floor},
            {"kmeans_restarts", cfg.kmeans_restarts},
            {"kmeans_max_iters", cfg.kmeans_max_iters}};
}

inline FitConfig fit_config_from_json(const nlohmann::json& j) {
    FitConfig cfg;
    cfg.k = j.at("k").get<int>();
    cfg.max_iters = j.at("max_iters").get<int>();
    cfg.tol = j.at("tol").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.cov_floor = j.at("cov_floor").get<double>();
    cfg.kmeans_restarts = j.value("kmeans_restarts", 1);
    cfg.kmeans_max_iters = j.value("kmeans_max_iters", 100);
    return cfg;
}

inline nlohmann::json gmm_to_json(const GaussianMixture& gmm, const FitConfig& cfg) {
    nlohmann::json j;
    j["format"] = kGmmFormat;
    j["version"] = kGmmFormatVersion;
    j["d"] = gmm.dim();
    j["k"] = gmm.k();
    j["fit"] = fit_config_to_json(cfg);
    j["weights"] = std::vector<double>(gmm.weights.data(), gmm.weights.data() + gmm.weights.size());
    auto& comps = j["components"] = nlohmann::json::array();
    for (const auto& c : gmm.components) {
        // Row-major covariance.
        std::vector<double> cov;
        cov.reserve(static_cast<std::size_t>(c.covariance.size()));
        for (Eigen::Index r = 0; r < c.covariance.rows(); ++r)
            for (Eigen::Index col = 0; col < c.covariance.cols(); ++col) cov.push_back(c.covariance(r, col));
        comps.push_back({{"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                         {"covariance", std::move(cov)}});
    }
    return j;
}

struct StoredGmm {
    GaussianMixture mixture;
    FitConfig fit;
};

inline StoredGmm gmm_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != kGmmFormat) throw InputError("not a drivemp.gmm document");
    const int version = j.at("version").get<int>();
    if (version != kGmmFormatVersion) throw InputError("unsupported drivemp.gmm version " + std::to_string(version));
    const int d = j.at("d").get<int>();
    const int k = j.at("k").get<int>();
    StoredGmm out;
    out.fit = fit_config_from_json(j.at("fit"));
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != k) throw InputError("gmm: weight count does not match k");
    out.mixture.weights = Eigen::Map<const VectorXd>(w.data(), k);
    const auto& comps = j.at("components");
    if (static_cast<int>(comps.size()) != k) throw InputError("gmm: component count does not match k");
    for (const auto& cj : comps) {
        const auto mean = cj.at("mean").get<std::vector<double>>();
        const auto cov = cj.at("covariance").get<std::vector<double>>();
        if (static_cast<int>(mean.size()) != d || static_cast<long>(cov.size()) != static_cast<long>(d) * d)
            throw InputError("gmm: component size does not match d");
        GaussianComponent c;
        c.mean = Eigen::Map<const VectorXd>(mean.data(), d);
        c.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            cov.data(), d, d);
        out.mixture.components.push_back(std::move(c));
    }
    return out;
}

inline void save_gmm(const std::string& path, const GaussianMixture& gmm, const FitConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << gmm_to_json(gmm, cfg).dump() << '\n';
}

inline StoredGmm load_gmm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return gmm_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

}  // namespace drivemp
