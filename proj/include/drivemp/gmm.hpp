#pragma once

// Full-covariance Gaussian mixtures: density, k-means initialization, EM fitting and BIC selection.
// All density arithmetic is done in log space; windowed motion vectors reach ~160 dimensions.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "drivemp/error.hpp"

namespace drivemp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GaussianComponent {
    VectorXd mean;
    MatrixXd covariance;
};

struct GaussianMixture {
    VectorXd weights;
    std::vector<GaussianComponent> components;

    int k() const { return static_cast<int>(components.size()); }
    int dim() const { return components.empty() ? 0 : static_cast<int>(components.front().mean.size()); }
};

struct FitConfig {
    int k = 1;
    int max_iters = 300;
    double tol = 1e-6;  // relative log-likelihood improvement
    std::uint64_t seed = 0;
    double cov_floor = 1e-6;  // relative to mean per-dimension data variance
    int kmeans_restarts = 5;
    int kmeans_max_iters = 100;
};

struct FitResult {
    GaussianMixture mixture;
    std::vector<double> log_likelihood;  // after each EM step
    double floor = 0.0;                  // absolute diagonal loading that was applied
    bool converged = false;
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

/// splitmix64 finalizer; derives independent seeds from a base seed and a tag.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline double log_sum_exp(const VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

/// Cholesky factor plus log-determinant of one covariance.
struct CholeskyCache {
    Eigen::LLT<MatrixXd> llt;
    double log_det = 0.0;

    explicit CholeskyCache(const MatrixXd& cov) : llt(cov) {
        if (llt.info() != Eigen::Success) throw NumericalError("degenerate component: covariance not positive definite");
        log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        if (!std::isfinite(log_det)) throw NumericalError("degenerate component: non-finite log-determinant");
    }

    double log_density(const VectorXd& mean, const VectorXd& x) const {
        VectorXd z = x - mean;
        llt.matrixL().solveInPlace(z);
        return -0.5 * (static_cast<double>(mean.size()) * kLog2Pi + log_det + z.squaredNorm());
    }
};

/// Mean per-dimension variance of the columns of `xt` (d x n).
inline double mean_variance(const MatrixXd& xt) {
    const VectorXd mu = xt.rowwise().mean();
    const double n = static_cast<double>(xt.cols());
    return ((xt.colwise() - mu).array().square().sum() / n) / static_cast<double>(xt.rows());
}

inline double floor_value(const MatrixXd& xt, double cov_floor) {
    const double scale = mean_variance(xt);
    return cov_floor * (scale > 0.0 ? scale : 1.0);
}

/// n x K matrix of log(p_k) + log g_k(x_i), with data stored column-per-sample.
/// Mahalanobis terms go through the inverse Cholesky factor so the bulk work is one GEMM.
inline MatrixXd weighted_log_densities(const GaussianMixture& gmm, const MatrixXd& xt) {
    const Eigen::Index n = xt.cols();
    const Eigen::Index dim = xt.rows();
    const double d = static_cast<double>(dim);
    MatrixXd out(n, gmm.k());
    MatrixXd y;
    for (int k = 0; k < gmm.k(); ++k) {
        const auto& c = gmm.components[k];
        const CholeskyCache chol(c.covariance);
        const MatrixXd l_inv = chol.llt.matrixL().solve(MatrixXd::Identity(dim, dim));
        const VectorXd shift = l_inv * c.mean;
        y.noalias() = l_inv * xt;
        const double log_w = gmm.weights[k] > 0.0 ? std::log(gmm.weights[k]) : -std::numeric_limits<double>::infinity();
        out.col(k) = (log_w - 0.5 * (d * kLog2Pi + chol.log_det)) -
                     0.5 * (y.colwise() - shift).colwise().squaredNorm().transpose().array();
    }
    return out;
}

/// Rows of `lp` turned into normalized responsibilities in place; returns the total log-likelihood.
inline double normalize_rows(MatrixXd& lp) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < lp.rows(); ++i) {
        const double m = lp.row(i).maxCoeff();
        if (!std::isfinite(m)) {
            lp.row(i).setConstant(1.0 / static_cast<double>(lp.cols()));
            total += m;
            continue;
        }
        lp.row(i) = (lp.row(i).array() - m).exp();
        const double s = lp.row(i).sum();
        lp.row(i) /= s;
        total += m + std::log(s);
    }
    return total;
}

struct KMeansResult {
    MatrixXd centers;  // d x k
    std::vector<int> assignment;
    double inertia = 0.0;
};

inline double squared_distance(const MatrixXd& xt, Eigen::Index i, const MatrixXd& centers, Eigen::Index j) {
    return (xt.col(i) - centers.col(j)).squaredNorm();
}

inline KMeansResult lloyd(const MatrixXd& xt, int k, std::mt19937_64& rng, int max_iters) {
    const Eigen::Index n = xt.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    KMeansResult res;
    res.centers.resize(xt.rows(), k);
    // Distinct-point centers where the data allows it.
    std::vector<Eigen::Index> chosen;
    for (Eigen::Index idx : order) {
        if (static_cast<int>(chosen.size()) == k) break;
        bool duplicate = false;
        for (Eigen::Index c : chosen)
            if (xt.col(c) == xt.col(idx)) { duplicate = true; break; }
        if (!duplicate) chosen.push_back(idx);
    }
    for (std::size_t p = 0; static_cast<int>(chosen.size()) < k; ++p) chosen.push_back(order[p]);
    for (int j = 0; j < k; ++j) res.centers.col(j) = xt.col(chosen[static_cast<std::size_t>(j)]);

    res.assignment.assign(static_cast<std::size_t>(n), -1);
    std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(xt, i, res.centers, 0);
            for (int j = 1; j < k; ++j) {
                const double dj = squared_distance(xt, i, res.centers, j);
                if (dj < best_d) { best_d = dj; best = j; }
            }
            if (res.assignment[i] != best) { res.assignment[i] = best; changed = true; }
            dist[i] = best_d;
        }
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        MatrixXd sums = MatrixXd::Zero(xt.rows(), k);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.col(res.assignment[i]) += xt.col(i);
            ++counts[res.assignment[i]];
        }
        bool reseeded = false;
        for (int j = 0; j < k; ++j) {
            if (counts[j] > 0) {
                res.centers.col(j) = sums.col(j) / static_cast<double>(counts[j]);
                continue;
            }
            // Empty cluster: move it onto the point farthest from its current center.
            const auto far = static_cast<Eigen::Index>(std::max_element(dist.begin(), dist.end()) - dist.begin());
            res.centers.col(j) = xt.col(far);
            dist[far] = 0.0;
            reseeded = true;
        }
        if (!changed && !reseeded && iter > 0) break;
    }
    res.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        int best = 0;
        double best_d = squared_distance(xt, i, res.centers, 0);
        for (int j = 1; j < k; ++j) {
            const double dj = squared_distance(xt, i, res.centers, j);
            if (dj < best_d) { best_d = dj; best = j; }
        }
        res.assignment[i] = best;
        res.inertia += best_d;
    }
    return res;
}

inline GaussianMixture kmeans_mixture(const MatrixXd& xt, int k, std::uint64_t seed, double floor, int restarts,
                                      int max_iters) {
    const Eigen::Index n = xt.cols();
    const Eigen::Index d = xt.rows();
    if (k < 1) throw InputError("kmeans: k must be >= 1");
    if (k > n) throw InputError("kmeans: k=" + std::to_string(k) + " exceeds sample count " + std::to_string(n));
    std::mt19937_64 rng(seed);
    KMeansResult best;
    for (int r = 0; r < std::max(1, restarts); ++r) {
        auto res = lloyd(xt, k, rng, max_iters);
        if (r == 0 || res.inertia < best.inertia) best = std::move(res);
    }
    GaussianMixture gmm;
    gmm.weights = VectorXd::Zero(k);
    gmm.components.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        std::vector<Eigen::Index> members;
        for (Eigen::Index i = 0; i < n; ++i)
            if (best.assignment[i] == j) members.push_back(i);
        auto& c = gmm.components[j];
        c.covariance = MatrixXd::Zero(d, d);
        if (members.empty()) {
            c.mean = best.centers.col(j);
        } else {
            c.mean = VectorXd::Zero(d);
            for (auto i : members) c.mean += xt.col(i);
            c.mean /= static_cast<double>(members.size());
            for (auto i : members) {
                const VectorXd diff = xt.col(i) - c.mean;
                c.covariance.selfadjointView<Eigen::Lower>().rankUpdate(diff);
            }
            c.covariance = MatrixXd(c.covariance.selfadjointView<Eigen::Lower>()) / static_cast<double>(members.size());
        }
        c.covariance.diagonal().array() += floor;
        gmm.weights[j] = static_cast<double>(members.size()) / static_cast<double>(n);
    }
    return gmm;
}

}  // namespace detail

inline int free_parameters(int k, int d) { return (k - 1) + k * d + k * d * (d + 1) / 2; }

inline void check_dim(const GaussianMixture& gmm, Eigen::Index size) {
    if (size != gmm.dim())
        throw InputError("dimension mismatch: mixture has d=" + std::to_string(gmm.dim()) + ", got " +
                         std::to_string(size));
}

struct Density {
    double log = 0.0;
    double linear = 0.0;
};

/// Per-component log(p_k g_k(x)).
inline VectorXd weighted_log_densities(const GaussianMixture& gmm, const VectorXd& x) {
    check_dim(gmm, x.size());
    VectorXd out(gmm.k());
    for (int k = 0; k < gmm.k(); ++k) {
        const detail::CholeskyCache chol(gmm.components[k].covariance);
        const double log_w =
            gmm.weights[k] > 0.0 ? std::log(gmm.weights[k]) : -std::numeric_limits<double>::infinity();
        out[k] = log_w + chol.log_density(gmm.components[k].mean, x);
    }
    return out;
}

inline Density density(const GaussianMixture& gmm, const VectorXd& x) {
    const double lp = detail::log_sum_exp(weighted_log_densities(gmm, x));
    return {lp, std::exp(lp)};
}

struct Responsibility {
    VectorXd probabilities;
    bool degenerate = false;  // every component had zero density; uniform vector returned
};

inline Responsibility responsibility(const GaussianMixture& gmm, const VectorXd& x) {
    const VectorXd lp = weighted_log_densities(gmm, x);
    const double m = lp.maxCoeff();
    if (!std::isfinite(m)) return {VectorXd::Constant(gmm.k(), 1.0 / gmm.k()), true};
    VectorXd p = (lp.array() - m).exp();
    p /= p.sum();
    return {p, false};
}

/// Total log-likelihood of the rows of `data` (n x d).
inline double log_likelihood(const GaussianMixture& gmm, const MatrixXd& data) {
    check_dim(gmm, data.cols());
    MatrixXd lp = detail::weighted_log_densities(gmm, data.transpose());
    return detail::normalize_rows(lp);
}

/// Lloyd's k-means from seeded random distinct-point centers, turned into a mixture.
inline GaussianMixture kmeans_init(const MatrixXd& data, int k, std::uint64_t seed, double cov_floor = 1e-6,
                                   int restarts = 1, int max_iters = 100) {
    const MatrixXd xt = data.transpose();
    return detail::kmeans_mixture(xt, k, seed, detail::floor_value(xt, cov_floor), restarts, max_iters);
}

/// EM for a full-covariance mixture. The diagonal floor is re-applied after every M-step.
inline FitResult em_fit(const MatrixXd& data, const FitConfig& cfg) {
    if (cfg.k < 1) throw InputError("em_fit: k must be >= 1");
    if (!(cfg.tol > 0.0)) throw InputError("em_fit: tol must be > 0");
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (n <= cfg.k)
        throw InputError("em_fit: need more samples (" + std::to_string(n) + ") than components (" +
                         std::to_string(cfg.k) + ")");
    if (!data.allFinite()) throw InputError("em_fit: data contains non-finite values");

    // Work on globally centered data; means are shifted back at the end.
    const VectorXd center = data.colwise().mean().transpose();
    const MatrixXd xt = data.transpose().colwise() - center;
    FitResult result;
    result.floor = detail::floor_value(xt, cfg.cov_floor);
    result.mixture = detail::kmeans_mixture(xt, cfg.k, cfg.seed, result.floor, cfg.kmeans_restarts,
                                            cfg.kmeans_max_iters);
    auto& gmm = result.mixture;

    MatrixXd resp = detail::weighted_log_densities(gmm, xt);
    double prev = detail::normalize_rows(resp);
    MatrixXd z;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        for (int k = 0; k < cfg.k; ++k) {
            const auto r = resp.col(k);
            const double nk = r.sum();
            if (!(nk > 1e-8))
                throw NumericalError("degenerate component: component " + std::to_string(k) + " lost all mass");
            auto& c = gmm.components[k];
            c.mean.noalias() = xt * r / nk;
            z = xt.array().rowwise() * r.transpose().array().sqrt();
            c.covariance.setZero(d, d);
            c.covariance.selfadjointView<Eigen::Lower>().rankUpdate(z, 1.0 / nk);
            c.covariance.selfadjointView<Eigen::Lower>().rankUpdate(c.mean, -1.0);
            c.covariance = MatrixXd(c.covariance.selfadjointView<Eigen::Lower>());
            c.covariance.diagonal().array() += result.floor;
            gmm.weights[k] = nk / static_cast<double>(n);
        }
        gmm.weights /= gmm.weights.sum();
        resp = detail::weighted_log_densities(gmm, xt);
        const double ll = detail::normalize_rows(resp);
        if (!std::isfinite(ll)) throw NumericalError("degenerate component: non-finite log-likelihood");
        result.log_likelihood.push_back(ll);
        if (!(ll - prev >= cfg.tol * std::abs(prev))) {
            result.converged = true;
            break;
        }
        prev = ll;
    }
    for (auto& c : gmm.components) c.mean += center;
    return result;
}

inline double bic(const GaussianMixture& gmm, const MatrixXd& data) {
    const double ll = log_likelihood(gmm, data);
    return -2.0 * ll + free_parameters(gmm.k(), gmm.dim()) * std::log(static_cast<double>(data.rows()));
}

struct SelectionResult {
    int best_k = 0;
    std::vector<int> ks;
    std::vector<double> bics;  // NaN where the fit failed
    std::vector<FitResult> fits;

    const FitResult& best() const {
        for (std::size_t i = 0; i < ks.size(); ++i)
            if (ks[i] == best_k) return fits[i];
        throw Error("select_k: no best fit recorded");
    }
};

/// Fits every candidate k with its own derived seed and keeps the lowest BIC (smaller k on ties).
inline SelectionResult select_k(const MatrixXd& data, std::vector<int> k_range, const FitConfig& cfg) {
    if (k_range.empty()) throw InputError("select_k: empty k range");
    std::sort(k_range.begin(), k_range.end());
    k_range.erase(std::unique(k_range.begin(), k_range.end()), k_range.end());
    if (k_range.back() >= data.rows()) throw InputError("select_k: max k must be < sample count");
    SelectionResult sel;
    double best = std::numeric_limits<double>::infinity();
    for (int k : k_range) {
        FitConfig c = cfg;
        c.k = k;
        c.seed = detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(k));
        sel.ks.push_back(k);
        try {
            sel.fits.push_back(em_fit(data, c));
        } catch (const NumericalError&) {
            sel.fits.push_back({});
            sel.bics.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double b = bic(sel.fits.back().mixture, data);
        sel.bics.push_back(b);
        if (b < best) {
            best = b;
            sel.best_k = k;
        }
    }
    if (sel.best_k == 0) throw NumericalError("select_k: every candidate fit was degenerate");
    return sel;
}

}  // namespace drivemp
