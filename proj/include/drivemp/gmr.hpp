#pragma once

// Gaussian mixture regression: condition a joint mixture on an input block and mix the
// per-component conditionals.
//
// The mixed covariance uses squared mixing weights, sum_k beta_k^2 * Sigma_k, and leaves out
// the spread of the component means. It is therefore smaller than the true conditional
// variance of the mixture whenever several components share the responsibility.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "drivemp/error.hpp"
#include "drivemp/gmm.hpp"

namespace drivemp {

struct BlockPartition {
    std::vector<int> input;
    std::vector<int> output;

    /// Partition whose output block is everything not in `input`.
    static BlockPartition with_input(std::vector<int> input, int d) {
        BlockPartition p;
        std::vector<char> used(static_cast<std::size_t>(d), 0);
        for (int i : input)
            if (i >= 0 && i < d) used[i] = 1;
        for (int i = 0; i < d; ++i)
            if (!used[i]) p.output.push_back(i);
        p.input = std::move(input);
        return p;
    }

    void validate(int d) const {
        if (input.empty() || output.empty()) throw InputError("partition: input and output blocks must be nonempty");
        std::vector<int> seen(static_cast<std::size_t>(d), 0);
        for (const auto* block : {&input, &output}) {
            for (int i : *block) {
                if (i < 0 || i >= d) throw InputError("partition: index " + std::to_string(i) + " out of range");
                if (seen[i]++) throw InputError("partition: index " + std::to_string(i) + " appears twice");
            }
        }
        for (int i = 0; i < d; ++i)
            if (!seen[i]) throw InputError("partition: index " + std::to_string(i) + " not covered");
    }
};

/// mu_in, mu_out and the four covariance blocks of one component.
struct PartitionedComponent {
    VectorXd mean_in;
    VectorXd mean_out;
    MatrixXd cov_in;      // in x in
    MatrixXd cov_out;     // out x out
    MatrixXd cov_in_out;  // in x out
    MatrixXd cov_out_in;  // out x in
};

namespace detail {

inline VectorXd take(const VectorXd& v, const std::vector<int>& idx) {
    VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
    return out;
}

inline MatrixXd take(const MatrixXd& m, const std::vector<int>& rows, const std::vector<int>& cols) {
    MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(rows[r], cols[c]);
    return out;
}

inline Eigen::LLT<MatrixXd> factor_input(const MatrixXd& cov_in) {
    Eigen::LLT<MatrixXd> llt(cov_in);
    if (llt.info() != Eigen::Success) throw NumericalError("singular input block");
    return llt;
}

}  // namespace detail

inline std::vector<PartitionedComponent> partition(const GaussianMixture& gmm, const BlockPartition& blocks) {
    blocks.validate(gmm.dim());
    std::vector<PartitionedComponent> out;
    out.reserve(gmm.components.size());
    for (const auto& c : gmm.components) {
        PartitionedComponent p;
        p.mean_in = detail::take(c.mean, blocks.input);
        p.mean_out = detail::take(c.mean, blocks.output);
        p.cov_in = detail::take(c.covariance, blocks.input, blocks.input);
        p.cov_out = detail::take(c.covariance, blocks.output, blocks.output);
        p.cov_in_out = detail::take(c.covariance, blocks.input, blocks.output);
        p.cov_out_in = detail::take(c.covariance, blocks.output, blocks.input);
        out.push_back(std::move(p));
    }
    return out;
}

struct ComponentConditional {
    VectorXd mean;
    MatrixXd covariance;
};

/// Gaussian conditional of the output block given x_in, via a Cholesky solve of the input block.
inline ComponentConditional condition_component(const PartitionedComponent& c, const VectorXd& x_in) {
    if (x_in.size() != c.mean_in.size()) throw InputError("condition_component: input dimension mismatch");
    const auto llt = detail::factor_input(c.cov_in);
    ComponentConditional out;
    out.mean = c.mean_out + c.cov_out_in * llt.solve(x_in - c.mean_in);
    out.covariance = c.cov_out - c.cov_out_in * llt.solve(c.cov_in_out);
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
}

struct MixingWeights {
    VectorXd beta;
    bool degenerate = false;  // all input marginals vanished; uniform weights returned
};

/// beta_k proportional to p_k * N(x_in | mu_in_k, Sigma_in_k), normalized in log space.
inline MixingWeights mixing_weights(const std::vector<PartitionedComponent>& comps, const VectorXd& weights,
                                    const VectorXd& x_in) {
    VectorXd lp(static_cast<Eigen::Index>(comps.size()));
    for (std::size_t k = 0; k < comps.size(); ++k) {
        if (x_in.size() != comps[k].mean_in.size()) throw InputError("mixing_weights: input dimension mismatch");
        const detail::CholeskyCache chol(comps[k].cov_in);
        const double log_w = weights[static_cast<Eigen::Index>(k)] > 0.0
                                 ? std::log(weights[static_cast<Eigen::Index>(k)])
                                 : -std::numeric_limits<double>::infinity();
        lp[static_cast<Eigen::Index>(k)] = log_w + chol.log_density(comps[k].mean_in, x_in);
    }
    const double m = lp.maxCoeff();
    if (!std::isfinite(m)) return {VectorXd::Constant(lp.size(), 1.0 / static_cast<double>(lp.size())), true};
    VectorXd beta = (lp.array() - m).exp();
    beta /= beta.sum();
    return {beta, false};
}

struct ConditionalEstimate {
    VectorXd mean;
    MatrixXd covariance;
    VectorXd mixing;
    bool degenerate_mixing = false;
};

/// Mixture regression with every per-component factorization done up front; evaluating a
/// query afterwards costs a few triangular solves per component.
class GmrRegressor {
public:
    GmrRegressor() = default;

    GmrRegressor(const GaussianMixture& gmm, const BlockPartition& blocks) : blocks_(blocks) {
        const auto comps = partition(gmm, blocks);
        log_weights_.resize(gmm.k());
        for (int k = 0; k < gmm.k(); ++k) {
            const auto& c = comps[static_cast<std::size_t>(k)];
            Entry e;
            e.mean_in = c.mean_in;
            e.mean_out = c.mean_out;
            e.llt = detail::factor_input(c.cov_in);
            e.log_norm = -0.5 * (static_cast<double>(c.mean_in.size()) * detail::kLog2Pi +
                                 2.0 * e.llt.matrixLLT().diagonal().array().log().sum());
            // gain = Sigma_out_in * Sigma_in^{-1}, obtained from the factorization.
            e.gain = e.llt.solve(c.cov_in_out).transpose();
            e.cond_cov = c.cov_out - c.cov_out_in * e.llt.solve(c.cov_in_out);
            e.cond_cov = 0.5 * (e.cond_cov + e.cond_cov.transpose()).eval();
            log_weights_[k] = gmm.weights[k] > 0.0 ? std::log(gmm.weights[k]) : -std::numeric_limits<double>::infinity();
            entries_.push_back(std::move(e));
        }
    }

    int input_dim() const { return static_cast<int>(blocks_.input.size()); }
    int output_dim() const { return static_cast<int>(blocks_.output.size()); }
    const BlockPartition& blocks() const { return blocks_; }

    ConditionalEstimate operator()(const VectorXd& x_in) const {
        if (x_in.size() != input_dim())
            throw InputError("regress: expected input of size " + std::to_string(input_dim()) + ", got " +
                             std::to_string(x_in.size()));
        const auto n_comp = static_cast<Eigen::Index>(entries_.size());
        VectorXd lp(n_comp);
        std::vector<VectorXd> diffs(entries_.size());
        for (Eigen::Index k = 0; k < n_comp; ++k) {
            const auto& e = entries_[static_cast<std::size_t>(k)];
            VectorXd z = x_in - e.mean_in;
            diffs[static_cast<std::size_t>(k)] = z;
            e.llt.matrixL().solveInPlace(z);
            lp[k] = log_weights_[k] + e.log_norm - 0.5 * z.squaredNorm();
        }
        ConditionalEstimate out;
        const double m = lp.maxCoeff();
        if (!std::isfinite(m)) {
            out.mixing = VectorXd::Constant(n_comp, 1.0 / static_cast<double>(n_comp));
            out.degenerate_mixing = true;
        } else {
            out.mixing = (lp.array() - m).exp();
            out.mixing /= out.mixing.sum();
        }
        out.mean = VectorXd::Zero(output_dim());
        out.covariance = MatrixXd::Zero(output_dim(), output_dim());
        for (Eigen::Index k = 0; k < n_comp; ++k) {
            const double b = out.mixing[k];
            if (b == 0.0) continue;
            const auto& e = entries_[static_cast<std::size_t>(k)];
            out.mean.noalias() += b * (e.mean_out + e.gain * diffs[static_cast<std::size_t>(k)]);
            out.covariance.noalias() += (b * b) * e.cond_cov;
        }
        return out;
    }

private:
    struct Entry {
        VectorXd mean_in;
        VectorXd mean_out;
        Eigen::LLT<MatrixXd> llt;
        double log_norm = 0.0;
        MatrixXd gain;
        MatrixXd cond_cov;
    };
    BlockPartition blocks_;
    VectorXd log_weights_;
    std::vector<Entry> entries_;
};

inline ConditionalEstimate regress(const GaussianMixture& gmm, const BlockPartition& blocks, const VectorXd& x_in) {
    return GmrRegressor(gmm, blocks)(x_in);
}

}  // namespace drivemp
