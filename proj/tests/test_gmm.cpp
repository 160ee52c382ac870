#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "drivemp/gmm.hpp"

using namespace drivemp;

namespace {

MatrixXd gaussian_cloud(std::mt19937_64& rng, int n, const VectorXd& mean, double sd) {
    std::normal_distribution<double> g;
    MatrixXd x(n, mean.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < mean.size(); ++j) x(i, j) = mean[j] + sd * g(rng);
    return x;
}

GaussianMixture random_mixture(std::mt19937_64& rng, int k, int d) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.2, 1.0);
    GaussianMixture m;
    m.weights.resize(k);
    for (int c = 0; c < k; ++c) {
        m.weights[c] = u(rng);
        MatrixXd a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = 0.5 * g(rng);
        VectorXd mu(d);
        for (int i = 0; i < d; ++i) mu[i] = 2.0 * g(rng);
        m.components.push_back({mu, a * a.transpose() + 0.3 * MatrixXd::Identity(d, d)});
    }
    m.weights /= m.weights.sum();
    return m;
}

/// Plain-arithmetic multivariate normal density, for comparison with the log-space code.
double naive_normal(const VectorXd& x, const GaussianComponent& c) {
    const int d = static_cast<int>(x.size());
    const VectorXd z = x - c.mean;
    const double q = z.dot(c.covariance.inverse() * z);
    return std::exp(-0.5 * q) / std::sqrt(std::pow(2 * std::numbers::pi, d) * c.covariance.determinant());
}

GaussianMixture permuted(const GaussianMixture& m, const std::vector<int>& order) {
    GaussianMixture p;
    p.weights.resize(m.k());
    for (int i = 0; i < m.k(); ++i) {
        p.weights[i] = m.weights[order[i]];
        p.components.push_back(m.components[order[i]]);
    }
    return p;
}

}  // namespace

TEST(Density, StandardNormalPeak) {
    GaussianMixture m{VectorXd::Ones(1), {{VectorXd::Zero(1), MatrixXd::Identity(1, 1)}}};
    const auto d = density(m, VectorXd::Zero(1));
    EXPECT_NEAR(d.linear, 1.0 / std::sqrt(2 * std::numbers::pi), 1e-15);
    EXPECT_NEAR(d.log, -0.5 * std::log(2 * std::numbers::pi), 1e-15);
}

TEST(Density, SymmetricPairAtMidpoint) {
    GaussianMixture m{VectorXd::Constant(2, 0.5),
                      {{VectorXd::Constant(1, -1.0), MatrixXd::Identity(1, 1)},
                       {VectorXd::Constant(1, 1.0), MatrixXd::Identity(1, 1)}}};
    const double expected = std::exp(-0.5) / std::sqrt(2 * std::numbers::pi);
    EXPECT_NEAR(density(m, VectorXd::Zero(1)).linear, expected, 1e-15);
}

TEST(Density, IntegratesToOne) {
    std::mt19937_64 rng(17);
    auto m = random_mixture(rng, 3, 2);
    for (auto& c : m.components) c.mean *= 0.5;
    // Trapezoid rule on a 50 x 50 grid wide enough to hold every component.
    const int n = 50;
    const double lo = -9.0, hi = 9.0, h = (hi - lo) / (n - 1);
    double total = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
            total += w * density(m, (VectorXd(2) << lo + i * h, lo + j * h).finished()).linear;
        }
    }
    EXPECT_NEAR(total * h * h, 1.0, 1e-2);
}

TEST(Density, DimensionMismatch) {
    GaussianMixture m{VectorXd::Ones(1), {{VectorXd::Zero(2), MatrixXd::Identity(2, 2)}}};
    EXPECT_THROW(density(m, VectorXd::Zero(3)), InputError);
}

TEST(Density, InvariantUnderReordering) {
    std::mt19937_64 rng(5);
    const auto m = random_mixture(rng, 4, 3);
    const auto p = permuted(m, {2, 0, 3, 1});
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 20; ++rep) {
        VectorXd x(3);
        for (int i = 0; i < 3; ++i) x[i] = 2 * g(rng);
        EXPECT_NEAR(density(m, x).log, density(p, x).log, 1e-12);
    }
}

TEST(KMeansInit, SingleClusterIsDataMoments) {
    std::mt19937_64 rng(1);
    const MatrixXd x = gaussian_cloud(rng, 200, VectorXd::Constant(2, 3.0), 1.5);
    const auto m = kmeans_init(x, 1, 7, 0.0);
    const VectorXd mean = x.colwise().mean();
    const MatrixXd centered = x.rowwise() - mean.transpose();
    const MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
    EXPECT_TRUE(m.components[0].mean.isApprox(mean, 1e-12));
    EXPECT_TRUE(m.components[0].covariance.isApprox(cov, 1e-10));
    EXPECT_DOUBLE_EQ(m.weights[0], 1.0);
}

TEST(KMeansInit, SeparatedCloudsFound) {
    std::mt19937_64 rng(2);
    const VectorXd a = (VectorXd(2) << 0.0, 0.0).finished();
    const VectorXd b = (VectorXd(2) << 20.0, -10.0).finished();
    MatrixXd x(400, 2);
    x << gaussian_cloud(rng, 200, a, 0.5), gaussian_cloud(rng, 200, b, 0.5);
    const auto m = kmeans_init(x, 2, 3);
    const bool order = m.components[0].mean[0] < m.components[1].mean[0];
    EXPECT_LT((m.components[order ? 0 : 1].mean - a).norm(), 0.1);
    EXPECT_LT((m.components[order ? 1 : 0].mean - b).norm(), 0.1);
    EXPECT_NEAR(m.weights[0], 0.5, 1e-12);
}

TEST(KMeansInit, EveryPointItsOwnCenter) {
    MatrixXd x(5, 1);
    x << 0, 1, 3, 7, 15;
    const auto m = kmeans_init(x, 5, 9);
    std::vector<double> centers;
    for (const auto& c : m.components) centers.push_back(c.mean[0]);
    std::sort(centers.begin(), centers.end());
    EXPECT_EQ(centers, (std::vector<double>{0, 1, 3, 7, 15}));
    for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(m.weights[i], 0.2);
    EXPECT_THROW(kmeans_init(x, 6, 1), InputError);
}

TEST(EmFit, SingleGaussianMatchesClosedForm) {
    std::mt19937_64 rng(3);
    const MatrixXd x = gaussian_cloud(rng, 500, (VectorXd(2) << 1.0, -2.0).finished(), 2.0);
    const auto r = em_fit(x, {.k = 1, .seed = 4});
    const VectorXd mean = x.colwise().mean();
    const double se = 2.0 / std::sqrt(500.0);
    EXPECT_LT((r.mixture.components[0].mean - mean).cwiseAbs().maxCoeff(), 3 * se);
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
        EXPECT_GE(r.log_likelihood[i], r.log_likelihood[i - 1] - 1e-9 * std::abs(r.log_likelihood[i - 1]));
}

TEST(EmFit, RecoversTwoComponentMixture) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    std::bernoulli_distribution pick(0.5);
    MatrixXd x(2000, 1);
    for (int i = 0; i < 2000; ++i) x(i, 0) = (pick(rng) ? 5.0 : 0.0) + g(rng);
    const auto r = em_fit(x, {.k = 2, .seed = 1});
    std::vector<double> mu{r.mixture.components[0].mean[0], r.mixture.components[1].mean[0]};
    std::sort(mu.begin(), mu.end());
    EXPECT_NEAR(mu[0], 0.0, 0.2);
    EXPECT_NEAR(mu[1], 5.0, 0.2);
}

TEST(EmFit, InfiniteToleranceStopsAfterOneStep) {
    std::mt19937_64 rng(7);
    const MatrixXd x = gaussian_cloud(rng, 100, VectorXd::Zero(2), 1.0);
    const auto r = em_fit(x, {.k = 2, .tol = std::numeric_limits<double>::infinity(), .seed = 2});
    EXPECT_EQ(r.log_likelihood.size(), 1u);
    EXPECT_TRUE(r.converged);
}

TEST(EmFit, BitReproducible) {
    std::mt19937_64 rng(8);
    const MatrixXd x = gaussian_cloud(rng, 300, VectorXd::Zero(3), 1.0);
    const FitConfig cfg{.k = 3, .seed = 42};
    const auto a = em_fit(x, cfg), b = em_fit(x, cfg);
    ASSERT_EQ(a.log_likelihood, b.log_likelihood);
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(a.mixture.weights[k], b.mixture.weights[k]);
        EXPECT_TRUE(a.mixture.components[k].mean == b.mixture.components[k].mean);
        EXPECT_TRUE(a.mixture.components[k].covariance == b.mixture.components[k].covariance);
    }
}

TEST(EmFit, RejectsBadInput) {
    MatrixXd x = MatrixXd::Zero(3, 2);
    EXPECT_THROW(em_fit(x, {.k = 3}), InputError);
    EXPECT_THROW(em_fit(x, {.k = 0}), InputError);
    EXPECT_THROW(em_fit(x, {.k = 1, .tol = 0.0}), InputError);
    x(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(em_fit(x, {.k = 1}), InputError);
}

TEST(EmFit, CovarianceInvariants) {
    std::mt19937_64 rng(9);
    const auto truth = random_mixture(rng, 3, 4);
    MatrixXd x(600, 4);
    std::normal_distribution<double> g;
    for (int i = 0; i < 600; ++i) {
        const auto& c = truth.components[i % 3];
        const Eigen::LLT<MatrixXd> l(c.covariance);
        VectorXd z(4);
        for (int j = 0; j < 4; ++j) z[j] = g(rng);
        x.row(i) = (c.mean + l.matrixL() * z).transpose();
    }
    const auto r = em_fit(x, {.k = 3, .seed = 5});
    EXPECT_NEAR(r.mixture.weights.sum(), 1.0, 1e-9);
    EXPECT_GE(r.mixture.weights.minCoeff(), 0.0);
    for (const auto& c : r.mixture.components) {
        EXPECT_LT((c.covariance - c.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-9);
        const Eigen::SelfAdjointEigenSolver<MatrixXd> es(c.covariance);
        EXPECT_GE(es.eigenvalues().minCoeff(), r.floor * (1 - 1e-9));
    }
}

TEST(Responsibility, SingleComponentIsOne) {
    GaussianMixture m{VectorXd::Ones(1), {{VectorXd::Zero(2), MatrixXd::Identity(2, 2)}}};
    EXPECT_DOUBLE_EQ(responsibility(m, (VectorXd(2) << 30.0, -4.0).finished()).probabilities[0], 1.0);
}

TEST(Responsibility, MidpointIsHalf) {
    GaussianMixture m{VectorXd::Constant(2, 0.5),
                      {{VectorXd::Constant(1, -2.0), MatrixXd::Identity(1, 1)},
                       {VectorXd::Constant(1, 2.0), MatrixXd::Identity(1, 1)}}};
    const auto r = responsibility(m, VectorXd::Zero(1));
    EXPECT_NEAR(r.probabilities[0], 0.5, 1e-15);
    EXPECT_NEAR(r.probabilities[1], 0.5, 1e-15);
}

TEST(Responsibility, MatchesNaiveArithmetic) {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 30; ++rep) {
        const auto m = random_mixture(rng, 3, 3);
        VectorXd x(3);
        for (int i = 0; i < 3; ++i) x[i] = g(rng);
        VectorXd naive(3);
        for (int k = 0; k < 3; ++k) naive[k] = m.weights[k] * naive_normal(x, m.components[k]);
        naive /= naive.sum();
        const auto r = responsibility(m, x);
        EXPECT_LT((r.probabilities - naive).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_NEAR(r.probabilities.sum(), 1.0, 1e-9);
    }
}

TEST(Responsibility, PermutationEquivariant) {
    std::mt19937_64 rng(12);
    const auto m = random_mixture(rng, 3, 2);
    const std::vector<int> order{1, 2, 0};
    const auto p = permuted(m, order);
    const VectorXd x = (VectorXd(2) << 0.3, -0.7).finished();
    const auto a = responsibility(m, x).probabilities;
    const auto b = responsibility(p, x).probabilities;
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(b[i], a[order[i]], 1e-12);
}

TEST(Responsibility, FarOutlierStillNormalized) {
    GaussianMixture m{VectorXd::Constant(2, 0.5),
                      {{VectorXd::Constant(1, 0.0), MatrixXd::Identity(1, 1)},
                       {VectorXd::Constant(1, 1.0), MatrixXd::Identity(1, 1)}}};
    const auto r = responsibility(m, VectorXd::Constant(1, 1e6));
    EXPECT_FALSE(r.degenerate);
    EXPECT_NEAR(r.probabilities.sum(), 1.0, 1e-12);
    GaussianMixture z{VectorXd::Zero(2), m.components};
    const auto u = responsibility(z, VectorXd::Zero(1));
    EXPECT_TRUE(u.degenerate);
    EXPECT_DOUBLE_EQ(u.probabilities[0], 0.5);
}

TEST(Bic, SingleGaussianFormula) {
    std::mt19937_64 rng(13);
    const MatrixXd x = gaussian_cloud(rng, 100, VectorXd::Zero(1), 1.0);
    const auto r = em_fit(x, {.k = 1, .seed = 1});
    const double ll = log_likelihood(r.mixture, x);
    EXPECT_NEAR(bic(r.mixture, x), -2.0 * ll + 2.0 * std::log(100.0), 1e-9);
}

TEST(Bic, ParameterCount) {
    EXPECT_EQ(free_parameters(3, 4), 44);
    EXPECT_EQ(free_parameters(1, 1), 2);
}

TEST(Bic, PrefersOneComponentForGaussianData) {
    int wins = 0;
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const MatrixXd x = gaussian_cloud(rng, 100, VectorXd::Zero(1), 1.0);
        const auto one = em_fit(x, {.k = 1, .seed = static_cast<std::uint64_t>(seed)});
        const auto two = em_fit(x, {.k = 2, .seed = static_cast<std::uint64_t>(seed)});
        if (bic(two.mixture, x) > bic(one.mixture, x)) ++wins;
    }
    EXPECT_GE(wins, 18);
}

TEST(SelectK, ThreeSeparatedClusters) {
    std::mt19937_64 rng(14);
    MatrixXd x(300, 2);
    x << gaussian_cloud(rng, 100, (VectorXd(2) << 0.0, 0.0).finished(), 1.0),
        gaussian_cloud(rng, 100, (VectorXd(2) << 12.0, 0.0).finished(), 1.0),
        gaussian_cloud(rng, 100, (VectorXd(2) << 0.0, 12.0).finished(), 1.0);
    const auto sel = select_k(x, {1, 2, 3, 4, 5, 6}, {.seed = 3});
    EXPECT_EQ(sel.best_k, 3);
    EXPECT_EQ(sel.ks.size(), 6u);
    EXPECT_EQ(sel.best().mixture.k(), 3);
}

TEST(SelectK, SingleGaussianPicksOne) {
    int ones = 0;
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(200 + seed);
        const MatrixXd x = gaussian_cloud(rng, 200, VectorXd::Zero(2), 1.0);
        if (select_k(x, {1, 2, 3, 4}, {.seed = static_cast<std::uint64_t>(seed)}).best_k == 1) ++ones;
    }
    EXPECT_GE(ones, 18);
}

TEST(SelectK, SingleCandidateAndErrors) {
    std::mt19937_64 rng(15);
    const MatrixXd x = gaussian_cloud(rng, 50, VectorXd::Zero(2), 1.0);
    EXPECT_EQ(select_k(x, {2}, {}).best_k, 2);
    EXPECT_THROW(select_k(x, {}, {}), InputError);
    EXPECT_THROW(select_k(x, {50}, {}), InputError);
}
