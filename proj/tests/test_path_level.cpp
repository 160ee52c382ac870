#include <gtest/gtest.h>

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <random>

#include "drivemp/path_level.hpp"
#include "support.hpp"

using namespace drivemp;
using drivemp::testing::trace_from_dtheta;

namespace {

/// Reference implementation of the run-merge rule, written independently: repeatedly take the
/// shortest run under min_len (earliest first), give its samples to the longer neighbour (the
/// left one on ties), then fuse neighbours that share a direction.
std::vector<std::pair<std::size_t, Direction>> reference_runs(const std::vector<double>& dtheta, double thr,
                                                              std::size_t min_len) {
    std::vector<std::pair<std::size_t, Direction>> runs;  // (length, direction)
    for (double x : dtheta) {
        const Direction d = x > thr ? Direction::Left : (x < -thr ? Direction::Right : Direction::Neutral);
        if (!runs.empty() && runs.back().second == d)
            ++runs.back().first;
        else
            runs.push_back({1, d});
    }
    if (dtheta.size() < min_len) return {{dtheta.size(), Direction::Neutral}};
    while (runs.size() > 1) {
        std::size_t v = runs.size();
        for (std::size_t i = 0; i < runs.size(); ++i)
            if (runs[i].first < min_len && (v == runs.size() || runs[i].first < runs[v].first)) v = i;
        if (v == runs.size()) break;
        std::size_t into = v == 0 ? 1 : (v + 1 == runs.size() ? v - 1 : (runs[v + 1].first > runs[v - 1].first ? v + 1 : v - 1));
        runs[into].first += runs[v].first;
        runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(v));
        for (std::size_t i = 1; i < runs.size();) {
            if (runs[i].second == runs[i - 1].second) {
                runs[i - 1].first += runs[i].first;
                runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(i));
            } else {
                ++i;
            }
        }
    }
    return runs;
}

void expect_tiles(const std::vector<PathSegment>& segs, std::size_t n) {
    ASSERT_FALSE(segs.empty());
    EXPECT_EQ(segs.front().start, 0u);
    EXPECT_EQ(segs.back().end, n);
    for (std::size_t i = 0; i < segs.size(); ++i) {
        EXPECT_LT(segs[i].start, segs[i].end);
        if (i > 0) {
            EXPECT_EQ(segs[i].start, segs[i - 1].end);
        }
    }
}

}  // namespace

TEST(SegmentTrace, ZeroCourseIsOneNeutralSegment) {
    const auto t = trace_from_dtheta(std::vector<double>(100, 0.0));
    const auto segs = segment_trace(t, {});
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0].direction, Direction::Neutral);
    EXPECT_EQ(segs[0].end, 100u);
    EXPECT_EQ(segs[0].trace_id, "t");
}

TEST(SegmentTrace, LeftThenRightBoundary) {
    std::vector<double> d(40, 0.2);
    std::fill(d.begin() + 20, d.end(), -0.2);
    const auto segs = segment_course(d, {0.05, 3});
    // Sample 0 has dtheta 0.2 here too: the course is given directly, not differenced.
    ASSERT_EQ(segs.size(), 2u);
    EXPECT_EQ(segs[0].end, 20u);
    EXPECT_EQ(segs[0].direction, Direction::Left);
    EXPECT_EQ(segs[1].direction, Direction::Right);
}

TEST(SegmentTrace, AlternatingNoiseAbsorbed) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> sign(0, 1);
    std::vector<double> d(300, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i % 50 < 25) d[i] = 0.3;                       // long left runs
        if (i % 7 == 0) d[i] = sign(rng) ? 0.2 : -0.2;     // isolated spikes of either sign
    }
    const auto segs = segment_course(d, {0.05, 5});
    const auto ref = reference_runs(d, 0.05, 5);
    ASSERT_EQ(segs.size(), ref.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
        EXPECT_EQ(segs[i].size(), ref[i].first);
        EXPECT_EQ(segs[i].direction, ref[i].second);
    }
}

TEST(SegmentTrace, ShorterThanMinLen) {
    const std::vector<double> d{0.5, -0.5, 0.5};
    const auto segs = segment_course(d, {0.05, 5});
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0].direction, Direction::Neutral);
    EXPECT_THROW(segment_course(d, {0.0, 5}), InputError);
    EXPECT_THROW(segment_course(d, {0.1, 0}), InputError);
}

TEST(SegmentTrace, RandomTracesTileAndMatchReference) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> len(1, 30), dir(0, 2), n_runs(1, 15), min_len(1, 8);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> d;
        for (int r = n_runs(rng); r > 0; --r) {
            const double v = std::array<double, 3>{0.2, -0.2, 0.0}[dir(rng)];
            d.insert(d.end(), len(rng), v);
        }
        const SegmentationConfig cfg{0.05, min_len(rng)};
        const auto segs = segment_course(d, cfg);
        expect_tiles(segs, d.size());
        const auto ref = reference_runs(d, cfg.threshold_deg, cfg.min_len);
        ASSERT_EQ(segs.size(), ref.size()) << "rep " << rep;
        for (std::size_t i = 0; i < segs.size(); ++i) EXPECT_EQ(segs[i].size(), ref[i].first);
        for (std::size_t i = 1; i < segs.size(); ++i) EXPECT_NE(segs[i].direction, segs[i - 1].direction);
    }
}

TEST(ExtractFeatures, ConstantRegime) {
    std::vector<double> d(83, 0.15);
    const std::vector<double> v(83, 33.45);
    const auto f = extract_features({"", 0, 83, Direction::Left}, d, v);
    EXPECT_NEAR(f.td, 8.3, 1e-12);
    EXPECT_NEAR(f.ave_cd, 0.15, 1e-12);
    EXPECT_NEAR(f.max_cd, 0.15, 1e-12);
    EXPECT_NEAR(f.ave_vel, 33.45, 1e-12);
}

TEST(ExtractFeatures, Ramp) {
    std::vector<double> d(41);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.01 * static_cast<double>(i);
    const std::vector<double> v(41, 20.0);
    const auto f = extract_features({"", 0, 41, Direction::Left}, d, v);
    EXPECT_NEAR(f.max_cd, 0.4, 1e-12);
    EXPECT_NEAR(f.ave_cd, 0.2, 1e-12);
}

TEST(ExtractFeatures, RandomSegmentsMatchLoop) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    std::vector<double> d(500), v(500);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = 0.2 * g(rng);
        v[i] = 40 + 5 * g(rng);
    }
    std::uniform_int_distribution<std::size_t> pos(0, 499);
    for (int rep = 0; rep < 50; ++rep) {
        std::size_t a = pos(rng), b = pos(rng);
        if (a > b) std::swap(a, b);
        ++b;
        double s = 0, m = 0, sv = 0;
        for (std::size_t i = a; i < b; ++i) {
            s += std::abs(d[i]);
            m = std::max(m, std::abs(d[i]));
            sv += v[i];
        }
        const double n = static_cast<double>(b - a);
        const auto f = extract_features({"", a, b, Direction::Neutral}, d, v);
        EXPECT_NEAR(f.td, 0.1 * n, 1e-12);
        EXPECT_NEAR(f.ave_cd, s / n, 1e-12);
        EXPECT_NEAR(f.max_cd, m, 1e-12);
        EXPECT_NEAR(f.ave_vel, sv / n, 1e-9);
    }
    EXPECT_THROW(extract_features({"", 10, 10, Direction::Neutral}, d, v), InputError);
    EXPECT_THROW(extract_features({"", 10, 501, Direction::Neutral}, d, v), InputError);
}

namespace {

/// Features scattered around the centroids of three typical path primitives.
std::vector<PathFeatures> typical_regimes(std::mt19937_64& rng, int per_cluster, double spread) {
    const std::array<PathFeatures, 3> centers{{{8.29, 0.15, 0.45, 33.45}, {0.24, 0.008, 0.01, 50.31},
                                               {1.15, 0.024, 0.05, 54.69}}};
    std::normal_distribution<double> g;
    std::vector<PathFeatures> out;
    for (int i = 0; i < per_cluster; ++i) {
        for (const auto& c : centers) {
            out.push_back({c.td * (1 + spread * g(rng)), c.ave_cd * (1 + spread * g(rng)),
                           c.max_cd * (1 + spread * g(rng)), c.ave_vel * (1 + spread * g(rng))});
        }
    }
    return out;
}

}  // namespace

TEST(FitPathModel, ThreeTypicalRegimes) {
    std::mt19937_64 rng(6);
    const auto feats = typical_regimes(rng, 60, 0.03);
    const auto model = fit_path_model(feats, {1, 2, 3, 4, 5, 6}, {.seed = 2, .kmeans_restarts = 10});
    ASSERT_EQ(model.clusters(), 3);
    const std::array<Eigen::Vector4d, 3> truth{Eigen::Vector4d(8.29, 0.15, 0.45, 33.45),
                                               Eigen::Vector4d(0.24, 0.008, 0.01, 50.31),
                                               Eigen::Vector4d(1.15, 0.024, 0.05, 54.69)};
    for (const auto& t : truth) {
        double best = 1e9;
        for (int l = 1; l <= 3; ++l)
            best = std::min(best, (model.centroid(l) - t).cwiseQuotient(t).cwiseAbs().maxCoeff());
        EXPECT_LT(best, 0.10);
    }
}

TEST(FitPathModel, OneTightCluster) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::vector<PathFeatures> feats;
    for (int i = 0; i < 120; ++i) feats.push_back({5 + 0.1 * g(rng), 0.1 + 0.002 * g(rng), 0.3 + 0.005 * g(rng), 40 + g(rng)});
    EXPECT_EQ(fit_path_model(feats, {1, 2, 3, 4}, {.seed = 1}).clusters(), 1);
}

TEST(FitPathModel, StandardizedColumns) {
    std::mt19937_64 rng(8);
    const auto x = feature_matrix(typical_regimes(rng, 20, 0.05));
    const auto s = Standardizer::fit(x);
    const auto z = s.apply(x);
    for (int c = 0; c < 4; ++c) {
        const double mean = z.col(c).mean();
        const double sd = std::sqrt((z.col(c).array() - mean).square().mean());
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(sd, 1.0, 1e-9);
    }
}

TEST(FitPathModel, LabelsReproduceTrainingAssignment) {
    std::mt19937_64 rng(9);
    const auto feats = typical_regimes(rng, 30, 0.03);
    const auto model = fit_path_model(feats, {3}, {.seed = 4});
    const auto z = model.standardizer.apply(feature_matrix(feats));
    const auto labels = label_segments(model, feats);
    for (std::size_t i = 0; i < feats.size(); ++i) {
        const auto r = responsibility(model.gmm, z.row(static_cast<Eigen::Index>(i)).transpose());
        Eigen::Index best = 0;
        r.probabilities.maxCoeff(&best);
        EXPECT_EQ(labels[i], best + 1);
    }
}

TEST(LabelSegments, ComponentMeanGetsItsLabel) {
    std::mt19937_64 rng(10);
    const auto feats = typical_regimes(rng, 30, 0.03);
    const auto model = fit_path_model(feats, {3}, {.seed = 4});
    for (int l = 1; l <= 3; ++l) {
        const Eigen::Vector4d c = model.centroid(l);
        EXPECT_EQ(label_features(model, {c[0], c[1], c[2], c[3]}), l);
    }
}

TEST(LabelSegments, SingleComponentLabelsOne) {
    std::mt19937_64 rng(11);
    const auto feats = typical_regimes(rng, 20, 0.05);
    const auto model = fit_path_model(feats, {1}, {});
    for (int l : label_segments(model, feats)) EXPECT_EQ(l, 1);
}

TEST(LabelSegments, NaiveArgmax) {
    std::mt19937_64 rng(12);
    const auto feats = typical_regimes(rng, 30, 0.2);
    const auto model = fit_path_model(feats, {3}, {.seed = 5});
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 50; ++rep) {
        const PathFeatures f{4 + 3 * g(rng), 0.07 + 0.05 * g(rng), 0.2 + 0.2 * g(rng), 45 + 8 * g(rng)};
        const Eigen::Vector4d z = model.standardizer.apply(f.as_vector());
        int best = 0;
        double best_p = -1;
        for (int k = 0; k < 3; ++k) {
            const auto& c = model.gmm.components[k];
            const Eigen::Vector4d d = z - c.mean;
            const double p = model.gmm.weights[k] * std::exp(-0.5 * d.dot(c.covariance.inverse() * d)) /
                             std::sqrt(c.covariance.determinant());
            if (p > best_p) {
                best_p = p;
                best = k + 1;
            }
        }
        EXPECT_EQ(label_features(model, f), best);
    }
}

TEST(BuildTriples, SingleSegment) {
    const auto t = build_triples({2});
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0], (PathTypeTriple{2, 2, 2}));
}

TEST(BuildTriples, EdgesReplicateOwnLabel) {
    const auto t = build_triples({1, 3, 2});
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[0], (PathTypeTriple{1, 1, 3}));
    EXPECT_EQ(t[1], (PathTypeTriple{1, 3, 2}));
    EXPECT_EQ(t[2], (PathTypeTriple{3, 2, 2}));
}

TEST(BuildTriples, EncodeDecodeRoundTripAndUnique) {
    EXPECT_EQ((PathTypeTriple{1, 1, 1}).encode(3), 1);
    EXPECT_EQ((PathTypeTriple{3, 3, 3}).encode(3), 27);
    EXPECT_EQ((PathTypeTriple{1, 3, 2}).encode(3), 8);
    std::mt19937_64 rng(13);
    for (int n = 1; n <= 5; ++n) {
        std::vector<int> seen(static_cast<std::size_t>(n * n * n) + 1, 0);
        for (int a = 1; a <= n; ++a)
            for (int b = 1; b <= n; ++b)
                for (int c = 1; c <= n; ++c) ++seen.at(static_cast<std::size_t>(PathTypeTriple{a, b, c}.encode(n)));
        for (std::size_t id = 1; id < seen.size(); ++id) EXPECT_EQ(seen[id], 1);
        std::uniform_int_distribution<int> lab(1, n), len(1, 20);
        for (int rep = 0; rep < 100; ++rep) {
            std::vector<int> labels(static_cast<std::size_t>(len(rng)));
            for (auto& l : labels) l = lab(rng);
            for (const auto& t : build_triples(labels)) EXPECT_EQ(PathTypeTriple::decode(t.encode(n), n), t);
        }
    }
}

TEST(SegmentReport, Columns) {
    std::vector<double> d(60, 0.0);
    std::fill(d.begin() + 20, d.begin() + 40, 0.25);
    const auto t = trace_from_dtheta(d, 30.0, "x");
    auto lt = segment_and_describe(t, {});
    ASSERT_EQ(lt.segments.size(), 3u);
    lt.labels = {1, 2, 1};
    lt.triples = build_triples(lt.labels);
    const auto csv = segment_report_csv({lt}, 2);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "trace_id,start_idx,end_idx,direction,td,ave_cd,max_cd,ave_vel,label,type_id");
    EXPECT_NE(csv.find("x,20,40,left,"), std::string::npos);
    EXPECT_NEAR(lt.features[1].ave_cd, 0.25, 1e-12);
    EXPECT_EQ(lt.segment_of(25), 1u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}
