#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "letet/nn/layers.hpp"
#include "letet/tokenize.hpp"
#include "support.hpp"

using namespace letet;
namespace ts = testing_support;

namespace {

LandmarkSet landmarks_at(const std::vector<Vec3>& v, std::vector<int> idx) {
    LandmarkSet s;
    for (int i : idx) s.positions.push_back(v[i]);
    s.indices = std::move(idx);
    return s;
}

std::vector<Vec3> random_points(int n, std::uint64_t seed) {
    letet::Rng rng(seed);
    std::vector<Vec3> p(n);
    for (Vec3& x : p) x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    return p;
}

} // namespace

TEST(Patches, SingleLandmarkOwnsEverything) {
    const auto v = random_points(30, 1);
    const PatchAssignment p = assign_patches(v, landmarks_at(v, {7}));
    EXPECT_EQ(p.n_patches, 1);
    EXPECT_EQ(p.sizes, std::vector<int>{30});
    for (int l : p.labels) EXPECT_EQ(l, 0);
}

TEST(Patches, TieGoesToLowerOrdinal) {
    std::vector<Vec3> v{{-1, 0, 0}, {0, 5, 0}, {1, 0, 0}, {0, 0, 0}, {0, -5, 0}, {3, 3, 3}};
    // Landmark ordinals: 0 -> vertex 1, 1 -> vertex 4, 2 -> vertex 0, ... vertex 3 is equidistant to 0 and 2.
    const PatchAssignment p = assign_patches(v, landmarks_at(v, {1, 4, 0, 5, 2}));
    EXPECT_EQ(p.labels[3], 2);
}

TEST(Patches, MatchesBruteForceNearestScan) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto v = random_points(200, seed);
        const std::vector<int> idx{3, 50, 77, 12, 199, 100, 140, 8};
        const PatchAssignment p = assign_patches(v, landmarks_at(v, idx));
        std::vector<int> sizes(8, 0);
        for (std::size_t i = 0; i < v.size(); ++i) {
            int best = 0;
            for (int s = 1; s < 8; ++s) {
                const double ds = std::pow(v[i][0] - v[idx[s]][0], 2) + std::pow(v[i][1] - v[idx[s]][1], 2) +
                                  std::pow(v[i][2] - v[idx[s]][2], 2);
                const double db = std::pow(v[i][0] - v[idx[best]][0], 2) + std::pow(v[i][1] - v[idx[best]][1], 2) +
                                  std::pow(v[i][2] - v[idx[best]][2], 2);
                if (ds < db) best = s;
            }
            EXPECT_EQ(p.labels[i], best);
            ++sizes[best];
        }
        EXPECT_EQ(p.sizes, sizes);
        for (int s = 0; s < 8; ++s) EXPECT_EQ(p.centers[s], v[idx[s]]);
    }
}

TEST(Patches, InvariantsHold) {
    const auto v = random_points(150, 9);
    const PatchAssignment p = assign_patches(v, landmarks_at(v, {0, 1, 2, 3, 4, 5}));
    int total = 0;
    for (int s : p.sizes) {
        EXPECT_GT(s, 0);
        total += s;
    }
    EXPECT_EQ(total, 150);
}

TEST(RadiusGraph, PairExamples) {
    const EdgeList near = build_radius_graph({{0, 0, 0}, {0.4, 0, 0}}, 0.5);
    EXPECT_EQ(near.targets, (std::vector<int>{0, 0, 1, 1}));
    EXPECT_EQ(near.sources, (std::vector<int>{0, 1, 0, 1}));
    const EdgeList far = build_radius_graph({{0, 0, 0}, {0.6, 0, 0}}, 0.5);
    EXPECT_EQ(far.targets, (std::vector<int>{0, 1}));
    EXPECT_EQ(far.sources, (std::vector<int>{0, 1}));
    EXPECT_THROW(build_radius_graph({{0, 0, 0}}, 0.0), DataError);
}

TEST(RadiusGraph, MatchesBruteForceAndIsSymmetric) {
    const auto c = random_points(64, 4);
    const EdgeList e = build_radius_graph(c, 0.5);
    std::set<std::pair<int, int>> got, want;
    for (std::size_t k = 0; k < e.size(); ++k) {
        got.insert({e.targets[k], e.sources[k]});
        if (k > 0) {
            EXPECT_LE(std::make_pair(e.targets[k - 1], e.sources[k - 1]), std::make_pair(e.targets[k], e.sources[k]));
        }
    }
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
            const double d = std::sqrt(letet::squared_distance(c[i], c[j]));
            if (d <= 0.5) want.insert({i, j});
        }
    EXPECT_EQ(got, want);
    for (const auto& [i, j] : got) EXPECT_TRUE(got.count({j, i}));
    std::size_t prev = 0;
    for (double r : {0.1, 0.3, 0.5, 0.9, 2.0}) {
        const std::size_t n = build_radius_graph(c, r).size();
        EXPECT_GE(n, prev);
        prev = n;
    }
}

TEST(Pooling, MeansAndGradient) {
    std::vector<Vec3> v{{0, 0, 0}, {0.1, 0, 0}, {5, 0, 0}};
    const PatchAssignment p = assign_patches(v, landmarks_at(v, {0, 2}));
    const nn::Tensor x = nn::Tensor::constant(3, 2, {2, 1, 4, 1, 9, 9});
    const nn::Tensor pooled = nn::pool_patch_features(x, p);
    EXPECT_EQ(pooled.at(0, 0), 3.0);
    EXPECT_EQ(pooled.at(1, 0), 9.0);

    letet::Rng rng(2);
    nn::Tensor xp = ts::random_tensor(3, 2, rng, true);
    const auto r = ts::grad_check_input(xp, [&] { return nn::sum_all(nn::pool_patch_features(xp, p)); });
    EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
    EXPECT_NEAR(xp.grad()[0], 0.5, 1e-15);
    EXPECT_NEAR(xp.grad()[4], 1.0, 1e-15);
}

TEST(Pooling, ConstantFeaturesAndSingletonIdentity) {
    const auto v = random_points(40, 6);
    const PatchAssignment p = assign_patches(v, landmarks_at(v, {0, 5, 9}));
    const nn::Tensor c = nn::Tensor::constant(40, 2, std::vector<double>(80, 1.25));
    const nn::Tensor pooled = nn::pool_patch_features(c, p);
    for (double x : pooled.data()) EXPECT_EQ(x, 1.25);

    std::vector<int> all(40);
    std::iota(all.begin(), all.end(), 0);
    const PatchAssignment singletons = assign_patches(v, landmarks_at(v, all));
    letet::Rng rng(1);
    const nn::Tensor x = ts::random_tensor(40, 3, rng, false);
    const nn::Tensor same = nn::pool_patch_features(x, singletons);
    EXPECT_TRUE(std::equal(same.data().begin(), same.data().end(), x.data().begin()));
}

TEST(Pooling, PermutationInvariantAsASet) {
    const auto v = random_points(60, 8);
    const auto perm = ts::random_permutation(60, 5);
    std::vector<Vec3> pv(60);
    for (int i = 0; i < 60; ++i) pv[perm[i]] = v[i];
    const std::vector<int> idx{2, 17, 33, 41};
    std::vector<int> pidx;
    for (int i : idx) pidx.push_back(perm[i]);
    letet::Rng rng(3);
    const nn::Tensor x = ts::random_tensor(60, 4, rng, false);
    std::vector<double> px(240);
    for (int i = 0; i < 60; ++i)
        for (int c = 0; c < 4; ++c) px[perm[i] * 4 + c] = x.at(i, c);
    const nn::Tensor a = nn::pool_patch_features(x, assign_patches(v, landmarks_at(v, idx)));
    const nn::Tensor b = nn::pool_patch_features(nn::Tensor::constant(60, 4, px), assign_patches(pv, landmarks_at(pv, pidx)));
    for (int s = 0; s < 4; ++s)
        for (int c = 0; c < 4; ++c) EXPECT_NEAR(a.at(s, c), b.at(s, c), 1e-14);
}
