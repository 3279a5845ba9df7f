#include <gtest/gtest.h>

#include <limits>
#include <memory>

#include "letet/lbo.hpp"
#include "letet/nn/layers.hpp"
#include "oracles.hpp"

using namespace letet;
using namespace letet::nn;
namespace ts = testing_support;
using ts::dense_attention;
using ts::dense_mlp;
using ts::random_centers;
using Eigen::MatrixXd;

namespace {

void zero_all(ParamSet& ps) {
    for (auto& [name, t] : ps)
        for (double& w : t.data()) w = 0.0;
}

} // namespace

TEST(PointwiseMlp, Examples) {
    ParamSet ps;
    Rng rng(1);
    Linear l = Linear::create(ps, "mlp", 3, 5, rng);
    const Tensor x = Tensor::constant(2, 3, {0.5, 1.0, 2.0, 3.0, 0.25, 4.0});
    zero_all(ps);
    const Tensor zero = pointwise_mlp_forward(x, l);
    for (double y : zero.data()) EXPECT_EQ(y, 0.0);
    for (int i = 0; i < 3; ++i) l.weight.data()[i * 5 + i] = 1.0;
    const Tensor y = pointwise_mlp_forward(x, l);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) EXPECT_EQ(y.at(r, c), x.at(r, c));
        EXPECT_EQ(y.at(r, 3), 0.0);
    }
}

TEST(PointwiseMlp, GradCheck) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ParamSet ps;
        Rng rng(seed);
        Linear l = Linear::create(ps, "mlp", 3, 4, rng);
        for (double& b : l.bias.data()) b = rng.uniform(-0.5, 0.5);
        const Tensor x = ts::random_tensor(10, 3, rng, false);
        const Tensor w = ts::random_tensor(10, 4, rng, false);
        const auto r = ts::grad_check(ps, [&] { return sum_all(mul(pointwise_mlp_forward(x, l), w)); });
        EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
    }
}

TEST(ChebConv, OrderZeroAndOne) {
    const TetMesh m = ts::box_mesh(2, 1, 1, 0.1, 2);
    const LboBundle b = build_lbo(m);
    const auto op = std::make_shared<const SparseOperator>(b.scaled_laplacian);
    const int n = static_cast<int>(m.n_vertices());
    Rng rng(3);
    const Tensor x = ts::random_tensor(n, 2, rng, false);

    ParamSet ps0;
    const ChebConvParams k0 = ChebConvParams::create(ps0, "c", 2, 3, 0, rng);
    EXPECT_LT((ts::to_eigen(chebconv_forward(x, op, k0)) - ts::to_eigen(x) * ts::to_eigen(k0.theta[0])).norm(), 1e-14);

    ParamSet ps1;
    ChebConvParams k1 = ChebConvParams::create(ps1, "c", 2, 2, 1, rng);
    zero_all(ps1);
    k1.theta[1].data()[0] = k1.theta[1].data()[3] = 1.0;
    const MatrixXd want = b.scaled_laplacian.to_dense() * ts::to_eigen(x);
    EXPECT_LT((ts::to_eigen(chebconv_forward(x, op, k1)) - want).norm(), 1e-12);
}

TEST(ChebConv, MatchesDensePolynomialOracle) {
    for (int draw = 0; draw < 20; ++draw) {
        const int order = draw % 5;
        const TetMesh m = ts::box_mesh(2, 2, 1 + draw % 2, 0.2, 50 + draw);
        const LboBundle b = build_lbo(m);
        const auto op = std::make_shared<const SparseOperator>(b.scaled_laplacian);
        const int n = static_cast<int>(m.n_vertices());
        ASSERT_LE(n, 50);
        Rng rng(draw);
        const Tensor x = ts::random_tensor(n, 3, rng, false);
        ParamSet ps;
        const ChebConvParams c = ChebConvParams::create(ps, "c", 3, 4, order, rng);

        std::vector<MatrixXd> theta;
        for (const Tensor& t : c.theta) theta.push_back(ts::to_eigen(t));
        const MatrixXd want = ts::dense_chebyshev(b.scaled_laplacian.to_dense(), ts::to_eigen(x), theta);
        EXPECT_LT((ts::to_eigen(chebconv_forward(x, op, c)) - want).cwiseAbs().maxCoeff(), 1e-10) << "order " << order;
    }
}

TEST(ChebConv, GradCheckAndPermutationEquivariance) {
    const TetMesh m = ts::box_mesh(2, 2, 1, 0.15, 5);
    const int n = static_cast<int>(m.n_vertices());
    const auto op = std::make_shared<const SparseOperator>(build_lbo(m).scaled_laplacian);
    Rng rng(4);
    ParamSet ps;
    const ChebConvParams c = ChebConvParams::create(ps, "c", 2, 3, 3, rng);
    Tensor x = ps.add("x", ts::random_tensor(n, 2, rng, true));
    const Tensor w = ts::random_tensor(n, 3, rng, false);
    const auto r = ts::grad_check(ps, [&] { return sum_all(mul(chebconv_forward(x, op, c), w)); });
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;

    const auto perm = ts::random_permutation(n, 9);
    const auto pop = std::make_shared<const SparseOperator>(build_lbo(ts::permute_mesh(m, perm)).scaled_laplacian);
    std::vector<double> px(x.size());
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 2; ++k) px[perm[i] * 2 + k] = x.at(i, k);
    const Tensor a = chebconv_forward(x, op, c);
    const Tensor bb = chebconv_forward(Tensor::constant(n, 2, px), pop, c);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.at(i, k), bb.at(perm[i], k), 1e-9);
}

TEST(Attention, MatchesDenseMaskedOracle) {
    for (int draw = 0; draw < 20; ++draw) {
        Rng rng(100 + draw);
        const int n = 1 + draw % 6;
        const int d = 2 + draw % 3;
        const auto centers = random_centers(n, rng);
        // Alternate full graphs and radius graphs.
        const EdgeList edges = draw % 2 == 0 ? build_radius_graph(centers, 10.0) : build_radius_graph(centers, 0.9);
        std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
        for (std::size_t e = 0; e < edges.size(); ++e) adj[edges.targets[e]][edges.sources[e]] = true;
        ParamSet ps;
        const AttentionParams a = AttentionParams::create(ps, "a", d, rng);
        for (auto& [name, t] : ps)
            if (name.find("bias") != std::string::npos)
                for (double& b : t.data()) b = rng.uniform(-0.3, 0.3);
        const Tensor x = ts::random_tensor(n, d, rng, false, 2.0);
        const Tensor y = point_transformer_forward(x, TokenGraph::build(centers, edges), a);
        const MatrixXd want = dense_attention(ts::to_eigen(x), centers, adj, a);
        EXPECT_LT((ts::to_eigen(y) - want).cwiseAbs().maxCoeff(), 1e-10) << "draw " << draw;
    }
}

TEST(Attention, SingleTokenSelfLoop) {
    Rng rng(7);
    ParamSet ps;
    AttentionParams a = AttentionParams::create(ps, "a", 3, rng);
    for (double& b : a.delta.second.bias.data()) b = 0.25;
    const std::vector<Vec3> c{{0.3, -0.2, 0.9}};
    const Tensor x = ts::random_tensor(1, 3, rng, false);
    const Tensor y = point_transformer_forward(x, TokenGraph::build(c, build_radius_graph(c, 0.5)), a);
    const MatrixXd v = ts::to_eigen(x) * ts::to_eigen(a.value);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(y.at(0, k), x.at(0, k) + v(0, k) + 0.25, 1e-14);
}

TEST(Attention, WeightsSumToOne) {
    Rng rng(8);
    const auto centers = random_centers(30, rng);
    const EdgeList edges = build_radius_graph(centers, 0.7);
    ParamSet ps;
    const AttentionParams a = AttentionParams::create(ps, "a", 4, rng);
    const TokenGraph g = TokenGraph::build(centers, edges);
    const Tensor x = ts::random_tensor(30, 4, rng, false);
    const Tensor scores = add(a.phi(sub(gather_rows(matmul(x, a.query), g.targets), gather_rows(matmul(x, a.key), g.sources))),
                              a.delta(g.offsets));
    const Tensor w = segment_softmax(scores, g.targets, 30);
    std::vector<double> sums(30 * 4, 0.0);
    for (std::size_t e = 0; e < edges.size(); ++e)
        for (int k = 0; k < 4; ++k) sums[edges.targets[e] * 4 + k] += w.at(static_cast<int>(e), k);
    for (double s : sums) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Attention, TranslationInvariantInCenters) {
    Rng rng(9);
    auto centers = random_centers(20, rng);
    const EdgeList edges = build_radius_graph(centers, 0.8);
    ParamSet ps;
    const AttentionParams a = AttentionParams::create(ps, "a", 4, rng);
    const Tensor x = ts::random_tensor(20, 4, rng, false);
    const Tensor y0 = point_transformer_forward(x, TokenGraph::build(centers, edges), a);
    for (Vec3& c : centers) c = c + Vec3{3.5, -1.25, 0.125};
    const Tensor y1 = point_transformer_forward(x, TokenGraph::build(centers, edges), a);
    for (std::size_t i = 0; i < y0.size(); ++i) EXPECT_NEAR(y0.data()[i], y1.data()[i], 1e-12);
}

TEST(Attention, ZeroWeightsGiveResidualIdentity) {
    Rng rng(10);
    const auto centers = random_centers(12, rng);
    ParamSet ps;
    const AttentionParams a = AttentionParams::create(ps, "a", 5, rng);
    zero_all(ps);
    const Tensor x = ts::random_tensor(12, 5, rng, false);
    const Tensor y = point_transformer_forward(x, TokenGraph::build(centers, build_radius_graph(centers, 0.6)), a);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Attention, GradCheckBothNormalizations) {
    for (AttentionNorm norm : {AttentionNorm::per_channel, AttentionNorm::per_edge}) {
        Rng rng(11);
        const auto centers = random_centers(7, rng);
        const TokenGraph g = TokenGraph::build(centers, build_radius_graph(centers, 1.0));
        ParamSet ps;
        const AttentionParams a = AttentionParams::create(ps, "a", 3, rng);
        // Zero biases put the self-loop positional ReLUs exactly on their kink.
        for (auto& [name, t] : ps)
            for (double& b : t.data()) b += rng.uniform(-0.2, 0.2);
        Tensor x = ps.add("x", ts::random_tensor(7, 3, rng, true));
        const Tensor w = ts::random_tensor(7, 3, rng, false);
        AttentionOptions opt;
        opt.norm = norm;
        const auto r = ts::grad_check(ps, [&] { return sum_all(mul(point_transformer_forward(x, g, a, opt), w)); });
        EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
    }
}

TEST(Attention, RejectsTokenWithoutIncomingEdge) {
    EdgeList e;
    e.targets = {0};
    e.sources = {0};
    EXPECT_THROW(TokenGraph::build({{0, 0, 0}, {1, 1, 1}}, e), DataError);
}
