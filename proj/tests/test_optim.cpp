#include <gtest/gtest.h>

#include "letet/nn/optim.hpp"
#include "support.hpp"

using namespace letet;
using namespace letet::nn;
namespace ts = testing_support;

namespace {

void set_grad(Tensor& t, std::vector<double> g) {
    auto buf = t.mutable_grad();
    std::copy(g.begin(), g.end(), buf.begin());
}

} // namespace

TEST(Adam, ThreeStepsByHand) {
    ParamSet ps;
    Tensor& w = ps.add("w", Tensor::parameter(1, 2, {1.0, -2.0}));
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    AdamState st;
    const std::vector<std::vector<double>> grads{{0.5, -1.0}, {0.1, 2.0}, {-0.3, 0.0}};
    std::vector<double> x{1.0, -2.0}, m(2, 0.0), v(2, 0.0);
    for (int step = 1; step <= 3; ++step) {
        ps.zero_grad();
        set_grad(w, grads[step - 1]);
        adam_step(ps, st, cfg);
        for (int i = 0; i < 2; ++i) {
            const double g = grads[step - 1][i];
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            const double mh = m[i] / (1 - std::pow(0.9, step));
            const double vh = v[i] / (1 - std::pow(0.999, step));
            x[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
            EXPECT_NEAR(w.data()[i], x[i], 1e-14) << "step " << step;
        }
    }
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
    ParamSet ps;
    Tensor& w = ps.add("w", Tensor::parameter(1, 3, {0.0, 0.0, 0.0}));
    AdamConfig cfg;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.0;
    AdamState st;
    set_grad(w, {3.0, -0.01, 1e4});
    adam_step(ps, st, cfg);
    EXPECT_NEAR(w.data()[0], -1e-3, 1e-10);
    EXPECT_NEAR(w.data()[1], 1e-3, 1e-8);
    EXPECT_NEAR(w.data()[2], -1e-3, 1e-10);
}

TEST(Adam, ZeroGradientLeavesParametersAndWeightDecayIsCoupled) {
    ParamSet ps;
    Tensor& w = ps.add("w", Tensor::parameter(1, 2, {0.7, -0.2}));
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState st;
    adam_step(ps, st, cfg);
    EXPECT_EQ(w.data()[0], 0.7);
    EXPECT_EQ(w.data()[1], -0.2);

    cfg.weight_decay = 0.1;
    cfg.lr = 0.01;
    AdamState st2;
    adam_step(ps, st2, cfg);
    // Gradient is wd * w, so the first step moves each weight by lr toward zero.
    EXPECT_NEAR(w.data()[0], 0.69, 1e-7);  // eps shaves ~1e-9 off
    EXPECT_NEAR(w.data()[1], -0.19, 1e-7);
}

TEST(Adam, NonFiniteGradientNamesParameterAndLeavesWeights) {
    ParamSet ps;
    ps.add("a", Tensor::parameter(1, 1, {1.0}));
    Tensor& b = ps.add("b", Tensor::parameter(1, 2, {2.0, 3.0}));
    set_grad(ps.at("a"), {0.5});
    set_grad(b, {0.0, NAN});
    AdamState st;
    try {
        adam_step(ps, st, {});
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
    }
    EXPECT_EQ(ps.at("a").data()[0], 1.0);
}

TEST(Accumulation, TwoMicroBatchesEqualOneBatch) {
    Rng rng(5);
    ParamSet ps;
    Tensor& w = ps.add("w", ts::random_tensor(3, 2, rng, true));
    const Tensor x1 = ts::random_tensor(4, 3, rng, false), x2 = ts::random_tensor(4, 3, rng, false);
    auto loss = [&](const Tensor& x) { return bce_with_logits(sum_all(relu(matmul(x, w))), 1); };

    GradientAccumulator split(ps);
    split.add(loss(x1));
    split.add(loss(x2));
    EXPECT_EQ(split.finalize(), 2u);
    const std::vector<double> g_split(w.grad().begin(), w.grad().end());

    GradientAccumulator joint(ps);
    joint.add(scale(add(loss(x1), loss(x2)), 0.5));
    joint.finalize();
    for (std::size_t i = 0; i < g_split.size(); ++i) EXPECT_NEAR(g_split[i], w.grad()[i], 1e-9);

    GradientAccumulator single(ps);
    single.add(loss(x1));
    single.finalize();
    const std::vector<double> g_single(w.grad().begin(), w.grad().end());
    ps.zero_grad();
    loss(x1).backward();
    for (std::size_t i = 0; i < g_single.size(); ++i) EXPECT_EQ(g_single[i], w.grad()[i]);
}

TEST(Accumulation, ZeroLossGivesNoUpdate) {
    ParamSet ps;
    Tensor& w = ps.add("w", Tensor::parameter(1, 2, {0.4, 0.6}));
    GradientAccumulator acc(ps);
    acc.add(scale(sum_all(w), 0.0));
    acc.finalize();
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState st;
    adam_step(ps, st, cfg);
    EXPECT_EQ(w.data()[0], 0.4);
    EXPECT_EQ(w.data()[1], 0.6);
}

TEST(Accumulation, RejectsForeignTrainableTensor) {
    ParamSet ps;
    ps.add("w", Tensor::parameter(1, 1, {1.0}));
    Tensor stray = Tensor::parameter(1, 1, {2.0});
    GradientAccumulator acc(ps);
    EXPECT_THROW(acc.add(mul(ps.at("w"), stray)), DataError);
}
