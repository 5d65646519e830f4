// SPDX-License-Identifier: Apache-2.0
#include "spikacom/error.hpp"
#include "spikacom/grad_check.hpp"
#include "spikacom/snn.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace spikacom;
using namespace spikacom::dg;
using namespace spikacom::snn;

namespace {

double frob_inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Lif, QuiescentNeuron) {
  auto [s, st] = lif_step(LifState{Tensor({1}, 0.0)}, Tensor({1}, 0.0), LifParams{});
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(st.v[0], 0.0);
}

TEST(Lif, SingleStepFireAndReset) {
  auto [s, st] = lif_step(LifState{Tensor({1}, 0.0)}, Tensor({1}, 1.5), LifParams{});
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(st.v[0], 0.0);
}

TEST(Lif, ConstantDriveFirstSpikeAtThirdStep) {
  LifState st{Tensor({1}, 0.0)};
  const double expect_vbar[] = {0.6, 0.9, 1.05};
  for (int t = 0; t < 3; ++t) {
    const double vbar = st.v[0] - st.v[0] / 2.0 + 0.6;
    EXPECT_NEAR(vbar, expect_vbar[t], 1e-15);
    auto [s, next] = lif_step(st, Tensor({1}, 0.6), LifParams{});
    EXPECT_EQ(s[0], t == 2 ? 1.0 : 0.0);
    st = next;
  }
  EXPECT_EQ(st.v[0], 0.0);
}

TEST(Lif, ThresholdTieFires) {
  auto [s, st] = lif_step(LifState{Tensor({1}, 0.0)}, Tensor({1}, 1.0), LifParams{});
  EXPECT_EQ(s[0], 1.0);
}

TEST(Lif, LeakDecaysMonotonically) {
  LifState st{Tensor({1}, 0.8)};
  double prev = 0.8;
  for (int t = 0; t < 20; ++t) {
    st = lif_step(st, Tensor({1}, 0.0), LifParams{.tau = 3.0}).second;
    EXPECT_NEAR(st.v[0], prev * (1.0 - 1.0 / 3.0), 1e-15);
    EXPECT_LT(std::abs(st.v[0]), std::abs(prev));
    prev = st.v[0];
  }
}

TEST(Lif, RejectsBadInput) {
  EXPECT_THROW(lif_step(LifState{Tensor({1})}, Tensor({1}, NAN), LifParams{}), NumericError);
  EXPECT_THROW(lif_step(LifState{Tensor({2})}, Tensor({1}), LifParams{}), ShapeError);
  EXPECT_THROW((LifParams{.tau = 0.5}).validate(), ArgumentError);
  EXPECT_THROW((LifParams{.v_th = 0.0}).validate(), ArgumentError);
}

TEST(Lif, TapeAndEagerAgree) {
  Rng rng(3);
  Tensor x({16});
  for (double& v : x.values()) v = rng.uniform(-1, 2);
  LifParams p{.tau = 1.7, .v_th = 0.8, .v_reset = -0.1};
  Tape t;
  LifState st{rest_potential({16}, p)};
  Var v = t.constant(st.v);
  for (int k = 0; k < 6; ++k) {
    auto [s_e, st_e] = lif_step(st, x, p);
    auto [s_t, v_t] = lif_step(v, t.constant(x), p);
    EXPECT_EQ(s_e, s_t.value());
    EXPECT_EQ(st_e.v, v_t.value());
    st = st_e;
    v = v_t;
  }
}

TEST(SpikingFc, GateZeroSilencesAndOnesIsIdentity) {
  Rng rng(1);
  Tensor w({3, 4});
  for (double& v : w.values()) v = rng.uniform(-1, 2);
  Tensor in({5, 4});
  for (double& v : in.values()) v = rng.bernoulli(0.5);
  const Tensor zeros({3}, 0.0), ones({3}, 1.0);
  Tensor silent = run_spiking_fc(w, in, {}, &zeros);
  for (double v : silent.values()) EXPECT_EQ(v, 0.0);
  Tensor ungated = run_spiking_fc(w, in, {});
  EXPECT_EQ(run_spiking_fc(w, in, {}, &ones), ungated);
  EXPECT_TRUE(is_binary(ungated));
  const Tensor bad({2}, 1.0);
  EXPECT_THROW(run_spiking_fc(w, in, {}, &bad), ShapeError);
}

TEST(SpikingFc, IdentityWeightsPassSpike) {
  Tensor w = Tensor::identity(2);
  Tensor in({3, 2});
  in.at(0, 0) = 1.0;
  Tensor out = run_spiking_fc(w, in, {.v_th = 0.5});
  EXPECT_EQ(out.at(0, 0), 1.0);
  EXPECT_EQ(out.at(0, 1), 0.0);
  EXPECT_EQ(out.at(1, 0), 0.0);
}

TEST(SpikingFc, GateIdempotent) {
  Rng rng(9);
  Tensor w({4, 3});
  for (double& v : w.values()) v = rng.uniform(-1, 2);
  Tensor in({6, 3});
  for (double& v : in.values()) v = rng.bernoulli(0.6);
  const Tensor g = Tensor::vector({1, 0, 1, 0});
  Tensor once = run_spiking_fc(w, in, {}, &g);
  Tensor twice = once;
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 4; ++j) twice.at(t, j) *= g[j];
  EXPECT_EQ(once, twice);
}

TEST(SpikingConv, GatedChannelIsSilent) {
  Rng rng(2);
  Tensor k({3, 2, 2, 2});
  for (double& v : k.values()) v = rng.uniform(0, 1);
  Tensor in({4, 2, 4, 4});
  for (double& v : in.values()) v = rng.bernoulli(0.7);
  const Tensor g = Tensor::vector({1, 0, 1});
  Tensor out = run_spiking_conv(k, in, {}, &g);
  ASSERT_EQ(out.shape(), (Shape{4, 3, 3, 3}));
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out[(t * 3 + 1) * 9 + i], 0.0);
  Tensor zero_in({4, 2, 4, 4});
  const Tensor zero_out = run_spiking_conv(k, zero_in, {});
  for (double v : zero_out.values()) EXPECT_EQ(v, 0.0);
}

TEST(SpikingConv, OneByOneKernelMatchesFcPerPixel) {
  Rng rng(5);
  Tensor k({1, 1, 1, 1}, 0.7);
  Tensor in({5, 1, 3, 3});
  for (double& v : in.values()) v = rng.bernoulli(0.5);
  Tensor conv = run_spiking_conv(k, in, {});
  Tensor w({1, 1}, 0.7);
  for (std::size_t px = 0; px < 9; ++px) {
    Tensor seq({5, 1});
    for (std::size_t t = 0; t < 5; ++t) seq[t] = in[t * 9 + px];
    Tensor fc = run_spiking_fc(w, seq, {});
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(conv[t * 9 + px], fc[t]);
  }
}

TEST(FiringRates, HandCases) {
  Tensor ones({4, 3}, 1.0);
  Tensor alt({4, 1}, {1, 0, 1, 0});
  FiringRateStats st = firing_rates(ones, alt);
  for (double v : st.mu.values()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(st.nu[0], 0.5);
  Tensor conv({4, 1, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) conv[2 * i] = 1.0;
  EXPECT_EQ(conv_rates(conv)[0], 0.5);
  EXPECT_THROW(firing_rates(Tensor({4, 2}), Tensor({3, 2})), ShapeError);
}

TEST(Unroll, GatedOffNeuronHasZeroWeightGradient) {
  Rng rng(11);
  Network net;
  LifParams p{.v_th = 0.5};
  net.add<SpikingFc>("fc1", 4, 5, p, rng, FcOptions{.init_gain = 2.0});
  net.add<Readout>("out", 5, 2, rng);
  Tensor in({6, 3, 4});
  for (double& v : in.values()) v = rng.bernoulli(0.5);
  GateSet gates{{0, Tensor::vector({1, 1, 0, 1, 1})}};
  GradResult r = unroll_and_grad(net, in, [](const Sequence& out) { return mean(square(time_mean(out))); }, gates);
  const Tensor& gw = r.grads[0];
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(gw.at(2, i), 0.0);
  EXPECT_EQ(r.grads[1][2], 0.0);
}

TEST(Unroll, DisjointGatesDoNotInterfere) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Network net;
    net.add<SpikingFc>("fc1", 6, 8, LifParams{.v_th = 0.5}, rng, FcOptions{.init_gain = 2.0});
    net.add<Readout>("out", 8, 3, rng);
    Tensor in({5, 4, 6});
    for (double& v : in.values()) v = rng.bernoulli(0.5);
    Tensor g1({8}), g2({8});
    for (std::size_t j = 0; j < 8; ++j) (rng.bernoulli(0.5) ? g1 : g2)[j] = 1.0;
    auto loss1 = [](const Sequence& o) { return mean(square(time_mean(o))); };
    auto loss2 = [](const Sequence& o) { return sum(time_mean(o)); };
    GradResult a = unroll_and_grad(net, in, loss1, {{0, g1}});
    GradResult b = unroll_and_grad(net, in, loss2, {{0, g2}});
    EXPECT_EQ(frob_inner(a.grads[0], b.grads[0]), 0.0);
  }
}

TEST(Unroll, RelaxedGraphMatchesFiniteDifferences) {
  LifParams p{.v_th = 0.5, .detach_reset = false, .surrogate = {.alpha = 2.0, .relaxed = true}};
  Rng rng(4);
  Tensor w({2, 3}), in({4, 1, 3});
  for (double& v : w.values()) v = rng.uniform(-0.5, 1.0);
  for (double& v : in.values()) v = rng.bernoulli(0.6);
  std::vector<Tensor> params{w};
  double err = grad_check(
      [&](Tape& t, std::span<const Var> leaves) {
        Var v = t.constant(Tensor({1, 2}));
        Sequence out;
        for (const Var& x : unstack_time(t, in)) {
          auto [s, vn] = lif_step(v, linear(x, leaves[0]), p);
          v = vn;
          out.push_back(s);
        }
        return mean(time_mean(out));
      },
      params);
  EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, QuadraticAndConstant) {
  Tensor a({4, 4});
  Rng rng(8);
  for (double& v : a.values()) v = rng.normal();
  Tensor x({4, 1});
  for (double& v : x.values()) v = rng.normal();
  std::vector<Tensor> ps{x};
  double e = grad_check(
      [&](Tape& t, std::span<const Var> l) { return sum(mul(l[0], matmul(t.constant(a), l[0]))); }, ps);
  EXPECT_LT(e, 1e-6);
  double c = grad_check([&](Tape& t, std::span<const Var>) { return t.constant(Tensor::scalar(3.0)); }, ps);
  EXPECT_EQ(c, 0.0);
}

TEST(GradCheck, MseOfLinearMap) {
  Rng rng(12);
  Tensor w({4, 4}), x({4, 3}), y({4, 3});
  for (auto* t : {&w, &x, &y})
    for (double& v : t->values()) v = rng.normal();
  std::vector<Tensor> ps{w};
  double e = grad_check(
      [&](Tape& t, std::span<const Var> l) { return mse(matmul(l[0], t.constant(x)), t.constant(y)); }, ps);
  EXPECT_LT(e, 1e-6);
}

TEST(GradCheck, ConvPoolAndMatrixOps) {
  Rng rng(13);
  Tensor x({2, 2, 5, 5}), k({3, 2, 3, 3});
  for (auto* t : {&x, &k})
    for (double& v : t->values()) v = rng.normal();
  std::vector<Tensor> ps{x, k};
  double e = grad_check(
      [](Tape&, std::span<const Var> l) { return sum(square(conv2d(l[0], l[1], {1, 1}))); }, ps);
  EXPECT_LT(e, 1e-6);
  Tensor a({3, 3});
  for (double& v : a.values()) v = rng.normal();
  for (std::size_t i = 0; i < 3; ++i) a.at(i, i) += 4.0;
  std::vector<Tensor> pa{a};
  EXPECT_LT(grad_check([](Tape&, std::span<const Var> l) { return add(sum(inverse(l[0])), logdet(l[0])); }, pa),
            1e-6);
}
