// SPDX-License-Identifier: Apache-2.0
#include "spikacom/energy.hpp"
#include "spikacom/error.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace spikacom;
using namespace spikacom::energy;
using dg::Tensor;

namespace {

double pj(LayerDescriptor d) { return pipeline_energy({std::move(d)}).total_pj; }

LayerDescriptor fc_snn(double i, double o, double p, std::size_t t, bool analog = false) {
  return {Kind::fc_snn, {i, o}, p, t, analog, ""};
}

}  // namespace

TEST(CountLayer, HandCases) {
  EXPECT_NEAR(pj(fc_snn(100, 10, 0.1, 4)), 40.0, 1e-9);
  EXPECT_NEAR(count_layer(fc_snn(100, 10, 0.1, 4)).n_ac, 400.0, 1e-9);
  EXPECT_NEAR(pj({Kind::fc_ann, {100, 10}}), 3200.0, 1e-9);
  EXPECT_EQ(pj(fc_snn(100, 10, 0.0, 4)), 0.0);
  EXPECT_NEAR(count_layer(fc_snn(100, 10, 0.1, 4, true)).n_mac, 4000.0, 1e-9);
}

TEST(CountLayer, EveryKindMatchesItsFormula) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = [&] { return double(1 + rng.below(20)); };
    const double a = r(), b = r(), c = r(), d = r(), e = r();
    const double p = rng.uniform();
    const std::size_t t = 1 + rng.below(16);
    const double tt = double(t);
    EXPECT_DOUBLE_EQ(count_layer({Kind::conv_snn, {a, b, c, d, e}, p, t}).n_ac, a * b * c * d * e * e * p * tt);
    EXPECT_DOUBLE_EQ(count_layer({Kind::conv_ann, {a, b, c, d, e}}).n_mac, a * b * c * d * e * e);
    EXPECT_DOUBLE_EQ(count_layer({Kind::pool_snn, {a, b, c, d}, p, t}).n_ac, a * b * c * d * d * p * tt);
    EXPECT_DOUBLE_EQ(count_layer({Kind::rnn, {a, b, c}}).n_mac, a * (b * c + c * c));
    EXPECT_DOUBLE_EQ(count_layer({Kind::lstm, {a, b, c}}).n_mac, 4 * a * (b * c + c * c));
    EXPECT_DOUBLE_EQ(count_layer({Kind::transformer, {a, b}}).n_mac, a * (12 * b * b + 2 * a * b));
    EXPECT_DOUBLE_EQ(count_layer({Kind::matmul, {a, b, c}}).n_mac, 4 * a * b * c);
    EXPECT_DOUBLE_EQ(count_layer({Kind::inverse, {a}}).n_mac, 2 * a * a * a);
    EXPECT_DOUBLE_EQ(count_layer({Kind::cholesky, {a}}).n_mac, 2.0 / 3.0 * a * a * a);
    EXPECT_DOUBLE_EQ(count_layer({Kind::ldpc_enc, {a, b}}).n_ac, a * (b - 1));
    const OpCount dec = count_layer({Kind::ldpc_dec, {a, b}});
    EXPECT_DOUBLE_EQ(dec.n_mem, b * 2 * a);
    EXPECT_DOUBLE_EQ(dec.n_ac, b * 4 * a);
    EXPECT_DOUBLE_EQ(count_layer({Kind::rbf_interp, {a, b, c}}).n_mac, 2 * a * b * c);
  }
}

TEST(CountLayer, Errors) {
  EXPECT_THROW(count_layer({Kind::fc_ann, {10}}), ArgumentError);
  EXPECT_THROW(count_layer({Kind::fc_ann, {10, 0}}), ArgumentError);
  EXPECT_THROW(count_layer(fc_snn(10, 10, 1.5, 4)), ArgumentError);
  EXPECT_THROW(parse_kind("gru"), ConfigError);
  EXPECT_EQ(parse_kind(kind_name(Kind::ldpc_dec)), Kind::ldpc_dec);
}

TEST(CountLayer, MonotoneInDimsRateAndSteps) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const double i = double(1 + rng.below(50)), o = double(1 + rng.below(50)), p = rng.uniform();
    const std::size_t t = 1 + rng.below(16);
    const double base = pj(fc_snn(i, o, p, t));
    EXPECT_LE(base, pj(fc_snn(i + 1, o, p, t)));
    EXPECT_LE(base, pj(fc_snn(i, o + 1, p, t)));
    EXPECT_LE(base, pj(fc_snn(i, o, std::min(1.0, p + 0.1), t)));
    EXPECT_LE(base, pj(fc_snn(i, o, p, t + 1)));
  }
}

TEST(CountLayer, SpikingFcCheaperThanAnnTwin) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    LayerDescriptor d = fc_snn(double(1 + rng.below(500)), double(1 + rng.below(500)), 0.5 * rng.uniform(),
                               1 + rng.below(16));
    EXPECT_LT(pj(d), pj(ann_twin(d)));
  }
  EXPECT_LT(pj(fc_snn(7, 9, 0.5, 16)), pj(ann_twin(fc_snn(7, 9, 0.5, 16))));
}

TEST(PipelineEnergy, Additivity) {
  LayerDescriptor d{Kind::lstm, {8, 16, 32}, 1.0, 1, false, "lstm"};
  EnergyReport one = pipeline_energy({d});
  EXPECT_EQ(one.total_pj, pj(d));
  EXPECT_EQ(pipeline_energy({d, d}).total_pj, 2.0 * one.total_pj);
  EXPECT_THROW(pipeline_energy({}), ArgumentError);
  EXPECT_NEAR(pipeline_energy({{Kind::ldpc_dec, {100, 5}}}).total_pj, 5 * (10.0 * 200 + 0.1 * 400), 1e-9);
}

TEST(PipelineEnergy, WmmseIterationMatchesSymbolicCount) {
  const double k = 2, nt = 8, nr = 2, d = 2;
  const double per_iter = 3.2 * (k * k * (4 * nr * nt * d + 4 * nr * d * nr)  // A_k
                                 + k * (2 * nr * nr * nr + 4 * nr * nr * d)    // U
                                 + k * (4 * d * nr * d + 2 * d * d * d)        // W
                                 + k * (4 * nr * d * d + 4 * nr * d * nr + 4 * nt * nr * nr + 4 * nt * nr * nt)  // B
                                 + 2 * nt * nt * nt                            // B^-1
                                 + k * (4 * nt * nr * d + 4 * nt * d * d + 4 * nt * nt * d));  // V
  std::vector<LayerDescriptor> all;
  for (int it = 0; it < 50; ++it)
    for (const auto& s : wmmse_iteration(2, 8, 2, 2)) all.push_back(s);
  EXPECT_NEAR(pipeline_energy(all).total_pj, 50 * per_iter, 1e-6);
}

TEST(MeasureRates, HandCases) {
  EXPECT_EQ(measure_rate(Tensor({4, 3})), 0.0);
  Tensor alt({4, 2});
  for (std::size_t i = 0; i < alt.size(); i += 2) alt[i] = 1.0;
  EXPECT_EQ(measure_rate(alt), 0.5);
  EXPECT_THROW(measure_rate(Tensor()), ArgumentError);
}

TEST(DescribeNetwork, CountsFromTrace) {
  Rng rng(4);
  snn::Network net;
  auto& c = net.add<snn::SpikingConv>("c", 1, 2, 3, snn::LifParams{}, rng, snn::ConvOptions{.pad = 1});
  c.analog_input = true;
  net.add<snn::MaxPool>(2);
  net.add<snn::Flatten>();
  net.add<snn::SpikingFc>("f", 2 * 2 * 2, 5, snn::LifParams{}, rng);
  dg::Tape tape(false);
  Tensor x({1, 1, 4, 4}, 1.5);
  snn::Trace tr = net.forward(tape, snn::repeat(tape, x, 3));
  auto d = describe_network(net, tr);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].kind, Kind::conv_snn);
  EXPECT_EQ(d[0].dims, (std::vector<double>{4, 4, 2, 1, 3}));
  EXPECT_TRUE(d[0].analog_input);
  EXPECT_EQ(d[1].kind, Kind::pool_snn);
  EXPECT_EQ(d[2].dims, (std::vector<double>{8, 5}));
  EXPECT_EQ(d[2].rate, measure_rate(snn::stack_time(tr.seq[3])));
  EXPECT_NEAR(count_layer(d[0]).n_mac, 4 * 4 * 2 * 1 * 9 * 3, 1e-9);
  auto twin = ann_twin(d);
  EXPECT_EQ(twin.size(), 2u);
  EXPECT_EQ(twin[1].kind, Kind::fc_ann);
}
