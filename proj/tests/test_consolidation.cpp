// SPDX-License-Identifier: Apache-2.0
#include "spikacom/consolidation.hpp"
#include "spikacom/error.hpp"
#include "spikacom/grad_check.hpp"
#include "spikacom/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace spikacom;
using namespace spikacom::cl;
using dg::Parameter;
using dg::Tape;
using dg::Tensor;
using dg::Var;

namespace {

Tensor random_tensor(dg::Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

double penalty_value(const ImportanceStore& store, const RegConfig& cfg) {
  Tape tape;
  return consolidation_penalty(tape, store, cfg).value().item();
}

}  // namespace

TEST(SrcImportance, HandCases) {
  snn::FiringRateStats st{Tensor::vector({0.5, 0.25}), Tensor::vector({1.0})};
  EXPECT_EQ(src_importance(st, snn::LayerKind::fc), Tensor::matrix({{0.5, 0.25}}));
  snn::FiringRateStats silent{Tensor::vector({0, 0, 0}), Tensor::vector({0.7, 0.2})};
  EXPECT_EQ(src_importance(silent, snn::LayerKind::fc).max_abs(), 0.0);
  snn::FiringRateStats cv{Tensor::vector({1.0}), Tensor::vector({0.5})};
  Tensor k = src_importance(cv, snn::LayerKind::conv, 2);
  EXPECT_EQ(k.shape(), (dg::Shape{1, 1, 2, 2}));
  for (double v : k.values()) EXPECT_EQ(v, 0.5);
}

TEST(SrcImportance, BoundedInUnitInterval) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    snn::FiringRateStats st{random_tensor({5}, rng, 0, 1), random_tensor({3}, rng, 0, 1)};
    Tensor om = src_importance(st, snn::LayerKind::conv, 3);
    for (double v : om.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(ConsolidationPenalty, HandCases) {
  Parameter p{"w", Tensor::scalar(3.0)};
  ImportanceStore store;
  ImportanceTerm t = dense_term(p, Tensor::scalar(1.0));
  t.anchor = Tensor::scalar(1.0);
  store.close_environment({{t}});
  EXPECT_EQ(penalty_value(store, {Method::ewc, 1.0}), 4.0);
  EXPECT_EQ(penalty_value(store, {Method::ewc, 0.0}), 0.0);
  EXPECT_EQ(penalty_value(store, {Method::none, 1.0}), 0.0);
  p.value = Tensor::scalar(1.0);
  EXPECT_EQ(penalty_value(store, {Method::ewc, 5.0}), 0.0);
  EXPECT_THROW(penalty_value(store, {Method::ewc, -1.0}), ConfigError);
}

TEST(ConsolidationPenalty, ImplicitSrcMatchesMaterialisedOuterProduct) {
  Rng rng(2);
  Parameter fc{"fc", random_tensor({3, 4}, rng)};
  Parameter cv{"cv", random_tensor({2, 3, 3, 3}, rng)};
  snn::FiringRateStats sf{random_tensor({4}, rng, 0, 1), random_tensor({3}, rng, 0, 1)};
  snn::FiringRateStats sc{random_tensor({3}, rng, 0, 1), random_tensor({2}, rng, 0, 1)};
  ImportanceStore store;
  store.close_environment({{src_term(fc, sf), src_term(cv, sc, 3)}});
  for (auto* p : {&fc, &cv})
    for (double& v : p->value.values()) v += rng.normal();
  double expect = 0.0;
  for (auto [p, st, kind] : {std::tuple{&fc, sf, snn::LayerKind::fc}, std::tuple{&cv, sc, snn::LayerKind::conv}}) {
    const Tensor om = src_importance(st, kind, 3);
    const Tensor& anchor = store.environments()[0].terms[p == &fc ? 0 : 1].anchor;
    for (std::size_t i = 0; i < om.size(); ++i) expect += om[i] * std::pow(p->value[i] - anchor[i], 2);
  }
  EXPECT_NEAR(penalty_value(store, {Method::src, 0.7}), 0.7 * expect, 1e-12);
}

TEST(ConsolidationPenalty, SumsOverEnvironmentsAndRespectsWindow) {
  Parameter p{"w", Tensor::vector({0.0, 0.0})};
  ImportanceStore store;
  for (double a : {1.0, 2.0}) {
    ImportanceTerm t = dense_term(p, Tensor::vector({1.0, 0.5}));
    t.anchor = Tensor::vector({a, a});
    store.close_environment({{t}});
  }
  EXPECT_DOUBLE_EQ(penalty_value(store, {Method::si, 1.0}), 1.5 * 1 + 1.5 * 4);
  EXPECT_DOUBLE_EQ(penalty_value(store, {Method::si, 1.0, 1}), 1.5 * 4);
}

TEST(ConsolidationPenalty, NonNegativeAndZeroOnlyAtAnchors) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Parameter p{"w", random_tensor({3, 2}, rng)};
    snn::FiringRateStats st{random_tensor({2}, rng, 0, 1), random_tensor({3}, rng, 0, 1)};
    ImportanceStore store;
    store.close_environment({{src_term(p, st)}});
    EXPECT_EQ(penalty_value(store, {Method::src, 1.0}), 0.0);
    p.value[rng.below(6)] += 0.5;
    EXPECT_GT(penalty_value(store, {Method::src, 1.0}), 0.0);
  }
}

TEST(ConsolidationPenalty, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  Parameter fc{"fc", random_tensor({3, 4}, rng)};
  Parameter cv{"cv", random_tensor({2, 2, 3, 3}, rng)};
  ImportanceStore store;
  store.close_environment({{src_term(fc, {random_tensor({4}, rng, 0, 1), random_tensor({3}, rng, 0, 1)}),
                            src_term(cv, {random_tensor({2}, rng, 0, 1), random_tensor({2}, rng, 0, 1)}, 3)}});
  store.close_environment({{dense_term(fc, random_tensor({3, 4}, rng, 0, 2))}});
  std::vector<Tensor> probe{random_tensor({3, 4}, rng), random_tensor({2, 2, 3, 3}, rng)};
  const double err = dg::grad_check(
      [&](Tape& tape, std::span<const Var> l) {
        tape.bind(fc, l[0]);
        tape.bind(cv, l[1]);
        return consolidation_penalty(tape, store, {Method::src, 1.3});
      },
      probe);
  EXPECT_LT(err, 1e-6);
}

TEST(ConsolidationPenalty, ShapeMismatchWithAnchor) {
  Parameter p{"w", Tensor::vector({1, 2})};
  ImportanceStore store;
  store.close_environment({{dense_term(p, Tensor::vector({1, 1}))}});
  p.value = Tensor::vector({1, 2, 3});
  EXPECT_THROW(penalty_value(store, {Method::ewc, 1.0}), ShapeError);
  EXPECT_THROW(src_term(p, {Tensor::vector({1}), Tensor::vector({1})}), ShapeError);
}

TEST(EwcFisher, HandCases) {
  Parameter w{"w", Tensor::scalar(0.5)};
  Parameter unused{"u", Tensor::scalar(1.0)};
  const std::vector<double> xs{2.0, -1.0}, ys{0.3, 0.8};
  std::vector<Parameter*> ps{&w, &unused};
  auto loss = [&](Tape& t, std::size_t i) {
    Var r = dg::add_scalar(dg::scale(t.param(w), xs[i]), -ys[i]);
    return dg::sum(dg::square(r));
  };
  auto f1 = ewc_fisher_diag(ps, 1, loss);
  EXPECT_NEAR(f1[0].item(), std::pow(2 * 2.0 * (0.5 * 2.0 - 0.3), 2), 1e-12);
  EXPECT_EQ(f1[1].item(), 0.0);
  auto f2 = ewc_fisher_diag(ps, 2, loss);
  auto f4 = ewc_fisher_diag(ps, 4, [&](Tape& t, std::size_t i) { return loss(t, i % 2); });
  EXPECT_DOUBLE_EQ(f2[0].item(), f4[0].item());
  EXPECT_THROW(ewc_fisher_diag(ps, 0, loss), ArgumentError);
}

TEST(SynapticIntelligence, HandCases) {
  std::vector<Tensor> g{Tensor::scalar(-1.0)}, d{Tensor::scalar(1.0)};
  EXPECT_DOUBLE_EQ(si_accumulate(g, d, 0.1).item(), 1.0 / 1.1);
  std::vector<Tensor> up{Tensor::scalar(1.0)};
  EXPECT_EQ(si_accumulate(up, d, 0.1).item(), 0.0);
  std::vector<Tensor> zero{Tensor::scalar(0.0)};
  EXPECT_EQ(si_accumulate(g, zero, 0.1).item(), 0.0);

  Parameter p{"w", Tensor::vector({0.0, 0.0})};
  std::vector<Parameter*> ps{&p};
  SiTracker tr(ps, 0.1);
  std::vector<Tensor> grads{Tensor::vector({-1.0, 3.0})}, deltas{Tensor::vector({1.0, 0.0})};
  p.value = Tensor::vector({1.0, 0.0});
  tr.record(grads, deltas);
  auto om = tr.importance();
  EXPECT_DOUBLE_EQ(om[0][0], 1.0 / 1.1);
  EXPECT_EQ(om[0][1], 0.0);
}

TEST(ImportanceMemory, Counts) {
  EXPECT_EQ(importance_memory({}).total, 0u);
  Parameter fc{"fc", Tensor({50, 100})};
  Parameter cv{"cv", Tensor({16, 8, 3, 3})};
  ImportanceStore src, ewc;
  src.close_environment({{src_term(fc, {Tensor({100}), Tensor({50})}), src_term(cv, {Tensor({8}), Tensor({16})}, 3)}});
  ewc.close_environment({{dense_term(fc, Tensor({50, 100})), dense_term(cv, Tensor({16, 8, 3, 3}))}});
  const MemoryReport s = importance_memory(src), e = importance_memory(ewc);
  EXPECT_EQ(s.layers[0].scalars, 150u);
  EXPECT_EQ(e.layers[0].scalars, 5000u);
  EXPECT_EQ(s.layers[1].scalars, 24u);
  EXPECT_EQ(e.layers[1].scalars, 1152u);
  for (std::size_t in = 2; in < 40; in += 3)
    for (std::size_t out = 2; out < 40; out += 5) {
      Parameter w{"w", Tensor({out, in})};
      const std::size_t n_src = src_term(w, {Tensor({in}), Tensor({out})}).stored_scalars();
      const std::size_t n_ewc = dense_term(w, Tensor({out, in})).stored_scalars();
      if (in == 2 && out == 2) EXPECT_EQ(n_src, n_ewc);
      else EXPECT_LT(n_src, n_ewc);
    }
}

TEST(Method, ParseRoundTrip) {
  for (Method m : {Method::none, Method::src, Method::ewc, Method::si, Method::src_gate})
    EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_THROW(parse_method("lwf"), ConfigError);
}
