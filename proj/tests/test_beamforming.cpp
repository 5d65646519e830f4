// SPDX-License-Identifier: Apache-2.0
#include "spikacom/beamforming.hpp"
#include "spikacom/error.hpp"
#include "spikacom/grad_check.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>

using namespace spikacom;
using namespace spikacom::bf;
using cd = std::complex<double>;
using dg::Tensor;
using dg::Var;

namespace {

CMatrix crandom(Eigen::Index r, Eigen::Index c, Rng& rng) {
  CMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.cnormal(1.0);
  return m;
}

BfProblem random_problem(Rng& rng, std::size_t k = 2, std::size_t nt = 8, std::size_t nr = 2, double power = 10.0) {
  std::vector<CMatrix> h;
  for (std::size_t i = 0; i < k; ++i) h.push_back(crandom(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nt), rng));
  return BfProblem::uniform(std::move(h), power, 1.0, nr);
}

BfProblem scalar_problem(std::vector<cd> h, double power, double noise = 1.0) {
  std::vector<CMatrix> hs;
  for (cd x : h) hs.push_back(CMatrix::Constant(1, static_cast<Eigen::Index>(h.size()) == 1 ? 1 : 1, x));
  return BfProblem::uniform(hs, power, noise, 1);
}

}  // namespace

TEST(SumRate, ScalarHandCases) {
  BfProblem p = scalar_problem({1.0}, 4.0);
  BfSolution s{{CMatrix::Constant(1, 1, 2.0)}};
  EXPECT_NEAR(sum_rate(p, s), std::log2(5.0), 1e-14);
  BfSolution zero{{CMatrix::Zero(1, 1)}};
  EXPECT_EQ(sum_rate(p, zero), 0.0);
  BfSolution over{{CMatrix::Constant(1, 1, 3.0)}};
  EXPECT_THROW(sum_rate(p, over), ArgumentError);
}

TEST(SumRate, TwoScalarUsersMatchSinr) {
  // Two users on a 2-antenna transmitter, one receive antenna each.
  std::vector<CMatrix> h{CMatrix(1, 2), CMatrix(1, 2)};
  h[0] << cd(1, 0), cd(0.5, 0.2);
  h[1] << cd(0.3, -0.1), cd(0.8, 0);
  BfProblem p = BfProblem::uniform(h, 2.0, 0.5, 1);
  p.alpha = {1.0, 2.0};
  BfSolution s{{CMatrix(2, 1), CMatrix(2, 1)}};
  s.v[0] << cd(0.6, 0.1), cd(0.2, 0);
  s.v[1] << cd(-0.1, 0), cd(0.7, 0.3);
  double expect = 0;
  for (int k = 0; k < 2; ++k) {
    const double sig = std::norm((h[k] * s.v[k])(0, 0)), inter = std::norm((h[k] * s.v[1 - k])(0, 0));
    expect += p.alpha[k] * std::log2(1.0 + sig / (inter + 0.5));
  }
  EXPECT_NEAR(sum_rate(p, s), expect, 1e-12);
}

TEST(Wmmse, MonotoneOnRandomProblems) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    BfProblem p = random_problem(rng);
    WmmseResult r = wmmse_solve(p, matched_filter_init(p), 300, 1e-12);
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i], r.trace[i - 1] - 1e-8);
    EXPECT_LE(r.solution.power(), p.power * (1 + 1e-9));
    EXPECT_GT(r.trace.back(), r.trace.front());
  }
}

TEST(Wmmse, SingleUserReachesWaterfilling) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    BfProblem p = random_problem(rng, 1, 8, 2, rng.uniform(0.5, 50.0));
    WmmseResult r = wmmse_solve(p, matched_filter_init(p), 2000, 1e-13);
    EXPECT_NEAR(r.trace.back(), waterfilling_capacity(p.h[0], p.power, 1.0, 2), 1e-3);
  }
}

TEST(Wmmse, WaterfillingHandCase) {
  // Eigenvalues 4 and 1, P = 1: level mu = (1 + 1/4 + 1)/2 = 1.125 gives powers 0.875 and 0.125.
  CMatrix h = CMatrix::Zero(2, 2);
  h(0, 0) = 2.0;
  h(1, 1) = 1.0;
  EXPECT_NEAR(waterfilling_capacity(h, 1.0, 1.0, 2), std::log2(1 + 4 * 0.875) + std::log2(1 + 0.125), 1e-12);
  // Low power: only the strong mode is used.
  EXPECT_NEAR(waterfilling_capacity(h, 0.5, 1.0, 2), std::log2(1 + 4 * 0.5), 1e-12);
}

TEST(Wmmse, FixedPointResidualAtConvergence) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    BfProblem p = random_problem(rng);
    WmmseResult r = wmmse_solve(p, matched_filter_init(p), 5000, 1e-14);
    EXPECT_LT(wmmse_residual(p, r.solution), 1e-6) << "trial " << trial << " iters " << r.iterations;
  }
}

TEST(Wmmse, ZeroChannelsStayFeasible) {
  BfProblem p = BfProblem::uniform({CMatrix::Zero(2, 4), CMatrix::Zero(2, 4)}, 3.0, 1.0, 2);
  WmmseResult r = wmmse_solve(p, matched_filter_init(p), 10);
  EXPECT_LE(r.solution.power(), 3.0 * (1 + 1e-9));
  EXPECT_EQ(r.trace.back(), 0.0);
}

TEST(Wmmse, RotationInvariance) {
  Rng rng(4);
  BfProblem p = random_problem(rng, 1, 4, 2, 5.0);
  Eigen::HouseholderQR<CMatrix> qr(crandom(4, 4, rng));
  CMatrix q = qr.householderQ();
  BfProblem rot = p;
  for (auto& h : rot.h) h = h * q;
  const double a = wmmse_solve(p, matched_filter_init(p), 5000, 1e-14).trace.back();
  const double b = wmmse_solve(rot, matched_filter_init(rot), 5000, 1e-14).trace.back();
  EXPECT_NEAR(a, b, 1e-6);
}

TEST(DkLayer, ScalarHandCase) {
  const cd h(0.7, -0.4), u(0.3, 0.5);
  const double w = 1.7, alpha = 1.5, sigma2 = 0.8, power = 100.0;
  BfProblem p = scalar_problem({h}, power, sigma2);
  p.alpha = {alpha};
  BfSolution s = dk_layer(p, {CMatrix::Constant(1, 1, w)}, {CMatrix::Constant(1, 1, u)}, {0.0});
  const double uu = std::norm(u);
  const cd expect = alpha * std::conj(h) * u * w / (sigma2 * alpha * uu * w / power + alpha * std::norm(h) * uu * w);
  EXPECT_NEAR(std::abs(s.v[0](0, 0) - expect), 0.0, 1e-14);
}

TEST(DkLayer, ZeroUGivesZeroV) {
  Rng rng(5);
  BfProblem p = random_problem(rng);
  BfSolution s = dk_layer(p, {crandom(2, 2, rng), crandom(2, 2, rng)}, {CMatrix::Zero(2, 2), CMatrix::Zero(2, 2)});
  EXPECT_EQ(s.power(), 0.0);
}

TEST(DkLayer, ReproducesWmmseFromItsAuxiliaries) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    BfProblem p = random_problem(rng);
    WmmseResult r = wmmse_solve(p, matched_filter_init(p), 5000, 1e-14);
    BfSolution v = normalize_power(dk_layer(p, r.aux.w, r.aux.u, {0.0}), p.power);
    // r.aux was computed from r.solution, so one V step from it is the next WMMSE iterate.
    BfSolution next = normalize_power(wmmse_v_update(p, r.aux), p.power);
    for (std::size_t k = 0; k < p.k(); ++k) EXPECT_LT((v.v[k] - next.v[k]).norm(), 1e-8);
    for (std::size_t k = 0; k < p.k(); ++k) EXPECT_LT((v.v[k] - r.solution.v[k]).norm(), 1e-6);
  }
}

TEST(DkLayer, TapeMatchesEigenAndIsFeasible) {
  Rng rng(7);
  BfProblem p = random_problem(rng, 2, 4, 2, 0.5);
  std::vector<CMatrix> w{crandom(2, 2, rng), crandom(2, 2, rng)}, u{crandom(2, 2, rng), crandom(2, 2, rng)};
  for (auto& m : w) m = m * m.adjoint() + CMatrix::Identity(2, 2);
  BfSolution eager = dk_layer(p, w, u);
  dg::Tape tape;
  std::vector<Var> wv, uv;
  for (int k = 0; k < 2; ++k) {
    wv.push_back(tape.leaf(dg::embed(w[k]), true));
    uv.push_back(tape.leaf(dg::embed(u[k]), true));
  }
  std::vector<Var> v = dk_layer(tape, p, wv, uv);
  for (int k = 0; k < 2; ++k) EXPECT_LT((dg::unembed(v[k].value()) - eager.v[k]).norm(), 1e-10);
  EXPECT_LE(eager.power(), p.power * (1 + 1e-9));
  EXPECT_NEAR(sum_rate(tape, p, v).value().item(), sum_rate(p, eager), 1e-10);
}

TEST(DkLayer, GradientThroughSumRate) {
  Rng rng(8);
  for (double power : {0.3, 20.0}) {
    BfProblem p = random_problem(rng, 2, 4, 2, power);
    std::vector<Tensor> probe;
    for (int k = 0; k < 2; ++k) {
      CMatrix w = crandom(2, 2, rng);
      probe.push_back(dg::embed(w * w.adjoint() + CMatrix::Identity(2, 2)));
    }
    for (int k = 0; k < 2; ++k) probe.push_back(dg::embed(crandom(2, 2, rng)));
    const double err = dg::grad_check(
        [&](dg::Tape& tape, std::span<const Var> l) {
          std::vector<Var> w{l[0], l[1]}, u{l[2], l[3]};
          return sum_rate(tape, p, dk_layer(tape, p, w, u));
        },
        probe);
    EXPECT_LT(err, 1e-4) << "power " << power;
  }
}

TEST(Rzf, PowerAndLimits) {
  Rng rng(9);
  BfProblem p = random_problem(rng, 2, 8, 2, 4.0);
  for (auto reg : {Regularization::rzf, Regularization::mmse}) EXPECT_NEAR(rzf_baseline(p, reg).power(), 4.0, 1e-10);
  // Large regulariser: matched filter direction.
  BfSolution mf = rzf_with(p, 1e9);
  BfSolution ref = matched_filter_init(p);
  for (int k = 0; k < 2; ++k) EXPECT_LT((mf.v[k] - ref.v[k]).norm(), 1e-6);
  // Orthogonal single-antenna users: no interference as c -> 0.
  std::vector<CMatrix> h{CMatrix::Zero(1, 4), CMatrix::Zero(1, 4)};
  h[0](0, 0) = 1.0;
  h[1](0, 1) = cd(0, 2.0);
  BfProblem q = BfProblem::uniform(h, 1.0, 1.0, 1);
  BfSolution z = rzf_with(q, 1e-12);
  EXPECT_LT(std::abs((h[0] * z.v[1])(0, 0)), 1e-12);
  EXPECT_LT(std::abs((h[1] * z.v[0])(0, 0)), 1e-12);
}

TEST(SpikingBFNet, FeasibleDeterministicAndGated) {
  BfNetConfig cfg;
  cfg.k_users = 2;
  cfg.n_tx = 4;
  cfg.n_rx = 2;
  cfg.streams = 2;
  cfg.conv_channels = 4;
  cfg.hidden = 32;
  Rng rng(10);
  BfProblem p = random_problem(rng, 2, 4, 2, 2.0);
  SpikingBFNet a(cfg, 3), b(cfg, 3);
  BfSolution sa = a.solve(p), sb = b.solve(p);
  for (int k = 0; k < 2; ++k) EXPECT_EQ(sa.v[k], sb.v[k]);
  EXPECT_LE(sa.power(), 2.0 * (1 + 1e-9));
  snn::GateSet off{{0, Tensor({4})}, {2, Tensor({32})}};
  BfSolution so = a.solve(p, off);
  EXPECT_LE(so.power(), 2.0 * (1 + 1e-9));
  EXPECT_EQ(a.output_size(), 2u * (8 + 8));
}
