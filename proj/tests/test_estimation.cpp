// SPDX-License-Identifier: Apache-2.0
#include "spikacom/error.hpp"
#include "spikacom/estimation.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace spikacom;
using namespace spikacom::est;
using chan::OfdmChannelConfig;

namespace {

CMatrix crandom(Eigen::Index r, Eigen::Index c, Rng& rng) {
  CMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.cnormal(1.0);
  return m;
}

OfdmGridSpec desk_spec() { return OfdmGridSpec::with_default_pilots(16, 4, 8); }

OfdmChannelConfig desk_channel() {
  OfdmChannelConfig c;
  c.pdp = chan::MultipathProfile::exponential(4, 0.0, 1.0);
  c.doppler = 0.05;
  c.norm = chan::GridNormalization::expected;
  return c;
}

}  // namespace

TEST(LsEstimate, HandCases) {
  CVector x{cd(1, 0), cd(0, 1)};
  for (const cd& h : ls_estimate(x, x)) EXPECT_EQ(h, cd(1, 0));
  CVector y{cd(3, 1)}, x2{cd(2, 0)};
  EXPECT_EQ(ls_estimate(y, x2)[0], cd(1.5, 0.5));
  CVector z{cd(0, 0)};
  EXPECT_THROW(ls_estimate(y, z), ArgumentError);
  Rng rng(1);
  OfdmGridSpec s = desk_spec();
  CMatrix g = chan::gen_ofdm_channel(s, desk_channel(), rng);
  CVector xs(8, cd(1, -1));
  CVector yp = chan::pilot_io(g, s, xs, 0.0, rng);
  CVector h = ls_estimate(yp, xs);
  CVector truth = pilot_values(g, s);
  for (std::size_t p = 0; p < 8; ++p) EXPECT_NEAR(std::abs(h[p] - truth[p]), 0.0, 1e-14);
}

TEST(Rbf, ReproducesPilotsAndMatchesDenseSolve) {
  Rng rng(2);
  OfdmGridSpec s{4, 4, {0, 6, 9, 15}};
  RbfInterpolator rbf(s, {1.0, 1.0, 1.0});
  CVector h{cd(1, 0.5), cd(-0.3, 0.2), cd(0.7, -1), cd(0.1, 0.1)};
  CMatrix g = rbf.apply(h);
  for (std::size_t p = 0; p < 4; ++p) EXPECT_LT(std::abs(g(s.subcarrier(p), s.symbol(p)) - h[p]), 1e-8);
  // Dense oracle.
  Eigen::MatrixXd phi(4, 4);
  auto k = [](double dn, double dk) { return std::exp(-(dn * dn + dk * dk)); };
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      phi(a, b) = k(double(s.symbol(a)) - double(s.symbol(b)), double(s.subcarrier(a)) - double(s.subcarrier(b)));
  Eigen::VectorXcd hv(4);
  for (int p = 0; p < 4; ++p) hv(p) = h[p];
  Eigen::VectorXcd w = phi.cast<cd>().fullPivLu().solve(hv);
  for (int sc = 0; sc < 4; ++sc)
    for (int sy = 0; sy < 4; ++sy) {
      cd v = 0;
      for (int p = 0; p < 4; ++p) v += w(p) * k(double(sy) - double(s.symbol(p)), double(sc) - double(s.subcarrier(p)));
      EXPECT_LT(std::abs(g(sc, sy) - v), 1e-10);
    }
}

TEST(Rbf, ConstantPilotsAndErrors) {
  OfdmGridSpec s = desk_spec();
  RbfInterpolator rbf(s);
  CMatrix g = rbf.apply(CVector(8, cd(2, -1)));
  for (std::size_t p = 0; p < 8; ++p) EXPECT_LT(std::abs(g(s.subcarrier(p), s.symbol(p)) - cd(2, -1)), 1e-8);
  OfdmGridSpec dup{4, 4, {1, 1, 5}};
  EXPECT_THROW(RbfInterpolator{dup}, Error);
  EXPECT_THROW(rbf.apply(CVector(3)), ShapeError);
}

TEST(Lmmse, ConstantChannelAndShrinkage) {
  OfdmGridSpec s = desk_spec();
  Rng rng(3);
  std::vector<CMatrix> train;
  for (int i = 0; i < 20; ++i) train.push_back(CMatrix::Constant(16, 4, rng.cnormal(1.0)));
  LmmseFilter f = lmmse_fit(train, s, 0.0);
  const cd c(0.4, -1.2);
  CMatrix out = lmmse_apply(f, CVector(8, c));
  EXPECT_LT((out - CMatrix::Constant(16, 4, c)).norm(), 1e-10);
  LmmseFilter loud = lmmse_fit(train, s, 1e12);
  EXPECT_LT(loud.a.norm(), 1e-9);
  LmmseFilter zero = f;
  zero.a.setZero();
  EXPECT_EQ(lmmse_apply(zero, CVector(8, c)).norm(), 0.0);
}

TEST(Lmmse, InvertibleCaseAndLinearity) {
  Rng rng(4);
  OfdmGridSpec s{2, 2, {0, 1, 2, 3}};
  CMatrix l = crandom(4, 4, rng);
  CMatrix r = l * l.adjoint() + CMatrix::Identity(4, 4);
  LmmseFilter f = lmmse_from_stats(s, r, r, 0.0);
  CVector x{cd(1, 2), cd(-1, 0), cd(0.5, 0.5), cd(0, -3)};
  CMatrix g = lmmse_apply(f, x);
  for (std::size_t p = 0; p < 4; ++p) EXPECT_LT(std::abs(g(s.subcarrier(p), s.symbol(p)) - x[p]), 1e-10);
  LmmseFilter noisy = lmmse_from_stats(s, r, r, 0.3);
  CVector y{cd(0, 1), cd(2, 0), cd(-0.5, 1), cd(1, 1)}, comb(4);
  const cd a(0.3, -2), b(1.5, 0.25);
  for (std::size_t i = 0; i < 4; ++i) comb[i] = a * x[i] + b * y[i];
  EXPECT_LT((lmmse_apply(noisy, comb) - (a * lmmse_apply(noisy, x) + b * lmmse_apply(noisy, y))).norm(), 1e-12);
}

TEST(Lmmse, BeatsRandomLinearFiltersOnGaussianChannels) {
  Rng rng(5);
  OfdmGridSpec s = desk_spec();
  const double noise = 0.1;
  std::vector<CMatrix> train, test;
  for (int i = 0; i < 2000; ++i) train.push_back(chan::gen_ofdm_channel(s, desk_channel(), rng));
  for (int i = 0; i < 300; ++i) test.push_back(chan::gen_ofdm_channel(s, desk_channel(), rng));
  LmmseFilter f = lmmse_fit(train, s, noise);
  std::vector<CVector> obs;
  for (const auto& g : test) obs.push_back(chan::pilot_io(g, s, CVector(8, cd(1, 0)), noise, rng));
  auto eval = [&](const CMatrix& a) {
    double m = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      LmmseFilter probe = f;
      probe.a = a;
      m += mse(lmmse_apply(probe, obs[i]), test[i]);
    }
    return m / double(test.size());
  };
  const double best = eval(f.a);
  for (int probe = 0; probe < 100; ++probe) {
    CMatrix pert = f.a + 0.05 * crandom(f.a.rows(), f.a.cols(), rng);
    EXPECT_GT(eval(pert), best);
  }
}

TEST(Estimators, LmmseNoWorseThanRbfOnMatchedData) {
  Rng rng(6);
  OfdmGridSpec s = desk_spec();
  const double noise = 0.05;
  std::vector<CMatrix> train;
  for (int i = 0; i < 2000; ++i) train.push_back(chan::gen_ofdm_channel(s, desk_channel(), rng));
  LmmseFilter f = lmmse_fit(train, s, noise);
  RbfInterpolator rbf(s);
  double m_l = 0, m_r = 0;
  const CVector x(8, cd(1, 0));
  for (int i = 0; i < 1000; ++i) {
    CMatrix g = chan::gen_ofdm_channel(s, desk_channel(), rng);
    CVector h = ls_estimate(chan::pilot_io(g, s, x, noise, rng), x);
    m_l += mse(lmmse_apply(f, h), g);
    m_r += mse(rbf.apply(h), g);
  }
  EXPECT_LE(m_l, m_r);
}

TEST(Estimators, PilotPermutationConsistency) {
  Rng rng(7);
  OfdmGridSpec s = desk_spec();
  OfdmGridSpec perm = s;
  std::vector<std::size_t> order{3, 0, 7, 1, 6, 2, 5, 4};
  for (std::size_t i = 0; i < 8; ++i) perm.pilots[i] = s.pilots[order[i]];
  std::vector<CMatrix> train;
  for (int i = 0; i < 200; ++i) train.push_back(chan::gen_ofdm_channel(s, desk_channel(), rng));
  CVector h(8), hp(8);
  for (auto& v : h) v = rng.cnormal(1.0);
  for (std::size_t i = 0; i < 8; ++i) hp[i] = h[order[i]];
  EXPECT_LT((lmmse_apply(lmmse_fit(train, s, 0.1), h) - lmmse_apply(lmmse_fit(train, perm, 0.1), hp)).norm(), 1e-12);
  EXPECT_LT((RbfInterpolator(s).apply(h) - RbfInterpolator(perm).apply(hp)).norm(), 1e-12);
}

TEST(Mse, HandCases) {
  CMatrix t(2, 1);
  t << cd(1, 0), cd(0, 1);
  EXPECT_EQ(mse(t, t), 0.0);
  EXPECT_EQ(mse(CMatrix::Zero(2, 1), t), 1.0);
  EXPECT_EQ(mse((t.array() + cd(1, 0)).matrix(), t), 1.0);
  EXPECT_THROW(mse(CMatrix::Zero(1, 2), t), ShapeError);
}

TEST(SnnResNet, ResidualIsolationAndZeroInput) {
  OfdmGridSpec s = desk_spec();
  SnnResNetConfig cfg;
  cfg.channels = 4;
  SnnResNet net(s, cfg, 1);
  EXPECT_EQ(net.rank(), 32u);
  Rng rng(8);
  CVector h(8);
  for (auto& v : h) v = rng.cnormal(1.0);
  snn::GateSet off;
  for (std::size_t l : net.gate_layers()) off[l] = dg::Tensor({cfg.channels});
  dg::Tape tape(false);
  auto o = net.forward(tape, {h}, off);
  EXPECT_EQ(o.grid.value(), o.residual.value());
  // Direct complex oracle for the residual.
  auto cm = [](const dg::Parameter& re, const dg::Parameter& im) {
    CMatrix m(re.value.dim(0), re.value.dim(1));
    for (std::size_t i = 0; i < re.value.dim(0); ++i)
      for (std::size_t j = 0; j < re.value.dim(1); ++j) m(i, j) = cd(re.value.at(i, j), im.value.at(i, j));
    return m;
  };
  Eigen::VectorXcd hv(8);
  for (int p = 0; p < 8; ++p) hv(p) = h[p];
  const Eigen::VectorXcd expect = cm(net.a_l_re, net.a_l_im) * (cm(net.a_r_re, net.a_r_im) * hv);
  EXPECT_LT((vectorize(grid_from_row(o.residual.value(), 0, s)) - expect).norm(), 1e-12);
  EXPECT_EQ(net.estimate(CVector(8)).norm(), 0.0);
}
