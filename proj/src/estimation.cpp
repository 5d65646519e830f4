// SPDX-License-Identifier: Apache-2.0
#include "spikacom/estimation.hpp"

#include "spikacom/complex.hpp"
#include "spikacom/error.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

namespace spikacom::est {

using dg::Tensor;
using dg::Var;
using Eigen::Index;

namespace {

Index ix(std::size_t n) { return static_cast<Index>(n); }

}  // namespace

CVector ls_estimate(std::span<const cd> y, std::span<const cd> x) {
  if (y.size() != x.size()) throw ShapeError("ls_estimate: " + std::to_string(y.size()) + " observations vs " +
                                             std::to_string(x.size()) + " pilot symbols");
  CVector h(y.size());
  for (std::size_t p = 0; p < y.size(); ++p) {
    if (x[p] == cd{}) throw ArgumentError("ls_estimate: zero pilot symbol at position " + std::to_string(p));
    h[p] = y[p] / x[p];
  }
  return h;
}

CVector pilot_values(const CMatrix& grid, const OfdmGridSpec& spec) {
  if (grid.rows() != ix(spec.n_sub) || grid.cols() != ix(spec.n_sym)) throw ShapeError("pilot_values: grid shape");
  CVector v;
  for (std::size_t p = 0; p < spec.pilots.size(); ++p) v.push_back(grid(ix(spec.subcarrier(p)), ix(spec.symbol(p))));
  return v;
}

Eigen::VectorXcd vectorize(const CMatrix& grid) {
  Eigen::VectorXcd v(grid.size());
  for (Index r = 0; r < grid.rows(); ++r)
    for (Index c = 0; c < grid.cols(); ++c) v(r * grid.cols() + c) = grid(r, c);
  return v;
}

CMatrix unvectorize(const Eigen::VectorXcd& v, const OfdmGridSpec& spec) {
  if (v.size() != ix(spec.n_tot())) throw ShapeError("unvectorize: length does not match the grid");
  CMatrix g(ix(spec.n_sub), ix(spec.n_sym));
  for (Index r = 0; r < g.rows(); ++r)
    for (Index c = 0; c < g.cols(); ++c) g(r, c) = v(r * g.cols() + c);
  return g;
}

RbfInterpolator::RbfInterpolator(OfdmGridSpec spec, RbfConfig cfg) : spec_(std::move(spec)), cfg_(cfg) {
  spec_.validate();
  if (std::set<std::size_t>(spec_.pilots.begin(), spec_.pilots.end()).size() != spec_.pilots.size()) {
    throw ArgumentError("rbf: duplicate pilot positions");
  }
  if (!(cfg_.gamma > 0 && cfg_.alpha > 0 && cfg_.beta > 0)) throw ArgumentError("rbf: gamma, alpha, beta must be > 0");
  const std::size_t np = spec_.pilots.size();
  Eigen::MatrixXd phi(ix(np), ix(np));
  for (std::size_t a = 0; a < np; ++a)
    for (std::size_t b = 0; b < np; ++b)
      phi(ix(a), ix(b)) = kernel(spec_.subcarrier(a), spec_.symbol(a), spec_.subcarrier(b), spec_.symbol(b));
  Eigen::LDLT<Eigen::MatrixXd> ldlt(phi);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) throw NumericError("rbf: kernel matrix is singular");
  phi_inv_ = ldlt.solve(Eigen::MatrixXd::Identity(ix(np), ix(np)));
  Eigen::MatrixXd k(ix(spec_.n_tot()), ix(np));
  for (std::size_t sc = 0; sc < spec_.n_sub; ++sc)
    for (std::size_t sy = 0; sy < spec_.n_sym; ++sy)
      for (std::size_t b = 0; b < np; ++b)
        k(ix(sc * spec_.n_sym + sy), ix(b)) = kernel(sc, sy, spec_.subcarrier(b), spec_.symbol(b));
  eval_ = k * phi_inv_;
}

double RbfInterpolator::kernel(std::size_t sc_a, std::size_t sym_a, std::size_t sc_b, std::size_t sym_b) const {
  const double dn = static_cast<double>(sym_a) - static_cast<double>(sym_b);
  const double dk = static_cast<double>(sc_a) - static_cast<double>(sc_b);
  return std::exp(-cfg_.gamma * (cfg_.alpha * dn * dn + cfg_.beta * dk * dk));
}

CMatrix RbfInterpolator::apply(std::span<const cd> h) const {
  if (h.size() != spec_.pilots.size()) throw ShapeError("rbf: expected one estimate per pilot");
  Eigen::VectorXcd hp(ix(h.size()));
  for (std::size_t p = 0; p < h.size(); ++p) hp(ix(p)) = h[p];
  const Eigen::VectorXcd out = eval_.cast<cd>() * hp;
  return unvectorize(out, spec_);
}

LmmseFilter lmmse_from_stats(const OfdmGridSpec& spec, CMatrix r_hp, CMatrix r_pp, double noise_power) {
  spec.validate();
  const std::size_t np = spec.pilots.size();
  if (r_pp.rows() != ix(np) || r_pp.cols() != ix(np) || r_hp.rows() != ix(spec.n_tot()) || r_hp.cols() != ix(np)) {
    throw ShapeError("lmmse: correlation shapes do not match the pilot pattern");
  }
  if (!(noise_power >= 0.0)) throw ArgumentError("lmmse: noise power must be >= 0");
  LmmseFilter f{spec, {}, std::move(r_hp), std::move(r_pp), noise_power};
  f.r_pp = 0.5 * (f.r_pp + f.r_pp.adjoint());
  if (noise_power > 0.0) {
    const CMatrix m = f.r_pp + noise_power * CMatrix::Identity(ix(np), ix(np));
    Eigen::LDLT<CMatrix> ldlt(m);
    if (ldlt.info() != Eigen::Success) throw NumericError("lmmse: regularised pilot correlation is singular");
    f.a = ldlt.solve(f.r_hp.adjoint()).adjoint();
  } else {
    Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(f.r_pp);
    f.a = f.r_hp * cod.pseudoInverse();
  }
  return f;
}

LmmseFilter lmmse_fit(const std::vector<CMatrix>& training, const OfdmGridSpec& spec, double noise_power) {
  spec.validate();
  if (training.empty()) throw ArgumentError("lmmse_fit: no training grids");
  const std::size_t np = spec.pilots.size();
  if (training.size() < np) {
    std::clog << "warning: lmmse_fit with " << training.size() << " grids for " << np << " pilots\n";
  }
  CMatrix r_hp = CMatrix::Zero(ix(spec.n_tot()), ix(np)), r_pp = CMatrix::Zero(ix(np), ix(np));
  for (const auto& g : training) {
    if (g.rows() != ix(spec.n_sub) || g.cols() != ix(spec.n_sym)) throw ShapeError("lmmse_fit: grid shape");
    const Eigen::VectorXcd h = vectorize(g);
    Eigen::VectorXcd hp(ix(np));
    for (std::size_t p = 0; p < np; ++p) hp(ix(p)) = h(ix(spec.pilots[p]));
    r_hp += h * hp.adjoint();
    r_pp += hp * hp.adjoint();
  }
  const double n = static_cast<double>(training.size());
  return lmmse_from_stats(spec, r_hp / n, r_pp / n, noise_power);
}

CMatrix lmmse_apply(const LmmseFilter& f, std::span<const cd> pilot_ls) {
  if (pilot_ls.size() != static_cast<std::size_t>(f.a.cols())) throw ShapeError("lmmse_apply: pilot count mismatch");
  Eigen::VectorXcd hp(ix(pilot_ls.size()));
  for (std::size_t p = 0; p < pilot_ls.size(); ++p) hp(ix(p)) = pilot_ls[p];
  return unvectorize(f.a * hp, f.spec);
}

double mse(const CMatrix& estimate, const CMatrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) throw ShapeError("mse: grid shapes differ");
  if (truth.size() == 0) throw ShapeError("mse: empty grid");
  return (estimate - truth).squaredNorm() / static_cast<double>(truth.size());
}

SnnResNet::SnnResNet(OfdmGridSpec spec, SnnResNetConfig cfg, std::uint64_t seed)
    : spec_(std::move(spec)), cfg_(std::move(cfg)) {
  spec_.validate();
  if (cfg_.blocks == 0 || cfg_.channels == 0 || cfg_.t_steps == 0) throw ConfigError("snnresnet", "empty architecture");
  const std::size_t np = spec_.pilots.size(), ntot = spec_.n_tot();
  rank_ = cfg_.rank == 0 ? ntot / 2 : cfg_.rank;
  if (rank_ == 0 || rank_ >= ntot) throw ConfigError("rank", "must be in [1, N_tot)");

  // Pilot lattice: distinct subcarriers by distinct symbols when the pattern is a full product.
  std::vector<std::size_t> scs, syms;
  for (std::size_t p = 0; p < np; ++p) {
    scs.push_back(spec_.subcarrier(p));
    syms.push_back(spec_.symbol(p));
  }
  std::sort(scs.begin(), scs.end());
  scs.erase(std::unique(scs.begin(), scs.end()), scs.end());
  std::sort(syms.begin(), syms.end());
  syms.erase(std::unique(syms.begin(), syms.end()), syms.end());
  if (scs.size() * syms.size() == np) {
    rows_ = scs.size();
    cols_ = syms.size();
    for (std::size_t p = 0; p < np; ++p) {
      const auto r = static_cast<std::size_t>(std::lower_bound(scs.begin(), scs.end(), spec_.subcarrier(p)) - scs.begin());
      const auto c = static_cast<std::size_t>(std::lower_bound(syms.begin(), syms.end(), spec_.symbol(p)) - syms.begin());
      cell_of_pilot_.push_back(r * cols_ + c);
    }
  } else {
    rows_ = np;
    cols_ = 1;
    for (std::size_t p = 0; p < np; ++p) cell_of_pilot_.push_back(p);
  }

  Rng rng = Rng(seed).split("snnresnet");
  std::size_t c_in = 2;
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    auto& conv = net_.add<snn::SpikingConv>("est.conv" + std::to_string(b), c_in, cfg_.channels, 3, cfg_.lif, rng,
                                            snn::ConvOptions{.pad = 1, .bias = false, .affine = false, .init_gain = 2.0});
    conv.analog_input = b == 0;
    c_in = cfg_.channels;
  }
  net_.add<snn::Flatten>();
  net_.add<snn::Readout>("est.up", cfg_.channels * rows_ * cols_, 2 * ntot, rng, false, 0.5);

  auto init = [&](const std::string& name, std::size_t r, std::size_t c, double sd) {
    Tensor t({r, c});
    for (double& v : t.values()) v = sd * rng.normal();
    return dg::Parameter{name, std::move(t)};
  };
  a_l_re = init("est.a_l.re", ntot, rank_, 1.0 / std::sqrt(2.0 * static_cast<double>(rank_)));
  a_l_im = init("est.a_l.im", ntot, rank_, 1.0 / std::sqrt(2.0 * static_cast<double>(rank_)));
  a_r_re = init("est.a_r.re", rank_, np, 0.1 / std::sqrt(static_cast<double>(np)));
  a_r_im = init("est.a_r.im", rank_, np, 0.1 / std::sqrt(static_cast<double>(np)));
}

std::vector<std::size_t> SnnResNet::gate_layers() const {
  std::vector<std::size_t> v;
  for (std::size_t b = 0; b < cfg_.blocks; ++b) v.push_back(b);
  return v;
}

std::vector<std::size_t> SnnResNet::gate_sizes() const { return std::vector<std::size_t>(cfg_.blocks, cfg_.channels); }

std::vector<dg::Parameter*> SnnResNet::parameters() {
  std::vector<dg::Parameter*> p = net_.parameters();
  for (auto* q : {&a_l_re, &a_l_im, &a_r_re, &a_r_im}) p.push_back(q);
  return p;
}

Tensor SnnResNet::encode(const std::vector<CVector>& pilots) const {
  const std::size_t np = spec_.pilots.size(), cells = rows_ * cols_;
  Tensor x({pilots.size(), 2, rows_, cols_});
  for (std::size_t b = 0; b < pilots.size(); ++b) {
    if (pilots[b].size() != np) throw ShapeError("SnnResNet: expected " + std::to_string(np) + " pilot values");
    for (std::size_t p = 0; p < np; ++p) {
      x[(b * 2) * cells + cell_of_pilot_[p]] = cfg_.input_scale * pilots[b][p].real();
      x[(b * 2 + 1) * cells + cell_of_pilot_[p]] = cfg_.input_scale * pilots[b][p].imag();
    }
  }
  return x;
}

SnnResNet::Output SnnResNet::forward(dg::Tape& tape, const std::vector<CVector>& pilots,
                                     const snn::GateSet& gates) const {
  if (pilots.empty()) throw ArgumentError("SnnResNet::forward: empty batch");
  const std::size_t np = spec_.pilots.size();
  Output out;
  out.trace = net_.forward(tape, snn::repeat(tape, encode(pilots), cfg_.t_steps), gates);
  Var branch = snn::time_mean(out.trace.output());

  // Complex residual on stacked [re; im] columns: embed(A) [x_re; x_im].
  Tensor xp({2 * np, pilots.size()});
  for (std::size_t b = 0; b < pilots.size(); ++b)
    for (std::size_t p = 0; p < np; ++p) {
      xp.at(p, b) = pilots[b][p].real();
      xp.at(np + p, b) = pilots[b][p].imag();
    }
  Var ar = dg::cembed(tape.param(a_r_re), tape.param(a_r_im));
  Var al = dg::cembed(tape.param(a_l_re), tape.param(a_l_im));
  out.residual = dg::transpose(dg::matmul(al, dg::matmul(ar, tape.constant(std::move(xp)))));
  out.grid = dg::add(branch, out.residual);
  return out;
}

CMatrix SnnResNet::estimate(const CVector& pilots, const snn::GateSet& gates) const {
  dg::Tape tape(false);
  Output o = forward(tape, {pilots}, gates);
  return grid_from_row(o.grid.value(), 0, spec_);
}

Tensor grid_targets(const std::vector<CMatrix>& grids) {
  if (grids.empty()) throw ArgumentError("grid_targets: empty batch");
  const std::size_t ntot = static_cast<std::size_t>(grids[0].size());
  Tensor t({grids.size(), 2 * ntot});
  for (std::size_t b = 0; b < grids.size(); ++b) {
    const Eigen::VectorXcd v = vectorize(grids[b]);
    if (static_cast<std::size_t>(v.size()) != ntot) throw ShapeError("grid_targets: grid sizes differ");
    for (std::size_t i = 0; i < ntot; ++i) {
      t.at(b, i) = v(ix(i)).real();
      t.at(b, ntot + i) = v(ix(i)).imag();
    }
  }
  return t;
}

CMatrix grid_from_row(const Tensor& out, std::size_t row, const OfdmGridSpec& spec) {
  const std::size_t ntot = spec.n_tot();
  if (out.rank() != 2 || out.dim(1) != 2 * ntot || row >= out.dim(0)) throw ShapeError("grid_from_row: layout mismatch");
  Eigen::VectorXcd v(ix(ntot));
  for (std::size_t i = 0; i < ntot; ++i) v(ix(i)) = cd(out.at(row, i), out.at(row, ntot + i));
  return unvectorize(v, spec);
}

}  // namespace spikacom::est
