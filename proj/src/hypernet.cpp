// SPDX-License-Identifier: Apache-2.0
#include "spikacom/hypernet.hpp"

#include "spikacom/error.hpp"
#include "spikacom/optim.hpp"

#include <cmath>
#include <iostream>

namespace spikacom::ctx {

using dg::Tensor;
using dg::Var;

double HyperParams::rho_for(std::size_t layer) const {
  if (layer < rho.size()) return rho[layer];
  return 0.5 * static_cast<double>(gate_sizes.at(layer));
}

std::size_t HyperParams::total_gates() const {
  std::size_t n = 0;
  for (std::size_t g : gate_sizes) n += g;
  return n;
}

double hypernet_loss(const Tensor& g1, const Tensor& g2, double fcd_value, const HyperParams& hp) {
  if (g1.size() != g2.size()) throw ShapeError("hypernet_loss: gate lengths differ");
  double dot = 0, n1 = 0, n2 = 0, l1a = 0, l1b = 0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    dot += g1[i] * g2[i];
    n1 += g1[i] * g1[i];
    n2 += g2[i] * g2[i];
    l1a += std::abs(g1[i]);
    l1b += std::abs(g2[i]);
  }
  if (n1 == 0 || n2 == 0) throw ArgumentError("hypernet_loss: cosine undefined for a zero gate vector");
  const double rho = hp.rho.empty() ? 0.5 * static_cast<double>(g1.size()) : hp.rho.front();
  const double c = dot / std::sqrt(n1 * n2) - std::exp(-hp.beta * fcd_value);
  return c * c + hp.lambda_h * ((l1a - rho) * (l1a - rho) + (l1b - rho) * (l1b - rho));
}

namespace {

Tensor init_uniform(dg::Shape s, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(s));
  const double b = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-b, b);
  return t;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
  return t;
}

Var row_normalize(Var x) {
  Var norm = dg::sqrt(dg::sum_axis(dg::square(x), 1));
  Var inv = dg::unary(norm, [](double v) { return 1.0 / v; }, [](double v) { return -1.0 / (v * v); });
  return dg::broadcast_mul(x, inv, 0);
}

}  // namespace

Hypernet::Hypernet(std::size_t pilot_dim, HyperParams hp, std::uint64_t seed)
    : hp_(std::move(hp)), fmap_(pilot_dim, hp_.feature_dim, seed) {
  if (hp_.gate_sizes.empty() || hp_.total_gates() == 0) throw ArgumentError("hypernet needs at least one gate");
  Rng rng = Rng(seed).split("hypernet");
  const std::size_t d = 2 * hp_.feature_dim, g = hp_.total_gates();
  w1_ = {"hyper.w1", init_uniform({hp_.hidden, d}, d, rng)};
  b1_ = {"hyper.b1", Tensor({hp_.hidden})};
  w2_ = {"hyper.w2", init_uniform({g, hp_.hidden}, hp_.hidden, rng)};
  b2_ = {"hyper.b2", Tensor({g})};
  ctx_mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  ctx_scale_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d));
}

Eigen::VectorXd Hypernet::context(const Eigen::MatrixXd& pilots) const {
  if (pilots.rows() < 2) throw ArgumentError("hypernet context needs at least two pilot observations");
  const Eigen::MatrixXd f = fmap_.apply(pilots);
  const Eigen::VectorXd mu = f.colwise().mean().transpose();
  const Eigen::MatrixXd c = f.rowwise() - mu.transpose();
  const Eigen::VectorXd sd = (c.array().square().colwise().sum() / static_cast<double>(f.rows())).sqrt().transpose();
  Eigen::VectorXd out(2 * mu.size());
  out << mu, sd;
  return ((out - ctx_mean_).array() / ctx_scale_.array()).matrix();
}

void Hypernet::set_normalization(const Eigen::MatrixXd& contexts) {
  ctx_mean_.setZero();
  ctx_scale_.setOnes();
  if (contexts.rows() < 2) return;
  ctx_mean_ = contexts.colwise().mean().transpose();
  const Eigen::MatrixXd c = contexts.rowwise() - ctx_mean_.transpose();
  ctx_scale_ = (c.array().square().colwise().sum() / static_cast<double>(contexts.rows())).sqrt().transpose();
  for (Eigen::Index i = 0; i < ctx_scale_.size(); ++i) ctx_scale_(i) = std::max(ctx_scale_(i), 1e-6);
}

Var Hypernet::relaxed(dg::Tape& tape, const Eigen::MatrixXd& contexts) {
  Var x = tape.constant(to_tensor(contexts));
  Var h = dg::tanh(dg::linear(x, tape.param(w1_), tape.param(b1_)));
  return dg::sigmoid(dg::linear(h, tape.param(w2_), tape.param(b2_)));
}

Eigen::VectorXd Hypernet::soft_gates(const Eigen::MatrixXd& pilots) const {
  dg::Tape tape(false);
  Eigen::MatrixXd ctx = context(pilots).transpose();
  Var g = const_cast<Hypernet*>(this)->relaxed(tape, ctx);
  Eigen::VectorXd out(static_cast<Eigen::Index>(g.value().size()));
  for (std::size_t i = 0; i < g.value().size(); ++i) out(static_cast<Eigen::Index>(i)) = g.value()[i];
  return out;
}

Eigen::VectorXd Hypernet::hard_gates(const Eigen::MatrixXd& pilots) const {
  Eigen::VectorXd s = soft_gates(pilots);
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = s(i) >= hp_.threshold ? 1.0 : 0.0;
  return s;
}

std::vector<snn::GateVector> Hypernet::gates(const Eigen::MatrixXd& pilots) const {
  const Eigen::VectorXd h = hard_gates(pilots);
  std::vector<snn::GateVector> out;
  std::size_t off = 0;
  for (std::size_t n : hp_.gate_sizes) {
    Tensor g({n});
    for (std::size_t i = 0; i < n; ++i) g[i] = h(static_cast<Eigen::Index>(off + i));
    out.push_back(std::move(g));
    off += n;
  }
  return out;
}

Var Hypernet::batch_loss(Var a, Var b, const Eigen::MatrixXd& target, const HyperParams& hp) {
  dg::Tape& tape = *a.tape;
  Var tgt = tape.constant(to_tensor(target));
  Var total;
  std::size_t off = 0;
  for (std::size_t l = 0; l < hp.gate_sizes.size(); ++l) {
    const std::size_t n = hp.gate_sizes[l];
    Var as = dg::slice(a, 1, off, n), bs = dg::slice(b, 1, off, n);
    Var cos = dg::matmul(row_normalize(as), dg::transpose(row_normalize(bs)));
    Var align = dg::mean(dg::square(dg::sub(cos, tgt)));
    const double rho = hp.rho_for(l);
    Var sp = dg::add(dg::mean(dg::square(dg::add_scalar(dg::sum_axis(as, 1), -rho))),
                     dg::mean(dg::square(dg::add_scalar(dg::sum_axis(bs, 1), -rho))));
    Var term = dg::add(align, dg::scale(sp, hp.lambda_h));
    total = total.valid() ? dg::add(total, term) : term;
    off += n;
  }
  return total;
}

void refine_hypernet(Hypernet& net, const std::vector<std::vector<Eigen::MatrixXd>>& env_pilots,
                     const Eigen::MatrixXd& fcd, const HypernetTrainConfig& cfg) {
  const std::size_t e = env_pilots.size();
  if (e < 2) throw ArgumentError("refine_hypernet needs at least two environments");
  if (static_cast<std::size_t>(fcd.rows()) != e || static_cast<std::size_t>(fcd.cols()) != e) {
    throw ShapeError("refine_hypernet: FCD matrix does not match the environment count");
  }
  for (const auto& sets : env_pilots)
    if (sets.size() < 2) throw ArgumentError("refine_hypernet needs at least two pilot sets per environment");
  std::vector<std::vector<Eigen::VectorXd>> ctx(e);
  for (std::size_t i = 0; i < e; ++i)
    for (const auto& s : env_pilots[i]) ctx[i].push_back(net.context(s));

  const HyperParams& hp = net.hyper();
  Eigen::MatrixXd target = (-hp.beta * fcd).array().exp().matrix();
  target.diagonal().setOnes();

  Rng rng = Rng(cfg.seed).split("hypernet-train");
  Adam opt(net.parameters());
  const auto d = static_cast<Eigen::Index>(2 * hp.feature_dim);
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    Eigen::MatrixXd ca(static_cast<Eigen::Index>(e), d), cb(static_cast<Eigen::Index>(e), d);
    for (std::size_t i = 0; i < e; ++i) {
      const std::size_t n = ctx[i].size();
      const std::size_t s1 = rng.below(n);
      std::size_t s2 = rng.below(n - 1);
      if (s2 >= s1) ++s2;
      ca.row(static_cast<Eigen::Index>(i)) = ctx[i][s1].transpose();
      cb.row(static_cast<Eigen::Index>(i)) = ctx[i][s2].transpose();
    }
    dg::Tape tape;
    Var ga = net.relaxed(tape, ca);
    Var gb = net.relaxed(tape, cb);
    Var loss = Hypernet::batch_loss(ga, gb, target, hp);
    opt.step(tape.backward(loss), cosine_lr(cfg.lr, ep, cfg.epochs, 0.05 * cfg.lr));
  }
}

Hypernet train_hypernet(const std::vector<std::vector<Eigen::MatrixXd>>& env_pilots, const Eigen::MatrixXd& fcd,
                        const HyperParams& hp, const HypernetTrainConfig& cfg) {
  const std::size_t e = env_pilots.size();
  if (e < 2) throw ArgumentError("train_hypernet needs at least two environments");
  if (static_cast<std::size_t>(fcd.rows()) != e || static_cast<std::size_t>(fcd.cols()) != e) {
    throw ShapeError("train_hypernet: FCD matrix does not match the environment count");
  }
  for (const auto& sets : env_pilots)
    if (sets.size() < 2) throw ArgumentError("train_hypernet needs at least two pilot sets per environment");
  if (fcd.maxCoeff() <= 0.0) std::clog << "warning: all training environments are identical under FCD\n";

  const auto pilot_dim = static_cast<std::size_t>(env_pilots[0][0].cols());
  Hypernet net(pilot_dim, hp, cfg.seed);
  {
    std::size_t rows = 0;
    for (const auto& sets : env_pilots) rows += sets.size();
    Eigen::MatrixXd all(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(2 * hp.feature_dim));
    Eigen::Index r = 0;
    for (const auto& sets : env_pilots)
      for (const auto& s : sets) all.row(r++) = net.context(s).transpose();
    net.set_normalization(all);
  }
  refine_hypernet(net, env_pilots, fcd, cfg);
  return net;
}

Eigen::MatrixXd gate_distance_matrix(const Eigen::MatrixXd& gates) {
  const Eigen::Index n = gates.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double ni = gates.row(i).norm(), nj = gates.row(j).norm();
      const double c = (ni > 0 && nj > 0) ? gates.row(i).dot(gates.row(j)) / (ni * nj) : 0.0;
      d(i, j) = d(j, i) = 1.0 - c;
    }
  return d;
}

double alignment_nmse(const Eigen::MatrixXd& gate_dist, const Eigen::MatrixXd& fcd, double beta) {
  if (gate_dist.rows() != fcd.rows() || gate_dist.cols() != fcd.cols()) {
    throw ShapeError("alignment_nmse: matrix sizes differ");
  }
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < fcd.rows(); ++i)
    for (Eigen::Index j = 0; j < fcd.cols(); ++j) {
      if (i == j) continue;
      const double ref = 1.0 - std::exp(-beta * fcd(i, j));
      num += (gate_dist(i, j) - ref) * (gate_dist(i, j) - ref);
      den += ref * ref;
    }
  if (den == 0.0) throw NumericError("alignment_nmse: reference distance matrix is zero");
  return num / den;
}

}  // namespace spikacom::ctx
