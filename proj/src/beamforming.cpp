// SPDX-License-Identifier: Apache-2.0
#include "spikacom/beamforming.hpp"

#include "spikacom/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spikacom::bf {

using dg::Tensor;
using dg::Var;
using Eigen::Index;

namespace {

constexpr double kPowerSlack = 1e-9;

Index ix(std::size_t n) { return static_cast<Index>(n); }

CMatrix eye(std::size_t n) { return CMatrix::Identity(ix(n), ix(n)); }

CMatrix solve_checked(const CMatrix& a, const CMatrix& b, const char* what) {
  Eigen::PartialPivLU<CMatrix> lu(a);
  if (!(lu.rcond() > 1e-15)) throw NumericError(std::string(what) + ": matrix is singular");
  return lu.solve(b);
}

double hermitian_logdet(const CMatrix& m) {
  Eigen::LLT<CMatrix> llt(0.5 * (m + m.adjoint()));
  if (llt.info() != Eigen::Success) throw NumericError("logdet of a non positive definite matrix");
  double s = 0.0;
  for (Index i = 0; i < m.rows(); ++i) s += std::log(llt.matrixL()(i, i).real());
  return 2.0 * s;
}

CMatrix hermitian_part(const CMatrix& w, double eps) {
  return 0.5 * (w + w.adjoint()) + eps * eye(static_cast<std::size_t>(w.rows()));
}

}  // namespace

void BfProblem::validate() const {
  if (h.empty()) throw ArgumentError("beamforming problem has no users");
  if (alpha.size() != h.size() || noise.size() != h.size()) {
    throw ShapeError("beamforming problem: weights and noise must have one entry per user");
  }
  for (const auto& m : h) {
    if (m.rows() != h[0].rows() || m.cols() != h[0].cols()) throw ShapeError("channels must share N_r x N_t");
    if (!m.allFinite()) throw NumericError("channel has non-finite entries");
  }
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!(alpha[k] > 0.0)) throw ArgumentError("user weights must be positive");
    if (!(noise[k] > 0.0)) throw ArgumentError("noise powers must be positive");
  }
  if (!(power > 0.0)) throw ArgumentError("power budget must be positive");
  if (streams == 0 || streams > std::min(n_rx(), n_tx())) throw ArgumentError("streams must be in [1, min(N_r, N_t)]");
}

BfProblem BfProblem::uniform(std::vector<CMatrix> h, double power, double noise, std::size_t streams) {
  BfProblem p;
  const std::size_t k = h.size();
  p.h = std::move(h);
  p.alpha.assign(k, 1.0);
  p.noise.assign(k, noise);
  p.power = power;
  p.streams = streams == 0 ? std::min(p.n_rx(), p.n_tx()) : streams;
  return p;
}

double BfSolution::power() const {
  double s = 0.0;
  for (const auto& m : v) s += m.squaredNorm();
  return s;
}

std::vector<double> user_rates(const BfProblem& p, const BfSolution& s) {
  p.validate();
  if (s.v.size() != p.k()) throw ShapeError("solution has " + std::to_string(s.v.size()) + " precoders");
  if (s.power() > p.power * (1.0 + kPowerSlack)) throw ArgumentError("solution exceeds the power budget");
  std::vector<double> r;
  for (std::size_t k = 0; k < p.k(); ++k) {
    CMatrix n = p.noise[k] * eye(p.n_rx());
    for (std::size_t j = 0; j < p.k(); ++j) {
      if (j == k) continue;
      const CMatrix hv = p.h[k] * s.v[j];
      n += hv * hv.adjoint();
    }
    const CMatrix hv = p.h[k] * s.v[k];
    r.push_back(p.alpha[k] * (hermitian_logdet(n + hv * hv.adjoint()) - hermitian_logdet(n)) / std::numbers::ln2);
  }
  return r;
}

double sum_rate(const BfProblem& p, const BfSolution& s) {
  double t = 0.0;
  for (double r : user_rates(p, s)) t += r;
  return t;
}

BfSolution project_power(BfSolution s, double power) {
  const double pw = s.power();
  if (pw > power) {
    const double f = std::sqrt(power / pw);
    for (auto& m : s.v) m *= f;
  }
  return s;
}

BfSolution normalize_power(BfSolution s, double power) {
  const double pw = s.power();
  if (pw > 0.0) {
    const double f = std::sqrt(power / pw);
    for (auto& m : s.v) m *= f;
  }
  return s;
}

BfSolution matched_filter_init(const BfProblem& p) {
  p.validate();
  BfSolution s;
  for (const auto& h : p.h) s.v.push_back(h.adjoint().leftCols(ix(p.streams)));
  if (s.power() == 0.0)
    for (auto& m : s.v) m = CMatrix::Identity(ix(p.n_tx()), ix(p.streams));
  return normalize_power(std::move(s), p.power);
}

AuxVars wmmse_aux(const BfProblem& p, const BfSolution& s) {
  const double tr = s.power();
  AuxVars a;
  for (std::size_t k = 0; k < p.k(); ++k) {
    CMatrix ak = (p.noise[k] / p.power) * tr * eye(p.n_rx());
    for (const auto& vj : s.v) {
      const CMatrix hv = p.h[k] * vj;
      ak += hv * hv.adjoint();
    }
    const CMatrix hvk = p.h[k] * s.v[k];
    CMatrix u = solve_checked(ak, hvk, "wmmse U update");
    const CMatrix e = eye(p.streams) - u.adjoint() * hvk;
    CMatrix w = solve_checked(e, eye(p.streams), "wmmse W update");
    a.u.push_back(std::move(u));
    a.w.push_back(0.5 * (w + w.adjoint()));
  }
  return a;
}

BfSolution wmmse_v_update(const BfProblem& p, const AuxVars& a) {
  double coef = 0.0;
  CMatrix b = CMatrix::Zero(ix(p.n_tx()), ix(p.n_tx()));
  for (std::size_t j = 0; j < p.k(); ++j) {
    const CMatrix uwu = a.u[j] * a.w[j] * a.u[j].adjoint();
    coef += p.noise[j] / p.power * p.alpha[j] * uwu.trace().real();
    b += p.alpha[j] * p.h[j].adjoint() * uwu * p.h[j];
  }
  b += coef * eye(p.n_tx());
  BfSolution s;
  if (b.squaredNorm() == 0.0) {
    for (std::size_t k = 0; k < p.k(); ++k) s.v.push_back(CMatrix::Zero(ix(p.n_tx()), ix(p.streams)));
    return s;
  }
  Eigen::PartialPivLU<CMatrix> lu(b);
  if (!(lu.rcond() > 1e-15)) throw NumericError("wmmse V update: B is singular");
  for (std::size_t k = 0; k < p.k(); ++k) s.v.push_back(p.alpha[k] * lu.solve(p.h[k].adjoint() * a.u[k] * a.w[k]));
  return s;
}

WmmseResult wmmse_solve(const BfProblem& p, const BfSolution& init, std::size_t max_iters, double tol) {
  p.validate();
  if (max_iters == 0) throw ArgumentError("wmmse_solve: max_iters must be >= 1");
  if (init.v.size() != p.k()) throw ShapeError("wmmse_solve: init has the wrong user count");
  if (init.power() > p.power * (1.0 + kPowerSlack)) throw ArgumentError("wmmse_solve: init exceeds the power budget");
  WmmseResult r;
  r.solution = init;
  r.trace.push_back(sum_rate(p, r.solution));
  for (std::size_t it = 0; it < max_iters; ++it) {
    if (r.solution.power() == 0.0) break;
    r.aux = wmmse_aux(p, r.solution);
    BfSolution next = normalize_power(wmmse_v_update(p, r.aux), p.power);
    if (next.power() == 0.0) break;
    r.solution = std::move(next);
    r.trace.push_back(sum_rate(p, r.solution));
    ++r.iterations;
    if (r.trace.back() - r.trace[r.trace.size() - 2] < tol) break;
  }
  r.aux = wmmse_aux(p, r.solution);
  return r;
}

double wmmse_residual(const BfProblem& p, const BfSolution& s) {
  const AuxVars a = wmmse_aux(p, s);
  const BfSolution v = normalize_power(wmmse_v_update(p, a), p.power);
  const AuxVars a2 = wmmse_aux(p, v);
  double r = 0.0;
  for (std::size_t k = 0; k < p.k(); ++k) {
    r = std::max(r, (v.v[k] - s.v[k]).norm());
    r = std::max(r, (a2.u[k] - a.u[k]).norm());
    r = std::max(r, (a2.w[k] - a.w[k]).norm());
  }
  return r;
}

double waterfilling_capacity(const CMatrix& h, double power, double noise, std::size_t streams) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h.adjoint() * h);
  std::vector<double> g;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) g.push_back(std::max(0.0, es.eigenvalues()(i)) / noise);
  std::sort(g.begin(), g.end(), std::greater<>());
  g.resize(std::min(g.size(), streams));
  while (!g.empty() && g.back() <= 0.0) g.pop_back();
  // Drop the weakest modes until every active mode gets positive power.
  while (!g.empty()) {
    double inv = 0.0;
    for (double x : g) inv += 1.0 / x;
    const double mu = (power + inv) / static_cast<double>(g.size());
    if (mu - 1.0 / g.back() > 0.0) {
      double c = 0.0;
      for (double x : g) c += std::log2(mu * x);
      return c;
    }
    g.pop_back();
  }
  return 0.0;
}

BfSolution dk_layer(const BfProblem& p, const std::vector<CMatrix>& w_bar, const std::vector<CMatrix>& u_bar,
                    DkOptions opt) {
  p.validate();
  if (w_bar.size() != p.k() || u_bar.size() != p.k()) throw ShapeError("dk_layer: need one (W, U) per user");
  AuxVars a;
  for (std::size_t k = 0; k < p.k(); ++k) {
    if (w_bar[k].rows() != ix(p.streams) || w_bar[k].cols() != ix(p.streams)) throw ShapeError("dk_layer: W is not d x d");
    if (u_bar[k].rows() != ix(p.n_rx()) || u_bar[k].cols() != ix(p.streams)) throw ShapeError("dk_layer: U is not N_r x d");
    a.w.push_back(hermitian_part(w_bar[k], opt.epsilon));
    a.u.push_back(u_bar[k]);
  }
  return project_power(wmmse_v_update(p, a), p.power);
}

std::vector<Var> dk_layer(dg::Tape& tape, const BfProblem& p, const std::vector<Var>& w_bar,
                          const std::vector<Var>& u_bar, DkOptions opt) {
  p.validate();
  if (w_bar.size() != p.k() || u_bar.size() != p.k()) throw ShapeError("dk_layer: need one (W, U) per user");
  const std::size_t nt = p.n_tx(), d = p.streams;
  bool all_zero = true;
  for (const Var& u : u_bar) all_zero = all_zero && u.value().max_abs() == 0.0;
  std::vector<Var> v;
  if (all_zero) {
    for (std::size_t k = 0; k < p.k(); ++k) v.push_back(tape.constant(Tensor({2 * nt, 2 * d})));
    return v;
  }
  Var eps = tape.constant(Tensor::identity(2 * d));
  std::vector<Var> hs, ws;
  Var coef, b;
  for (std::size_t j = 0; j < p.k(); ++j) {
    Var h = tape.constant(dg::embed(p.h[j]));
    Var w = dg::add(dg::scale(dg::add(w_bar[j], dg::transpose(w_bar[j])), 0.5), dg::scale(eps, opt.epsilon));
    Var uwu = dg::matmul(dg::matmul(u_bar[j], w), dg::transpose(u_bar[j]));
    Var c = dg::scale(dg::ctrace(uwu), p.noise[j] / p.power * p.alpha[j]);
    Var g = dg::scale(dg::matmul(dg::matmul(dg::transpose(h), uwu), h), p.alpha[j]);
    coef = coef.valid() ? dg::add(coef, c) : c;
    b = b.valid() ? dg::add(b, g) : g;
    hs.push_back(h);
    ws.push_back(w);
  }
  b = dg::add(b, dg::mul_scalar(tape.constant(Tensor::identity(2 * nt)), coef));
  Var binv = dg::inverse(b);
  Var pw;
  for (std::size_t k = 0; k < p.k(); ++k) {
    Var vk = dg::scale(dg::matmul(binv, dg::matmul(dg::matmul(dg::transpose(hs[k]), u_bar[k]), ws[k])), p.alpha[k]);
    v.push_back(vk);
    Var n = dg::cnorm2(vk);
    pw = pw.valid() ? dg::add(pw, n) : n;
  }
  const double budget = p.power;
  Var f = dg::unary(
      pw, [budget](double x) { return x > budget ? std::sqrt(budget / x) : 1.0; },
      [budget](double x) { return x > budget ? -0.5 * std::sqrt(budget) * std::pow(x, -1.5) : 0.0; });
  for (auto& vk : v) vk = dg::mul_scalar(vk, f);
  return v;
}

Var sum_rate(dg::Tape& tape, const BfProblem& p, const std::vector<Var>& v) {
  if (v.size() != p.k()) throw ShapeError("sum_rate: need one precoder per user");
  std::vector<Var> hs;
  for (const auto& h : p.h) hs.push_back(tape.constant(dg::embed(h)));
  Var total;
  for (std::size_t k = 0; k < p.k(); ++k) {
    Var n = dg::scale(tape.constant(Tensor::identity(2 * p.n_rx())), p.noise[k]);
    Var sig;
    for (std::size_t j = 0; j < p.k(); ++j) {
      Var hv = dg::matmul(hs[k], v[j]);
      Var cov = dg::matmul(hv, dg::transpose(hv));
      if (j == k) sig = cov;
      else n = dg::add(n, cov);
    }
    Var r = dg::scale(dg::sub(dg::hermitian_logdet(dg::add(n, sig)), dg::hermitian_logdet(n)),
                      p.alpha[k] / std::numbers::ln2);
    total = total.valid() ? dg::add(total, r) : r;
  }
  return total;
}

BfSolution rzf_with(const BfProblem& p, double c) {
  p.validate();
  if (!(c > 0.0)) throw ArgumentError("rzf: regulariser must be positive");
  const std::size_t nr = p.n_rx(), k = p.k();
  CMatrix h(ix(k * nr), ix(p.n_tx()));
  for (std::size_t j = 0; j < k; ++j) h.middleRows(ix(j * nr), ix(nr)) = p.h[j];
  const CMatrix g = h * h.adjoint() + c * eye(k * nr);
  const CMatrix v = h.adjoint() * solve_checked(g, eye(k * nr), "rzf");
  BfSolution s;
  for (std::size_t j = 0; j < k; ++j) {
    CMatrix blk = v.middleCols(ix(j * nr), ix(nr));
    if (p.streams < nr) {
      Eigen::JacobiSVD<CMatrix> svd(blk, Eigen::ComputeThinU | Eigen::ComputeThinV);
      blk = blk * svd.matrixV().leftCols(ix(p.streams));
    }
    s.v.push_back(std::move(blk));
  }
  return normalize_power(std::move(s), p.power);
}

BfSolution rzf_baseline(const BfProblem& p, Regularization reg) {
  p.validate();
  double c = 0.0;
  if (reg == Regularization::rzf) {
    double mean_noise = 0.0;
    for (double n : p.noise) mean_noise += n / static_cast<double>(p.k());
    c = static_cast<double>(p.k()) * mean_noise / p.power;
  } else {
    for (double n : p.noise) c += static_cast<double>(p.n_rx()) * n / p.power;
  }
  return rzf_with(p, c);
}

SpikingBFNet::SpikingBFNet(BfNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.streams == 0 || cfg_.streams > std::min(cfg_.n_rx, cfg_.n_tx)) throw ConfigError("streams", "out of range");
  if (cfg_.t_steps == 0) throw ConfigError("t_steps", "must be >= 1");
  Rng rng = Rng(seed).split("bfnet");
  auto& conv = net_.add<snn::SpikingConv>("bf.conv", 2 * cfg_.k_users, cfg_.conv_channels, 3, cfg_.lif, rng,
                                          snn::ConvOptions{.pad = 1, .bias = true, .affine = false, .init_gain = 2.0});
  conv.analog_input = true;
  net_.add<snn::Flatten>();
  const std::size_t flat = cfg_.conv_channels * cfg_.n_rx * cfg_.n_tx;
  net_.add<snn::SpikingFc>("bf.fc", flat, cfg_.hidden, cfg_.lif, rng, snn::FcOptions{.bias = true, .init_gain = 2.0});
  net_.add<snn::Readout>("bf.out", cfg_.hidden, output_size(), rng, true, 1.0);
}

std::size_t SpikingBFNet::output_size() const {
  return cfg_.k_users * (2 * cfg_.streams * cfg_.streams + 2 * cfg_.n_rx * cfg_.streams);
}

Tensor SpikingBFNet::encode(const std::vector<chan::ChannelSet>& batch) const {
  const std::size_t k = cfg_.k_users, nr = cfg_.n_rx, nt = cfg_.n_tx;
  Tensor x({batch.size(), 2 * k, nr, nt});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].size() != k) throw ShapeError("SpikingBFNet::encode: wrong user count");
    for (std::size_t u = 0; u < k; ++u) {
      const CMatrix& h = batch[b][u];
      if (h.rows() != ix(nr) || h.cols() != ix(nt)) throw ShapeError("SpikingBFNet::encode: channel is not N_r x N_t");
      for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t c = 0; c < nt; ++c) {
          x[(((b * 2 * k) + 2 * u) * nr + r) * nt + c] = cfg_.input_scale * h(ix(r), ix(c)).real();
          x[(((b * 2 * k) + 2 * u + 1) * nr + r) * nt + c] = cfg_.input_scale * h(ix(r), ix(c)).imag();
        }
    }
  }
  return x;
}

SpikingBFNet::Output SpikingBFNet::forward(dg::Tape& tape, const std::vector<BfProblem>& problems,
                                           const snn::GateSet& gates) const {
  if (problems.empty()) throw ArgumentError("SpikingBFNet::forward: empty batch");
  std::vector<chan::ChannelSet> hs;
  for (const auto& p : problems) hs.push_back(p.h);
  Output out;
  out.trace = net_.forward(tape, snn::repeat(tape, encode(hs), cfg_.t_steps), gates);
  Var y = snn::time_mean(out.trace.output());
  const std::size_t d = cfg_.streams, nr = cfg_.n_rx, per_user = 2 * d * d + 2 * nr * d;
  Var total;
  for (std::size_t b = 0; b < problems.size(); ++b) {
    Var row = dg::slice(y, 0, b, 1);
    std::vector<Var> ws, us;
    for (std::size_t k = 0; k < cfg_.k_users; ++k) {
      const std::size_t off = k * per_user;
      Var wre = dg::reshape(dg::slice(row, 1, off, d * d), {d, d});
      Var wim = dg::reshape(dg::slice(row, 1, off + d * d, d * d), {d, d});
      Var ure = dg::reshape(dg::slice(row, 1, off + 2 * d * d, nr * d), {nr, d});
      Var uim = dg::reshape(dg::slice(row, 1, off + 2 * d * d + nr * d, nr * d), {nr, d});
      ws.push_back(dg::cembed(wre, wim));
      us.push_back(dg::cembed(ure, uim));
    }
    std::vector<Var> v = dk_layer(tape, problems[b], ws, us, cfg_.dk);
    Var r = sum_rate(tape, problems[b], v);
    total = total.valid() ? dg::add(total, r) : r;
    out.w_bar.push_back(std::move(ws));
    out.u_bar.push_back(std::move(us));
    out.v.push_back(std::move(v));
  }
  out.rate = dg::scale(total, 1.0 / static_cast<double>(problems.size()));
  return out;
}

BfSolution SpikingBFNet::solve(const BfProblem& p, const snn::GateSet& gates) const {
  dg::Tape tape(false);
  Output o = forward(tape, {p}, gates);
  BfSolution s;
  for (const Var& v : o.v[0]) s.v.push_back(dg::unembed(v.value()));
  return project_power(std::move(s), p.power);
}

}  // namespace spikacom::bf
