// SPDX-License-Identifier: Apache-2.0
#include "spikacom/channel.hpp"

#include "spikacom/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace spikacom::chan {

using dg::Tensor;
using dg::Var;

void MultipathProfile::validate() const {
  if (taps.empty()) throw ArgumentError("multipath profile needs at least one tap");
  for (double p : taps)
    if (!(p >= 0) || !std::isfinite(p)) throw ArgumentError("tap powers must be finite and nonnegative");
  if (!(noise_power >= 0) || !std::isfinite(noise_power)) throw ArgumentError("noise power must be nonnegative");
}

double MultipathProfile::total_power() const {
  double s = 0.0;
  for (double p : taps) s += p;
  return s;
}

MultipathProfile MultipathProfile::exponential(std::size_t l, double gain_db, double decay, double noise_power) {
  if (l == 0) throw ArgumentError("exponential profile needs at least one tap");
  MultipathProfile p;
  p.taps.resize(l);
  double s = 0.0;
  for (std::size_t i = 0; i < l; ++i) s += (p.taps[i] = std::pow(decay, static_cast<double>(i)));
  const double g = db_to_linear(gain_db);
  for (double& t : p.taps) t *= g / s;
  p.noise_power = noise_power;
  return p;
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double x) { return 10.0 * std::log10(x); }

double snr_db(const MultipathProfile& profile, double signal_power) {
  profile.validate();
  if (!(signal_power > 0)) throw ArgumentError("signal power must be positive");
  if (!(profile.noise_power > 0)) throw ArgumentError("noise power must be positive");
  const double gain = profile.total_power();
  if (!(gain > 0)) throw ArgumentError("channel gain must be positive");
  return linear_to_db(signal_power / profile.noise_power * gain);
}

ChannelDraw draw_channel(const MultipathProfile& profile, std::size_t batch, std::size_t length, Rng& rng,
                         OokConfig cfg) {
  profile.validate();
  if (cfg.block_len == 0) throw ArgumentError("block length must be positive");
  ChannelDraw d{batch, length, profile.taps.size(), cfg.block_len, {}, {}};
  d.taps.resize(batch * length * d.l);
  d.noise.resize(batch * length);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < length; ++n) {
      for (std::size_t ell = 0; ell < d.l; ++ell) d.taps[(b * length + n) * d.l + ell] = rng.cnormal(profile.taps[ell]);
      d.noise[b * length + n] = profile.noise_power > 0 ? rng.cnormal(profile.noise_power) : cd{};
    }
  return d;
}

ChannelDraw fixed_channel(std::span<const cd> taps, double noise_power, std::size_t batch, std::size_t length,
                          Rng& rng, OokConfig cfg) {
  if (taps.empty()) throw ArgumentError("fixed channel needs at least one tap");
  if (cfg.block_len == 0) throw ArgumentError("block length must be positive");
  ChannelDraw d{batch, length, taps.size(), cfg.block_len, {}, {}};
  d.taps.resize(batch * length * d.l);
  d.noise.resize(batch * length);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < length; ++n) {
      std::copy(taps.begin(), taps.end(), d.taps.begin() + static_cast<std::ptrdiff_t>((b * length + n) * d.l));
      d.noise[b * length + n] = noise_power > 0 ? rng.cnormal(noise_power) : cd{};
    }
  return d;
}

CVector receive(std::span<const double> bits, const ChannelDraw& d, std::size_t row) {
  if (bits.size() != d.length) throw ShapeError("receive: bit count does not match the channel draw length");
  CVector y(d.length);
  for (std::size_t n = 0; n < d.length; ++n) {
    const std::size_t start = n - n % d.block_len;
    cd acc = d.noise[row * d.length + n];
    for (std::size_t ell = 0; ell < d.l && n >= start + ell; ++ell) acc += d.tap(row, n, ell) * bits[n - ell];
    y[n] = acc;
  }
  return y;
}

CVector transmit_ook(std::span<const double> bits, const MultipathProfile& profile, Rng& rng, OokConfig cfg) {
  if (bits.empty()) throw ArgumentError("transmit_ook: empty input");
  ChannelDraw d = draw_channel(profile, 1, bits.size(), rng, cfg);
  return receive(bits, d, 0);
}

Eigen::MatrixXd ook_pilot_samples(const MultipathProfile& profile, std::size_t n_obs, std::size_t d, double rho,
                                  Rng& rng, OokConfig cfg) {
  if (n_obs == 0 || d == 0) throw ArgumentError("ook_pilot_samples: empty request");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_obs), static_cast<Eigen::Index>(2 * d));
  std::vector<double> bits(d);
  for (std::size_t r = 0; r < n_obs; ++r) {
    for (double& b : bits) b = rng.bernoulli(rho) ? 1.0 : 0.0;
    ChannelDraw draw = draw_channel(profile, 1, d, rng, cfg);
    CVector y = receive(bits, draw, 0);
    for (std::size_t n = 0; n < d; ++n) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n)) = y[n].real();
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d + n)) = y[n].imag();
    }
  }
  return out;
}

Var apply_channel(Var x, const ChannelDraw& d) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(0) != d.batch || xv.dim(1) != d.length) {
    throw ShapeError("apply_channel: input " + dg::shape_str(xv.shape()) + " does not match the channel draw (" +
                     std::to_string(d.batch) + ", " + std::to_string(d.length) + ")");
  }
  const std::size_t b = d.batch, len = d.length;
  Tensor y({b, 2, len});
  for (std::size_t r = 0; r < b; ++r) {
    CVector yr = receive(std::span<const double>(xv.data() + r * len, len), d, r);
    for (std::size_t n = 0; n < len; ++n) {
      y[(r * 2) * len + n] = yr[n].real();
      y[(r * 2 + 1) * len + n] = yr[n].imag();
    }
  }
  const ChannelDraw* dp = &d;
  return x.tape->record(std::move(y), {x}, [x, dp](const Tensor& g, dg::GradSink& sink) {
    Tensor* gx = sink.slot(x);
    if (!gx) return;
    const ChannelDraw& d = *dp;
    const std::size_t len = d.length;
    for (std::size_t r = 0; r < d.batch; ++r)
      for (std::size_t n = 0; n < len; ++n) {
        const std::size_t start = n - n % d.block_len;
        const double gr = g[(r * 2) * len + n], gi = g[(r * 2 + 1) * len + n];
        for (std::size_t ell = 0; ell < d.l && n >= start + ell; ++ell) {
          const cd h = d.tap(r, n, ell);
          (*gx)[r * len + n - ell] += gr * h.real() + gi * h.imag();
        }
      }
  });
}

void OfdmGridSpec::validate() const {
  if (n_sub == 0 || n_sym == 0) throw ArgumentError("OFDM grid dimensions must be positive");
  if (pilots.size() > n_tot()) throw ArgumentError("more pilots than grid positions");
  std::set<std::size_t> seen;
  for (std::size_t p : pilots) {
    if (p >= n_tot()) throw ArgumentError("pilot index out of range");
    if (!seen.insert(p).second) throw ArgumentError("duplicate pilot position " + std::to_string(p));
  }
}

OfdmGridSpec OfdmGridSpec::with_default_pilots(std::size_t n_sub, std::size_t n_sym, std::size_t n_p) {
  OfdmGridSpec s{n_sub, n_sym, {}};
  std::vector<std::size_t> syms;
  if (n_sym >= 3) {
    syms = {1, n_sym - 2};
    if (syms[0] == syms[1]) syms.pop_back();
  } else {
    syms = {0};
  }
  const std::size_t per = (n_p + syms.size() - 1) / syms.size();
  if (per > n_sub) throw ArgumentError("too many pilots for the default layout");
  std::size_t placed = 0;
  for (std::size_t i = 0; i < per; ++i) {
    const auto sc = static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(n_sub) /
                                             static_cast<double>(per));
    for (std::size_t k : syms)
      if (placed < n_p) {
        s.pilots.push_back(sc * n_sym + k);
        ++placed;
      }
  }
  std::sort(s.pilots.begin(), s.pilots.end());
  s.validate();
  return s;
}

CMatrix gen_ofdm_channel(const OfdmGridSpec& spec, const OfdmChannelConfig& cfg, Rng& rng) {
  spec.validate();
  cfg.pdp.validate();
  if (!(cfg.doppler >= 0)) throw ArgumentError("doppler must be nonnegative");
  const std::size_t l = cfg.pdp.taps.size();
  std::vector<double> p = cfg.pdp.taps;
  const double total = cfg.pdp.total_power();
  if (!(total > 0)) throw ArgumentError("PDP has zero total power");
  if (cfg.norm == GridNormalization::expected)
    for (double& v : p) v /= total;
  const double a = std::cyl_bessel_j(0.0, 2.0 * std::numbers::pi * cfg.doppler);
  const double innov = std::sqrt(std::max(0.0, 1.0 - a * a));
  std::vector<cd> g(l);
  for (std::size_t ell = 0; ell < l; ++ell) g[ell] = rng.cnormal(p[ell]);
  CMatrix h(static_cast<Eigen::Index>(spec.n_sub), static_cast<Eigen::Index>(spec.n_sym));
  for (std::size_t k = 0; k < spec.n_sym; ++k) {
    if (k > 0)
      for (std::size_t ell = 0; ell < l; ++ell) g[ell] = a * g[ell] + innov * rng.cnormal(p[ell]);
    for (std::size_t i = 0; i < spec.n_sub; ++i) {
      cd acc{};
      for (std::size_t ell = 0; ell < l; ++ell) {
        const double ph = -2.0 * std::numbers::pi * static_cast<double>(i * ell) / static_cast<double>(spec.n_sub);
        acc += g[ell] * std::polar(1.0, ph);
      }
      h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = acc;
    }
  }
  if (cfg.norm == GridNormalization::per_grid) {
    const double pw = h.squaredNorm() / static_cast<double>(h.size());
    if (pw > 0) h /= std::sqrt(pw);
  }
  return h;
}

CVector pilot_io(const CMatrix& grid, const OfdmGridSpec& spec, std::span<const cd> pilot_symbols, double noise_power,
                 Rng& rng) {
  spec.validate();
  if (static_cast<std::size_t>(grid.rows()) != spec.n_sub || static_cast<std::size_t>(grid.cols()) != spec.n_sym) {
    throw ShapeError("pilot_io: grid does not match the OFDM spec");
  }
  if (pilot_symbols.size() != spec.pilots.size()) throw ShapeError("pilot_io: one symbol per pilot required");
  CVector y(spec.pilots.size());
  for (std::size_t p = 0; p < spec.pilots.size(); ++p) {
    if (pilot_symbols[p] == cd{}) throw ArgumentError("pilot_io: zero pilot symbol at pilot " + std::to_string(p));
    const cd h = grid(static_cast<Eigen::Index>(spec.subcarrier(p)), static_cast<Eigen::Index>(spec.symbol(p)));
    y[p] = h * pilot_symbols[p] + (noise_power > 0 ? rng.cnormal(noise_power) : cd{});
  }
  return y;
}

void MimoEnvironment::validate() const {
  if (k_users == 0 || n_tx == 0 || n_rx == 0 || n_paths == 0) throw ArgumentError("MIMO dimensions must be positive");
  if (clusters.size() != k_users) throw ArgumentError("one cluster per user required");
}

MimoEnvironment MimoEnvironment::from_block(std::uint64_t block, std::size_t k, std::size_t n_tx, std::size_t n_rx) {
  MimoEnvironment env;
  env.k_users = k;
  env.n_tx = n_tx;
  env.n_rx = n_rx;
  Rng rng = Rng(0x5eed).split("mimo-block").split(block);
  for (std::size_t u = 0; u < k; ++u) {
    UserCluster c;
    c.aod = rng.uniform(-std::numbers::pi / 3, std::numbers::pi / 3);
    c.aoa = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    c.gain_db = rng.uniform(-3.0, 3.0);
    env.clusters.push_back(c);
  }
  return env;
}

Eigen::VectorXcd steering(std::size_t n, double angle) {
  Eigen::VectorXcd a(static_cast<Eigen::Index>(n));
  for (std::size_t m = 0; m < n; ++m)
    a(static_cast<Eigen::Index>(m)) = std::polar(1.0, std::numbers::pi * static_cast<double>(m) * std::sin(angle));
  return a;
}

std::vector<ChannelSet> gen_mimo_envs(const MimoEnvironment& env, std::size_t n_samples, Rng& rng) {
  env.validate();
  if (n_samples == 0) throw ArgumentError("gen_mimo_envs: n_samples must be >= 1");
  std::vector<ChannelSet> out;
  out.reserve(n_samples);
  const double inv_paths = 1.0 / static_cast<double>(env.n_paths);
  for (std::size_t s = 0; s < n_samples; ++s) {
    ChannelSet set;
    for (std::size_t u = 0; u < env.k_users; ++u) {
      const UserCluster& c = env.clusters[u];
      const double amp = std::sqrt(db_to_linear(c.gain_db) * (env.fading ? inv_paths : 1.0));
      CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(env.n_rx), static_cast<Eigen::Index>(env.n_tx));
      for (std::size_t p = 0; p < env.n_paths; ++p) {
        const double aod = c.aod + env.angle_spread * rng.normal();
        const double aoa = c.aoa + env.angle_spread * rng.normal();
        const cd coef = env.fading ? rng.cnormal(1.0) : cd{1.0, 0.0};
        h += amp * coef * steering(env.n_rx, aoa) * steering(env.n_tx, aod).adjoint();
      }
      set.push_back(std::move(h));
    }
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace spikacom::chan
