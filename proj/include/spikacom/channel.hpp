// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/complex.hpp"
#include "spikacom/rng.hpp"

#include <complex>
#include <span>
#include <vector>

namespace spikacom::chan {

using cd = std::complex<double>;
using CVector = std::vector<cd>;
using dg::CMatrix;

/// Per-tap average powers of an L-tap multipath channel plus the receiver noise power.
struct MultipathProfile {
  std::vector<double> taps{1.0};
  double noise_power = 1.0;

  void validate() const;
  double total_power() const;

  /// L taps with exponentially decaying powers (ratio `decay` per tap) scaled to a total gain in dB.
  static MultipathProfile exponential(std::size_t l, double gain_db, double decay = 0.8, double noise_power = 1.0);
};

double db_to_linear(double db);
double linear_to_db(double x);

/// SNR in dB: (signal_power / N0) * sum of tap powers.
double snr_db(const MultipathProfile& profile, double signal_power);

struct OokConfig {
  /// Samples per transmission block. Channel memory never crosses a block boundary.
  std::size_t block_len = 32;
};

/// Taps and noise realised for a batch of OOK transmissions. Fast fading: taps are
/// drawn independently for every sample index.
struct ChannelDraw {
  std::size_t batch = 0, length = 0, l = 0, block_len = 32;
  std::vector<cd> taps;   // [batch][length][l]
  std::vector<cd> noise;  // [batch][length]

  cd tap(std::size_t b, std::size_t n, std::size_t ell) const { return taps[(b * length + n) * l + ell]; }
};

ChannelDraw draw_channel(const MultipathProfile& profile, std::size_t batch, std::size_t length, Rng& rng,
                         OokConfig cfg = {});
/// Same as draw_channel but with fixed taps at every index (deterministic channel).
ChannelDraw fixed_channel(std::span<const cd> taps, double noise_power, std::size_t batch, std::size_t length, Rng& rng,
                          OokConfig cfg = {});

/// Received samples for one row of the draw: y[n] = sum_l h_l[n] x[n-l] + w[n], tap 1 at zero delay.
CVector receive(std::span<const double> bits, const ChannelDraw& draw, std::size_t row = 0);

/// OOK over a fast-fading multipath channel: spike 1 -> amplitude 1, spike 0 -> silence.
CVector transmit_ook(std::span<const double> bits, const MultipathProfile& profile, Rng& rng, OokConfig cfg = {});

/// Pilot observations for environment identification: each row holds [Re y, Im y] of one
/// received block of `d` Bernoulli(rho) OOK symbols.
Eigen::MatrixXd ook_pilot_samples(const MultipathProfile& profile, std::size_t n_obs, std::size_t d, double rho,
                                  Rng& rng, OokConfig cfg = {});

/// Recorded channel: x is (B, N) on-air symbols; returns (B, 2, N) real/imaginary planes.
/// `draw` is referenced by the backward closure and must outlive the tape.
dg::Var apply_channel(dg::Var x, const ChannelDraw& draw);

// ----- OFDM -----

/// Frequency-time grid with pilot positions indexed row-major (subcarrier * n_sym + symbol).
struct OfdmGridSpec {
  std::size_t n_sub = 16;
  std::size_t n_sym = 4;
  std::vector<std::size_t> pilots;

  void validate() const;
  std::size_t n_tot() const { return n_sub * n_sym; }
  std::size_t subcarrier(std::size_t p) const { return pilots[p] / n_sym; }
  std::size_t symbol(std::size_t p) const { return pilots[p] % n_sym; }

  /// n_p pilots split over symbols 1 and n_sym - 2, evenly spaced in frequency.
  static OfdmGridSpec with_default_pilots(std::size_t n_sub, std::size_t n_sym, std::size_t n_p);
};

enum class GridNormalization {
  per_grid,  // each realisation rescaled to mean |H|^2 = 1
  expected,  // PDP rescaled to unit total power, so E|H|^2 = 1
};

struct OfdmChannelConfig {
  MultipathProfile pdp = MultipathProfile::exponential(4, 0.0);
  /// Normalised Doppler f_D * T_sym; tap correlation between symbols is J0(2 pi f_D T_sym).
  double doppler = 0.0;
  GridNormalization norm = GridNormalization::per_grid;
};

/// N_c x N_s channel: tap l (delay l samples) follows a first-order Gauss-Markov process
/// across symbols and is mapped to frequency by a DFT over N_c subcarriers.
CMatrix gen_ofdm_channel(const OfdmGridSpec& spec, const OfdmChannelConfig& cfg, Rng& rng);

/// Y[p] = H[p] X[p] + Z[p] at the pilot positions only.
CVector pilot_io(const CMatrix& grid, const OfdmGridSpec& spec, std::span<const cd> pilot_symbols,
                 double noise_power, Rng& rng);

// ----- multi-user MIMO -----

struct UserCluster {
  double aod = 0.0;      // departure angle centre at the BS array (radians)
  double aoa = 0.0;      // arrival angle centre at the user array
  double gain_db = 0.0;  // large-scale gain
};

/// A synthetic "location block": one angular/gain cluster per user.
struct MimoEnvironment {
  std::size_t k_users = 2;
  std::size_t n_tx = 8;
  std::size_t n_rx = 2;
  std::size_t n_paths = 4;
  double angle_spread = 0.1;
  /// When false, path amplitudes are unit instead of Rayleigh.
  bool fading = true;
  std::vector<UserCluster> clusters;

  void validate() const;
  /// Deterministic environment for a block index.
  static MimoEnvironment from_block(std::uint64_t block, std::size_t k, std::size_t n_tx, std::size_t n_rx);
};

using ChannelSet = std::vector<CMatrix>;  // one N_r x N_t matrix per user

/// Half-wavelength uniform linear array response with unit-modulus entries.
Eigen::VectorXcd steering(std::size_t n, double angle);

std::vector<ChannelSet> gen_mimo_envs(const MimoEnvironment& env, std::size_t n_samples, Rng& rng);

}  // namespace spikacom::chan
