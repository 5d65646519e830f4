// SPDX-License-Identifier: Apache-2.0
#include "spikacom/distance.hpp"

#include "spikacom/error.hpp"
#include "spikacom/rng.hpp"

#include <cmath>
#include <limits>

namespace spikacom::ctx {

GaussianSummary fit_gaussian(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw ArgumentError("fit_gaussian needs at least two samples");
  if (samples.cols() < 1) throw ArgumentError("fit_gaussian needs at least one feature");
  GaussianSummary g;
  g.mu = samples.colwise().mean().transpose();
  const Eigen::MatrixXd c = samples.rowwise() - g.mu.transpose();
  g.sigma = (c.transpose() * c) / static_cast<double>(samples.rows());
  g.sigma = 0.5 * (g.sigma + g.sigma.transpose());
  return g;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) < 1e-12 ? 0.0 : std::sqrt(ev(i));
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double emd_gaussian(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.rows() != b.sigma.rows()) {
    throw ShapeError("emd_gaussian: feature dimensions differ (" + std::to_string(a.mu.size()) + " vs " +
                     std::to_string(b.mu.size()) + ")");
  }
  // Both orderings are evaluated and averaged so the result is exactly symmetric.
  auto cross_trace = [](const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2) {
    const Eigen::MatrixXd h = psd_sqrt(s1);
    return psd_sqrt(h * s2 * h).trace();
  };
  const double cross = 0.5 * (cross_trace(a.sigma, b.sigma) + cross_trace(b.sigma, a.sigma));
  const double d = (a.mu - b.mu).squaredNorm() + (a.sigma.trace() + b.sigma.trace()) - 2.0 * cross;
  return std::max(0.0, d);
}

FeatureMap::FeatureMap(std::size_t d_in, std::size_t d_out, std::uint64_t seed) {
  if (d_in == 0 || d_out == 0) throw ArgumentError("feature map dimensions must be positive");
  Rng rng = Rng(seed).split("feature-map");
  proj_.resize(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in));
  const double s = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (Eigen::Index r = 0; r < proj_.rows(); ++r)
    for (Eigen::Index c = 0; c < proj_.cols(); ++c) proj_(r, c) = s * rng.normal();
}

Eigen::MatrixXd FeatureMap::apply(const Eigen::MatrixXd& x) const {
  if (identity()) return x;
  if (x.cols() != proj_.cols()) {
    throw ShapeError("feature map expects " + std::to_string(proj_.cols()) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  return x * proj_.transpose();
}

double fcd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const FeatureMap& f) {
  if (a.rows() == 0 || b.rows() == 0) throw ArgumentError("fcd: empty sample set");
  return std::sqrt(emd_gaussian(fit_gaussian(f.apply(a)), fit_gaussian(f.apply(b))));
}

double model_based_emd(double snr_a_db, double snr_b_db) {
  if (!std::isfinite(snr_a_db) || !std::isfinite(snr_b_db)) throw ArgumentError("model_based_emd: non-finite SNR");
  return std::abs(std::sqrt(1.0 + std::pow(10.0, snr_a_db / 10.0)) - std::sqrt(1.0 + std::pow(10.0, snr_b_db / 10.0)));
}

Assignment hungarian(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.rows() != cost.cols()) throw ShapeError("hungarian: cost matrix must be square");
  Assignment out;
  if (n == 0) return out;
  // Shortest augmenting path with row/column potentials; 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = row_of[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.col_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.col_of_row[row_of[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i)
    out.cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.col_of_row[i]));
  return out;
}

double multiuser_fcd(const std::vector<Eigen::MatrixXd>& env_a, const std::vector<Eigen::MatrixXd>& env_b,
                     const FeatureMap& f) {
  if (env_a.size() != env_b.size()) {
    throw ArgumentError("multiuser_fcd: user counts differ (" + std::to_string(env_a.size()) + " vs " +
                        std::to_string(env_b.size()) + ")");
  }
  const auto k = static_cast<Eigen::Index>(env_a.size());
  if (k == 0) throw ArgumentError("multiuser_fcd: no users");
  std::vector<GaussianSummary> ga, gb;
  for (const auto& s : env_a) ga.push_back(fit_gaussian(f.apply(s)));
  for (const auto& s : env_b) gb.push_back(fit_gaussian(f.apply(s)));
  Eigen::MatrixXd c(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      c(i, j) = std::sqrt(emd_gaussian(ga[static_cast<std::size_t>(i)], gb[static_cast<std::size_t>(j)]));
  return hungarian(c).cost / static_cast<double>(k);
}

Eigen::MatrixXd fcd_matrix(const std::vector<Eigen::MatrixXd>& envs, const FeatureMap& f) {
  const auto n = static_cast<Eigen::Index>(envs.size());
  std::vector<GaussianSummary> g;
  for (const auto& e : envs) g.push_back(fit_gaussian(f.apply(e)));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d(i, j) = d(j, i) = std::sqrt(emd_gaussian(g[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(j)]));
  return d;
}

}  // namespace spikacom::ctx
