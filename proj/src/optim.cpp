// SPDX-License-Identifier: Apache-2.0
#include "spikacom/optim.hpp"

#include "spikacom/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace spikacom {

double cosine_lr(double base, std::size_t step, std::size_t total, double floor) {
  if (total == 0) return base;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch, Rng& rng) {
  if (batch == 0) throw ArgumentError("batch size must be positive");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch)
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch)));
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_val_split(std::size_t n, double val_fraction,
                                                                              Rng& rng) {
  if (val_fraction < 0 || val_fraction >= 1) throw ArgumentError("validation fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

Adam::Adam(std::vector<dg::Parameter*> params, Options opt) : params_(std::move(params)), opt_(opt) { reset(); }

void Adam::reset() {
  m_.clear();
  v_.clear();
  for (const auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
  t_ = 0;
}

void Adam::step(std::span<const dg::Tensor> grads, double lr) {
  if (grads.size() != params_.size()) throw ArgumentError("Adam::step: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    dg::Parameter& p = *params_[k];
    if (!p.trainable) continue;
    const dg::Tensor& g = grads[k];
    if (g.shape() != p.value.shape()) {
      throw ShapeError("Adam::step: gradient for '" + p.name + "' has shape " + dg::shape_str(g.shape()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      m_[k][i] = opt_.beta1 * m_[k][i] + (1 - opt_.beta1) * g[i];
      v_[k][i] = opt_.beta2 * v_[k][i] + (1 - opt_.beta2) * g[i] * g[i];
      p.value[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + opt_.eps);
    }
  }
}

void Adam::step(const dg::Gradients& g, double lr) {
  std::vector<dg::Tensor> grads;
  grads.reserve(params_.size());
  for (const auto* p : params_) grads.push_back(p->trainable ? g.of(*p) : dg::Tensor(p->value.shape()));
  step(grads, lr);
}

}  // namespace spikacom
