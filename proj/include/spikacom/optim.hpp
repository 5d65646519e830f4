// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/rng.hpp"
#include "spikacom/tape.hpp"

#include <span>
#include <vector>

namespace spikacom {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double val_fraction = 0.15;
  bool cosine = true;
};

/// Learning rate at `step` of `total` under cosine annealing from `base` to `floor`.
double cosine_lr(double base, std::size_t step, std::size_t total, double floor = 0.0);

/// Shuffled index batches covering [0, n). The last batch may be short.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch, Rng& rng);

/// Splits [0, n) into (train, validation) index sets with the given held-out fraction.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_val_split(std::size_t n, double val_fraction,
                                                                              Rng& rng);

class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(std::vector<dg::Parameter*> params) : Adam(std::move(params), Options{}) {}
  Adam(std::vector<dg::Parameter*> params, Options opt);

  /// One update; `grads[i]` belongs to the i-th parameter. Frozen parameters are skipped.
  void step(std::span<const dg::Tensor> grads, double lr);
  /// Collects gradients of every parameter bound to the tape that produced `g`.
  void step(const dg::Gradients& g, double lr);
  void reset();

  const std::vector<dg::Parameter*>& params() const noexcept { return params_; }

 private:
  std::vector<dg::Parameter*> params_;
  Options opt_;
  std::vector<dg::Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace spikacom
