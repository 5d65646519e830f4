// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/tasks.hpp"

#include <functional>
#include <string>
#include <vector>

namespace spikacom::harness {

/// Experiment description read from a YAML file. Sections: task, methods, seeds, train,
/// hypernet and one task section (semantic, beamforming or channel_estimation).
struct ExperimentConfig {
  TaskKind task = TaskKind::semantic;
  std::vector<std::string> methods{"vanilla"};
  /// Regularisation strength override; negative keeps the per-task defaults.
  double lambda = -1.0;
  std::vector<std::uint64_t> seeds{0};
  HarnessConfig harness{};
  SemanticTaskConfig semantic{};
  BeamformingTaskConfig beamforming{};
  EstimationTaskConfig estimation{};

  void validate() const;
};

/// Parses YAML text. Errors are ConfigError naming the field and the line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// "0..9", "3" or "0,2,5".
std::vector<std::uint64_t> parse_seeds(const std::string& s);

std::unique_ptr<Task> make_task(const ExperimentConfig& cfg, std::uint64_t seed);

using ProgressFn = std::function<void(const RunResult&)>;

/// Every (seed, method) pair; one task and hypernet per seed, shared by its methods.
std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {});

}  // namespace spikacom::harness
