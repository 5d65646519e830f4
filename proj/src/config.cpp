// SPDX-License-Identifier: Apache-2.0
#include "spikacom/config.hpp"

#include "spikacom/error.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace spikacom::harness {

namespace {

std::string where(const YAML::Node& n, const std::string& field) {
  const auto m = n.Mark();
  return m.line >= 0 ? field + " (line " + std::to_string(m.line + 1) + ")" : field;
}

/// Rejects keys outside `allowed`, so typos do not pass silently.
void check_keys(const YAML::Node& n, const std::string& section, const std::set<std::string>& allowed) {
  if (!n.IsMap()) throw ConfigError(where(n, section), "expected a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.contains(key))
      throw ConfigError(where(kv.first, section.empty() ? key : section + "." + key), "unknown field");
  }
}

template <class T>
void read(const YAML::Node& parent, const std::string& section, const char* key, T& out) {
  const YAML::Node n = parent[key];
  if (!n) return;
  try {
    out = n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(n, section.empty() ? key : section + "." + key), "invalid value");
  }
}

void read_train(const YAML::Node& n, TrainConfig& t) {
  check_keys(n, "train", {"lr", "batch_size", "epochs", "val_fraction", "cosine"});
  read(n, "train", "lr", t.lr);
  read(n, "train", "batch_size", t.batch_size);
  read(n, "train", "epochs", t.epochs);
  read(n, "train", "val_fraction", t.val_fraction);
  read(n, "train", "cosine", t.cosine);
}

void read_hypernet(const YAML::Node& n, HarnessConfig& h) {
  check_keys(n, "hypernet", {"mode", "epochs", "lr", "beta", "lambda_h", "hidden", "feature_dim", "threshold", "sets",
                             "pooled", "cotrain_epochs", "check_gate_cache"});
  if (n["mode"]) {
    const auto m = n["mode"].as<std::string>();
    if (m == "frozen") h.hypernet_mode = HypernetMode::frozen;
    else if (m == "cotrain") h.hypernet_mode = HypernetMode::cotrain;
    else throw ConfigError(where(n["mode"], "hypernet.mode"), "expected frozen or cotrain");
  }
  read(n, "hypernet", "epochs", h.hypernet.epochs);
  read(n, "hypernet", "lr", h.hypernet.lr);
  read(n, "hypernet", "beta", h.hyper.beta);
  read(n, "hypernet", "lambda_h", h.hyper.lambda_h);
  read(n, "hypernet", "hidden", h.hyper.hidden);
  read(n, "hypernet", "feature_dim", h.hyper.feature_dim);
  read(n, "hypernet", "threshold", h.hyper.threshold);
  read(n, "hypernet", "sets", h.hypernet_sets);
  read(n, "hypernet", "pooled", h.hypernet_pooled);
  read(n, "hypernet", "cotrain_epochs", h.cotrain_epochs);
  read(n, "hypernet", "check_gate_cache", h.check_gate_cache);
}

void read_semantic(const YAML::Node& n, SemanticTaskConfig& c) {
  const std::string s = "semantic";
  check_keys(n, s, {"classes", "train_per_class", "test_per_class", "t_steps", "height", "width", "max_shift",
                    "on_rate", "background_rate", "enc_channels", "enc_blocks", "fc_hidden", "n_symbols",
                    "dec_channels", "dec_hidden", "population", "logit_scale", "phase_planes", "gate_conv", "bias",
                    "pretrain_epochs", "pretrain_lr", "gains_db", "taps", "decay", "noise_power", "warmup_epochs",
                    "warmup_lr", "warmup_gate_fraction", "sweep_db", "heldout_db", "pilot_obs", "pilot_rho"});
  read(n, s, "classes", c.data.classes);
  read(n, s, "train_per_class", c.data.train_per_class);
  read(n, s, "test_per_class", c.data.test_per_class);
  read(n, s, "t_steps", c.data.t_steps);
  read(n, s, "height", c.data.height);
  read(n, s, "width", c.data.width);
  read(n, s, "max_shift", c.data.max_shift);
  read(n, s, "on_rate", c.data.on_rate);
  read(n, s, "background_rate", c.data.background_rate);
  read(n, s, "enc_channels", c.model.enc_channels);
  read(n, s, "enc_blocks", c.model.enc_blocks);
  read(n, s, "fc_hidden", c.model.fc_hidden);
  read(n, s, "n_symbols", c.model.n_symbols);
  read(n, s, "dec_channels", c.model.dec_channels);
  read(n, s, "dec_hidden", c.model.dec_hidden);
  read(n, s, "population", c.model.population);
  read(n, s, "logit_scale", c.model.logit_scale);
  read(n, s, "phase_planes", c.model.phase_planes);
  read(n, s, "gate_conv", c.model.gate_conv);
  read(n, s, "bias", c.model.bias);
  read(n, s, "pretrain_epochs", c.pretrain.epochs);
  read(n, s, "pretrain_lr", c.pretrain.lr);
  read(n, s, "gains_db", c.gains_db);
  read(n, s, "taps", c.taps);
  read(n, s, "decay", c.decay);
  read(n, s, "noise_power", c.noise_power);
  read(n, s, "warmup_epochs", c.warmup_epochs);
  read(n, s, "warmup_lr", c.warmup_lr);
  read(n, s, "warmup_gate_fraction", c.warmup_gate_fraction);
  read(n, s, "sweep_db", c.sweep_db);
  read(n, s, "heldout_db", c.heldout_db);
  read(n, s, "pilot_obs", c.pilot_obs);
  read(n, s, "pilot_rho", c.pilot_rho);
}

void read_beamforming(const YAML::Node& n, BeamformingTaskConfig& c) {
  const std::string s = "beamforming";
  check_keys(n, s, {"k_users", "n_tx", "n_rx", "streams", "conv_channels", "hidden", "t_steps", "input_scale", "blocks",
                    "sweep_blocks", "heldout_blocks", "n_train", "n_test", "power", "noise", "pilot_draws"});
  read(n, s, "k_users", c.net.k_users);
  read(n, s, "n_tx", c.net.n_tx);
  read(n, s, "n_rx", c.net.n_rx);
  read(n, s, "streams", c.net.streams);
  read(n, s, "conv_channels", c.net.conv_channels);
  read(n, s, "hidden", c.net.hidden);
  read(n, s, "t_steps", c.net.t_steps);
  read(n, s, "input_scale", c.net.input_scale);
  read(n, s, "blocks", c.blocks);
  read(n, s, "sweep_blocks", c.sweep_blocks);
  read(n, s, "heldout_blocks", c.heldout_blocks);
  read(n, s, "n_train", c.n_train);
  read(n, s, "n_test", c.n_test);
  read(n, s, "power", c.power);
  read(n, s, "noise", c.noise);
  read(n, s, "pilot_draws", c.pilot_draws);
}

std::vector<EstimationEnv> read_est_envs(const YAML::Node& n, const std::string& field) {
  if (!n.IsSequence()) throw ConfigError(where(n, field), "expected a list of {taps, decay, doppler}");
  std::vector<EstimationEnv> out;
  for (const auto& e : n) {
    check_keys(e, field, {"taps", "decay", "doppler"});
    EstimationEnv env;
    read(e, field, "taps", env.taps);
    read(e, field, "decay", env.decay);
    read(e, field, "doppler", env.doppler);
    out.push_back(env);
  }
  return out;
}

void read_estimation(const YAML::Node& n, EstimationTaskConfig& c) {
  const std::string s = "channel_estimation";
  check_keys(n, s, {"n_sub", "n_sym", "n_pilots", "channels", "blocks", "t_steps", "rank", "input_scale",
                    "environments", "sweep", "heldout", "snr_db", "n_train", "n_test", "pilot_draws"});
  read(n, s, "n_sub", c.n_sub);
  read(n, s, "n_sym", c.n_sym);
  read(n, s, "n_pilots", c.n_pilots);
  read(n, s, "channels", c.net.channels);
  read(n, s, "blocks", c.net.blocks);
  read(n, s, "t_steps", c.net.t_steps);
  read(n, s, "rank", c.net.rank);
  read(n, s, "input_scale", c.net.input_scale);
  if (n["environments"]) c.envs = read_est_envs(n["environments"], s + ".environments");
  if (n["sweep"]) c.sweep = read_est_envs(n["sweep"], s + ".sweep");
  if (n["heldout"]) c.heldout = read_est_envs(n["heldout"], s + ".heldout");
  read(n, s, "snr_db", c.snr_db);
  read(n, s, "n_train", c.n_train);
  read(n, s, "n_test", c.n_test);
  read(n, s, "pilot_draws", c.pilot_draws);
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  try {
    if (const auto dots = s.find(".."); dots != std::string::npos) {
      const auto a = std::stoull(s.substr(0, dots)), b = std::stoull(s.substr(dots + 2));
      if (b < a) throw ConfigError("seeds", "empty range '" + s + "'");
      for (auto x = a; x <= b; ++x) out.push_back(x);
    } else {
      std::stringstream ss(s);
      for (std::string tok; std::getline(ss, tok, ',');) out.push_back(std::stoull(tok));
    }
  } catch (const std::logic_error&) {
    throw ConfigError("seeds", "cannot parse '" + s + "'");
  }
  if (out.empty()) throw ConfigError("seeds", "no seeds given");
  return out;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("methods", "need at least one method");
  for (const auto& m : methods) (void)method_spec(m, task, lambda);
  if (seeds.empty()) throw ConfigError("seeds", "need at least one seed");
  if (harness.train.lr <= 0) throw ConfigError("train.lr", "must be positive");
  if (harness.train.batch_size == 0 || harness.train.epochs == 0)
    throw ConfigError("train", "batch_size and epochs must be positive");
  if (harness.train.val_fraction < 0 || harness.train.val_fraction >= 1)
    throw ConfigError("train.val_fraction", "must lie in [0, 1)");
  if (harness.hypernet_sets < 2) throw ConfigError("hypernet.sets", "need at least two pilot sets");
  switch (task) {
    case TaskKind::semantic: semantic.validate(); break;
    case TaskKind::beamforming: beamforming.validate(); break;
    case TaskKind::channel_estimation: estimation.validate(); break;
  }
}

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1), e.msg);
  }
  ExperimentConfig c;
  if (!root || root.IsNull()) throw ConfigError("", "empty configuration");
  check_keys(root, "", {"task", "method", "methods", "lambda", "seeds", "train", "hypernet", "semantic", "beamforming",
                        "channel_estimation", "fisher_samples", "si_xi"});
  if (!root["task"]) throw ConfigError("task", "missing");
  c.task = parse_task(root["task"].as<std::string>());
  if (root["method"] && root["methods"]) throw ConfigError(where(root["method"], "method"), "give method or methods");
  if (root["method"]) c.methods = {root["method"].as<std::string>()};
  read(root, "", "methods", c.methods);
  read(root, "", "lambda", c.lambda);
  if (root["seeds"]) {
    const YAML::Node s = root["seeds"];
    if (s.IsSequence()) read(root, "", "seeds", c.seeds);
    else c.seeds = parse_seeds(s.as<std::string>());
  }
  read(root, "", "fisher_samples", c.harness.fisher_samples);
  read(root, "", "si_xi", c.harness.si_xi);
  if (root["train"]) read_train(root["train"], c.harness.train);
  if (root["hypernet"]) read_hypernet(root["hypernet"], c.harness);
  if (root["semantic"]) read_semantic(root["semantic"], c.semantic);
  if (root["beamforming"]) read_beamforming(root["beamforming"], c.beamforming);
  if (root["channel_estimation"]) read_estimation(root["channel_estimation"], c.estimation);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::unique_ptr<Task> make_task(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.task) {
    case TaskKind::semantic: return std::make_unique<SemanticTask>(cfg.semantic, seed);
    case TaskKind::beamforming: return std::make_unique<BeamformingTask>(cfg.beamforming, seed);
    case TaskKind::channel_estimation: return std::make_unique<EstimationTask>(cfg.estimation, seed);
  }
  throw ConfigError("task", "unknown task");
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  std::vector<MethodSpec> specs;
  bool gated = false;
  for (const auto& m : cfg.methods) {
    specs.push_back(method_spec(m, cfg.task, cfg.lambda));
    gated = gated || specs.back().gate;
  }
  std::vector<RunResult> out;
  for (std::uint64_t seed : cfg.seeds) {
    auto task = make_task(cfg, seed);
    std::optional<ctx::Hypernet> base;
    if (gated) base.emplace(pretrain_hypernet(*task, cfg.harness, seed));
    for (const auto& spec : specs) {
      std::optional<ctx::Hypernet> hn = base;  // co-training must not leak across methods
      out.push_back(run_sequence(*task, spec, cfg.harness, seed, hn ? &*hn : nullptr));
      if (progress) progress(out.back());
    }
  }
  return out;
}

}  // namespace spikacom::harness
