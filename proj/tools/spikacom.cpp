// SPDX-License-Identifier: Apache-2.0
// Command-line front end: run, ablate, energy, distances.

#include "spikacom/config.hpp"
#include "spikacom/error.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace spikacom;
using namespace spikacom::harness;
using json = nlohmann::ordered_json;

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericExit = 3;

struct CommonArgs {
  std::string config, out, seeds;
  std::vector<std::string> methods;
};

std::string default_out() {
  const char* env = std::getenv("SPIKACOM_OUT");
  return env && *env ? env : "results";
}

void add_common(CLI::App* cmd, CommonArgs& a, bool methods) {
  cmd->add_option("-c,--config", a.config, "Experiment file (YAML)")->required();
  cmd->add_option("-o,--out", a.out, "Output directory (default $SPIKACOM_OUT or ./results)");
  cmd->add_option("-s,--seeds", a.seeds, "Seeds: 0..9, 3 or 0,2,5 (overrides the file)");
  if (methods) cmd->add_option("-m,--method", a.methods, "Method label, repeatable (overrides the file)");
}

ExperimentConfig load(const CommonArgs& a) {
  ExperimentConfig cfg = load_config(a.config);
  if (!a.seeds.empty()) cfg.seeds = parse_seeds(a.seeds);
  if (!a.methods.empty()) cfg.methods = a.methods;
  cfg.validate();
  return cfg;
}

std::string out_dir(const CommonArgs& a) {
  const std::string d = a.out.empty() ? default_out() : a.out;
  std::error_code ec;
  std::filesystem::create_directories(d, ec);
  if (ec) throw IoError("cannot create output directory " + d + ": " + ec.message());
  return d;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  const std::string path = (std::filesystem::path(dir) / name).string();
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  return f;
}

void progress(const RunResult& r) {
  const Summary s = summarize(r.traj, lower_is_better(parse_task(r.task)));
  std::fprintf(stderr, "%s %-9s seed %llu  final %.4f  bwt %+.4f\n", r.task.c_str(), r.method.c_str(),
               static_cast<unsigned long long>(r.seed), s.final_avg, s.bwt);
}

int cmd_run(const CommonArgs& a, bool ablate) {
  ExperimentConfig cfg = load(a);
  if (ablate) cfg.methods = ablation_labels();
  const std::string dir = out_dir(a);
  const auto runs = run_experiment(cfg, progress);
  emit_reports(runs, dir);
  std::cout << summary_table(summarize_runs(runs));
  return 0;
}

bool any_gated(const ExperimentConfig& cfg) {
  for (const auto& m : cfg.methods)
    if (method_spec(m, cfg.task, cfg.lambda).gate) return true;
  return false;
}

// Stage-level energy of the task model as constructed, with hypernet gates when a gated method is configured.
int cmd_energy(const CommonArgs& a) {
  const ExperimentConfig cfg = load(a);
  const std::string dir = out_dir(a);
  auto f = open_out(dir, "energy.csv");
  f << "seed,env,stage,kind,rate,snn_pj,ann_pj\n";
  json doc = json::array();
  for (std::uint64_t seed : cfg.seeds) {
    auto task = make_task(cfg, seed);
    std::optional<ctx::Hypernet> hn;
    if (any_gated(cfg)) hn.emplace(pretrain_hypernet(*task, cfg.harness, seed));
    for (std::size_t env = 0; env < task->n_envs(); ++env) {
      Rng prng = Rng(seed).split("pilots").split(env);
      const Gates gates = hn ? hn->gates(task->pilots(env, prng)) : Gates{};
      Rng erng = Rng(seed).split("energy").split(env);
      const EnergyEstimate e = measure_energy(*task, env, gates, erng);
      for (std::size_t i = 0; i < e.snn.stages.size(); ++i) {
        const auto& s = e.snn.stages[i];
        f << seed << ',' << env << ',' << s.name << ',' << energy::kind_name(s.kind) << ',' << e.stages.at(i).rate << ','
          << s.pj << ',' << e.ann.stages.at(i).pj << '\n';
      }
      const double ratio = e.ann.total_pj / e.snn.total_pj;
      std::printf("seed %llu env %zu  snn %.4g pJ  ann %.4g pJ  ratio %.2fx\n", static_cast<unsigned long long>(seed),
                  env, e.snn.total_pj, e.ann.total_pj, ratio);
      doc.push_back({{"seed", seed}, {"env", env}, {"snn_pj", e.snn.total_pj}, {"ann_pj", e.ann.total_pj},
                     {"ratio", ratio}});
    }
  }
  open_out(dir, "energy.json") << doc.dump(2) << '\n';
  return 0;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

// FCD and gate distances over the task's held-out environments.
int cmd_distances(const CommonArgs& a) {
  const ExperimentConfig cfg = load(a);
  const std::string dir = out_dir(a);
  json doc = json::array();
  for (std::uint64_t seed : cfg.seeds) {
    auto task = make_task(cfg, seed);
    const ctx::Hypernet hn = pretrain_hypernet(*task, cfg.harness, seed);
    const AlignmentReport r = heldout_alignment(*task, hn, cfg.harness, seed);
    std::printf("seed %llu  held-out environments %zu  alignment nmse %.4f\n", static_cast<unsigned long long>(seed),
                static_cast<std::size_t>(r.fcd.rows()), r.nmse);
    doc.push_back({{"seed", seed}, {"nmse", r.nmse}, {"fcd", matrix_json(r.fcd)},
                   {"gate_distance", matrix_json(r.gate_dist)}});
  }
  open_out(dir, "distances.json") << doc.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual adaptation experiments for spiking communication models"};
  app.require_subcommand(1);
  CommonArgs run_a, abl_a, en_a, dist_a;
  auto* run = app.add_subcommand("run", "Train through the environment sequence and write reports");
  add_common(run, run_a, true);
  auto* abl = app.add_subcommand("ablate", "Run vanilla, ewc, si, src, gate and gate+src on shared seeds");
  add_common(abl, abl_a, false);
  auto* en = app.add_subcommand("energy", "Per-stage energy from measured firing rates against the ANN twin");
  add_common(en, en_a, true);
  auto* dist = app.add_subcommand("distances", "FCD and hypernet gate distances on held-out environments");
  add_common(dist, dist_a, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (*run) return cmd_run(run_a, false);
    if (*abl) return cmd_run(abl_a, true);
    if (*en) return cmd_energy(en_a);
    if (*dist) return cmd_distances(dist_a);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
