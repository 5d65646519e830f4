// SPDX-License-Identifier: Apache-2.0
#include "spikacom/harness.hpp"

#include "spikacom/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace spikacom::harness {

using dg::Tensor;
using dg::Var;

TaskKind parse_task(std::string_view name) {
  if (name == "semantic") return TaskKind::semantic;
  if (name == "beamforming") return TaskKind::beamforming;
  if (name == "channel-estimation" || name == "channel_estimation") return TaskKind::channel_estimation;
  throw ConfigError("task", "unknown task '" + std::string(name) + "'");
}

std::string_view task_name(TaskKind t) {
  switch (t) {
    case TaskKind::semantic: return "semantic";
    case TaskKind::beamforming: return "beamforming";
    case TaskKind::channel_estimation: return "channel-estimation";
  }
  return "?";
}

const std::vector<std::string>& ablation_labels() {
  static const std::vector<std::string> labels{"vanilla", "ewc", "si", "src", "gate", "gate+src"};
  return labels;
}

double default_lambda(TaskKind task, std::string_view label) {
  // Columns: src, ewc, si, gate+src.
  static const std::map<TaskKind, std::array<double, 4>> table{
      {TaskKind::semantic, {1.5, 0.5, 0.5, 0.2}},
      {TaskKind::beamforming, {1.0, 20.0, 600.0, 0.08}},
      {TaskKind::channel_estimation, {0.08, 0.1, 0.05, 0.1}},
  };
  const auto& row = table.at(task);
  if (label == "src") return row[0];
  if (label == "ewc") return row[1];
  if (label == "si") return row[2];
  if (label == "gate+src" || label == "src+gate" || label == "src_gate") return row[3];
  if (label == "vanilla" || label == "gate") return 0.0;
  throw ConfigError("method", "unknown method '" + std::string(label) + "'");
}

MethodSpec method_spec(std::string_view label, TaskKind task, double lambda) {
  MethodSpec m;
  const double lam = lambda < 0 ? default_lambda(task, label) : lambda;
  if (label == "vanilla") {
    m = {"vanilla", {cl::Method::none, 0.0}, false};
  } else if (label == "gate") {
    m = {"gate", {cl::Method::none, 0.0}, true};
  } else if (label == "gate+src" || label == "src+gate" || label == "src_gate") {
    m = {"gate+src", {cl::Method::src_gate, lam}, true};
  } else {
    const cl::Method method = cl::parse_method(label);
    m = {std::string(cl::method_name(method)), {method, lam}, method == cl::Method::src_gate};
  }
  m.reg.validate();
  return m;
}

double Trajectory::at(std::size_t i, std::size_t k) const {
  if (!defined(i, k)) throw ArgumentError("trajectory entry (" + std::to_string(i) + ", " + std::to_string(k) +
                                          ") is undefined");
  return m_[i * n_ + k];
}

void Trajectory::set(std::size_t i, std::size_t k, double v) {
  if (!defined(i, k)) throw ArgumentError("trajectory entry out of range");
  m_[i * n_ + k] = v;
}

bool Trajectory::operator==(const Trajectory& o) const {
  if (n_ != o.n_) return false;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = i; k < n_; ++k)
      if (std::memcmp(&m_[i * n_ + k], &o.m_[i * n_ + k], sizeof(double)) != 0) return false;
  return true;
}

Summary summarize(const Trajectory& t, bool lower_is_better) {
  const std::size_t n = t.size();
  if (n == 0) throw ArgumentError("summarize: empty trajectory");
  const double sign = lower_is_better ? -1.0 : 1.0;
  Summary s;
  for (std::size_t i = 0; i < n; ++i) s.final_avg += t.at(i, n - 1);
  s.final_avg /= static_cast<double>(n);
  s.forgetting.assign(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double best = -INFINITY;
    for (std::size_t k = i; k < n; ++k) best = std::max(best, sign * t.at(i, k));
    s.forgetting[i] = best - sign * t.at(i, n - 1);
    s.bwt += t.at(i, n - 1) - t.at(i, i);
  }
  if (n > 1) s.bwt /= static_cast<double>(n - 1);
  return s;
}

Stat mean_std(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.stddev += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(v.size() - 1));
  }
  return s;
}

bool lower_is_better(TaskKind t) { return t == TaskKind::channel_estimation; }

namespace {

bool same_gates(const Gates& a, const Gates& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] == b[i])) return false;
  return true;
}

Rng pilot_rng(std::uint64_t seed, std::size_t env) { return Rng(seed).split("pilots").split(env); }

/// Stacks pilot sets of one environment until at least `rows` rows are collected.
Eigen::MatrixXd pooled_pilots(const Task& task, std::size_t env, std::size_t rows, Rng& rng) {
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index total = 0;
  while (static_cast<std::size_t>(total) < rows) {
    parts.push_back(task.pilots(env, rng));
    total += parts.back().rows();
  }
  Eigen::MatrixXd out(total, parts[0].cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

void cotrain_hypernet(ctx::Hypernet& net, const Task& task, std::size_t seen, const HarnessConfig& cfg,
                      std::uint64_t seed) {
  Rng rng = Rng(seed).split("cotrain").split(seen);
  auto sets = task.sweep_pilots(cfg.hypernet_sets, rng);
  auto pooled = task.sweep_pooled(cfg.hypernet_pooled, rng);
  for (std::size_t e = 0; e < seen; ++e) {
    std::vector<Eigen::MatrixXd> s;
    for (std::size_t i = 0; i < cfg.hypernet_sets; ++i) s.push_back(task.pilots(e, rng));
    sets.push_back(std::move(s));
    pooled.push_back(pooled_pilots(task, e, cfg.hypernet_pooled, rng));
  }
  ctx::FeatureMap fm(static_cast<std::size_t>(pooled[0].cols()), cfg.hyper.feature_dim, seed);
  ctx::HypernetTrainConfig hc = cfg.hypernet;
  hc.epochs = cfg.cotrain_epochs;
  hc.seed = seed + seen;
  ctx::refine_hypernet(net, sets, ctx::fcd_matrix(pooled, fm), hc);
}

}  // namespace

ctx::Hypernet pretrain_hypernet(const Task& task, const HarnessConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng(seed).split("hypernet-sweep");
  auto sets = task.sweep_pilots(cfg.hypernet_sets, rng);
  auto pooled = task.sweep_pooled(cfg.hypernet_pooled, rng);
  ctx::HyperParams hp = cfg.hyper;
  hp.gate_sizes = task.gate_sizes();
  ctx::FeatureMap fm(static_cast<std::size_t>(pooled.at(0).cols()), hp.feature_dim, seed);
  ctx::HypernetTrainConfig hc = cfg.hypernet;
  hc.seed = seed;
  return ctx::train_hypernet(sets, ctx::fcd_matrix(pooled, fm), hp, hc);
}

AlignmentReport heldout_alignment(const Task& task, const ctx::Hypernet& hypernet, const HarnessConfig& cfg,
                                  std::uint64_t seed) {
  const std::size_t m = task.n_heldout();
  if (m < 2) throw ArgumentError("heldout_alignment: task has fewer than two held-out environments");
  Rng rng = Rng(seed).split("heldout");
  std::vector<Eigen::MatrixXd> pooled;
  for (std::size_t h = 0; h < m; ++h) pooled.push_back(task.heldout_pooled(h, cfg.hypernet_pooled, rng));
  AlignmentReport r;
  r.fcd = ctx::fcd_matrix(pooled, hypernet.feature_map());
  for (std::size_t h = 0; h < m; ++h) {
    const Eigen::VectorXd g = hypernet.hard_gates(task.heldout_pilots(h, rng));
    if (h == 0) r.gates.resize(static_cast<Eigen::Index>(m), g.size());
    r.gates.row(static_cast<Eigen::Index>(h)) = g.transpose();
  }
  r.gate_dist = ctx::gate_distance_matrix(r.gates);
  r.nmse = ctx::alignment_nmse(r.gate_dist, r.fcd, hypernet.hyper().beta);
  return r;
}

std::uint64_t parameter_hash(std::span<dg::Parameter* const> params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const dg::Parameter* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), p->value.size() * sizeof(double));
  }
  return h;
}

RunResult run_sequence(Task& task, const MethodSpec& method, const HarnessConfig& cfg, std::uint64_t seed,
                       ctx::Hypernet* hypernet) {
  method.reg.validate();
  if (method.gate && !hypernet) throw ArgumentError("run_sequence: gated method without a hypernet");
  if (cfg.train.batch_size == 0 || cfg.train.epochs == 0) throw ConfigError("train", "batch and epochs must be positive");
  const std::size_t n = task.n_envs();
  if (n == 0) throw ConfigError("environments", "need at least one environment");
  task.reset();

  RunResult r{std::string(task_name(task.kind())), method.label, seed, Trajectory(n), std::vector<double>(n), 0, {}, {}};
  const Rng root(seed);
  const std::vector<dg::Parameter*> params = task.parameters();
  std::vector<dg::Parameter*> reg_params;
  for (const snn::Network* net : task.networks())
    for (dg::Parameter* p : cl::regularized_parameters(*net)) reg_params.push_back(p);
  const cl::Method reg = method.reg.method;

  cl::ImportanceStore store;
  std::vector<Gates> gate_cache(n);
  for (std::size_t k = 0; k < n; ++k) {
    Rng env_rng = root.split("env").split(k);
    if (method.gate) {
      if (cfg.hypernet_mode == HypernetMode::cotrain && k > 0) cotrain_hypernet(*hypernet, task, k + 1, cfg, seed);
      Rng prng = pilot_rng(seed, k);
      gate_cache[k] = hypernet->gates(task.pilots(k, prng));
    }
    const Gates& gates = gate_cache[k];

    auto [train_idx, val_idx] = train_val_split(task.train_size(k), cfg.train.val_fraction, env_rng);
    Adam opt(params);
    std::optional<cl::SiTracker> si;
    if (reg == cl::Method::si) si.emplace(reg_params, cfg.si_xi);
    std::map<const snn::Network*, cl::RateAccumulator> rates;
    const std::size_t per_epoch = (train_idx.size() + cfg.train.batch_size - 1) / cfg.train.batch_size;
    const std::size_t total_steps = per_epoch * cfg.train.epochs;
    std::size_t step = 0;
    for (std::size_t ep = 0; ep < cfg.train.epochs; ++ep) {
      for (const auto& batch : minibatches(train_idx.size(), cfg.train.batch_size, env_rng)) {
        std::vector<std::size_t> idx;
        for (std::size_t b : batch) idx.push_back(train_idx[b]);
        dg::Tape tape;
        StepOut out = task.loss(tape, k, idx, gates, env_rng);
        Var total = out.loss;
        if (!store.empty() && reg != cl::Method::none)
          total = dg::add(total, cl::consolidation_penalty(tape, store, method.reg));
        if (!std::isfinite(total.value().item()))
          throw NumericError("non-finite loss in environment " + std::to_string(k));
        const dg::Gradients grads = tape.backward(total);
        std::vector<Tensor> before;
        if (si)
          for (const dg::Parameter* p : reg_params) before.push_back(p->value);
        const double lr =
            cfg.train.cosine ? cosine_lr(cfg.train.lr, step, total_steps) : cfg.train.lr;
        opt.step(grads, lr);
        ++step;
        if (si) {
          std::vector<Tensor> g, d;
          for (std::size_t i = 0; i < reg_params.size(); ++i) {
            g.push_back(grads.of(*reg_params[i]));
            Tensor delta = reg_params[i]->value;
            for (std::size_t j = 0; j < delta.size(); ++j) delta[j] -= before[i][j];
            d.push_back(std::move(delta));
          }
          si->record(g, d);
        }
        if (cl::uses_src(reg) && ep + 1 == cfg.train.epochs)
          for (const NetTrace& t : out.traces) rates[t.net].add(*t.net, t.trace);
      }
    }

    if (!val_idx.empty()) {
      dg::Tape tape(false);
      Rng vrng = root.split("val").split(k);
      r.val[k] = task.loss(tape, k, val_idx, gates, vrng).loss.value().item();
    }

    if (reg != cl::Method::none && k + 1 < n) {
      cl::EnvImportance env;
      if (cl::uses_src(reg)) {
        for (const snn::Network* net : task.networks()) {
          auto it = rates.find(net);
          if (it == rates.end()) continue;
          for (auto& t : cl::src_environment(*net, it->second).terms) env.terms.push_back(std::move(t));
        }
      } else {
        std::vector<Tensor> omega;
        if (reg == cl::Method::ewc) {
          Rng frng = root.split("fisher").split(k);
          const std::size_t m = std::min(cfg.fisher_samples, train_idx.size());
          std::vector<std::shared_ptr<const void>> hold;
          omega = cl::ewc_fisher_diag(reg_params, m, [&](dg::Tape& tape, std::size_t i) {
            const std::size_t one[] = {train_idx[i]};
            StepOut o = task.loss(tape, k, one, gates, frng);
            hold.insert(hold.end(), o.hold.begin(), o.hold.end());
            return o.loss;
          });
        } else {
          omega = si->importance();
        }
        for (std::size_t i = 0; i < reg_params.size(); ++i)
          env.terms.push_back(cl::dense_term(*reg_params[i], std::move(omega[i])));
      }
      store.close_environment(std::move(env));
    }

    const std::uint64_t before = parameter_hash(params);
    for (std::size_t i = 0; i <= k; ++i) {
      if (method.gate && cfg.check_gate_cache && cfg.hypernet_mode == HypernetMode::frozen) {
        Rng prng = pilot_rng(seed, i);
        if (!same_gates(hypernet->gates(task.pilots(i, prng)), gate_cache[i])) ++r.gate_mismatches;
      }
      Rng erng = root.split("eval").split(i * n + k);
      r.traj.set(i, k, task.evaluate(i, gate_cache[i], erng));
    }
    if (parameter_hash(params) != before) throw Error("evaluation changed model parameters");
  }
  for (std::size_t i = 0; i < n; ++i) {
    Rng erng = root.split("energy").split(i);
    const EnergyEstimate e = measure_energy(task, i, gate_cache[i], erng);
    r.energy_pj.push_back(e.snn.total_pj);
    r.ann_energy_pj.push_back(e.ann.total_pj);
  }
  return r;
}

EnergyEstimate measure_energy(const Task& task, std::size_t env, const Gates& gates, Rng& rng,
                              const energy::EnergyCosts& costs) {
  std::vector<energy::LayerDescriptor> stages;
  dg::Tape tape(false);
  for (const NetTrace& nt : task.probe(tape, env, gates, rng)) {
    auto d = energy::describe_network(*nt.net, nt.trace);
    stages.insert(stages.end(), d.begin(), d.end());
  }
  EnergyEstimate e;
  e.snn = energy::pipeline_energy(stages, costs);
  e.ann = energy::pipeline_energy(energy::ann_twin(stages), costs);
  e.stages = std::move(stages);
  return e;
}

// ----- reports -----

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(std::ostream& os, const std::vector<RunResult>& runs) {
  os << "task,method,seed,env_i,env_k,metric\n";
  for (const RunResult& r : runs)
    for (std::size_t i = 0; i < r.traj.size(); ++i)
      for (std::size_t k = i; k < r.traj.size(); ++k)
        os << r.task << ',' << r.method << ',' << r.seed << ',' << i << ',' << k << ',' << fmt_double(r.traj.at(i, k))
           << '\n';
}

std::vector<RunResult> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "task,method,seed,env_i,env_k,metric")
    throw IoError("trajectory CSV: missing or unexpected header");
  struct Row {
    std::size_t i, k;
    double v;
  };
  std::vector<std::tuple<std::string, std::string, std::uint64_t>> order;
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<Row>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw IoError("trajectory CSV line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      auto key = std::make_tuple(f[0], f[1], static_cast<std::uint64_t>(std::stoull(f[2])));
      if (!rows.contains(key)) order.push_back(key);
      rows[key].push_back({std::stoul(f[3]), std::stoul(f[4]), std::stod(f[5])});
    } catch (const std::logic_error&) {
      throw IoError("trajectory CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  std::vector<RunResult> out;
  for (const auto& key : order) {
    const auto& rs = rows[key];
    std::size_t n = 0;
    for (const Row& r : rs) n = std::max(n, std::max(r.i, r.k) + 1);
    RunResult r{std::get<0>(key), std::get<1>(key), std::get<2>(key), Trajectory(n), {}, 0, {}, {}};
    for (const Row& row : rs) r.traj.set(row.i, row.k, row.v);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MethodSummary> summarize_runs(const std::vector<RunResult>& runs) {
  std::vector<MethodSummary> out;
  std::vector<std::vector<Summary>> per;
  for (const RunResult& r : runs) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const MethodSummary& m) { return m.task == r.task && m.method == r.method; });
    std::size_t idx = static_cast<std::size_t>(it - out.begin());
    if (it == out.end()) {
      out.push_back({r.task, r.method, 0, {}, {}, {}});
      per.emplace_back();
    }
    if (!per[idx].empty() && per[idx].front().forgetting.size() != r.traj.size())
      throw ArgumentError("summarize_runs: trajectories of " + r.method + " differ in length");
    per[idx].push_back(summarize(r.traj, lower_is_better(parse_task(r.task))));
  }
  for (std::size_t m = 0; m < out.size(); ++m) {
    std::vector<double> fa, bwt;
    const std::size_t n = per[m].front().forgetting.size();
    std::vector<std::vector<double>> fg(n);
    for (const Summary& s : per[m]) {
      fa.push_back(s.final_avg);
      bwt.push_back(s.bwt);
      for (std::size_t i = 0; i < n; ++i) fg[i].push_back(s.forgetting[i]);
    }
    out[m].seeds = per[m].size();
    out[m].final_avg = mean_std(fa);
    out[m].bwt = mean_std(bwt);
    for (auto& f : fg) out[m].forgetting.push_back(mean_std(f));
  }
  return out;
}

std::string summary_json(const std::vector<MethodSummary>& s) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const MethodSummary& m : s) {
    nlohmann::ordered_json e;
    e["task"] = m.task;
    e["method"] = m.method;
    e["seeds"] = m.seeds;
    e["final_avg"] = {{"mean", m.final_avg.mean}, {"std", m.final_avg.stddev}};
    e["bwt"] = {{"mean", m.bwt.mean}, {"std", m.bwt.stddev}};
    nlohmann::ordered_json f = nlohmann::ordered_json::array();
    for (const Stat& st : m.forgetting) f.push_back({{"mean", st.mean}, {"std", st.stddev}});
    e["forgetting"] = f;
    j.push_back(e);
  }
  return j.dump(2);
}

std::string summary_table(const std::vector<MethodSummary>& s) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "task" << std::setw(10) << "method" << std::right << std::setw(6) << "seeds"
     << std::setw(12) << "final_avg" << std::setw(10) << "std" << std::setw(10) << "bwt" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const MethodSummary& m : s)
    os << std::left << std::setw(20) << m.task << std::setw(10) << m.method << std::right << std::setw(6) << m.seeds
       << std::setw(12) << m.final_avg.mean << std::setw(10) << m.final_avg.stddev << std::setw(10) << m.bwt.mean
       << '\n';
  return os.str();
}

void emit_reports(const std::vector<RunResult>& runs, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  auto open = [&](const std::string& name) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    return f;
  };
  {
    auto f = open("trajectories.csv");
    write_csv(f, runs);
  }
  const auto summary = runs.empty() ? std::vector<MethodSummary>{} : summarize_runs(runs);
  {
    auto f = open("summary.json");
    f << summary_json(summary) << '\n';
  }
  {
    auto f = open("summary.txt");
    f << summary_table(summary);
  }
  {
    // Trajectory fans: metric of each environment against the training stage, averaged over seeds.
    auto f = open("plot_trajectory_fan.csv");
    f << "task,method,env_i,env_k,mean,std\n";
    std::map<std::tuple<std::string, std::string, std::size_t, std::size_t>, std::vector<double>> cells;
    std::vector<std::tuple<std::string, std::string, std::size_t, std::size_t>> order;
    for (const RunResult& r : runs)
      for (std::size_t i = 0; i < r.traj.size(); ++i)
        for (std::size_t k = i; k < r.traj.size(); ++k) {
          auto key = std::make_tuple(r.task, r.method, i, k);
          if (!cells.contains(key)) order.push_back(key);
          cells[key].push_back(r.traj.at(i, k));
        }
    for (const auto& key : order) {
      const Stat st = mean_std(cells[key]);
      f << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << std::get<3>(key) << ','
        << fmt_double(st.mean) << ',' << fmt_double(st.stddev) << '\n';
    }
  }
  {
    auto f = open("plot_ablation.csv");
    f << "task,method,final_avg_mean,final_avg_std,bwt_mean\n";
    for (const MethodSummary& m : summary)
      f << m.task << ',' << m.method << ',' << fmt_double(m.final_avg.mean) << ',' << fmt_double(m.final_avg.stddev)
        << ',' << fmt_double(m.bwt.mean) << '\n';
  }
  {
    auto f = open("plot_energy.csv");
    f << "task,method,seed,env,snn_pj,ann_pj\n";
    for (const RunResult& r : runs)
      for (std::size_t i = 0; i < r.energy_pj.size(); ++i)
        f << r.task << ',' << r.method << ',' << r.seed << ',' << i << ',' << fmt_double(r.energy_pj[i]) << ','
          << fmt_double(r.ann_energy_pj[i]) << '\n';
  }
}

}  // namespace spikacom::harness
