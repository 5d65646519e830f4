// SPDX-License-Identifier: Apache-2.0
#include "spikacom/config.hpp"
#include "spikacom/error.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace spikacom;
using namespace spikacom::harness;

namespace {

Trajectory two_env(double m00, double m01, double m11) {
  Trajectory t(2);
  t.set(0, 0, m00);
  t.set(0, 1, m01);
  t.set(1, 1, m11);
  return t;
}

EstimationTaskConfig tiny_estimation(std::size_t envs = 3) {
  EstimationTaskConfig c;
  c.envs.resize(envs);
  c.net.channels = 4;
  c.net.blocks = 1;
  c.net.t_steps = 2;
  c.n_train = 48;
  c.n_test = 16;
  c.pilot_draws = 16;
  return c;
}

HarnessConfig tiny_harness() {
  HarnessConfig h;
  h.train.epochs = 1;
  h.train.batch_size = 16;
  h.fisher_samples = 8;
  h.hypernet.epochs = 60;
  h.hypernet_sets = 2;
  h.hypernet_pooled = 200;
  return h;
}

std::string csv_of(const std::vector<RunResult>& runs) {
  std::ostringstream os;
  write_csv(os, runs);
  return os.str();
}

}  // namespace

// ----- metrics -----

TEST(HarnessSummary, HandCase) {
  const Summary s = summarize(two_env(0.9, 0.8, 0.85), false);
  EXPECT_NEAR(s.final_avg, 0.825, 1e-15);
  ASSERT_EQ(s.forgetting.size(), 2u);
  EXPECT_NEAR(s.forgetting[0], 0.1, 1e-15);
  EXPECT_EQ(s.forgetting[1], 0.0);
  EXPECT_NEAR(s.bwt, -0.1, 1e-15);
}

TEST(HarnessSummary, ErrorMetricIsNegatedForForgetting) {
  // MSE rising from 0.1 to 0.3 is forgetting of 0.2; a falling MSE is none.
  const Summary up = summarize(two_env(0.1, 0.3, 0.2), true);
  EXPECT_NEAR(up.final_avg, 0.25, 1e-15);
  EXPECT_NEAR(up.forgetting[0], 0.2, 1e-15);
  EXPECT_NEAR(up.bwt, 0.2, 1e-15);
  const Summary down = summarize(two_env(0.3, 0.1, 0.2), true);
  EXPECT_EQ(down.forgetting[0], 0.0);
}

TEST(HarnessSummary, ConstantTrajectoryHasNoForgetting) {
  Trajectory t(4);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i <= k; ++i) t.set(i, k, 0.7);
  for (bool lower : {false, true}) {
    const Summary s = summarize(t, lower);
    EXPECT_DOUBLE_EQ(s.final_avg, 0.7);
    EXPECT_EQ(s.bwt, 0.0);
    for (double f : s.forgetting) EXPECT_EQ(f, 0.0);
  }
}

TEST(HarnessSummary, UndefinedEntriesThrow) {
  Trajectory t(3);
  EXPECT_TRUE(std::isnan(t.at(0, 0)));
  EXPECT_THROW((void)t.at(1, 0), ArgumentError);
  EXPECT_THROW(t.set(2, 1, 1.0), ArgumentError);
  EXPECT_THROW((void)summarize(Trajectory(0), false), ArgumentError);
}

TEST(HarnessSummary, MeanStd) {
  const Stat s = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.stddev, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std({2.0}).stddev, 0.0);
}

TEST(HarnessMethods, LabelsAndDefaultStrengths) {
  EXPECT_EQ(ablation_labels(), (std::vector<std::string>{"vanilla", "ewc", "si", "src", "gate", "gate+src"}));
  EXPECT_EQ(default_lambda(TaskKind::semantic, "src"), 1.5);
  EXPECT_EQ(default_lambda(TaskKind::beamforming, "si"), 600.0);
  EXPECT_EQ(default_lambda(TaskKind::channel_estimation, "gate+src"), 0.1);
  EXPECT_EQ(default_lambda(TaskKind::semantic, "vanilla"), 0.0);
  const MethodSpec g = method_spec("gate+src", TaskKind::semantic);
  EXPECT_TRUE(g.gate);
  EXPECT_EQ(g.reg.lambda, 0.2);
  EXPECT_EQ(method_spec("ewc", TaskKind::semantic, 3.0).reg.lambda, 3.0);
  EXPECT_THROW((void)method_spec("dropout", TaskKind::semantic), ConfigError);
  EXPECT_THROW((void)parse_task("vision"), ConfigError);
}

// ----- reports -----

TEST(HarnessReports, EmptyResultsGiveHeaderOnlyCsv) {
  EXPECT_EQ(csv_of({}), "task,method,seed,env_i,env_k,metric\n");
  std::istringstream is(csv_of({}));
  EXPECT_TRUE(read_csv(is).empty());
}

TEST(HarnessReports, OneRowPerSeenPair) {
  RunResult r{"semantic", "gate+src", 3, Trajectory(3), {}, 0, {}, {}};
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i <= k; ++i) r.traj.set(i, k, 0.1 * static_cast<double>(i + k) + 1.0 / 3.0);
  const std::string csv = csv_of({r});
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6);
  EXPECT_NE(csv.find("semantic,gate+src,3,0,2,"), std::string::npos);
}

TEST(HarnessReports, CsvRoundTripReproducesSummary) {
  std::vector<RunResult> runs;
  Rng rng(9);
  for (const char* m : {"vanilla", "src"})
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      RunResult r{"channel-estimation", m, seed, Trajectory(4), {}, 0, {}, {}};
      for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t i = 0; i <= k; ++i) r.traj.set(i, k, rng.uniform());
      runs.push_back(std::move(r));
    }
  std::istringstream is(csv_of(runs));
  const auto back = read_csv(is);
  ASSERT_EQ(back.size(), runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) EXPECT_TRUE(back[i].traj == runs[i].traj);
  EXPECT_EQ(summary_json(summarize_runs(back)), summary_json(summarize_runs(runs)));
  EXPECT_EQ(csv_of(back), csv_of(runs));
}

TEST(HarnessReports, EmitWritesEveryFile) {
  const auto dir = std::filesystem::temp_directory_path() / "spikacom_emit_test";
  std::filesystem::remove_all(dir);
  RunResult r{"semantic", "vanilla", 0, two_env(0.9, 0.8, 0.85), {0.5, 0.4}, 0, {10.0, 11.0}, {100.0, 100.0}};
  emit_reports({r}, dir.string());
  for (const char* f : {"trajectories.csv", "summary.json", "summary.txt", "plot_trajectory_fan.csv",
                        "plot_ablation.csv", "plot_energy.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::filesystem::remove_all(dir);
}

TEST(HarnessReports, UnwritableDirectoryNamesThePath) {
  const auto file = std::filesystem::temp_directory_path() / "spikacom_not_a_dir";
  std::ofstream(file) << "x";
  try {
    emit_reports({}, (file / "sub").string());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("spikacom_not_a_dir"), std::string::npos);
  }
  std::filesystem::remove(file);
}

// ----- configuration -----

TEST(HarnessConfigFile, ParsesSections) {
  const ExperimentConfig c = parse_config(R"(
task: channel-estimation
methods: [vanilla, gate+src]
seeds: "2..4"
train:
  lr: 0.002
  epochs: 3
hypernet:
  mode: cotrain
  beta: 2.0
channel_estimation:
  snr_db: 5
  environments:
    - {taps: 2, decay: 0.5, doppler: 0.01}
    - {taps: 3, decay: 0.7, doppler: 0.02}
)");
  EXPECT_EQ(c.task, TaskKind::channel_estimation);
  EXPECT_EQ(c.methods, (std::vector<std::string>{"vanilla", "gate+src"}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{2, 3, 4}));
  EXPECT_EQ(c.harness.train.lr, 0.002);
  EXPECT_EQ(c.harness.train.epochs, 3u);
  EXPECT_EQ(c.harness.train.batch_size, 64u);
  EXPECT_EQ(c.harness.hypernet_mode, HypernetMode::cotrain);
  EXPECT_EQ(c.harness.hyper.beta, 2.0);
  EXPECT_EQ(c.estimation.snr_db, 5.0);
  ASSERT_EQ(c.estimation.envs.size(), 2u);
  EXPECT_EQ(c.estimation.envs[1].taps, 3u);
}

TEST(HarnessConfigFile, DiagnosticsNameFieldAndLine) {
  auto field_of = [](const std::string& text) {
    try {
      (void)parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(field_of("task: semantic\ntrain:\n  lrr: 1\n").find("train.lrr (line 3)"), std::string::npos);
  EXPECT_NE(field_of("task: semantic\ntrain:\n  lr: abc\n").find("train.lr (line 3)"), std::string::npos);
  EXPECT_NE(field_of("task: semantic\ntrain:\n  lr: -1\n").find("train.lr"), std::string::npos);
  EXPECT_NE(field_of("task: radar\n").find("task"), std::string::npos);
  EXPECT_NE(field_of("method: magic\ntask: semantic\n").find("method"), std::string::npos);
  EXPECT_NE(field_of("train: {}\n").find("task"), std::string::npos);
  EXPECT_NE(field_of("task: semantic\nseeds: [1\n").find("line"), std::string::npos);
  EXPECT_NE(field_of("task: semantic\nhypernet:\n  mode: online\n").find("hypernet.mode"), std::string::npos);
}

TEST(HarnessConfigFile, SeedSyntax) {
  EXPECT_EQ(parse_seeds("0..2"), (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(parse_seeds("7"), (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(parse_seeds("1,4,9"), (std::vector<std::uint64_t>{1, 4, 9}));
  EXPECT_THROW((void)parse_seeds("5..2"), ConfigError);
  EXPECT_THROW((void)parse_seeds("a..b"), ConfigError);
  EXPECT_THROW((void)parse_seeds(""), ConfigError);
}

TEST(HarnessConfigFile, MissingFileIsIoError) {
  EXPECT_THROW((void)load_config("/nonexistent/experiment.yaml"), IoError);
}

// ----- sequential runs -----

TEST(HarnessRun, RerunIsBitwiseIdentical) {
  const HarnessConfig h = tiny_harness();
  std::vector<std::string> csv;
  for (int rep = 0; rep < 2; ++rep) {
    EstimationTask task(tiny_estimation(), 4);
    auto hn = pretrain_hypernet(task, h, 4);
    std::vector<RunResult> runs;
    for (const char* m : {"vanilla", "ewc", "gate+src"})
      runs.push_back(run_sequence(task, method_spec(m, TaskKind::channel_estimation), h, 4, &hn));
    csv.push_back(csv_of(runs));
  }
  EXPECT_EQ(csv[0], csv[1]);
}

TEST(HarnessRun, EvaluationDoesNotMutateParameters) {
  EstimationTask task(tiny_estimation(), 5);
  const auto params = task.parameters();
  const std::uint64_t before = parameter_hash(params);
  Rng rng(1);
  for (std::size_t e = 0; e < task.n_envs(); ++e) (void)task.evaluate(e, {}, rng);
  dg::Tape tape(false);
  (void)task.probe(tape, 0, {}, rng);
  EXPECT_EQ(parameter_hash(params), before);
}

TEST(HarnessRun, ResetRestoresInitialParameters) {
  EstimationTask task(tiny_estimation(), 6);
  const std::uint64_t initial = parameter_hash(task.parameters());
  (void)run_sequence(task, method_spec("vanilla", TaskKind::channel_estimation), tiny_harness(), 6);
  EXPECT_NE(parameter_hash(task.parameters()), initial);
  task.reset();
  EXPECT_EQ(parameter_hash(task.parameters()), initial);
}

TEST(HarnessRun, GatesAtEvaluationMatchTrainingCache) {
  EstimationTask task(tiny_estimation(), 7);
  HarnessConfig h = tiny_harness();
  auto hn = pretrain_hypernet(task, h, 7);
  const RunResult r = run_sequence(task, method_spec("gate+src", TaskKind::channel_estimation), h, 7, &hn);
  EXPECT_EQ(r.gate_mismatches, 0u);
}

TEST(HarnessRun, GatedMethodNeedsHypernet) {
  EstimationTask task(tiny_estimation(), 8);
  EXPECT_THROW((void)run_sequence(task, method_spec("gate", TaskKind::channel_estimation), tiny_harness(), 8),
               ArgumentError);
}

TEST(HarnessRun, SingleEnvironment) {
  EstimationTask task(tiny_estimation(1), 9);
  const RunResult r = run_sequence(task, method_spec("src", TaskKind::channel_estimation), tiny_harness(), 9);
  ASSERT_EQ(r.traj.size(), 1u);
  const Summary s = summarize(r.traj, true);
  EXPECT_EQ(s.final_avg, r.traj.at(0, 0));
  EXPECT_EQ(s.forgetting, std::vector<double>{0.0});
  EXPECT_EQ(s.bwt, 0.0);
}

TEST(HarnessRun, TrajectoryAndEnergyAreComplete) {
  EstimationTask task(tiny_estimation(), 10);
  const RunResult r = run_sequence(task, method_spec("si", TaskKind::channel_estimation), tiny_harness(), 10);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i <= k; ++i) EXPECT_TRUE(std::isfinite(r.traj.at(i, k)));
  ASSERT_EQ(r.energy_pj.size(), 3u);
  ASSERT_EQ(r.val.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_GT(r.energy_pj[i], 0.0);
    EXPECT_LT(r.energy_pj[i], r.ann_energy_pj[i]);
  }
}

TEST(HarnessRun, EnergyUsesMeasuredRates) {
  // Closing every gate silences the gated layers, so the measured energy must drop.
  EstimationTask task(tiny_estimation(), 11);
  Gates closed;
  for (std::size_t n : task.gate_sizes()) closed.emplace_back(dg::Shape{n});
  Rng a(1), b(1);
  const EnergyEstimate open = measure_energy(task, 0, {}, a);
  const EnergyEstimate shut = measure_energy(task, 0, closed, b);
  EXPECT_LT(shut.snn.total_pj, open.snn.total_pj);
  EXPECT_EQ(shut.ann.total_pj, open.ann.total_pj);
}

TEST(HarnessRun, HeldOutAlignmentShapes) {
  EstimationTask task(tiny_estimation(), 12);
  HarnessConfig h = tiny_harness();
  auto hn = pretrain_hypernet(task, h, 12);
  const AlignmentReport r = heldout_alignment(task, hn, h, 12);
  ASSERT_EQ(r.fcd.rows(), 8);
  EXPECT_EQ(r.gate_dist.rows(), 8);
  for (Eigen::Index i = 0; i < 8; ++i) {
    EXPECT_EQ(r.fcd(i, i), 0.0);
    EXPECT_NEAR(r.gate_dist(i, i), 0.0, 1e-12);
  }
  EXPECT_TRUE(std::isfinite(r.nmse));
}

TEST(HarnessRun, ExperimentCoversSeedsAndMethods) {
  ExperimentConfig c;
  c.task = TaskKind::channel_estimation;
  c.methods = {"vanilla", "gate"};
  c.seeds = {0, 1};
  c.harness = tiny_harness();
  c.estimation = tiny_estimation(2);
  std::size_t calls = 0;
  const auto runs = run_experiment(c, [&](const RunResult&) { ++calls; });
  ASSERT_EQ(runs.size(), 4u);
  EXPECT_EQ(calls, 4u);
  EXPECT_EQ(runs[1].method, "gate");
  EXPECT_EQ(runs[2].seed, 1u);
}
