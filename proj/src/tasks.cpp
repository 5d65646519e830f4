// SPDX-License-Identifier: Apache-2.0
#include "spikacom/tasks.hpp"

#include "spikacom/error.hpp"

#include <algorithm>
#include <cmath>

namespace spikacom::harness {

using dg::Tensor;
using dg::Var;

namespace {
constexpr std::size_t kProbeBatch = 32;  // test samples per energy probe
}  // namespace

std::vector<double> gain_sweep(double hi, double lo, double step) {
  if (step <= 0 || hi < lo) throw ArgumentError("gain_sweep: need hi >= lo and a positive step");
  std::vector<double> g;
  for (double x = hi; x >= lo - 1e-9; x -= step) g.push_back(x);
  return g;
}

Gates random_gates(const std::vector<std::size_t>& sizes, Rng& rng) {
  Gates g;
  for (std::size_t n : sizes) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    Tensor t({n});
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) t[order[i]] = 1.0;
    g.push_back(std::move(t));
  }
  return g;
}

void SemanticTaskConfig::validate() const {
  data.validate();
  model.validate();
  if (gains_db.empty()) throw ConfigError("environments", "need at least one environment");
  if (taps == 0) throw ConfigError("taps", "must be positive");
  if (noise_power <= 0) throw ConfigError("noise_power", "must be positive");
  if (sweep_db.size() < 2) throw ConfigError("sweep_db", "need at least two sweep environments");
  if (warmup_gate_fraction < 0 || warmup_gate_fraction > 1) throw ConfigError("warmup_gate_fraction", "must lie in [0, 1]");
  if (pilot_obs < 2) throw ConfigError("pilot_obs", "need at least two observations");
}

SemanticTask::SemanticTask(SemanticTaskConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const Rng root(seed);
  data_ = sem::gen_dataset(cfg_.data, root.split("data").key());
  pipe_ = std::make_unique<sem::SemanticPipeline>(cfg_.data, cfg_.model, root.split("model").key());
  Rng prng = root.split("pretrain");
  encoder_acc_ = pipe_->pretrain_encoder(data_.train, cfg_.pretrain, prng);
  train_cache_ = pipe_->cache_features(data_.train);
  test_cache_ = pipe_->cache_features(data_.test);

  Rng wrng = root.split("warmup");
  Adam opt(pipe_->adaptable_parameters());
  const std::size_t bs = 64;
  for (std::size_t ep = 0; ep < cfg_.warmup_epochs; ++ep) {
    for (const auto& idx : minibatches(train_cache_.size(), bs, wrng)) {
      Gates gates;
      if (wrng.bernoulli(cfg_.warmup_gate_fraction)) gates = random_gates(pipe_->gate_sizes(), wrng);
      dg::Tape tape;
      auto out = pipe_->transmit(tape, pipe_->feature_steps(tape, train_cache_, idx), sem::ChannelSpec::bypass(), wrng,
                                 pipe_->split_gates(gates));
      std::vector<std::size_t> labels;
      for (std::size_t i : idx) labels.push_back(data_.train.labels[i]);
      opt.step(tape.backward(dg::cross_entropy(out.logits, labels)), cfg_.warmup_lr);
    }
  }
  for (const dg::Parameter* p : pipe_->all_parameters()) initial_.push_back(p->value);
}

void SemanticTask::reset() {
  auto params = pipe_->all_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = initial_[i];
}

std::vector<const snn::Network*> SemanticTask::networks() const { return {&pipe_->chanenc(), &pipe_->decoder()}; }

chan::MultipathProfile SemanticTask::profile(double gain_db) const {
  return chan::MultipathProfile::exponential(cfg_.taps, gain_db, cfg_.decay, cfg_.noise_power);
}

StepOut SemanticTask::loss(dg::Tape& tape, std::size_t env, std::span<const std::size_t> idx, const Gates& gates,
                           Rng& rng) const {
  auto out = pipe_->transmit(tape, pipe_->feature_steps(tape, train_cache_, idx),
                             sem::ChannelSpec::of(profile(cfg_.gains_db.at(env))), rng, pipe_->split_gates(gates));
  std::vector<std::size_t> labels;
  for (std::size_t i : idx) labels.push_back(data_.train.labels.at(i));
  StepOut s;
  s.loss = dg::cross_entropy(out.logits, labels);
  s.traces.push_back({&pipe_->chanenc(), std::move(out.chanenc)});
  s.traces.push_back({&pipe_->decoder(), std::move(out.decoder)});
  for (auto& d : out.draws) s.hold.push_back(std::shared_ptr<const chan::ChannelDraw>(std::move(d)));
  return s;
}

double SemanticTask::evaluate(std::size_t env, const Gates& gates, Rng& rng) const {
  return pipe_->accuracy(test_cache_, data_.test.labels, sem::ChannelSpec::of(profile(cfg_.gains_db.at(env))), rng,
                         pipe_->split_gates(gates));
}

std::size_t SemanticTask::n_heldout() const { return cfg_.heldout_db.size(); }

Eigen::MatrixXd SemanticTask::heldout_pilots(std::size_t h, Rng& rng) const {
  return chan::ook_pilot_samples(profile(cfg_.heldout_db.at(h)), cfg_.pilot_obs, cfg_.model.n_symbols, cfg_.pilot_rho,
                                 rng, {cfg_.model.n_symbols});
}

Eigen::MatrixXd SemanticTask::heldout_pooled(std::size_t h, std::size_t rows, Rng& rng) const {
  return chan::ook_pilot_samples(profile(cfg_.heldout_db.at(h)), rows, cfg_.model.n_symbols, cfg_.pilot_rho, rng,
                                 {cfg_.model.n_symbols});
}

std::vector<NetTrace> SemanticTask::probe(dg::Tape& tape, std::size_t env, const Gates& gates, Rng& rng) const {
  std::vector<const Tensor*> batch;
  for (std::size_t i = 0; i < std::min<std::size_t>(kProbeBatch, data_.test.size()); ++i)
    batch.push_back(&data_.test.samples[i]);
  snn::Trace enc;
  const snn::Sequence features = pipe_->encode(tape, batch, &enc);
  auto out = pipe_->transmit(tape, features, sem::ChannelSpec::of(profile(cfg_.gains_db.at(env))), rng,
                             pipe_->split_gates(gates));
  return {{&pipe_->encoder(), std::move(enc)},
          {&pipe_->chanenc(), std::move(out.chanenc)},
          {&pipe_->decoder(), std::move(out.decoder)}};
}

Eigen::MatrixXd SemanticTask::pilots(std::size_t env, Rng& rng) const {
  return chan::ook_pilot_samples(profile(cfg_.gains_db.at(env)), cfg_.pilot_obs, cfg_.model.n_symbols, cfg_.pilot_rho,
                                 rng, {cfg_.model.n_symbols});
}

std::vector<std::vector<Eigen::MatrixXd>> SemanticTask::sweep_pilots(std::size_t sets, Rng& rng) const {
  std::vector<std::vector<Eigen::MatrixXd>> out;
  for (double g : cfg_.sweep_db) {
    std::vector<Eigen::MatrixXd> s;
    for (std::size_t i = 0; i < sets; ++i)
      s.push_back(chan::ook_pilot_samples(profile(g), cfg_.pilot_obs, cfg_.model.n_symbols, cfg_.pilot_rho, rng,
                                          {cfg_.model.n_symbols}));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Eigen::MatrixXd> SemanticTask::sweep_pooled(std::size_t rows, Rng& rng) const {
  std::vector<Eigen::MatrixXd> out;
  for (double g : cfg_.sweep_db)
    out.push_back(chan::ook_pilot_samples(profile(g), rows, cfg_.model.n_symbols, cfg_.pilot_rho, rng,
                                          {cfg_.model.n_symbols}));
  return out;
}

}  // namespace spikacom::harness

namespace spikacom::harness {

namespace {

std::vector<Tensor> snapshot(const std::vector<dg::Parameter*>& params) {
  std::vector<Tensor> s;
  for (const dg::Parameter* p : params) s.push_back(p->value);
  return s;
}

void restore(const std::vector<dg::Parameter*>& params, const std::vector<Tensor>& s) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s[i];
}

snn::GateSet to_gate_set(const Gates& gates, const std::vector<std::size_t>& layers,
                         const std::vector<std::size_t>& sizes) {
  snn::GateSet g;
  if (gates.empty()) return g;
  if (gates.size() != layers.size()) throw ShapeError("expected " + std::to_string(layers.size()) + " gate vectors");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (gates[i].size() != sizes[i]) throw ShapeError("gate " + std::to_string(i) + " has the wrong length");
    g[layers[i]] = gates[i];
  }
  return g;
}

}  // namespace

// ----- beamforming -----

void BeamformingTaskConfig::validate() const {
  if (blocks.empty()) throw ConfigError("environments", "need at least one environment");
  if (sweep_blocks.size() < 2) throw ConfigError("sweep_blocks", "need at least two sweep environments");
  if (n_train == 0 || n_test == 0) throw ConfigError("samples", "train and test sizes must be positive");
  if (power <= 0 || noise <= 0) throw ConfigError("power", "power and noise must be positive");
  if (pilot_draws == 0) throw ConfigError("pilot_draws", "must be positive");
}

BeamformingTask::BeamformingTask(BeamformingTaskConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const Rng root(seed);
  net_ = std::make_unique<bf::SpikingBFNet>(cfg_.net, root.split("model").key());
  for (std::size_t e = 0; e < cfg_.blocks.size(); ++e) {
    Rng rng = root.split("data").split(e);
    const auto env = environment(cfg_.blocks[e]);
    std::vector<bf::BfProblem> tr, te;
    for (auto& h : chan::gen_mimo_envs(env, cfg_.n_train, rng))
      tr.push_back(bf::BfProblem::uniform(std::move(h), cfg_.power, cfg_.noise, cfg_.net.streams));
    for (auto& h : chan::gen_mimo_envs(env, cfg_.n_test, rng))
      te.push_back(bf::BfProblem::uniform(std::move(h), cfg_.power, cfg_.noise, cfg_.net.streams));
    train_.push_back(std::move(tr));
    test_.push_back(std::move(te));
  }
  initial_ = snapshot(parameters());
}

void BeamformingTask::reset() { restore(parameters(), initial_); }

chan::MimoEnvironment BeamformingTask::environment(std::uint64_t block) const {
  return chan::MimoEnvironment::from_block(block, cfg_.net.k_users, cfg_.net.n_tx, cfg_.net.n_rx);
}

snn::GateSet BeamformingTask::gate_set(const Gates& gates) const {
  return to_gate_set(gates, net_->gate_layers(), net_->gate_sizes());
}

StepOut BeamformingTask::loss(dg::Tape& tape, std::size_t env, std::span<const std::size_t> idx, const Gates& gates,
                              Rng&) const {
  std::vector<bf::BfProblem> batch;
  for (std::size_t i : idx) batch.push_back(train_.at(env).at(i));
  auto out = net_->forward(tape, batch, gate_set(gates));
  StepOut s;
  s.loss = dg::neg(out.rate);
  s.traces.push_back({&net_->network(), std::move(out.trace)});
  return s;
}

double BeamformingTask::evaluate(std::size_t env, const Gates& gates, Rng&) const {
  const auto& probs = test_.at(env);
  const snn::GateSet g = gate_set(gates);
  double total = 0.0;
  for (std::size_t s = 0; s < probs.size(); s += 64) {
    const std::size_t n = std::min<std::size_t>(64, probs.size() - s);
    std::vector<bf::BfProblem> batch(probs.begin() + static_cast<std::ptrdiff_t>(s),
                                     probs.begin() + static_cast<std::ptrdiff_t>(s + n));
    dg::Tape tape(false);
    total += net_->forward(tape, batch, g).rate.value().item() * static_cast<double>(n);
  }
  return total / static_cast<double>(probs.size());
}

std::size_t BeamformingTask::n_heldout() const { return cfg_.heldout_blocks.size(); }

Eigen::MatrixXd BeamformingTask::heldout_pilots(std::size_t h, Rng& rng) const {
  return channel_rows(cfg_.heldout_blocks.at(h), cfg_.pilot_draws, rng);
}

Eigen::MatrixXd BeamformingTask::heldout_pooled(std::size_t h, std::size_t rows, Rng& rng) const {
  return channel_rows(cfg_.heldout_blocks.at(h), (rows + cfg_.net.k_users - 1) / cfg_.net.k_users, rng);
}

std::vector<NetTrace> BeamformingTask::probe(dg::Tape& tape, std::size_t env, const Gates& gates, Rng&) const {
  const auto& probs = test_.at(env);
  const std::vector<bf::BfProblem> batch(
      probs.begin(), probs.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(kProbeBatch, probs.size())));
  return {{&net_->network(), net_->forward(tape, batch, gate_set(gates)).trace}};
}

Eigen::MatrixXd BeamformingTask::channel_rows(std::uint64_t block, std::size_t draws, Rng& rng) const {
  const auto env = environment(block);
  const std::size_t nr = cfg_.net.n_rx, nt = cfg_.net.n_tx, k = cfg_.net.k_users;
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(draws * k), static_cast<Eigen::Index>(2 * nr * nt));
  Eigen::Index r = 0;
  for (const auto& set : chan::gen_mimo_envs(env, draws, rng))
    for (const auto& h : set) {
      Eigen::Index c = 0;
      for (Eigen::Index i = 0; i < h.rows(); ++i)
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
          rows(r, c) = h(i, j).real();
          rows(r, c + static_cast<Eigen::Index>(nr * nt)) = h(i, j).imag();
          ++c;
        }
      ++r;
    }
  return rows;
}

Eigen::MatrixXd BeamformingTask::pilots(std::size_t env, Rng& rng) const {
  return channel_rows(cfg_.blocks.at(env), cfg_.pilot_draws, rng);
}

std::vector<std::vector<Eigen::MatrixXd>> BeamformingTask::sweep_pilots(std::size_t sets, Rng& rng) const {
  std::vector<std::vector<Eigen::MatrixXd>> out;
  for (std::uint64_t b : cfg_.sweep_blocks) {
    std::vector<Eigen::MatrixXd> s;
    for (std::size_t i = 0; i < sets; ++i) s.push_back(channel_rows(b, cfg_.pilot_draws, rng));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Eigen::MatrixXd> BeamformingTask::sweep_pooled(std::size_t rows, Rng& rng) const {
  std::vector<Eigen::MatrixXd> out;
  const std::size_t draws = (rows + cfg_.net.k_users - 1) / cfg_.net.k_users;
  for (std::uint64_t b : cfg_.sweep_blocks) out.push_back(channel_rows(b, draws, rng));
  return out;
}

// ----- channel estimation -----

void EstimationTaskConfig::validate() const {
  if (envs.empty()) throw ConfigError("environments", "need at least one environment");
  if (sweep.size() < 2) throw ConfigError("sweep", "need at least two sweep environments");
  for (const auto& e : envs)
    if (e.taps == 0 || e.decay <= 0 || e.doppler < 0) throw ConfigError("environments", "invalid PDP or Doppler");
  if (n_train == 0 || n_test == 0) throw ConfigError("samples", "train and test sizes must be positive");
  if (pilot_draws < 2) throw ConfigError("pilot_draws", "need at least two grids per pilot set");
}

EstimationTask::EstimationTask(EstimationTaskConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), spec_(chan::OfdmGridSpec::with_default_pilots(cfg_.n_sub, cfg_.n_sym, cfg_.n_pilots)) {
  cfg_.validate();
  const Rng root(seed);
  net_ = std::make_unique<est::SnnResNet>(spec_, cfg_.net, root.split("model").key());
  for (std::size_t e = 0; e < cfg_.envs.size(); ++e) {
    Rng rng = root.split("data").split(e);
    train_.push_back(draw(cfg_.envs[e], cfg_.n_train, rng));
    test_.push_back(draw(cfg_.envs[e], cfg_.n_test, rng));
  }
  initial_ = snapshot(parameters());
}

void EstimationTask::reset() { restore(parameters(), initial_); }

chan::OfdmChannelConfig EstimationTask::channel(const EstimationEnv& e) const {
  chan::OfdmChannelConfig c;
  c.pdp = chan::MultipathProfile::exponential(e.taps, 0.0, e.decay);
  c.doppler = e.doppler;
  c.norm = chan::GridNormalization::expected;
  return c;
}

double EstimationTask::noise_power() const { return chan::db_to_linear(-cfg_.snr_db); }

EstimationTask::Split EstimationTask::draw(const EstimationEnv& e, std::size_t n, Rng& rng) const {
  const auto cc = channel(e);
  const chan::CVector x(spec_.pilots.size(), chan::cd{1.0, 0.0});
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    chan::CMatrix g = chan::gen_ofdm_channel(spec_, cc, rng);
    s.ls.push_back(est::ls_estimate(chan::pilot_io(g, spec_, x, noise_power(), rng), x));
    s.grids.push_back(std::move(g));
  }
  return s;
}

snn::GateSet EstimationTask::gate_set(const Gates& gates) const {
  return to_gate_set(gates, net_->gate_layers(), net_->gate_sizes());
}

StepOut EstimationTask::loss(dg::Tape& tape, std::size_t env, std::span<const std::size_t> idx, const Gates& gates,
                             Rng&) const {
  const Split& s = train_.at(env);
  std::vector<chan::CVector> ls;
  std::vector<chan::CMatrix> grids;
  for (std::size_t i : idx) {
    ls.push_back(s.ls.at(i));
    grids.push_back(s.grids.at(i));
  }
  auto out = net_->forward(tape, ls, gate_set(gates));
  StepOut r;
  r.loss = dg::mse(out.grid, tape.constant(est::grid_targets(grids)));
  r.traces.push_back({&net_->network(), std::move(out.trace)});
  return r;
}

double EstimationTask::evaluate(std::size_t env, const Gates& gates, Rng&) const {
  const Split& s = test_.at(env);
  const snn::GateSet g = gate_set(gates);
  double total = 0.0;
  for (std::size_t b = 0; b < s.ls.size(); b += 64) {
    const std::size_t n = std::min<std::size_t>(64, s.ls.size() - b);
    std::vector<chan::CVector> ls(s.ls.begin() + static_cast<std::ptrdiff_t>(b),
                                  s.ls.begin() + static_cast<std::ptrdiff_t>(b + n));
    dg::Tape tape(false);
    const Tensor out = net_->forward(tape, ls, g).grid.value();
    for (std::size_t r = 0; r < n; ++r) total += est::mse(est::grid_from_row(out, r, spec_), s.grids[b + r]);
  }
  return total / static_cast<double>(s.ls.size());
}

std::size_t EstimationTask::n_heldout() const { return cfg_.heldout.size(); }

Eigen::MatrixXd EstimationTask::heldout_pilots(std::size_t h, Rng& rng) const {
  return ls_rows(cfg_.heldout.at(h), cfg_.pilot_draws, rng);
}

Eigen::MatrixXd EstimationTask::heldout_pooled(std::size_t h, std::size_t rows, Rng& rng) const {
  return ls_rows(cfg_.heldout.at(h), rows, rng);
}

std::vector<NetTrace> EstimationTask::probe(dg::Tape& tape, std::size_t env, const Gates& gates, Rng&) const {
  const Split& s = test_.at(env);
  const std::vector<chan::CVector> ls(
      s.ls.begin(), s.ls.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(kProbeBatch, s.ls.size())));
  return {{&net_->network(), net_->forward(tape, ls, gate_set(gates)).trace}};
}

Eigen::MatrixXd EstimationTask::ls_rows(const EstimationEnv& e, std::size_t draws, Rng& rng) const {
  const Split s = draw(e, draws, rng);
  const auto np = static_cast<Eigen::Index>(spec_.pilots.size());
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(draws), 2 * np);
  for (std::size_t i = 0; i < draws; ++i)
    for (Eigen::Index p = 0; p < np; ++p) {
      rows(static_cast<Eigen::Index>(i), p) = s.ls[i][static_cast<std::size_t>(p)].real();
      rows(static_cast<Eigen::Index>(i), np + p) = s.ls[i][static_cast<std::size_t>(p)].imag();
    }
  return rows;
}

Eigen::MatrixXd EstimationTask::pilots(std::size_t env, Rng& rng) const {
  return ls_rows(cfg_.envs.at(env), cfg_.pilot_draws, rng);
}

std::vector<std::vector<Eigen::MatrixXd>> EstimationTask::sweep_pilots(std::size_t sets, Rng& rng) const {
  std::vector<std::vector<Eigen::MatrixXd>> out;
  for (const auto& e : cfg_.sweep) {
    std::vector<Eigen::MatrixXd> s;
    for (std::size_t i = 0; i < sets; ++i) s.push_back(ls_rows(e, cfg_.pilot_draws, rng));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Eigen::MatrixXd> EstimationTask::sweep_pooled(std::size_t rows, Rng& rng) const {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& e : cfg_.sweep) out.push_back(ls_rows(e, rows, rng));
  return out;
}

std::unique_ptr<Task> make_default_task(TaskKind kind, std::uint64_t seed) {
  switch (kind) {
    case TaskKind::semantic: return std::make_unique<SemanticTask>(SemanticTaskConfig{}, seed);
    case TaskKind::beamforming: return std::make_unique<BeamformingTask>(BeamformingTaskConfig{}, seed);
    case TaskKind::channel_estimation: return std::make_unique<EstimationTask>(EstimationTaskConfig{}, seed);
  }
  throw ConfigError("task", "unknown task");
}

}  // namespace spikacom::harness
