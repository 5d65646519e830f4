// SPDX-License-Identifier: Apache-2.0
#include "spikacom/consolidation.hpp"

#include "spikacom/error.hpp"

#include <algorithm>

namespace spikacom::cl {

using dg::Tensor;
using dg::Var;

Method parse_method(std::string_view name) {
  if (name == "none" || name == "vanilla") return Method::none;
  if (name == "src") return Method::src;
  if (name == "ewc") return Method::ewc;
  if (name == "si") return Method::si;
  if (name == "src+gate" || name == "src_gate") return Method::src_gate;
  throw ConfigError("method", "unknown method '" + std::string(name) + "'");
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::src: return "src";
    case Method::ewc: return "ewc";
    case Method::si: return "si";
    case Method::src_gate: return "src+gate";
  }
  return "none";
}

bool uses_src(Method m) { return m == Method::src || m == Method::src_gate; }

void RegConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be non-negative");
}

Tensor src_importance(const snn::FiringRateStats& st, snn::LayerKind kind, std::size_t kernel) {
  const std::size_t in = st.mu.size(), out = st.nu.size();
  if (in == 0 || out == 0) throw ShapeError("src_importance: empty rate vector");
  const std::size_t kk = kind == snn::LayerKind::conv ? kernel * kernel : 1;
  if (kk == 0) throw ShapeError("src_importance: zero kernel size");
  Tensor om(kind == snn::LayerKind::conv ? dg::Shape{out, in, kernel, kernel} : dg::Shape{out, in});
  for (std::size_t j = 0; j < out; ++j)
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t k = 0; k < kk; ++k) om[(j * in + i) * kk + k] = st.nu[j] * st.mu[i];
  return om;
}

std::size_t ImportanceTerm::stored_scalars() const { return implicit() ? mu.size() + nu.size() : omega.size(); }

ImportanceTerm src_term(const dg::Parameter& p, const snn::FiringRateStats& st, std::size_t kernel) {
  const auto& s = p.value.shape();
  const bool conv = s.size() == 4;
  if (!(s.size() == 2 || conv) || s[0] != st.nu.size() || s[1] != st.mu.size() ||
      (conv && (s[2] != kernel || s[3] != kernel))) {
    throw ShapeError("src_term: rates (" + std::to_string(st.nu.size()) + ", " + std::to_string(st.mu.size()) +
                     ") do not match parameter " + p.name + " " + dg::shape_str(s));
  }
  ImportanceTerm t;
  t.param = &p;
  t.name = p.name;
  t.anchor = p.value;
  t.mu = st.mu;
  t.nu = st.nu;
  t.kernel = conv ? kernel : 1;
  return t;
}

ImportanceTerm dense_term(const dg::Parameter& p, Tensor omega) {
  if (omega.shape() != p.value.shape()) {
    throw ShapeError("dense_term: importance " + dg::shape_str(omega.shape()) + " vs parameter " +
                     dg::shape_str(p.value.shape()));
  }
  ImportanceTerm t;
  t.param = &p;
  t.name = p.name;
  t.anchor = p.value;
  t.omega = std::move(omega);
  return t;
}

void ImportanceStore::close_environment(EnvImportance env) { envs_.push_back(std::move(env)); }

namespace {

Var term_penalty(dg::Tape& tape, const ImportanceTerm& t) {
  if (t.param == nullptr) throw ArgumentError("importance term without a parameter");
  if (t.param->value.shape() != t.anchor.shape()) {
    throw ShapeError("consolidation: anchor " + dg::shape_str(t.anchor.shape()) + " vs live " + t.name + " " +
                     dg::shape_str(t.param->value.shape()));
  }
  Var d = dg::square(dg::sub(tape.param(*t.param), tape.constant(t.anchor)));
  if (!t.implicit()) return dg::sum(dg::mul(tape.constant(t.omega), d));
  const std::size_t out = t.nu.size(), in = t.mu.size();
  if (t.anchor.rank() == 4) {
    d = dg::reshape(dg::sum_axis(dg::reshape(d, {out * in, t.kernel * t.kernel}), 1), {out, in});
  }
  Var nu = tape.constant(t.nu.reshaped({1, out}));
  Var mu = tape.constant(t.mu.reshaped({in, 1}));
  return dg::sum(dg::matmul(nu, dg::matmul(d, mu)));
}

}  // namespace

Var consolidation_penalty(dg::Tape& tape, const ImportanceStore& store, const RegConfig& cfg) {
  cfg.validate();
  if (cfg.method == Method::none || cfg.lambda == 0.0 || store.empty()) return tape.constant(Tensor::scalar(0.0));
  const auto& envs = store.environments();
  const std::size_t first = cfg.window == 0 || cfg.window >= envs.size() ? 0 : envs.size() - cfg.window;
  Var total;
  for (std::size_t m = first; m < envs.size(); ++m)
    for (const auto& t : envs[m].terms) {
      Var p = term_penalty(tape, t);
      total = total.valid() ? dg::add(total, p) : p;
    }
  if (!total.valid()) return tape.constant(Tensor::scalar(0.0));
  return dg::scale(total, cfg.lambda);
}

MemoryReport importance_memory(const ImportanceStore& store) {
  MemoryReport r;
  for (const auto& env : store.environments())
    for (const auto& t : env.terms) {
      r.layers.push_back({t.name, t.stored_scalars()});
      r.total += t.stored_scalars();
    }
  return r;
}

void RateAccumulator::add(const snn::Network& net, const snn::Trace& trace) {
  if (sum_.empty()) sum_.resize(net.size());
  if (sum_.size() != net.size()) throw ShapeError("RateAccumulator: network size changed");
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto k = net.layer(i).kind();
    if (k != snn::LayerKind::fc && k != snn::LayerKind::conv && k != snn::LayerKind::readout) continue;
    snn::FiringRateStats st = net.layer_rates(trace, i);
    if (sum_[i].mu.empty()) {
      sum_[i] = std::move(st);
      continue;
    }
    for (std::size_t j = 0; j < st.mu.size(); ++j) sum_[i].mu[j] += st.mu[j];
    for (std::size_t j = 0; j < st.nu.size(); ++j) sum_[i].nu[j] += st.nu[j];
  }
  ++count_;
}

snn::FiringRateStats RateAccumulator::rates(std::size_t layer) const {
  if (count_ == 0 || layer >= sum_.size()) return {};
  snn::FiringRateStats st = sum_[layer];
  for (double& v : st.mu.values()) v /= static_cast<double>(count_);
  for (double& v : st.nu.values()) v /= static_cast<double>(count_);
  return st;
}

void RateAccumulator::reset() {
  sum_.clear();
  count_ = 0;
}

EnvImportance src_environment(const snn::Network& net, const RateAccumulator& rates) {
  if (rates.batches() == 0) throw ArgumentError("src_environment: no firing rates recorded");
  EnvImportance env;
  for (std::size_t i = 0; i < net.size(); ++i) {
    snn::Layer& l = net.layer(i);
    if (auto* fc = dynamic_cast<snn::SpikingFc*>(&l)) {
      env.terms.push_back(src_term(fc->weight, rates.rates(i)));
    } else if (auto* cv = dynamic_cast<snn::SpikingConv*>(&l)) {
      env.terms.push_back(src_term(cv->kernel, rates.rates(i), cv->ksize()));
    } else if (auto* ro = dynamic_cast<snn::Readout*>(&l)) {
      env.terms.push_back(src_term(ro->weight, rates.rates(i)));
    }
  }
  return env;
}

std::vector<dg::Parameter*> regularized_parameters(const snn::Network& net) {
  std::vector<dg::Parameter*> out;
  for (std::size_t i = 0; i < net.size(); ++i) {
    snn::Layer& l = net.layer(i);
    if (auto* fc = dynamic_cast<snn::SpikingFc*>(&l)) out.push_back(&fc->weight);
    else if (auto* cv = dynamic_cast<snn::SpikingConv*>(&l)) out.push_back(&cv->kernel);
    else if (auto* ro = dynamic_cast<snn::Readout*>(&l)) out.push_back(&ro->weight);
  }
  return out;
}

std::vector<Tensor> ewc_fisher_diag(std::span<dg::Parameter* const> params, std::size_t n_samples,
                                    const std::function<Var(dg::Tape&, std::size_t)>& loss_of) {
  if (n_samples == 0) throw ArgumentError("ewc_fisher_diag: empty batch");
  std::vector<Tensor> f;
  for (const auto* p : params) f.push_back(Tensor::zeros_like(p->value));
  for (std::size_t s = 0; s < n_samples; ++s) {
    dg::Tape tape;
    for (const auto* p : params) tape.param(*p);
    const dg::Gradients g = tape.backward(loss_of(tape, s));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor gi = g.of(*params[i]);
      for (std::size_t j = 0; j < gi.size(); ++j) f[i][j] += gi[j] * gi[j];
    }
  }
  for (auto& t : f)
    for (double& v : t.values()) v /= static_cast<double>(n_samples);
  return f;
}

SiTracker::SiTracker(std::span<dg::Parameter* const> params, double xi) : params_(params.begin(), params.end()), xi_(xi) {
  if (!(xi > 0.0)) throw ArgumentError("SI damping must be positive");
  restart();
}

void SiTracker::restart() {
  start_.clear();
  path_.clear();
  for (const auto* p : params_) {
    start_.push_back(p->value);
    path_.push_back(Tensor::zeros_like(p->value));
  }
}

void SiTracker::record(std::span<const Tensor> grads, std::span<const Tensor> deltas) {
  if (grads.size() != params_.size() || deltas.size() != params_.size()) {
    throw ShapeError("SiTracker::record: expected one gradient and one delta per parameter");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (grads[i].size() != path_[i].size() || deltas[i].size() != path_[i].size()) {
      throw ShapeError("SiTracker::record: size mismatch for " + params_[i]->name);
    }
    for (std::size_t j = 0; j < path_[i].size(); ++j) path_[i][j] += std::max(0.0, -grads[i][j] * deltas[i][j]);
  }
}

std::vector<Tensor> SiTracker::importance() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor w = path_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double drift = params_[i]->value[j] - start_[i][j];
      w[j] /= drift * drift + xi_;
    }
    out.push_back(std::move(w));
  }
  return out;
}

Tensor si_accumulate(std::span<const Tensor> grads, std::span<const Tensor> deltas, double xi) {
  if (grads.size() != deltas.size() || grads.empty()) throw ShapeError("si_accumulate: misaligned records");
  Tensor path = Tensor::zeros_like(grads[0]), drift = Tensor::zeros_like(grads[0]);
  for (std::size_t s = 0; s < grads.size(); ++s) {
    if (grads[s].shape() != path.shape() || deltas[s].shape() != path.shape()) {
      throw ShapeError("si_accumulate: record shapes differ");
    }
    for (std::size_t j = 0; j < path.size(); ++j) {
      path[j] += std::max(0.0, -grads[s][j] * deltas[s][j]);
      drift[j] += deltas[s][j];
    }
  }
  for (std::size_t j = 0; j < path.size(); ++j) path[j] /= drift[j] * drift[j] + xi;
  return path;
}

}  // namespace spikacom::cl
