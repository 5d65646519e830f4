// SPDX-License-Identifier: Apache-2.0
#include "spikacom/energy.hpp"

#include "spikacom/error.hpp"

#include <array>
#include <cmath>

namespace spikacom::energy {

using dg::Tensor;

namespace {

constexpr std::array<std::pair<Kind, std::string_view>, 14> kNames{{
    {Kind::fc_snn, "fc-snn"},       {Kind::conv_snn, "conv-snn"},     {Kind::pool_snn, "pool-snn"},
    {Kind::fc_ann, "fc-ann"},       {Kind::conv_ann, "conv-ann"},     {Kind::rnn, "rnn"},
    {Kind::lstm, "lstm"},           {Kind::transformer, "transformer"}, {Kind::matmul, "matmul"},
    {Kind::inverse, "inverse"},     {Kind::cholesky, "cholesky"},     {Kind::ldpc_enc, "ldpc-enc"},
    {Kind::ldpc_dec, "ldpc-dec"},   {Kind::rbf_interp, "rbf-interp"},
}};

std::size_t expected_dims(Kind k) {
  switch (k) {
    case Kind::fc_snn:
    case Kind::fc_ann:
    case Kind::transformer:
    case Kind::ldpc_enc:
    case Kind::ldpc_dec: return 2;
    case Kind::conv_snn:
    case Kind::conv_ann: return 5;
    case Kind::pool_snn: return 4;
    case Kind::rnn:
    case Kind::lstm:
    case Kind::matmul:
    case Kind::rbf_interp: return 3;
    case Kind::inverse:
    case Kind::cholesky: return 1;
  }
  return 0;
}

double prod(const std::vector<double>& d, std::size_t from, std::size_t to) {
  double p = 1.0;
  for (std::size_t i = from; i < to; ++i) p *= d[i];
  return p;
}

}  // namespace

void EnergyCosts::validate() const {
  if (!(e_mac > 0 && e_ac > 0 && e_mem > 0)) throw ConfigError("energy", "costs must be positive");
}

OpCount& OpCount::operator+=(const OpCount& o) {
  n_mac += o.n_mac;
  n_ac += o.n_ac;
  n_mem += o.n_mem;
  return *this;
}

Kind parse_kind(std::string_view s) {
  for (const auto& [k, n] : kNames)
    if (n == s) return k;
  throw ConfigError("kind", "unknown layer kind '" + std::string(s) + "'");
}

std::string_view kind_name(Kind k) {
  for (const auto& [kk, n] : kNames)
    if (kk == k) return n;
  return "?";
}

OpCount count_layer(const LayerDescriptor& d) {
  const std::size_t need = expected_dims(d.kind);
  if (need == 0) throw ArgumentError("count_layer: unknown kind");
  if (d.dims.size() != need) {
    throw ArgumentError("count_layer: " + std::string(kind_name(d.kind)) + " expects " + std::to_string(need) +
                        " dims, got " + std::to_string(d.dims.size()));
  }
  for (double x : d.dims)
    if (!(x > 0.0) || !std::isfinite(x)) throw ArgumentError("count_layer: dims must be positive");
  if (!(d.rate >= 0.0 && d.rate <= 1.0)) throw ArgumentError("count_layer: rate must be in [0, 1]");
  const auto& x = d.dims;
  const double t = static_cast<double>(d.t_steps);
  OpCount c;
  auto spiking = [&](double nop_dense) {
    if (d.t_steps == 0) throw ArgumentError("count_layer: spiking stage needs T >= 1");
    if (d.analog_input) c.n_mac = nop_dense * t;
    else c.n_ac = nop_dense * d.rate * t;
  };
  switch (d.kind) {
    case Kind::fc_snn: spiking(x[0] * x[1]); break;
    case Kind::conv_snn: spiking(prod(x, 0, 4) * x[4] * x[4]); break;
    case Kind::pool_snn: spiking(prod(x, 0, 3) * x[3] * x[3]); break;
    case Kind::fc_ann: c.n_mac = x[0] * x[1]; break;
    case Kind::conv_ann: c.n_mac = prod(x, 0, 4) * x[4] * x[4]; break;
    case Kind::rnn: c.n_mac = x[0] * (x[1] * x[2] + x[2] * x[2]); break;
    case Kind::lstm: c.n_mac = 4.0 * x[0] * (x[1] * x[2] + x[2] * x[2]); break;
    case Kind::transformer: c.n_mac = x[0] * (12.0 * x[1] * x[1] + 2.0 * x[0] * x[1]); break;
    case Kind::matmul: c.n_mac = 4.0 * x[0] * x[1] * x[2]; break;
    case Kind::inverse: c.n_mac = 2.0 * x[0] * x[0] * x[0]; break;
    case Kind::cholesky: c.n_mac = 2.0 / 3.0 * x[0] * x[0] * x[0]; break;
    case Kind::ldpc_enc: c.n_ac = x[0] * (x[1] - 1.0); break;
    case Kind::ldpc_dec:
      c.n_mem = x[1] * 2.0 * x[0];
      c.n_ac = x[1] * 4.0 * x[0];
      break;
    case Kind::rbf_interp: c.n_mac = 2.0 * x[0] * x[1] * x[2]; break;
  }
  return c;
}

EnergyReport pipeline_energy(const std::vector<LayerDescriptor>& stages, const EnergyCosts& costs) {
  costs.validate();
  if (stages.empty()) throw ArgumentError("pipeline_energy: no stages");
  EnergyReport r;
  for (const auto& d : stages) {
    StageEnergy s{d.name.empty() ? std::string(kind_name(d.kind)) : d.name, d.kind, count_layer(d), 0.0};
    s.pj = s.ops.picojoules(costs);
    r.ops += s.ops;
    r.total_pj += s.pj;
    r.stages.push_back(std::move(s));
  }
  return r;
}

LayerDescriptor ann_twin(const LayerDescriptor& d) {
  LayerDescriptor t = d;
  if (d.kind == Kind::fc_snn) t.kind = Kind::fc_ann;
  else if (d.kind == Kind::conv_snn) t.kind = Kind::conv_ann;
  else return t;
  t.rate = 1.0;
  t.t_steps = 1;
  t.analog_input = false;
  return t;
}

std::vector<LayerDescriptor> ann_twin(const std::vector<LayerDescriptor>& stages) {
  std::vector<LayerDescriptor> out;
  for (const auto& d : stages) {
    // An ANN has no spike pooling cost to speak of; max pooling is a comparison, not a MAC.
    if (d.kind == Kind::pool_snn) continue;
    out.push_back(ann_twin(d));
  }
  return out;
}

double measure_rate(const Tensor& train) {
  if (train.empty()) throw ArgumentError("measure_rate: empty train");
  return train.sum() / static_cast<double>(train.size());
}

std::vector<double> measure_snn_rates(const snn::Trace& trace) {
  std::vector<double> r;
  for (const auto& seq : trace.seq) r.push_back(measure_rate(snn::stack_time(seq)));
  return r;
}

std::vector<LayerDescriptor> describe_network(const snn::Network& net, const snn::Trace& trace) {
  if (trace.seq.size() != net.size() + 1) throw ShapeError("describe_network: trace does not match the network");
  std::vector<LayerDescriptor> out;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const snn::Layer& l = net.layer(i);
    const Tensor in = snn::stack_time(trace.seq[i]);
    const dg::Shape& os = trace.seq[i + 1].front().shape();
    const std::size_t t = trace.seq[i].size();
    // Rates are per sample: the batch axis does not change the per-inference count.
    const double rate = l.analog_input ? 1.0 : measure_rate(in);
    LayerDescriptor d;
    d.t_steps = t;
    d.rate = rate;
    d.analog_input = l.analog_input;
    if (const auto* fc = dynamic_cast<const snn::SpikingFc*>(&l)) {
      d.kind = Kind::fc_snn;
      d.dims = {double(fc->in()), double(fc->out())};
      d.name = fc->weight.name;
    } else if (const auto* ro = dynamic_cast<const snn::Readout*>(&l)) {
      d.kind = Kind::fc_snn;
      d.dims = {double(ro->in()), double(ro->out())};
      d.name = ro->weight.name;
    } else if (const auto* cv = dynamic_cast<const snn::SpikingConv*>(&l)) {
      d.kind = Kind::conv_snn;
      d.dims = {double(os[os.size() - 2]), double(os[os.size() - 1]), double(cv->c_out()), double(cv->c_in()),
                double(cv->ksize())};
      d.name = cv->kernel.name;
    } else if (const auto* mp = dynamic_cast<const snn::MaxPool*>(&l)) {
      d.kind = Kind::pool_snn;
      d.dims = {double(os[os.size() - 2]), double(os[os.size() - 1]), double(os[os.size() - 3]), double(mp->size())};
      d.name = "pool" + std::to_string(i);
    } else {
      continue;
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<LayerDescriptor> wmmse_iteration(std::size_t k, std::size_t n_tx, std::size_t n_rx, std::size_t d) {
  const double nt = double(n_tx), nr = double(n_rx), dd = double(d);
  std::vector<LayerDescriptor> ops;
  auto mm = [&](std::string name, double m, double n, double r) {
    ops.push_back({Kind::matmul, {m, n, r}, 1.0, 1, false, std::move(name)});
  };
  auto inv = [&](std::string name, double n) { ops.push_back({Kind::inverse, {n}, 1.0, 1, false, std::move(name)}); };
  for (std::size_t u = 0; u < k; ++u) {
    for (std::size_t j = 0; j < k; ++j) {
      mm("A: H_k V_j", nr, nt, dd);
      mm("A: (H_k V_j)(H_k V_j)^H", nr, dd, nr);
    }
    inv("U: A_k^-1", nr);
    mm("U: A_k^-1 H_k V_k", nr, nr, dd);
    mm("W: U_k^H H_k V_k", dd, nr, dd);
    inv("W: E_k^-1", dd);
  }
  for (std::size_t j = 0; j < k; ++j) {
    mm("B: U_j W_j", nr, dd, dd);
    mm("B: U_j W_j U_j^H", nr, dd, nr);
    mm("B: H_j^H (U W U^H)", nt, nr, nr);
    mm("B: (.) H_j", nt, nr, nt);
  }
  inv("V: B^-1", nt);
  for (std::size_t u = 0; u < k; ++u) {
    mm("V: H_k^H U_k", nt, nr, dd);
    mm("V: (.) W_k", nt, dd, dd);
    mm("V: B^-1 (.)", nt, nt, dd);
  }
  return ops;
}

}  // namespace spikacom::energy
