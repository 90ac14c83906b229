#include "aqa/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aqa::nn {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_shape(const ParamTensor& t, std::initializer_list<std::size_t> expected, const char* what) {
  if (!std::equal(t.shape.begin(), t.shape.end(), expected.begin(), expected.end())) {
    throw ConfigError(std::string("shape mismatch for ") + what);
  }
}

const ParamTensor& lookup(const ParamSet& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

ParamTensor& lookup(ParamSet& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

}  // namespace

ParamTensor::ParamTensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw ConfigError("parameter dimensions must be positive");
    n *= d;
  }
  values.assign(n, 0.0);
  grad.assign(n, 0.0);
}

void ParamTensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void zero_grads(ParamSet& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

std::size_t param_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

SequenceBatch::SequenceBatch(std::size_t b, std::size_t f, std::size_t d)
    : batch(b), frames(f), dims(d), data(b * f * d, 0.0), mask(b * f, 0) {}

std::size_t SequenceBatch::real_count(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < frames; ++t) n += real(b, t) ? 1 : 0;
  return n;
}

void SequenceBatch::validate() const {
  if (batch == 0 || frames == 0) throw DomainError("empty sequence batch");
  if (data.size() != batch * frames * dims || mask.size() != batch * frames) {
    throw ConfigError("sequence batch buffers do not match declared shape");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (real_count(b) == 0) throw DomainError("sequence " + std::to_string(b) + " has no real frames");
  }
}

// ---------------------------------------------------------------------------

void affine_forward(std::span<const double> x, const ParamTensor& weight, const ParamTensor& bias, std::span<double> y) {
  if (weight.shape.size() != 2 || bias.shape.size() != 1) throw ConfigError("affine: weight must be 2-D and bias 1-D");
  const std::size_t dout = weight.shape[0];
  const std::size_t din = weight.shape[1];
  if (x.size() != din || bias.shape[0] != dout || y.size() != dout) {
    throw ConfigError("affine: shape mismatch (x=" + std::to_string(x.size()) + ", W=" + std::to_string(dout) + "x" +
                      std::to_string(din) + ", b=" + std::to_string(bias.shape[0]) + ")");
  }
  const double* w = weight.values.data();
  for (std::size_t o = 0; o < dout; ++o) {
    double acc = bias.values[o];
    const double* row = w + o * din;
    for (std::size_t i = 0; i < din; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

std::vector<double> affine_forward(std::span<const double> x, const ParamTensor& weight, const ParamTensor& bias) {
  std::vector<double> y(weight.shape.empty() ? 0 : weight.shape[0]);
  affine_forward(x, weight, bias, y);
  return y;
}

void affine_backward(std::span<const double> x, std::span<const double> dy, ParamTensor& weight, ParamTensor& bias,
                     std::span<double> dx) {
  const std::size_t dout = weight.shape[0];
  const std::size_t din = weight.shape[1];
  if (x.size() != din || dy.size() != dout || (!dx.empty() && dx.size() != din)) {
    throw ConfigError("affine backward: shape mismatch");
  }
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < dout; ++o) {
    const double g = dy[o];
    bias.grad[o] += g;
    if (g == 0.0) continue;
    double* wg = weight.grad.data() + o * din;
    const double* w = weight.values.data() + o * din;
    for (std::size_t i = 0; i < din; ++i) wg[i] += g * x[i];
    if (!dx.empty()) {
      for (std::size_t i = 0; i < din; ++i) dx[i] += w[i] * g;
    }
  }
}

void init_affine(ParamTensor& weight, ParamTensor& bias, std::size_t din, std::size_t dout, Rng& rng) {
  weight = ParamTensor({dout, din});
  bias = ParamTensor({dout});
  const double limit = std::sqrt(6.0 / static_cast<double>(din + dout));
  for (auto& w : weight.values) w = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------

std::vector<double> masked_mean_pool(const SequenceBatch& seq) {
  seq.validate();
  std::vector<double> pooled(seq.batch * seq.dims, 0.0);
  for (std::size_t b = 0; b < seq.batch; ++b) {
    double* out = pooled.data() + b * seq.dims;
    std::size_t count = 0;
    for (std::size_t t = 0; t < seq.frames; ++t) {
      if (!seq.real(b, t)) continue;
      const double* f = seq.frame(b, t);
      for (std::size_t d = 0; d < seq.dims; ++d) out[d] += f[d];
      ++count;
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t d = 0; d < seq.dims; ++d) out[d] *= inv;
  }
  return pooled;
}

std::vector<double> masked_mean_pool_backward(const SequenceBatch& seq, std::span<const double> d_pooled) {
  if (d_pooled.size() != seq.batch * seq.dims) throw ConfigError("pool backward: shape mismatch");
  std::vector<double> d_seq(seq.data.size(), 0.0);
  for (std::size_t b = 0; b < seq.batch; ++b) {
    const double inv = 1.0 / static_cast<double>(seq.real_count(b));
    const double* g = d_pooled.data() + b * seq.dims;
    for (std::size_t t = 0; t < seq.frames; ++t) {
      if (!seq.real(b, t)) continue;
      double* out = d_seq.data() + (b * seq.frames + t) * seq.dims;
      for (std::size_t d = 0; d < seq.dims; ++d) out[d] = g[d] * inv;
    }
  }
  return d_seq;
}

// ---------------------------------------------------------------------------

Blstm::Blstm(std::string prefix, std::size_t input_dims, std::size_t hidden)
    : prefix_(std::move(prefix)), input_dims_(input_dims), hidden_(hidden) {
  if (input_dims == 0 || hidden == 0) throw ConfigError("BLSTM dimensions must be positive");
}

std::string Blstm::param_name(int direction, const char* which) const {
  return prefix_ + (direction == 0 ? ".fwd." : ".bwd.") + which;
}

void Blstm::init(ParamSet& params, Rng& rng) const {
  const std::size_t h = hidden_;
  for (int dir = 0; dir < 2; ++dir) {
    ParamTensor w_ih({4 * h, input_dims_});
    ParamTensor w_hh({4 * h, h});
    ParamTensor bias({4 * h});
    const double lim_ih = std::sqrt(6.0 / static_cast<double>(input_dims_ + 4 * h));
    const double lim_hh = std::sqrt(6.0 / static_cast<double>(h + 4 * h));
    for (auto& w : w_ih.values) w = rng.uniform(-lim_ih, lim_ih);
    for (auto& w : w_hh.values) w = rng.uniform(-lim_hh, lim_hh);
    for (std::size_t j = h; j < 2 * h; ++j) bias.values[j] = 1.0;
    params[param_name(dir, "w_ih")] = std::move(w_ih);
    params[param_name(dir, "w_hh")] = std::move(w_hh);
    params[param_name(dir, "bias")] = std::move(bias);
  }
}

BlstmOutput Blstm::forward(const ParamSet& params, const SequenceBatch& seq) const {
  seq.validate();
  if (seq.dims != input_dims_) {
    throw ConfigError("BLSTM expects " + std::to_string(input_dims_) + " input dims, got " + std::to_string(seq.dims));
  }
  const std::size_t h = hidden_;
  const std::size_t g4 = 4 * h;
  BlstmOutput out;
  out.batch = seq.batch;
  out.frames = seq.frames;
  out.hidden = h;
  out.outputs.assign(seq.batch * seq.frames * 2 * h, 0.0);
  out.final_hidden.assign(seq.batch * 2 * h, 0.0);

  std::vector<double> z(g4);
  std::vector<double> hs(h);
  std::vector<double> cs(h);
  for (int dir = 0; dir < 2; ++dir) {
    const auto& w_ih = lookup(params, param_name(dir, "w_ih"));
    const auto& w_hh = lookup(params, param_name(dir, "w_hh"));
    const auto& bias = lookup(params, param_name(dir, "bias"));
    require_shape(w_ih, {g4, input_dims_}, "BLSTM w_ih");
    require_shape(w_hh, {g4, h}, "BLSTM w_hh");
    require_shape(bias, {g4}, "BLSTM bias");
    auto& gates = out.gates[dir];
    auto& cells = out.cells[dir];
    gates.assign(seq.batch * seq.frames * g4, 0.0);
    cells.assign(seq.batch * seq.frames * h, 0.0);

    for (std::size_t b = 0; b < seq.batch; ++b) {
      std::fill(hs.begin(), hs.end(), 0.0);
      std::fill(cs.begin(), cs.end(), 0.0);
      for (std::size_t step = 0; step < seq.frames; ++step) {
        const std::size_t t = dir == 0 ? step : seq.frames - 1 - step;
        if (!seq.real(b, t)) continue;
        const double* x = seq.frame(b, t);
        for (std::size_t r = 0; r < g4; ++r) {
          double acc = bias.values[r];
          const double* wi = w_ih.values.data() + r * input_dims_;
          for (std::size_t i = 0; i < input_dims_; ++i) acc += wi[i] * x[i];
          const double* wh = w_hh.values.data() + r * h;
          for (std::size_t i = 0; i < h; ++i) acc += wh[i] * hs[i];
          z[r] = acc;
        }
        double* gt = gates.data() + (b * seq.frames + t) * g4;
        double* ct = cells.data() + (b * seq.frames + t) * h;
        double* ot = out.outputs.data() + (b * seq.frames + t) * 2 * h + dir * h;
        for (std::size_t j = 0; j < h; ++j) {
          const double ig = sigmoid(z[j]);
          const double fg = sigmoid(z[h + j]);
          const double cg = std::tanh(z[2 * h + j]);
          const double og = sigmoid(z[3 * h + j]);
          gt[j] = ig;
          gt[h + j] = fg;
          gt[2 * h + j] = cg;
          gt[3 * h + j] = og;
          cs[j] = fg * cs[j] + ig * cg;
          ct[j] = cs[j];
        }
        for (std::size_t j = 0; j < h; ++j) {
          hs[j] = gt[3 * h + j] * std::tanh(cs[j]);
          ot[j] = hs[j];
        }
      }
      std::copy(hs.begin(), hs.end(), out.final_hidden.begin() + static_cast<std::ptrdiff_t>(b * 2 * h + dir * h));
    }
  }
  return out;
}

void Blstm::backward(ParamSet& params, const SequenceBatch& seq, const BlstmOutput& out,
                     std::span<const double> d_outputs, std::span<const double> d_final,
                     std::vector<double>* d_input) const {
  const std::size_t h = hidden_;
  const std::size_t g4 = 4 * h;
  if (!d_outputs.empty() && d_outputs.size() != out.outputs.size()) throw ConfigError("BLSTM backward: d_outputs shape");
  if (!d_final.empty() && d_final.size() != out.final_hidden.size()) throw ConfigError("BLSTM backward: d_final shape");
  if (d_input != nullptr) d_input->assign(seq.data.size(), 0.0);

  std::vector<double> dh(h);
  std::vector<double> dc(h);
  std::vector<double> dz(g4);
  std::vector<double> dh_prev(h);
  std::vector<std::size_t> order;
  for (int dir = 0; dir < 2; ++dir) {
    auto& w_ih = lookup(params, param_name(dir, "w_ih"));
    auto& w_hh = lookup(params, param_name(dir, "w_hh"));
    auto& bias = lookup(params, param_name(dir, "bias"));
    const auto& gates = out.gates[dir];
    const auto& cells = out.cells[dir];

    for (std::size_t b = 0; b < seq.batch; ++b) {
      order.clear();
      for (std::size_t step = 0; step < seq.frames; ++step) {
        const std::size_t t = dir == 0 ? step : seq.frames - 1 - step;
        if (seq.real(b, t)) order.push_back(t);
      }
      if (d_final.empty()) {
        std::fill(dh.begin(), dh.end(), 0.0);
      } else {
        std::copy_n(d_final.begin() + static_cast<std::ptrdiff_t>(b * 2 * h + dir * h), h, dh.begin());
      }
      std::fill(dc.begin(), dc.end(), 0.0);

      for (std::size_t k = order.size(); k-- > 0;) {
        const std::size_t t = order[k];
        const double* gt = gates.data() + (b * seq.frames + t) * g4;
        const double* ct = cells.data() + (b * seq.frames + t) * h;
        const double* c_prev = k > 0 ? cells.data() + (b * seq.frames + order[k - 1]) * h : nullptr;
        const double* h_prev = k > 0 ? out.outputs.data() + (b * seq.frames + order[k - 1]) * 2 * h + dir * h : nullptr;
        if (!d_outputs.empty()) {
          const double* g = d_outputs.data() + (b * seq.frames + t) * 2 * h + dir * h;
          for (std::size_t j = 0; j < h; ++j) dh[j] += g[j];
        }
        for (std::size_t j = 0; j < h; ++j) {
          const double ig = gt[j];
          const double fg = gt[h + j];
          const double cg = gt[2 * h + j];
          const double og = gt[3 * h + j];
          const double tc = std::tanh(ct[j]);
          const double d_o = dh[j] * tc;
          const double d_c = dc[j] + dh[j] * og * (1.0 - tc * tc);
          const double cp = c_prev != nullptr ? c_prev[j] : 0.0;
          dz[j] = d_c * cg * ig * (1.0 - ig);
          dz[h + j] = d_c * cp * fg * (1.0 - fg);
          dz[2 * h + j] = d_c * ig * (1.0 - cg * cg);
          dz[3 * h + j] = d_o * og * (1.0 - og);
          dc[j] = d_c * fg;
        }
        const double* x = seq.frame(b, t);
        double* dx = d_input != nullptr ? d_input->data() + (b * seq.frames + t) * seq.dims : nullptr;
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        for (std::size_t r = 0; r < g4; ++r) {
          const double g = dz[r];
          bias.grad[r] += g;
          if (g == 0.0) continue;
          double* wig = w_ih.grad.data() + r * input_dims_;
          for (std::size_t i = 0; i < input_dims_; ++i) wig[i] += g * x[i];
          if (dx != nullptr) {
            const double* wi = w_ih.values.data() + r * input_dims_;
            for (std::size_t i = 0; i < input_dims_; ++i) dx[i] += wi[i] * g;
          }
          const double* wh = w_hh.values.data() + r * h;
          double* whg = w_hh.grad.data() + r * h;
          if (h_prev != nullptr) {
            for (std::size_t i = 0; i < h; ++i) whg[i] += g * h_prev[i];
          }
          for (std::size_t i = 0; i < h; ++i) dh_prev[i] += wh[i] * g;
        }
        dh.swap(dh_prev);
      }
    }
  }
}

// ---------------------------------------------------------------------------

void adam_step(ParamSet& params, AdamState& state) {
  if (!(state.lr >= 0.0)) throw ConfigError("Adam learning rate must be non-negative");
  for (const auto& [name, t] : params) {
    for (double g : t.grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
  }
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, step);
  const double bc2 = 1.0 - std::pow(state.beta2, step);
  for (auto& [name, t] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.size()) m.assign(t.size(), 0.0);
    if (v.size() != t.size()) v.assign(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      t.values[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

const GradCheckEntry* GradCheckReport::worst() const {
  if (entries.empty()) return nullptr;
  return &*std::max_element(entries.begin(), entries.end(),
                            [](const auto& a, const auto& b) { return a.rel_error < b.rel_error; });
}

GradCheckReport grad_check(ParamSet& params, const Objective& objective, const GradCheckOptions& options) {
  GradCheckReport report;
  if (param_count(params) == 0) return report;
  zero_grads(params);
  objective(params, true);
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, t] : params) analytic[name] = t.grad;

  for (auto& [name, t] : params) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.values[i];
      t.values[i] = saved + options.step;
      const double plus = objective(params, false);
      t.values[i] = saved - options.step;
      const double minus = objective(params, false);
      t.values[i] = saved;
      GradCheckEntry e;
      e.param = name;
      e.index = i;
      e.analytic = analytic[name][i];
      e.numeric = (plus - minus) / (2.0 * options.step);
      e.rel_error = relative_error(e.analytic, e.numeric, options.denominator_floor);
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.entries.push_back(std::move(e));
    }
  }
  return report;
}

}  // namespace aqa::nn
