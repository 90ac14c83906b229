#pragma once

// Differentiable building blocks with hand-written backward passes.
//
// Every layer reads its weights from a ParamSet by name and accumulates
// gradients into the same tensors. Nothing here allocates hidden global
// state, so disjoint ParamSets can be used from different threads.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aqa/common.hpp"

namespace aqa::nn {

struct ParamTensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;

  ParamTensor() = default;
  explicit ParamTensor(std::vector<std::size_t> shape);

  std::size_t size() const { return values.size(); }
  void zero_grad();
};

// Ordered by name, which fixes the iteration order of the optimizer and of
// checkpoint serialization.
using ParamSet = std::map<std::string, ParamTensor>;

void zero_grads(ParamSet& params);
std::size_t param_count(const ParamSet& params);

// batch × frames × dims, right-padded. mask is true for real frames.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<double> data;
  std::vector<std::uint8_t> mask;

  SequenceBatch() = default;
  SequenceBatch(std::size_t batch, std::size_t frames, std::size_t dims);

  double* frame(std::size_t b, std::size_t t) { return data.data() + (b * frames + t) * dims; }
  const double* frame(std::size_t b, std::size_t t) const { return data.data() + (b * frames + t) * dims; }
  bool real(std::size_t b, std::size_t t) const { return mask[b * frames + t] != 0; }
  std::size_t real_count(std::size_t b) const;

  // Throws DomainError if any row has no real frame.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Affine

// y = W x + b with W stored row-major as dout × din.
std::vector<double> affine_forward(std::span<const double> x, const ParamTensor& weight, const ParamTensor& bias);
void affine_forward(std::span<const double> x, const ParamTensor& weight, const ParamTensor& bias, std::span<double> y);

// Accumulates dL/dW and dL/db into weight.grad / bias.grad. If dx is
// non-empty it receives dL/dx (overwritten, not accumulated).
void affine_backward(std::span<const double> x, std::span<const double> dy, ParamTensor& weight, ParamTensor& bias,
                     std::span<double> dx);

// Glorot-uniform weights in ±sqrt(6 / (din + dout)), zero bias.
void init_affine(ParamTensor& weight, ParamTensor& bias, std::size_t din, std::size_t dout, Rng& rng);

// ---------------------------------------------------------------------------
// Masked mean pooling over time

// Returns batch × dims. Masked frames are ignored entirely.
std::vector<double> masked_mean_pool(const SequenceBatch& seq);

// Gradient of the pooled output w.r.t. every frame (zeros at masked frames).
std::vector<double> masked_mean_pool_backward(const SequenceBatch& seq, std::span<const double> d_pooled);

// ---------------------------------------------------------------------------
// Single-layer bidirectional LSTM
//
// Gate order inside the stacked 4H rows is input, forget, candidate, output.
// A masked frame leaves both hidden and cell state untouched and emits zeros.

struct BlstmOutput {
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::size_t hidden = 0;
  // batch × frames × 2H; forward track in [0, H), backward track in [H, 2H).
  std::vector<double> outputs;
  // batch × 2H; forward hidden at the last real frame, backward hidden at
  // the first real frame.
  std::vector<double> final_hidden;

  // Backward-pass caches per direction: activated gates (batch × frames ×
  // 4H) and cell states (batch × frames × H).
  std::array<std::vector<double>, 2> gates;
  std::array<std::vector<double>, 2> cells;

  std::size_t width() const { return 2 * hidden; }
};

class Blstm {
 public:
  Blstm(std::string prefix, std::size_t input_dims, std::size_t hidden);

  // Registers and initializes parameters. Forget-gate biases start at 1.
  void init(ParamSet& params, Rng& rng) const;

  BlstmOutput forward(const ParamSet& params, const SequenceBatch& seq) const;

  // d_outputs: batch × frames × 2H (may be empty); d_final: batch × 2H (may
  // be empty). If d_input is non-null it receives batch × frames × dims.
  void backward(ParamSet& params, const SequenceBatch& seq, const BlstmOutput& out, std::span<const double> d_outputs,
                std::span<const double> d_final, std::vector<double>* d_input) const;

  std::size_t input_dims() const { return input_dims_; }
  std::size_t hidden() const { return hidden_; }
  std::string param_name(int direction, const char* which) const;

 private:
  std::string prefix_;
  std::size_t input_dims_;
  std::size_t hidden_;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// Bias-corrected Adam update in place. Throws NumericError naming the first
// parameter with a non-finite gradient; no parameter is touched in that case.
void adam_step(ParamSet& params, AdamState& state);

// ---------------------------------------------------------------------------
// Finite-difference gradient check

// Scalar objective over a ParamSet. When want_grad is true the function must
// zero and then fill every ParamTensor::grad.
using Objective = std::function<double(ParamSet& params, bool want_grad)>;

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  const GradCheckEntry* worst() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-6;
};

GradCheckReport grad_check(ParamSet& params, const Objective& objective, const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace aqa::nn
