#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aqa/data.hpp"
#include "aqa/losses.hpp"
#include "aqa/nn.hpp"
#include "json.hpp"

namespace aqa::model {

// MLP: mean-pool over time, then the heads.
// BLSTM_h: mean-pool, feed the pooled vector to the BLSTM as a length-1
//          sequence, heads read its final hidden state.
// BLSTM_t: BLSTM over the frame sequence, mean-pool its outputs, then heads.
enum class Aggregation { MLP, BLSTM_h, BLSTM_t };

std::string_view aggregation_name(Aggregation a);  // "MLP", "BLSTM_h", "BLSTM_t"
Aggregation parse_aggregation(std::string_view name);

struct ModelConfig {
  std::vector<std::string> encoders;
  Aggregation aggregation = Aggregation::MLP;
  std::size_t blstm_hidden = 256;
  std::vector<std::size_t> head_hidden{128};
  losses::LossConfig loss;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  // Rejects unknown keys.
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Intermediate values kept for the backward pass.
struct ForwardTrace {
  std::size_t batch = 0;
  std::vector<double> pooled;           // MLP / BLSTM_h: batch x input dims
  nn::SequenceBatch pooled_seq;         // BLSTM_h: batch x 1 x input dims
  nn::BlstmOutput blstm;                // BLSTM_h / BLSTM_t
  nn::SequenceBatch blstm_seq;          // BLSTM_t: BLSTM outputs with the input mask
  std::vector<double> features;         // batch x feature width, input to every head
  // Per axis, per layer: layer inputs (batch x din). The last entry is the
  // head output (batch x 1).
  std::array<std::vector<std::vector<double>>, kNumAxes> activations;
  std::vector<double> predictions;      // batch x 4
};

class Model {
 public:
  // Initializes parameters from config.seed. Input width is the sum of the
  // normalization dims of the configured encoders.
  Model(ModelConfig config, data::NormStats norm);

  const ModelConfig& config() const { return config_; }
  const data::NormStats& norm() const { return norm_; }
  std::size_t input_dims() const { return input_dims_; }
  std::size_t feature_width() const;

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // Canonical-order encoder list the model consumes.
  const std::vector<std::string>& encoders() const { return config_.encoders; }

  std::vector<std::string> head_param_names(std::size_t axis) const;
  std::vector<std::string> trunk_param_names() const;

  // batch x 4 predictions, no clamping.
  std::vector<double> forward(const nn::SequenceBatch& batch) const;
  ForwardTrace forward_trace(const nn::SequenceBatch& batch) const;

  // Accumulates parameter gradients for dL/dpred (batch x 4).
  void backward(const nn::SequenceBatch& batch, const ForwardTrace& trace, std::span<const double> d_pred);

  // Zeroes gradients, runs forward + backward for the configured loss.
  double loss_and_grad(const nn::SequenceBatch& batch, std::span<const double> labels);
  double loss(const nn::SequenceBatch& batch, std::span<const double> labels) const;

  std::vector<AxisScores> predict(std::span<const data::Example> examples, std::size_t chunk = 64) const;

 private:
  void init_params();

  ModelConfig config_;
  data::NormStats norm_;
  std::size_t input_dims_ = 0;
  nn::ParamSet params_;
};

// Right-pads the sequences into one batch.
nn::SequenceBatch make_batch(std::span<const data::FeatureSequence* const> seqs);
nn::SequenceBatch make_batch(std::span<const data::Example> examples);
std::vector<double> label_matrix(std::span<const data::Example* const> examples);

// True when, for every axis k, backpropagating axis k alone leaves the
// gradient of every other axis's head exactly zero.
bool head_independence_check(Model& model, const nn::SequenceBatch& batch);

// ---------------------------------------------------------------------------
// Checkpoints

struct TrainMeta {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_dev_loss = std::numeric_limits<double>::quiet_NaN();
  std::string dataset_fingerprint;
};

struct Checkpoint {
  Model model;
  TrainMeta meta;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const TrainMeta& meta);
// When expected is given, a checkpoint built for a different configuration
// is rejected.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const ModelConfig* expected = nullptr);

void save_checkpoint(const Model& model, const TrainMeta& meta, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace aqa::model
