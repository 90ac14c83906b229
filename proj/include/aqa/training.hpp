#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "aqa/data.hpp"
#include "aqa/leaderboard.hpp"
#include "aqa/metrics.hpp"
#include "aqa/model.hpp"
#include "json.hpp"

namespace aqa::training {

struct TrainConfig {
  double lr = 1e-4;
  // 0 picks the aggregation default: 32 for MLP, 16 for the BLSTM variants.
  std::size_t batch_size = 0;
  std::size_t max_epochs = 10;
  std::size_t patience = 2;
  double crop_seconds = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t resolved_batch_size(model::Aggregation aggregation) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // rejects unknown keys
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_loss = 0.0;
  metrics::MetricReport dev_report;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  double best_dev_loss = 0.0;

  nlohmann::json to_json() const;
  static TrainHistory from_json(const nlohmann::json& j);
  bool operator==(const TrainHistory&) const = default;
};

// "No strict improvement for `patience` consecutive epochs" rule.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  // Returns true when this epoch is a new best.
  bool update(std::size_t epoch, double dev_loss);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_loss_ = 0.0;
  std::size_t since_best_ = 0;
};

// Test hooks. dev_loss_override replaces the measured dev loss of an epoch.
struct TrainHooks {
  std::function<std::optional<double>(std::size_t epoch, double measured)> dev_loss_override;
  std::function<void(std::size_t epoch, const model::Model& model)> on_epoch_end;
};

struct TrainResult {
  model::Model model;
  model::TrainMeta meta;
  TrainHistory history;
};

// Shuffled index batches for one epoch. A trailing batch with fewer than two
// items is merged into the previous one.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch);

// The model's own loss over the whole set as one batch (all pairs), using
// uncropped clips.
double dataset_loss(const model::Model& model, std::span<const data::Example> examples);
metrics::MetricReport evaluate_model(const model::Model& model, std::span<const data::Example> examples);

// Trains on pre-loaded examples; norm must cover config.encoders.
TrainResult train_examples(const model::ModelConfig& config, const TrainConfig& train_config,
                           const data::NormStats& norm, std::span<const data::Example> train,
                           std::span<const data::Example> dev, const TrainHooks& hooks = {});

// Fits normalization on the training manifest, loads both sets, trains.
TrainResult train(const model::ModelConfig& config, const TrainConfig& train_config, const data::Manifest& train_set,
                  const data::Manifest& dev_set, const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Ablation grid

struct GridCell {
  std::string model_id;
  model::ModelConfig model;
};

struct GridSpec {
  std::vector<GridCell> cells;
  TrainConfig train;
};

std::string default_model_id(const model::ModelConfig& config);

// Four losses x {MLP on `reduced`, MLP on `full`, BLSTM_t on `full`,
// BLSTM_h on `full`}: sixteen cells. `base` supplies sizes and seed.
GridSpec standard_grid(const std::vector<std::string>& full, const std::vector<std::string>& reduced,
                       const model::ModelConfig& base, const TrainConfig& train);

// Cartesian product of encoder subsets x aggregations x losses.
GridSpec product_grid(const std::vector<std::vector<std::string>>& encoder_sets,
                      const std::vector<model::Aggregation>& aggregations,
                      const std::vector<losses::LossKind>& losses, const model::ModelConfig& base,
                      const TrainConfig& train);

struct GridOptions {
  // When set, each cell writes <out_dir>/<model_id>/{checkpoint.aqck,history.json}.
  std::optional<std::filesystem::path> out_dir;
  std::size_t jobs = 1;
};

// Trains every cell independently. Rows come back in cell order; a failing
// cell yields a row with `error` set and the grid continues.
Leaderboard run_ablation_grid(const GridSpec& grid, const data::Manifest& train_set, const data::Manifest& dev_set,
                              const data::Manifest* pam_set, const GridOptions& options = {});

}  // namespace aqa::training
