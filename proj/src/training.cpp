#include "aqa/training.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

namespace aqa::training {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config and history

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (batch_size == 1) throw ConfigError("batch_size must be >= 2 (pairwise losses need pairs)");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(crop_seconds > 0.0)) throw ConfigError("crop_seconds must be > 0");
}

std::size_t TrainConfig::resolved_batch_size(model::Aggregation aggregation) const {
  if (batch_size != 0) return batch_size;
  return aggregation == model::Aggregation::MLP ? 32 : 16;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},           {"batch_size", batch_size},     {"max_epochs", max_epochs},
          {"patience", patience}, {"crop_seconds", crop_seconds}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  TrainConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lr") {
        c.lr = v.get<double>();
      } else if (key == "batch_size") {
        c.batch_size = v.get<std::size_t>();
      } else if (key == "max_epochs") {
        c.max_epochs = v.get<std::size_t>();
      } else if (key == "patience") {
        c.patience = v.get<std::size_t>();
      } else if (key == "crop_seconds") {
        c.crop_seconds = v.get<double>();
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else {
        throw ConfigError("unknown train config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : epochs) {
    eps.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"dev_loss", e.dev_loss},
                   {"dev_report", e.dev_report.to_json()}});
  }
  return {{"format", "aqa-train-history"}, {"version", 1},
          {"best_epoch", best_epoch},      {"stopped_epoch", stopped_epoch},
          {"best_dev_loss", best_dev_loss}, {"epochs", eps}};
}

TrainHistory TrainHistory::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "aqa-train-history") throw FormatError("not a training history");
    TrainHistory h;
    h.best_epoch = j.at("best_epoch").get<std::size_t>();
    h.stopped_epoch = j.at("stopped_epoch").get<std::size_t>();
    h.best_dev_loss = j.at("best_dev_loss").get<double>();
    for (const auto& e : j.at("epochs")) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<std::size_t>();
      r.train_loss = e.at("train_loss").get<double>();
      r.dev_loss = e.at("dev_loss").get<double>();
      r.dev_report = metrics::MetricReport::from_json(e.at("dev_report"));
      h.epochs.push_back(std::move(r));
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed training history: ") + e.what());
  }
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(std::size_t epoch, double dev_loss) {
  if (best_epoch_ == 0 || dev_loss < best_loss_) {
    best_epoch_ = epoch;
    best_loss_ = dev_loss;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

// ---------------------------------------------------------------------------
// Training loop

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (n < 2) throw DomainError("training needs at least two examples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::mix(seed, 2 * epoch));
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < 2 && !batches.empty()) {
      batches.back().insert(batches.back().end(), order.begin() + static_cast<std::ptrdiff_t>(start),
                            order.begin() + static_cast<std::ptrdiff_t>(end));
    } else {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return batches;
}

namespace {

std::vector<double> prediction_matrix(const std::vector<AxisScores>& preds) {
  std::vector<double> m;
  m.reserve(preds.size() * kNumAxes);
  for (const auto& p : preds) m.insert(m.end(), p.values.begin(), p.values.end());
  return m;
}

void require_labeled(std::span<const data::Example> examples, const char* what) {
  for (const auto& e : examples) {
    if (!e.label) throw FormatError(std::string(what) + " utterance '" + e.utt_id + "' has no labels");
  }
}

}  // namespace

double dataset_loss(const model::Model& model, std::span<const data::Example> examples) {
  require_labeled(examples, "evaluation");
  const auto preds = prediction_matrix(model.predict(examples));
  std::vector<const data::Example*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  const auto labels = model::label_matrix(ptrs);
  return losses::multi_axis_loss(preds, labels, model.config().loss).value;
}

metrics::MetricReport evaluate_model(const model::Model& model, std::span<const data::Example> examples) {
  require_labeled(examples, "evaluation");
  const auto preds = model.predict(examples);
  std::vector<AxisScores> labels;
  std::vector<std::string> systems;
  for (const auto& e : examples) {
    labels.push_back(*e.label);
    systems.push_back(e.system_id);
  }
  return metrics::evaluate(preds, labels, systems);
}

TrainResult train_examples(const model::ModelConfig& config, const TrainConfig& tc, const data::NormStats& norm,
                           std::span<const data::Example> train, std::span<const data::Example> dev,
                           const TrainHooks& hooks) {
  tc.validate();
  require_labeled(train, "training");
  require_labeled(dev, "development");
  if (train.size() < 2) throw DomainError("training needs at least two examples");
  if (dev.empty()) throw DomainError("development set is empty");

  model::Model model(config, norm);
  const std::size_t batch_size = tc.resolved_batch_size(model.config().aggregation);
  nn::AdamState adam;
  adam.lr = tc.lr;
  EarlyStopping stopper(tc.patience);
  nn::ParamSet best = model.params();
  TrainHistory history;

  std::vector<data::FeatureSequence> cropped;
  std::vector<const data::FeatureSequence*> seq_ptrs;
  std::vector<const data::Example*> ex_ptrs;
  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto batches = make_batches(train.size(), batch_size, tc.seed, epoch);
    const std::uint64_t crop_seed = Rng::mix(tc.seed, 2 * epoch + 1);
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& idx = batches[bi];
      cropped.clear();
      ex_ptrs.clear();
      for (std::size_t i : idx) {
        Rng crop_rng(Rng::mix(crop_seed, i));
        cropped.push_back(data::random_crop(train[i].features, tc.crop_seconds, crop_rng));
        ex_ptrs.push_back(&train[i]);
      }
      seq_ptrs.clear();
      for (const auto& s : cropped) seq_ptrs.push_back(&s);
      const auto batch = model::make_batch(seq_ptrs);
      const auto labels = model::label_matrix(ex_ptrs);
      const double loss = model.loss_and_grad(batch, labels);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi + 1));
      }
      try {
        nn::adam_step(model.params(), adam);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi + 1));
      }
      loss_sum += loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.dev_loss = dataset_loss(model, dev);
    if (hooks.dev_loss_override) {
      if (auto forced = hooks.dev_loss_override(epoch, rec.dev_loss)) rec.dev_loss = *forced;
    }
    if (!std::isfinite(rec.dev_loss)) throw NumericError("non-finite dev loss at epoch " + std::to_string(epoch));
    rec.dev_report = evaluate_model(model, dev);
    if (stopper.update(epoch, rec.dev_loss)) best = model.params();
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
    history.epochs.push_back(std::move(rec));
    history.stopped_epoch = epoch;
    if (stopper.should_stop()) break;
  }

  for (auto& [name, t] : model.params()) t.values = best.at(name).values;
  nn::zero_grads(model.params());
  history.best_epoch = stopper.best_epoch();
  history.best_dev_loss = stopper.best_loss();

  model::TrainMeta meta;
  meta.epochs_run = history.stopped_epoch;
  meta.best_epoch = history.best_epoch;
  meta.best_dev_loss = history.best_dev_loss;
  return TrainResult{std::move(model), meta, std::move(history)};
}

TrainResult train(const model::ModelConfig& config, const TrainConfig& tc, const data::Manifest& train_set,
                  const data::Manifest& dev_set, const TrainHooks& hooks) {
  const auto encoders = data::canonical_encoder_order(config.encoders);
  const data::NormStats norm = data::fit_norm(train_set, encoders);
  const auto train_ex = data::load_examples(train_set, encoders, norm);
  const auto dev_ex = data::load_examples(dev_set, encoders, norm);
  TrainResult r = train_examples(config, tc, norm, train_ex, dev_ex, hooks);
  r.meta.dataset_fingerprint = train_set.fingerprint();
  return r;
}

// ---------------------------------------------------------------------------
// Grid

std::string default_model_id(const model::ModelConfig& config) {
  std::string id(model::aggregation_name(config.aggregation));
  id += '-';
  const auto encs = data::canonical_encoder_order(config.encoders);
  for (std::size_t i = 0; i < encs.size(); ++i) id += (i ? "+" : "") + encs[i];
  id += '-';
  id += losses::loss_name(config.loss.kind);
  return id;
}

GridSpec standard_grid(const std::vector<std::string>& full, const std::vector<std::string>& reduced,
                       const model::ModelConfig& base, const TrainConfig& train) {
  GridSpec grid;
  grid.train = train;
  using model::Aggregation;
  const std::vector<std::pair<Aggregation, const std::vector<std::string>*>> variants{
      {Aggregation::MLP, &reduced},
      {Aggregation::MLP, &full},
      {Aggregation::BLSTM_t, &full},
      {Aggregation::BLSTM_h, &full}};
  for (auto kind : {losses::LossKind::CCC, losses::LossKind::Con, losses::LossKind::DCQ, losses::LossKind::UT}) {
    for (const auto& [agg, encs] : variants) {
      GridCell cell;
      cell.model = base;
      cell.model.encoders = data::canonical_encoder_order(*encs);
      cell.model.aggregation = agg;
      cell.model.loss.kind = kind;
      cell.model_id = default_model_id(cell.model);
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

GridSpec product_grid(const std::vector<std::vector<std::string>>& encoder_sets,
                      const std::vector<model::Aggregation>& aggregations,
                      const std::vector<losses::LossKind>& loss_kinds, const model::ModelConfig& base,
                      const TrainConfig& train) {
  GridSpec grid;
  grid.train = train;
  for (auto kind : loss_kinds) {
    for (const auto& encs : encoder_sets) {
      for (auto agg : aggregations) {
        GridCell cell;
        cell.model = base;
        cell.model.encoders = data::canonical_encoder_order(encs);
        cell.model.aggregation = agg;
        cell.model.loss.kind = kind;
        cell.model_id = default_model_id(cell.model);
        grid.cells.push_back(std::move(cell));
      }
    }
  }
  return grid;
}

namespace {

struct LoadedSubset {
  data::NormStats norm;
  std::vector<data::Example> train;
  std::vector<data::Example> dev;
  std::vector<data::Example> pam;
  std::string error;
};

std::string subset_key(const std::vector<std::string>& encs) {
  std::string k;
  for (const auto& e : data::canonical_encoder_order(encs)) k += e + "\n";
  return k;
}

LeaderboardRow run_cell(const GridCell& cell, const TrainConfig& tc, const LoadedSubset& data,
                        const std::string& fingerprint, const GridOptions& options) {
  LeaderboardRow row;
  row.model_id = cell.model_id;
  row.config = cell.model.to_json();
  try {
    if (!data.error.empty()) throw FormatError(data.error);
    TrainResult r = train_examples(cell.model, tc, data.norm, data.train, data.dev);
    r.meta.dataset_fingerprint = fingerprint;
    const auto dev_report = evaluate_model(r.model, data.dev);
    row.dev_srcc = headline_srcc(dev_report);
    row.reports["dev"] = dev_report;
    if (!data.pam.empty()) {
      const auto pam_report = evaluate_model(r.model, data.pam);
      row.pam_srcc = headline_srcc(pam_report);
      row.reports["pam"] = pam_report;
    }
    if (options.out_dir) {
      const fs::path dir = *options.out_dir / cell.model_id;
      model::save_checkpoint(r.model, r.meta, dir / "checkpoint.aqck");
      std::ofstream(dir / "history.json") << r.history.to_json().dump(1) << '\n';
      row.checkpoint = (fs::path(cell.model_id) / "checkpoint.aqck").generic_string();
    }
  } catch (const std::exception& e) {
    row.error = e.what();
    row.dev_srcc.reset();
    row.pam_srcc.reset();
    row.reports.clear();
  }
  return row;
}

}  // namespace

Leaderboard run_ablation_grid(const GridSpec& grid, const data::Manifest& train_set, const data::Manifest& dev_set,
                              const data::Manifest* pam_set, const GridOptions& options) {
  if (grid.cells.empty()) throw ConfigError("ablation grid is empty");
  grid.train.validate();
  {
    std::map<std::string, int> ids;
    for (const auto& c : grid.cells) {
      if (++ids[c.model_id] > 1) throw ConfigError("duplicate model_id '" + c.model_id + "' in grid");
    }
  }

  // Load each distinct encoder subset once; cells only read it.
  std::map<std::string, LoadedSubset> subsets;
  for (const auto& cell : grid.cells) {
    const std::string key = subset_key(cell.model.encoders);
    if (subsets.contains(key)) continue;
    LoadedSubset& s = subsets[key];
    try {
      const auto encs = data::canonical_encoder_order(cell.model.encoders);
      s.norm = data::fit_norm(train_set, encs);
      s.train = data::load_examples(train_set, encs, s.norm);
      s.dev = data::load_examples(dev_set, encs, s.norm);
      if (pam_set != nullptr) s.pam = data::load_examples(*pam_set, encs, s.norm);
    } catch (const std::exception& e) {
      s.error = e.what();
    }
  }

  const std::string fingerprint = train_set.fingerprint();
  Leaderboard board;
  if (options.out_dir) board.base_dir = *options.out_dir;
  board.rows.resize(grid.cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.cells.size(); i = next++) {
      const auto& cell = grid.cells[i];
      board.rows[i] = run_cell(cell, grid.train, subsets.at(subset_key(cell.model.encoders)), fingerprint, options);
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, grid.cells.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return board;
}

}  // namespace aqa::training
