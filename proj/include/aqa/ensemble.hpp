#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "aqa/common.hpp"
#include "aqa/data.hpp"
#include "aqa/leaderboard.hpp"
#include "aqa/metrics.hpp"
#include "json.hpp"

namespace aqa {

enum class RankKey { Dev, Pam };

// Rows without an error, ordered by descending score; equal scores fall back
// to ascending model_id. A trained row lacking the score (or holding NaN)
// raises SelectionError naming it.
std::vector<std::string> rank_models(const Leaderboard& board, RankKey key);

// The k best models under `key`. SelectionError when fewer than k trained.
std::vector<std::string> select_topk(const Leaderboard& board, RankKey key, std::size_t k);

// Models that are both in the dev top n_dev and the pam top n_pam, in
// ascending model_id order. SelectionError when the result is empty.
std::vector<std::string> select_intersection(const Leaderboard& board, std::size_t n_dev, std::size_t n_pam);

// Every row without an error, ascending model_id.
std::vector<std::string> select_all(const Leaderboard& board);

struct EnsembleSpec {
  std::string strategy;  // "intersection:12,12", "topk:pam:4", "all", "explicit"
  std::vector<std::string> members;  // ascending model_id

  nlohmann::json to_json() const;
  static EnsembleSpec from_json(const nlohmann::json& j);
  bool operator==(const EnsembleSpec&) const = default;
};

// Parses the strategy strings above ("explicit" needs `explicit_members`).
EnsembleSpec make_ensemble_spec(const Leaderboard& board, const std::string& strategy,
                                const std::vector<std::string>& explicit_members = {});

// Per-utterance predictions in manifest order.
struct Predictions {
  std::vector<std::string> utt_ids;
  std::vector<std::string> system_ids;
  std::vector<AxisScores> scores;

  std::size_t size() const { return utt_ids.size(); }
  // Tab-separated, header line then one row per utterance, %.17g values.
  std::string to_tsv() const;
  static Predictions from_tsv(const std::string& text);
  void write_tsv(const std::filesystem::path& path) const;
  static Predictions read_tsv(const std::filesystem::path& path);
  bool operator==(const Predictions&) const = default;
};

// Member predictions from one checkpoint on every manifest entry.
Predictions predict_checkpoint(const std::filesystem::path& checkpoint, const data::Manifest& manifest);

// Incremental arithmetic mean over members in ascending model_id order. All
// members must list the same utterances in the same order.
Predictions average_predictions(const std::map<std::string, Predictions>& members);

// Loads each member checkpoint from the leaderboard and averages.
Predictions ensemble_predict(const Leaderboard& board, const std::vector<std::string>& members,
                             const data::Manifest& manifest);

// Scores predictions against the manifest labels, matched by utt_id. The two
// must cover the same utterances exactly (FormatError otherwise).
metrics::MetricReport evaluate_predictions(const Predictions& preds, const data::Manifest& manifest);

struct StrategyRow {
  std::string name;
  std::vector<std::string> members;
  metrics::MetricReport report;
  std::string error;  // selection failure
};

struct CompareOptions {
  std::size_t n_dev = 12;
  std::size_t n_pam = 12;
};

// Rows: Submitted (intersection), All models, PAM top 8, PAM top 4,
// Dev top 8, PAM top 1. Each member is predicted once and reused.
std::vector<StrategyRow> compare_strategies(const Leaderboard& board, const data::Manifest& eval_set,
                                            const CompareOptions& options = {});

// Same table, with member predictions supplied (for example read back from
// TSV files) instead of computed from checkpoints.
std::vector<StrategyRow> compare_strategies(const Leaderboard& board,
                                            const std::map<std::string, Predictions>& member_predictions,
                                            const data::Manifest& eval_set, const CompareOptions& options = {});

std::string render_comparison(const std::vector<StrategyRow>& rows);

}  // namespace aqa
