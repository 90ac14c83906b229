#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aqa/metrics.hpp"
#include "json.hpp"

namespace aqa {

// One trained configuration. dev_srcc / pam_srcc are utterance-level SRCC of
// the composite score on the respective evaluation set.
struct LeaderboardRow {
  std::string model_id;
  std::string checkpoint;  // relative to the leaderboard file
  std::optional<double> dev_srcc;
  std::optional<double> pam_srcc;
  std::map<std::string, metrics::MetricReport> reports;  // "dev", "pam", ...
  nlohmann::json config;                                 // ModelConfig as JSON
  std::string error;                                     // non-empty when the config failed

  bool operator==(const LeaderboardRow&) const = default;
};

struct Leaderboard {
  std::vector<LeaderboardRow> rows;
  std::filesystem::path base_dir;  // checkpoint paths resolve against this

  const LeaderboardRow* find(const std::string& model_id) const;
  std::filesystem::path checkpoint_path(const LeaderboardRow& row) const;

  nlohmann::json to_json() const;
  static Leaderboard from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static Leaderboard load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  // Tab-separated summary, one line per row.
  std::string render() const;

  bool operator==(const Leaderboard& o) const { return rows == o.rows; }
};

// Composite utterance-level SRCC, if defined.
std::optional<double> headline_srcc(const metrics::MetricReport& report);

}  // namespace aqa
