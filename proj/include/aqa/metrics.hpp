#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aqa/common.hpp"
#include "json.hpp"

namespace aqa::metrics {

double mse(std::span<const double> pred, std::span<const double> label);

// Sample Pearson correlation. DomainError when either vector is constant.
double pearson_lcc(std::span<const double> x, std::span<const double> y);

// 1-based ranks; tied entries share the mean of the ranks they span.
std::vector<double> fractional_ranks(std::span<const double> x);

// Pearson correlation of fractional ranks.
double spearman_srcc(std::span<const double> x, std::span<const double> y);

struct PairCounts {
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::int64_t tied_x_only = 0;
  std::int64_t tied_y_only = 0;
  std::int64_t tied_both = 0;
};

// O(N log N) pair classification (merge-sort inversion counting).
PairCounts count_pairs(std::span<const double> x, std::span<const double> y);

// Tie-corrected Kendall tau-b. DomainError when every pair is tied in x or
// every pair is tied in y.
double kendall_tau_b(std::span<const double> x, std::span<const double> y);
double kendall_tau_b(const PairCounts& counts);

enum class Level { Utterance = 0, System = 1 };
inline constexpr std::size_t kReportAxes = kNumAxes + 1;  // four axes + composite
inline constexpr std::size_t kCompositeRow = kNumAxes;

// nullopt marks a cell whose metric was undefined on this data.
struct MetricCell {
  std::optional<double> mse;
  std::optional<double> lcc;
  std::optional<double> srcc;
  std::optional<double> ktau;

  bool operator==(const MetricCell&) const = default;
};

struct MetricReport {
  std::array<std::array<MetricCell, 2>, kReportAxes> cells{};
  std::size_t n_utterances = 0;
  std::size_t n_systems = 0;
  std::vector<std::string> warnings;

  MetricCell& at(std::size_t row, Level level) { return cells[row][static_cast<std::size_t>(level)]; }
  const MetricCell& at(std::size_t row, Level level) const { return cells[row][static_cast<std::size_t>(level)]; }
  std::size_t defined_cells() const;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  // Human-readable table.
  std::string render() const;

  bool operator==(const MetricReport&) const = default;
};

std::string row_name(std::size_t row);  // pq pc ce cu composite

struct SystemMeans {
  std::vector<std::string> systems;  // lexicographic
  std::vector<std::size_t> counts;
  std::vector<AxisScores> pred;
  std::vector<AxisScores> label;
  std::vector<std::string> warnings;
};

// Per-system arithmetic means of predictions and labels. Systems listed in
// declared_systems that own no utterance are dropped with a warning.
SystemMeans system_level(std::span<const AxisScores> preds, std::span<const AxisScores> labels,
                         std::span<const std::string> system_of, std::span<const std::string> declared_systems = {});

// Fills the full 5 x 2 x 4 grid. A metric that is undefined on the data
// leaves its cell empty and appends a warning instead of aborting.
MetricReport evaluate(std::span<const AxisScores> preds, std::span<const AxisScores> labels,
                      std::span<const std::string> system_of);

}  // namespace aqa::metrics
