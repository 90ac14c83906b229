#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aqa/common.hpp"

namespace aqa::losses {

enum class LossKind { Con, UT, DCQ, CCC };

std::string_view loss_name(LossKind kind);  // "Con", "UT", "DCQ", "CCC"
LossKind parse_loss(std::string_view name);  // case-insensitive; throws ConfigError

struct LossConfig {
  LossKind kind = LossKind::UT;
  double margin = 0.5;          // contrastive hinge margin
  double clip_tau = 0.25;       // clipped-MSE dead zone
  double ut_con_weight = 0.5;   // weight of the contrastive term inside UT
  double dcq_dev_weight = 1.0;
  double dcq_rank_weight = 1.0;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // d value / d pred
  // Set when no pair carried information (e.g. DCQ with all labels equal).
  bool degenerate = false;
};

// Mean over unordered pairs i<j of max(0, |(p_i - p_j) - (l_i - l_j)| - margin).
LossValue contrastive_loss(std::span<const double> pred, std::span<const double> label, double margin);

// Mean over i of e_i^2 where |e_i| > tau, zero inside the dead zone.
LossValue clipped_mse(std::span<const double> pred, std::span<const double> label, double tau);

// clipped_mse + ut_con_weight * contrastive_loss.
LossValue utmos_loss(std::span<const double> pred, std::span<const double> label, const LossConfig& cfg);

// Over pairs with unequal labels: weighted sum of the mean absolute
// difference mismatch and the mean hinge on order inversions.
LossValue dcq_loss(std::span<const double> pred, std::span<const double> label, const LossConfig& cfg);

// 1 - CCC with population moments.
LossValue ccc_loss(std::span<const double> pred, std::span<const double> label);

LossValue single_axis_loss(std::span<const double> pred, std::span<const double> label, const LossConfig& cfg);

// pred and label are batch × 4 row-major. The result is the arithmetic mean
// of the four single-axis losses; grad has the same layout as pred.
LossValue multi_axis_loss(std::span<const double> pred, std::span<const double> label, const LossConfig& cfg);

}  // namespace aqa::losses
