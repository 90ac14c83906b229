#include "aqa/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace aqa::losses {

namespace {

void require_same_size(std::span<const double> pred, std::span<const double> label, std::size_t min_n,
                       const char* what) {
  if (pred.size() != label.size()) throw ConfigError(std::string(what) + ": prediction/label length mismatch");
  if (pred.size() < min_n) {
    throw DomainError(std::string(what) + " needs at least " + std::to_string(min_n) + " samples, got " +
                      std::to_string(pred.size()));
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::Con: return "Con";
    case LossKind::UT: return "UT";
    case LossKind::DCQ: return "DCQ";
    case LossKind::CCC: return "CCC";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "con" || lower == "contrastive") return LossKind::Con;
  if (lower == "ut" || lower == "utmos") return LossKind::UT;
  if (lower == "dcq") return LossKind::DCQ;
  if (lower == "ccc") return LossKind::CCC;
  throw ConfigError("unknown loss '" + std::string(name) + "' (expected Con, UT, DCQ or CCC)");
}

void LossConfig::validate() const {
  if (!(margin >= 0.0)) throw ConfigError("loss margin must be >= 0");
  if (!(clip_tau >= 0.0)) throw ConfigError("loss clip_tau must be >= 0");
  if (!std::isfinite(ut_con_weight) || !std::isfinite(dcq_dev_weight) || !std::isfinite(dcq_rank_weight)) {
    throw ConfigError("loss weights must be finite");
  }
}

LossValue contrastive_loss(std::span<const double> pred, std::span<const double> label, double margin) {
  require_same_size(pred, label, 2, "contrastive loss");
  const std::size_t n = pred.size();
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  LossValue out;
  out.grad.assign(n, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (pred[i] - pred[j]) - (label[i] - label[j]);
      const double excess = std::abs(d) - margin;
      if (excess <= 0.0) continue;
      sum += excess;
      const double s = sign(d) / pairs;
      out.grad[i] += s;
      out.grad[j] -= s;
    }
  }
  out.value = sum / pairs;
  return out;
}

LossValue clipped_mse(std::span<const double> pred, std::span<const double> label, double tau) {
  require_same_size(pred, label, 1, "clipped MSE");
  const std::size_t n = pred.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  LossValue out;
  out.grad.assign(n, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred[i] - label[i];
    if (std::abs(e) <= tau) continue;
    sum += e * e;
    out.grad[i] = 2.0 * e * inv_n;
  }
  out.value = sum * inv_n;
  return out;
}

LossValue utmos_loss(std::span<const double> pred, std::span<const double> label, const LossConfig& cfg) {
  require_same_size(pred, label, 2, "UTMOS loss");
  LossValue out = clipped_mse(pred, label, cfg.clip_tau);
  const LossValue con = contrastive_loss(pred, label, cfg.margin);
  out.value += cfg.ut_con_weight * con.value;
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += cfg.ut_con_weight * con.grad[i];
  return out;
}

LossValue dcq_loss(std::span<const double> pred, std::span<const double> label, const LossConfig& cfg) {
  require_same_size(pred, label, 2, "DCQ loss");
  const std::size_t n = pred.size();
  LossValue out;
  out.grad.assign(n, 0.0);
  std::vector<double> g_dev(n, 0.0);
  std::vector<double> g_rank(n, 0.0);
  std::size_t pairs = 0;
  double dev = 0.0;
  double rank = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dl = label[i] - label[j];
      if (dl == 0.0) continue;
      ++pairs;
      const double dp = pred[i] - pred[j];
      const double d = dp - dl;
      dev += std::abs(d);
      g_dev[i] += sign(d);
      g_dev[j] -= sign(d);
      const double inversion = -dp * sign(dl);
      if (inversion > 0.0) {
        rank += inversion;
        g_rank[i] -= sign(dl);
        g_rank[j] += sign(dl);
      }
    }
  }
  if (pairs == 0) {
    out.degenerate = true;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(pairs);
  out.value = cfg.dcq_dev_weight * dev * inv + cfg.dcq_rank_weight * rank * inv;
  for (std::size_t i = 0; i < n; ++i) {
    out.grad[i] = (cfg.dcq_dev_weight * g_dev[i] + cfg.dcq_rank_weight * g_rank[i]) * inv;
  }
  return out;
}

LossValue ccc_loss(std::span<const double> pred, std::span<const double> label) {
  require_same_size(pred, label, 2, "CCC loss");
  const std::size_t n = pred.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double mp = 0.0;
  double ml = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += pred[i];
    ml += label[i];
  }
  mp *= inv_n;
  ml *= inv_n;
  double vp = 0.0;
  double vl = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = pred[i] - mp;
    const double b = label[i] - ml;
    vp += a * a;
    vl += b * b;
    cov += a * b;
  }
  vp *= inv_n;
  vl *= inv_n;
  cov *= inv_n;
  const double gap = mp - ml;
  const double denom = vp + vl + gap * gap;
  if (denom == 0.0) throw DomainError("CCC loss undefined: predictions and labels are all identical");

  LossValue out;
  out.value = 1.0 - 2.0 * cov / denom;
  out.grad.assign(n, 0.0);
  // dcov/dp_i = (l_i - ml)/n ; d denom/dp_i = 2 (p_i - ml)/n
  for (std::size_t i = 0; i < n; ++i) {
    const double d_cov = (label[i] - ml) * inv_n;
    const double d_denom = 2.0 * (pred[i] - ml) * inv_n;
    out.grad[i] = -2.0 * (d_cov * denom - cov * d_denom) / (denom * denom);
  }
  return out;
}

LossValue single_axis_loss(std::span<const double> pred, std::span<const double> label, const LossConfig& cfg) {
  switch (cfg.kind) {
    case LossKind::Con: return contrastive_loss(pred, label, cfg.margin);
    case LossKind::UT: return utmos_loss(pred, label, cfg);
    case LossKind::DCQ: return dcq_loss(pred, label, cfg);
    case LossKind::CCC: return ccc_loss(pred, label);
  }
  throw ConfigError("unknown loss kind");
}

LossValue multi_axis_loss(std::span<const double> pred, std::span<const double> label, const LossConfig& cfg) {
  if (pred.size() != label.size() || pred.size() % kNumAxes != 0) {
    throw ConfigError("multi-axis loss: expected batch x 4 predictions and labels");
  }
  const std::size_t n = pred.size() / kNumAxes;
  LossValue out;
  out.grad.assign(pred.size(), 0.0);
  std::vector<double> p(n);
  std::vector<double> l(n);
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = pred[i * kNumAxes + k];
      l[i] = label[i * kNumAxes + k];
    }
    const LossValue axis = single_axis_loss(p, l, cfg);
    out.value += axis.value;
    out.degenerate = out.degenerate || axis.degenerate;
    for (std::size_t i = 0; i < n; ++i) out.grad[i * kNumAxes + k] = axis.grad[i] / static_cast<double>(kNumAxes);
  }
  out.value /= static_cast<double>(kNumAxes);
  return out;
}

}  // namespace aqa::losses
