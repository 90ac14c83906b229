#include "aqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace aqa::metrics {

namespace {

void require_aligned(std::span<const double> x, std::span<const double> y, std::size_t min_n, const char* what) {
  if (x.size() != y.size()) throw ConfigError(std::string(what) + ": length mismatch");
  if (x.size() < min_n) {
    throw DomainError(std::string(what) + " needs at least " + std::to_string(min_n) + " samples");
  }
}

// Counts inversions of v while merge-sorting it; equal values are not
// inversions.
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, scratch, lo, mid) + merge_count(v, scratch, mid, hi);
  std::size_t i = lo;
  std::size_t j = mid;
  std::size_t k = lo;
  while (i < mid && j < hi) {
    if (v[i] <= v[j]) {
      scratch[k++] = v[i++];
    } else {
      swaps += static_cast<std::int64_t>(mid - i);
      scratch[k++] = v[j++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

std::int64_t tied_pairs_sorted(std::span<const double> sorted) {
  std::int64_t total = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += static_cast<std::int64_t>(run * (run - 1) / 2);
      run = 1;
    }
  }
  return total;
}

template <typename Fn>
std::optional<double> try_metric(Fn&& fn, std::vector<std::string>& warnings, const std::string& where) {
  try {
    const double v = fn();
    if (!std::isfinite(v)) {
      warnings.push_back(where + ": non-finite value");
      return std::nullopt;
    }
    return v;
  } catch (const DomainError& e) {
    warnings.push_back(where + ": " + e.what());
    return std::nullopt;
  }
}

MetricCell fill_cell(std::span<const double> p, std::span<const double> l, std::vector<std::string>& warnings,
                     const std::string& where) {
  MetricCell c;
  c.mse = try_metric([&] { return mse(p, l); }, warnings, where + " mse");
  c.lcc = try_metric([&] { return pearson_lcc(p, l); }, warnings, where + " lcc");
  c.srcc = try_metric([&] { return spearman_srcc(p, l); }, warnings, where + " srcc");
  c.ktau = try_metric([&] { return kendall_tau_b(p, l); }, warnings, where + " ktau");
  return c;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> label) {
  require_aligned(pred, label, 1, "mse");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - label[i];
    sum += e * e;
  }
  return sum / static_cast<double>(pred.size());
}

double pearson_lcc(std::span<const double> x, std::span<const double> y) {
  require_aligned(x, y, 2, "pearson");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x[i] - mx;
    const double b = y[i] - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && x[order[end]] == x[order[start]]) ++end;
    // positions start..end-1 hold ranks start+1..end
    const double rank = static_cast<double>(start + 1 + end) / 2.0;
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

double spearman_srcc(std::span<const double> x, std::span<const double> y) {
  require_aligned(x, y, 2, "spearman");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson_lcc(rx, ry);
}

PairCounts count_pairs(std::span<const double> x, std::span<const double> y) {
  require_aligned(x, y, 2, "kendall");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const std::int64_t tied_x = tied_pairs_sorted(xs);
  std::int64_t tied_both = 0;
  {
    std::size_t run = 1;
    for (std::size_t i = 1; i <= n; ++i) {
      if (i < n && xs[i] == xs[i - 1] && ys[i] == ys[i - 1]) {
        ++run;
      } else {
        tied_both += static_cast<std::int64_t>(run * (run - 1) / 2);
        run = 1;
      }
    }
  }
  std::vector<double> scratch(n);
  const std::int64_t discordant = merge_count(ys, scratch, 0, n);  // ys is now sorted
  const std::int64_t tied_y = tied_pairs_sorted(ys);
  const auto total = static_cast<std::int64_t>(n * (n - 1) / 2);

  PairCounts c;
  c.tied_both = tied_both;
  c.tied_x_only = tied_x - tied_both;
  c.tied_y_only = tied_y - tied_both;
  c.discordant = discordant;
  c.concordant = total - tied_x - tied_y + tied_both - discordant;
  return c;
}

double kendall_tau_b(const PairCounts& c) {
  // Pairs untied in x are C + D + (tied in y only), and symmetrically for y.
  const std::int64_t untied_x = c.concordant + c.discordant + c.tied_y_only;
  const std::int64_t untied_y = c.concordant + c.discordant + c.tied_x_only;
  if (untied_x == 0 || untied_y == 0) throw DomainError("kendall tau-b undefined: every pair is tied in one vector");
  return static_cast<double>(c.concordant - c.discordant) /
         std::sqrt(static_cast<double>(untied_x) * static_cast<double>(untied_y));
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) { return kendall_tau_b(count_pairs(x, y)); }

// ---------------------------------------------------------------------------

std::string row_name(std::size_t row) {
  if (row < kNumAxes) return std::string(axis_name(kAxes[row]));
  return "composite";
}

std::size_t MetricReport::defined_cells() const {
  std::size_t n = 0;
  for (const auto& row : cells) {
    for (const auto& c : row) n += c.mse.has_value() + c.lcc.has_value() + c.srcc.has_value() + c.ktau.has_value();
  }
  return n;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["format"] = "aqa-metric-report";
  j["version"] = 1;
  j["n_utterances"] = n_utterances;
  j["n_systems"] = n_systems;
  nlohmann::json grid = nlohmann::json::object();
  for (std::size_t row = 0; row < kReportAxes; ++row) {
    nlohmann::json levels = nlohmann::json::object();
    for (Level level : {Level::Utterance, Level::System}) {
      const auto& c = at(row, level);
      levels[level == Level::Utterance ? "utterance" : "system"] = {
          {"mse", opt_json(c.mse)}, {"lcc", opt_json(c.lcc)}, {"srcc", opt_json(c.srcc)}, {"ktau", opt_json(c.ktau)}};
    }
    grid[row_name(row)] = levels;
  }
  j["cells"] = grid;
  j["warnings"] = warnings;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "aqa-metric-report" || j.at("version") != 1) throw FormatError("not a version-1 metric report");
    MetricReport r;
    r.n_utterances = j.at("n_utterances").get<std::size_t>();
    r.n_systems = j.at("n_systems").get<std::size_t>();
    for (std::size_t row = 0; row < kReportAxes; ++row) {
      const auto& levels = j.at("cells").at(row_name(row));
      for (Level level : {Level::Utterance, Level::System}) {
        const auto& c = levels.at(level == Level::Utterance ? "utterance" : "system");
        auto& cell = r.at(row, level);
        cell.mse = opt_from(c, "mse");
        cell.lcc = opt_from(c, "lcc");
        cell.srcc = opt_from(c, "srcc");
        cell.ktau = opt_from(c, "ktau");
      }
    }
    if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed metric report: ") + e.what());
  }
}

std::string MetricReport::render() const {
  std::ostringstream out;
  auto fmt = [](const std::optional<double>& v) {
    char buf[32];
    if (v) {
      std::snprintf(buf, sizeof buf, "%9.4f", *v);
    } else {
      std::snprintf(buf, sizeof buf, "%9s", "-");
    }
    return std::string(buf);
  };
  out << "axis       level         mse       lcc      srcc      ktau\n";
  for (std::size_t row = 0; row < kReportAxes; ++row) {
    for (Level level : {Level::Utterance, Level::System}) {
      const auto& c = at(row, level);
      char head[40];
      std::snprintf(head, sizeof head, "%-10s %-9s", row_name(row).c_str(),
                    level == Level::Utterance ? "utterance" : "system");
      out << head << ' ' << fmt(c.mse) << ' ' << fmt(c.lcc) << ' ' << fmt(c.srcc) << ' ' << fmt(c.ktau) << '\n';
    }
  }
  return out.str();
}

SystemMeans system_level(std::span<const AxisScores> preds, std::span<const AxisScores> labels,
                         std::span<const std::string> system_of, std::span<const std::string> declared_systems) {
  if (preds.size() != labels.size() || preds.size() != system_of.size()) {
    throw ConfigError("system_level: predictions, labels and system ids must align");
  }
  struct Acc {
    std::size_t n = 0;
    AxisScores p;
    AxisScores l;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto& a = acc[system_of[i]];
    ++a.n;
    for (std::size_t k = 0; k < kNumAxes; ++k) {
      a.p[k] += preds[i][k];
      a.l[k] += labels[i][k];
    }
  }
  SystemMeans out;
  for (const auto& s : declared_systems) {
    if (!acc.contains(s)) out.warnings.push_back("system '" + s + "' has no utterances; excluded");
  }
  for (const auto& [name, a] : acc) {
    AxisScores p;
    AxisScores l;
    for (std::size_t k = 0; k < kNumAxes; ++k) {
      p[k] = a.p[k] / static_cast<double>(a.n);
      l[k] = a.l[k] / static_cast<double>(a.n);
    }
    out.systems.push_back(name);
    out.counts.push_back(a.n);
    out.pred.push_back(p);
    out.label.push_back(l);
  }
  return out;
}

namespace {

void fill_level(MetricReport& report, Level level, std::span<const AxisScores> preds,
                std::span<const AxisScores> labels) {
  const std::size_t n = preds.size();
  std::vector<double> p(n);
  std::vector<double> l(n);
  const std::string level_name = level == Level::Utterance ? "utterance" : "system";
  for (std::size_t row = 0; row < kReportAxes; ++row) {
    for (std::size_t i = 0; i < n; ++i) {
      if (row < kNumAxes) {
        p[i] = preds[i][row];
        l[i] = labels[i][row];
      } else {
        p[i] = composite_score(preds[i]);
        l[i] = composite_score(labels[i]);
      }
    }
    report.at(row, level) = fill_cell(p, l, report.warnings, row_name(row) + "/" + level_name);
  }
}

}  // namespace

MetricReport evaluate(std::span<const AxisScores> preds, std::span<const AxisScores> labels,
                      std::span<const std::string> system_of) {
  if (preds.size() != labels.size() || preds.size() != system_of.size()) {
    throw ConfigError("evaluate: predictions, labels and system ids must align");
  }
  MetricReport report;
  report.n_utterances = preds.size();
  fill_level(report, Level::Utterance, preds, labels);
  const SystemMeans sys = system_level(preds, labels, system_of);
  report.n_systems = sys.systems.size();
  report.warnings.insert(report.warnings.end(), sys.warnings.begin(), sys.warnings.end());
  fill_level(report, Level::System, sys.pred, sys.label);
  return report;
}

}  // namespace aqa::metrics
