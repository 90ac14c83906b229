#include "aqa/leaderboard.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "aqa/common.hpp"

namespace aqa {

namespace fs = std::filesystem;

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::optional<double> headline_srcc(const metrics::MetricReport& report) {
  return report.at(metrics::kCompositeRow, metrics::Level::Utterance).srcc;
}

const LeaderboardRow* Leaderboard::find(const std::string& model_id) const {
  for (const auto& r : rows) {
    if (r.model_id == model_id) return &r;
  }
  return nullptr;
}

fs::path Leaderboard::checkpoint_path(const LeaderboardRow& row) const {
  if (row.checkpoint.empty()) throw FormatError("model '" + row.model_id + "' has no checkpoint");
  const fs::path p(row.checkpoint);
  return p.is_absolute() ? p : base_dir / p;
}

nlohmann::json Leaderboard::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json reports = nlohmann::json::object();
    for (const auto& [k, rep] : r.reports) reports[k] = rep.to_json();
    out.push_back({{"model_id", r.model_id},
                   {"checkpoint", r.checkpoint},
                   {"dev_srcc", opt_json(r.dev_srcc)},
                   {"pam_srcc", opt_json(r.pam_srcc)},
                   {"reports", reports},
                   {"config", r.config},
                   {"error", r.error}});
  }
  return {{"format", "aqa-leaderboard"}, {"version", 1}, {"rows", out}};
}

Leaderboard Leaderboard::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  try {
    if (!j.is_object() || j.value("format", "") != "aqa-leaderboard") throw FormatError("not a leaderboard file");
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported leaderboard version");
    Leaderboard b;
    b.base_dir = base_dir;
    for (const auto& r : j.at("rows")) {
      LeaderboardRow row;
      row.model_id = r.at("model_id").get<std::string>();
      if (row.model_id.empty()) throw FormatError("leaderboard row with empty model_id");
      if (b.find(row.model_id) != nullptr) throw FormatError("duplicate model_id '" + row.model_id + "'");
      row.checkpoint = r.value("checkpoint", "");
      row.dev_srcc = opt_from(r.value("dev_srcc", nlohmann::json(nullptr)));
      row.pam_srcc = opt_from(r.value("pam_srcc", nlohmann::json(nullptr)));
      if (r.contains("reports")) {
        for (const auto& [k, rep] : r.at("reports").items()) row.reports[k] = metrics::MetricReport::from_json(rep);
      }
      row.config = r.value("config", nlohmann::json(nullptr));
      row.error = r.value("error", "");
      b.rows.push_back(std::move(row));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed leaderboard: ") + e.what());
  }
}

Leaderboard Leaderboard::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open leaderboard '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("leaderboard '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

void Leaderboard::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write leaderboard '" + path.string() + "'");
  out << to_json().dump(1) << '\n';
}

std::string Leaderboard::render() const {
  std::ostringstream os;
  os << "model_id\tdev_srcc\tpam_srcc\tstatus\n";
  for (const auto& r : rows) {
    os << r.model_id << '\t' << fmt(r.dev_srcc) << '\t' << fmt(r.pam_srcc) << '\t'
       << (r.error.empty() ? "ok" : "error: " + r.error) << '\n';
  }
  return os.str();
}

}  // namespace aqa
