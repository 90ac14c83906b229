#include "aqa/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "aqa/model.hpp"

namespace aqa {

namespace fs = std::filesystem;

namespace {

const char* key_name(RankKey key) { return key == RankKey::Dev ? "dev_srcc" : "pam_srcc"; }

// Failed rows are skipped; a trained row without a usable score is an error.
std::optional<double> score_of(const LeaderboardRow& r, RankKey key) {
  if (!r.error.empty()) return std::nullopt;
  const auto& s = key == RankKey::Dev ? r.dev_srcc : r.pam_srcc;
  if (!s || std::isnan(*s)) {
    throw SelectionError("model '" + r.model_id + "' has no " + key_name(key) + " to rank by");
  }
  return s;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::size_t parse_count(const std::string& s, const std::string& strategy) {
  try {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad count '" + s + "' in ensemble strategy '" + strategy + "'");
  }
}

}  // namespace

std::vector<std::string> rank_models(const Leaderboard& board, RankKey key) {
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& r : board.rows) {
    if (auto s = score_of(r, key)) scored.emplace_back(*s, r.model_id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> ids;
  for (auto& [s, id] : scored) ids.push_back(std::move(id));
  return ids;
}

std::vector<std::string> select_topk(const Leaderboard& board, RankKey key, std::size_t k) {
  if (k == 0) throw SelectionError("top-k selection needs k >= 1");
  auto ranked = rank_models(board, key);
  if (ranked.size() < k) {
    throw SelectionError("top-" + std::to_string(k) + " requested but only " + std::to_string(ranked.size()) +
                         " trained models are available");
  }
  ranked.resize(k);
  return ranked;
}

std::vector<std::string> select_intersection(const Leaderboard& board, std::size_t n_dev, std::size_t n_pam) {
  auto dev = rank_models(board, RankKey::Dev);
  auto pam = rank_models(board, RankKey::Pam);
  dev.resize(std::min(dev.size(), n_dev));
  pam.resize(std::min(pam.size(), n_pam));
  const std::set<std::string> pam_set(pam.begin(), pam.end());
  std::vector<std::string> out;
  for (const auto& id : dev) {
    if (pam_set.contains(id)) out.push_back(id);
  }
  if (out.empty()) {
    throw SelectionError("dev top " + std::to_string(n_dev) + " and pam top " + std::to_string(n_pam) +
                         " share no model");
  }
  return sorted(std::move(out));
}

std::vector<std::string> select_all(const Leaderboard& board) {
  std::vector<std::string> out;
  for (const auto& r : board.rows) {
    if (r.error.empty()) out.push_back(r.model_id);
  }
  if (out.empty()) throw SelectionError("leaderboard has no usable model");
  return sorted(std::move(out));
}

nlohmann::json EnsembleSpec::to_json() const {
  return {{"format", "aqa-ensemble"}, {"version", 1}, {"strategy", strategy}, {"members", members}};
}

EnsembleSpec EnsembleSpec::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "aqa-ensemble") throw FormatError("not an ensemble spec");
    EnsembleSpec s;
    s.strategy = j.at("strategy").get<std::string>();
    s.members = sorted(j.at("members").get<std::vector<std::string>>());
    if (s.members.empty()) throw FormatError("ensemble spec has no members");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ensemble spec: ") + e.what());
  }
}

EnsembleSpec make_ensemble_spec(const Leaderboard& board, const std::string& strategy,
                                const std::vector<std::string>& explicit_members) {
  EnsembleSpec spec;
  spec.strategy = strategy;
  if (strategy == "all") {
    spec.members = select_all(board);
  } else if (strategy == "explicit") {
    if (explicit_members.empty()) throw ConfigError("explicit ensemble needs at least one member");
    for (const auto& id : explicit_members) {
      const auto* row = board.find(id);
      if (row == nullptr) throw SelectionError("unknown model '" + id + "'");
      if (!row->error.empty()) throw SelectionError("model '" + id + "' failed to train");
    }
    spec.members = sorted(explicit_members);
    spec.members.erase(std::unique(spec.members.begin(), spec.members.end()), spec.members.end());
  } else if (strategy.starts_with("intersection:")) {
    const std::string rest = strategy.substr(13);
    const auto comma = rest.find(',');
    if (comma == std::string::npos) throw ConfigError("intersection strategy needs 'intersection:<dev>,<pam>'");
    spec.members = select_intersection(board, parse_count(rest.substr(0, comma), strategy),
                                       parse_count(rest.substr(comma + 1), strategy));
  } else if (strategy.starts_with("topk:")) {
    const std::string rest = strategy.substr(5);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw ConfigError("topk strategy needs 'topk:<dev|pam>:<k>'");
    const std::string key = rest.substr(0, colon);
    if (key != "dev" && key != "pam") throw ConfigError("topk key must be 'dev' or 'pam', got '" + key + "'");
    spec.members = sorted(select_topk(board, key == "dev" ? RankKey::Dev : RankKey::Pam,
                                      parse_count(rest.substr(colon + 1), strategy)));
  } else {
    throw ConfigError("unknown ensemble strategy '" + strategy + "'");
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Predictions

std::string Predictions::to_tsv() const {
  std::string out = "utt_id\tsystem_id";
  for (auto a : kAxes) out += "\t" + std::string(axis_name(a));
  out += '\n';
  char buf[40];
  for (std::size_t i = 0; i < size(); ++i) {
    out += utt_ids[i] + '\t' + system_ids[i];
    for (double v : scores[i].values) {
      std::snprintf(buf, sizeof buf, "\t%.17g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Predictions Predictions::from_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("utt_id\tsystem_id")) {
    throw FormatError("prediction file lacks the utt_id/system_id header");
  }
  Predictions p;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 2 + kNumAxes) {
      throw FormatError("prediction line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(2 + kNumAxes));
    }
    AxisScores s;
    for (std::size_t a = 0; a < kNumAxes; ++a) {
      try {
        std::size_t pos = 0;
        s.values[a] = std::stod(fields[2 + a], &pos);
        if (pos != fields[2 + a].size()) throw std::invalid_argument(fields[2 + a]);
      } catch (const std::exception&) {
        throw FormatError("prediction line " + std::to_string(line_no) + ": bad number '" + fields[2 + a] + "'");
      }
    }
    p.utt_ids.push_back(fields[0]);
    p.system_ids.push_back(fields[1]);
    p.scores.push_back(s);
  }
  return p;
}

void Predictions::write_tsv(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write predictions '" + path.string() + "'");
  out << to_tsv();
}

Predictions Predictions::read_tsv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open predictions '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_tsv(ss.str());
}

Predictions predict_checkpoint(const fs::path& checkpoint, const data::Manifest& manifest) {
  const auto ck = model::load_checkpoint(checkpoint);
  const auto examples = data::load_examples(manifest, ck.model.encoders(), ck.model.norm());
  Predictions p;
  p.scores = ck.model.predict(examples);
  for (const auto& e : examples) {
    p.utt_ids.push_back(e.utt_id);
    p.system_ids.push_back(e.system_id);
  }
  return p;
}

Predictions average_predictions(const std::map<std::string, Predictions>& members) {
  if (members.empty()) throw SelectionError("cannot average an empty ensemble");
  const Predictions& first = members.begin()->second;
  Predictions out;
  out.utt_ids = first.utt_ids;
  out.system_ids = first.system_ids;
  out.scores.assign(first.size(), AxisScores{});
  std::size_t k = 0;
  for (const auto& [id, p] : members) {  // std::map iterates in ascending id order
    if (p.utt_ids != first.utt_ids) {
      throw FormatError("member '" + id + "' predicts a different utterance list than '" + members.begin()->first +
                        "'");
    }
    ++k;
    const double kd = static_cast<double>(k);
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t a = 0; a < kNumAxes; ++a) {
        double& m = out.scores[i].values[a];
        m += (p.scores[i].values[a] - m) / kd;
      }
    }
  }
  return out;
}

Predictions ensemble_predict(const Leaderboard& board, const std::vector<std::string>& members,
                             const data::Manifest& manifest) {
  std::map<std::string, Predictions> preds;
  for (const auto& id : members) {
    const auto* row = board.find(id);
    if (row == nullptr) throw SelectionError("unknown model '" + id + "'");
    if (!row->error.empty()) throw SelectionError("model '" + id + "' failed to train: " + row->error);
    try {
      preds.emplace(id, predict_checkpoint(board.checkpoint_path(*row), manifest));
    } catch (const FormatError& e) {
      throw FormatError("member '" + id + "': " + e.detail(), e.byte_offset());
    }
  }
  return average_predictions(preds);
}

metrics::MetricReport evaluate_predictions(const Predictions& preds, const data::Manifest& manifest) {
  std::map<std::string, const data::Utterance*> by_id;
  for (const auto& u : manifest.entries) by_id[u.utt_id] = &u;
  std::vector<AxisScores> labels;
  std::vector<std::string> systems;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto it = by_id.find(preds.utt_ids[i]);
    if (it == by_id.end()) throw FormatError("predicted utterance '" + preds.utt_ids[i] + "' is not in the manifest");
    if (!it->second->scores) throw FormatError("utterance '" + preds.utt_ids[i] + "' has no labels");
    labels.push_back(*it->second->scores);
    systems.push_back(it->second->system_id);
  }
  if (preds.size() != manifest.entries.size()) {
    throw FormatError("predictions cover " + std::to_string(preds.size()) + " utterances but the manifest lists " +
                      std::to_string(manifest.entries.size()));
  }
  std::set<std::string> seen(preds.utt_ids.begin(), preds.utt_ids.end());
  if (seen.size() != preds.size()) throw FormatError("predictions list an utterance more than once");
  return metrics::evaluate(preds.scores, labels, systems);
}

// ---------------------------------------------------------------------------
// Strategy comparison

namespace {

struct NamedSelection {
  std::string name;
  std::function<std::vector<std::string>()> select;
};

std::vector<NamedSelection> strategy_table(const Leaderboard& board, const CompareOptions& o) {
  return {
      {"Submitted", [&] { return select_intersection(board, o.n_dev, o.n_pam); }},
      {"All models", [&] { return select_all(board); }},
      {"PAM top 8", [&] { return sorted(select_topk(board, RankKey::Pam, 8)); }},
      {"PAM top 4", [&] { return sorted(select_topk(board, RankKey::Pam, 4)); }},
      {"Dev top 8", [&] { return sorted(select_topk(board, RankKey::Dev, 8)); }},
      {"PAM top 1", [&] { return select_topk(board, RankKey::Pam, 1); }},
  };
}

template <typename Provider>
std::vector<StrategyRow> compare_impl(const Leaderboard& board, Provider&& member_preds,
                                      const data::Manifest& eval_set, const CompareOptions& options) {
  std::vector<StrategyRow> rows;
  for (const auto& s : strategy_table(board, options)) {
    StrategyRow row;
    row.name = s.name;
    try {
      row.members = s.select();
      std::map<std::string, Predictions> chosen;
      for (const auto& id : row.members) chosen.emplace(id, member_preds(id));
      row.report = evaluate_predictions(average_predictions(chosen), eval_set);
    } catch (const SelectionError& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<StrategyRow> compare_strategies(const Leaderboard& board, const data::Manifest& eval_set,
                                            const CompareOptions& options) {
  std::map<std::string, Predictions> cache;
  auto provider = [&](const std::string& id) -> const Predictions& {
    auto it = cache.find(id);
    if (it == cache.end()) {
      const auto* row = board.find(id);
      it = cache.emplace(id, predict_checkpoint(board.checkpoint_path(*row), eval_set)).first;
    }
    return it->second;
  };
  return compare_impl(board, provider, eval_set, options);
}

std::vector<StrategyRow> compare_strategies(const Leaderboard& board,
                                            const std::map<std::string, Predictions>& member_predictions,
                                            const data::Manifest& eval_set, const CompareOptions& options) {
  auto provider = [&](const std::string& id) -> const Predictions& {
    const auto it = member_predictions.find(id);
    if (it == member_predictions.end()) throw FormatError("no predictions supplied for model '" + id + "'");
    return it->second;
  };
  return compare_impl(board, provider, eval_set, options);
}

std::string render_comparison(const std::vector<StrategyRow>& rows) {
  std::ostringstream os;
  os << "strategy\tmembers\tutt_srcc\tsys_srcc\tutt_mse\n";
  char buf[32];
  auto f = [&](const std::optional<double>& v) -> std::string {
    if (!v) return "-";
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
  };
  for (const auto& r : rows) {
    os << r.name << '\t';
    if (!r.error.empty()) {
      os << "-\t-\t-\t-\t(" << r.error << ")\n";
      continue;
    }
    os << r.members.size() << '\t';
    const auto& utt = r.report.at(metrics::kCompositeRow, metrics::Level::Utterance);
    const auto& sys = r.report.at(metrics::kCompositeRow, metrics::Level::System);
    os << f(utt.srcc) << '\t' << f(sys.srcc) << '\t' << f(utt.mse) << '\n';
  }
  return os.str();
}

}  // namespace aqa
