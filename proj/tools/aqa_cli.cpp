// aqa: command-line driver for corpus synthesis, training, evaluation and
// ensembling. Every command writes into the run directory given by --out,
// starting with a frozen copy of its resolved configuration (config.json).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aqa/data.hpp"
#include "aqa/ensemble.hpp"
#include "aqa/leaderboard.hpp"
#include "aqa/model.hpp"
#include "aqa/synth.hpp"
#include "aqa/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw aqa::ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw aqa::ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw aqa::ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw aqa::ConfigError("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

fs::path prepare_run_dir(const std::string& out) {
  if (out.empty()) throw aqa::ConfigError("--out is required");
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw aqa::ConfigError("cannot create run directory '" + out + "'");
  return dir;
}

void freeze_config(const fs::path& run_dir, const std::string& command, json body) {
  json frozen = {{"format", "aqa-run-config"}, {"version", 1}, {"command", command}};
  for (auto& [k, v] : body.items()) frozen[k] = v;
  write_json(run_dir / "config.json", frozen);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Only the listed top-level keys may appear in a config file.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw aqa::ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw aqa::ConfigError("unknown key '" + k + "' in " + where);
  }
}

// Config-file paths are relative to the config file; flag paths to the cwd.
std::string config_path(const json& section, const char* key, const fs::path& config_dir) {
  if (!section.contains(key) || section[key].is_null()) return {};
  if (!section[key].is_string()) throw aqa::ConfigError(std::string("data.") + key + " must be a string");
  const fs::path p(section[key].get<std::string>());
  return (p.is_absolute() ? p : config_dir / p).lexically_normal().generic_string();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> systems, per_system;
  std::optional<double> noise_std;
};

int cmd_synth(const SynthArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  if (a.seed) cfg["seed"] = *a.seed;
  if (a.systems) cfg["n_systems"] = *a.systems;
  if (a.per_system) cfg["utts_per_system"] = *a.per_system;
  if (a.noise_std) cfg["noise_std"] = *a.noise_std;
  const auto spec = aqa::synth::SynthSpec::from_json(cfg);
  const fs::path dir = prepare_run_dir(a.out);
  freeze_config(dir, "synth", {{"synth", spec.to_json()}});
  const auto r = aqa::synth::synth_corpus(spec, dir);
  std::cout << "synthesized " << r.manifest.entries.size() << " utterances from " << spec.n_systems
            << " systems, " << spec.encoders.size() << " encoders; " << r.clipped_labels
            << " labels clipped to the score range\n"
            << "manifest: " << r.manifest_path.generic_string() << "\n";
  return 0;
}

struct SplitArgs {
  std::string config, out, manifest;
  std::optional<double> fraction;
  std::optional<std::uint64_t> seed;
};

int cmd_split(const SplitArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  check_keys(cfg, {"manifest", "train_fraction", "seed"}, "split config");
  const fs::path cdir = a.config.empty() ? fs::path() : fs::path(a.config).parent_path();
  std::string manifest = a.manifest.empty() ? config_path(cfg, "manifest", cdir) : a.manifest;
  if (manifest.empty()) throw aqa::ConfigError("split needs --manifest");
  const double fraction = a.fraction.value_or(cfg.value("train_fraction", 0.8));
  const std::uint64_t seed = a.seed.value_or(cfg.value("seed", std::uint64_t{0}));
  if (!(fraction > 0.0 && fraction <= 1.0)) throw aqa::ConfigError("train fraction must lie in (0, 1]");

  const auto m = aqa::data::Manifest::load(manifest);
  const fs::path dir = prepare_run_dir(a.out);
  freeze_config(dir, "split", {{"manifest", manifest}, {"train_fraction", fraction}, {"seed", seed}});
  const auto s = aqa::data::stratified_split(m, fraction, seed);
  s.train.save(dir / "train.json");
  s.dev.save(dir / "dev.json");
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "train " << s.train.entries.size() << ", dev " << s.dev.entries.size() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, out, train, dev, pam, encoders, aggregation, loss;
  std::optional<std::uint64_t> seed;
  bool grid = false;
  std::optional<std::size_t> jobs;
};

int cmd_train(const TrainArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  check_keys(cfg, {"model", "train", "data", "grid"}, "train config");
  const fs::path cdir = a.config.empty() ? fs::path() : fs::path(a.config).parent_path();
  json data_cfg = cfg.value("data", json::object());
  check_keys(data_cfg, {"train", "dev", "pam"}, "data section");
  const std::string train_path = a.train.empty() ? config_path(data_cfg, "train", cdir) : a.train;
  const std::string dev_path = a.dev.empty() ? config_path(data_cfg, "dev", cdir) : a.dev;
  const std::string pam_path = a.pam.empty() ? config_path(data_cfg, "pam", cdir) : a.pam;
  if (train_path.empty() || dev_path.empty()) throw aqa::ConfigError("train needs --train and --dev manifests");

  const auto train_set = aqa::data::Manifest::load(train_path);
  const auto dev_set = aqa::data::Manifest::load(dev_path);
  std::optional<aqa::data::Manifest> pam_set;
  if (!pam_path.empty()) pam_set = aqa::data::Manifest::load(pam_path);

  json model_j = cfg.value("model", json::object());
  if (!model_j.is_object()) throw aqa::ConfigError("model section must be an object");
  if (!a.encoders.empty()) model_j["encoders"] = split_list(a.encoders);
  if (!model_j.contains("encoders")) model_j["encoders"] = train_set.common_encoders();
  if (!a.aggregation.empty()) model_j["aggregation"] = a.aggregation;
  if (!a.loss.empty()) {
    if (!model_j.contains("loss")) model_j["loss"] = json::object();
    model_j["loss"]["kind"] = a.loss;
  }
  if (a.seed) model_j["seed"] = *a.seed;
  json train_j = cfg.value("train", json::object());
  if (a.seed) train_j["seed"] = *a.seed;
  const auto model_cfg = aqa::model::ModelConfig::from_json(model_j);
  const auto train_cfg = aqa::training::TrainConfig::from_json(train_j);

  json data_frozen = {{"train", train_path}, {"dev", dev_path}, {"pam", pam_path.empty() ? json() : json(pam_path)}};
  const fs::path dir = prepare_run_dir(a.out);

  if (a.grid || cfg.contains("grid")) {
    json grid_j = cfg.value("grid", json::object());
    check_keys(grid_j, {"reduced_encoders", "jobs"}, "grid section");
    std::vector<std::string> reduced = grid_j.contains("reduced_encoders")
                                           ? grid_j["reduced_encoders"].get<std::vector<std::string>>()
                                           : std::vector<std::string>{model_cfg.encoders.front()};
    aqa::training::GridOptions opts;
    opts.out_dir = dir;
    opts.jobs = a.jobs.value_or(grid_j.value("jobs", std::size_t{1}));
    const auto grid = aqa::training::standard_grid(model_cfg.encoders, reduced, model_cfg, train_cfg);
    freeze_config(dir, "train", {{"model", model_cfg.to_json()},
                                 {"train", train_cfg.to_json()},
                                 {"data", data_frozen},
                                 {"grid", {{"reduced_encoders", aqa::data::canonical_encoder_order(reduced)},
                                           {"jobs", opts.jobs}}}});
    const auto board = aqa::training::run_ablation_grid(grid, train_set, dev_set, pam_set ? &*pam_set : nullptr, opts);
    board.save(dir / "leaderboard.json");
    write_text(dir / "leaderboard.txt", board.render());
    std::cout << board.render();
    for (const auto& r : board.rows) {
      if (!r.error.empty()) std::cerr << "warning: " << r.model_id << " failed: " << r.error << "\n";
    }
    return 0;
  }

  freeze_config(dir, "train",
                {{"model", model_cfg.to_json()}, {"train", train_cfg.to_json()}, {"data", data_frozen}});
  auto result = aqa::training::train(model_cfg, train_cfg, train_set, dev_set);
  aqa::model::save_checkpoint(result.model, result.meta, dir / "checkpoint.aqck");
  write_json(dir / "history.json", result.history.to_json());
  const auto dev_ex = aqa::data::load_examples(dev_set, result.model.encoders(), result.model.norm());
  const auto report = aqa::training::evaluate_model(result.model, dev_ex);
  write_json(dir / "dev_report.json", report.to_json());
  std::cout << "best epoch " << result.history.best_epoch << " of " << result.history.stopped_epoch
            << ", dev loss " << result.history.best_dev_loss << "\n"
            << report.render();
  return 0;
}

struct PredictArgs {
  std::string config, out, checkpoint, manifest;
};

int cmd_predict(const PredictArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  check_keys(cfg, {"checkpoint", "manifest"}, "predict config");
  const fs::path cdir = a.config.empty() ? fs::path() : fs::path(a.config).parent_path();
  const std::string ck = a.checkpoint.empty() ? config_path(cfg, "checkpoint", cdir) : a.checkpoint;
  const std::string mf = a.manifest.empty() ? config_path(cfg, "manifest", cdir) : a.manifest;
  if (ck.empty() || mf.empty()) throw aqa::ConfigError("predict needs --checkpoint and --manifest");
  const auto manifest = aqa::data::Manifest::load(mf);
  const fs::path dir = prepare_run_dir(a.out);
  freeze_config(dir, "predict", {{"checkpoint", ck}, {"manifest", mf}});
  const auto preds = aqa::predict_checkpoint(ck, manifest);
  preds.write_tsv(dir / "predictions.tsv");
  std::cout << "wrote " << preds.size() << " predictions\n";
  return 0;
}

struct EvaluateArgs {
  std::string config, out, predictions, manifest;
};

int cmd_evaluate(const EvaluateArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  check_keys(cfg, {"predictions", "manifest"}, "evaluate config");
  const fs::path cdir = a.config.empty() ? fs::path() : fs::path(a.config).parent_path();
  const std::string pr = a.predictions.empty() ? config_path(cfg, "predictions", cdir) : a.predictions;
  const std::string mf = a.manifest.empty() ? config_path(cfg, "manifest", cdir) : a.manifest;
  if (pr.empty() || mf.empty()) throw aqa::ConfigError("evaluate needs --predictions and --manifest");
  const auto manifest = aqa::data::Manifest::load(mf, false);
  const auto preds = aqa::Predictions::read_tsv(pr);
  const auto report = aqa::evaluate_predictions(preds, manifest);
  const fs::path dir = prepare_run_dir(a.out);
  freeze_config(dir, "evaluate", {{"predictions", pr}, {"manifest", mf}});
  write_json(dir / "report.json", report.to_json());
  write_text(dir / "report.txt", report.render());
  std::cout << report.render();
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

struct EnsembleArgs {
  std::string config, out, leaderboard, strategy, members, ensemble, manifest, predictions_dir;
  std::optional<std::size_t> n_dev, n_pam;
};

json ensemble_config(const EnsembleArgs& a, std::initializer_list<const char*> keys, const char* where,
                     fs::path& cdir) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  check_keys(cfg, keys, where);
  cdir = a.config.empty() ? fs::path() : fs::path(a.config).parent_path();
  return cfg;
}

int cmd_ensemble_select(const EnsembleArgs& a) {
  fs::path cdir;
  const json cfg = ensemble_config(a, {"leaderboard", "strategy", "members"}, "ensemble-select config", cdir);
  const std::string lb = a.leaderboard.empty() ? config_path(cfg, "leaderboard", cdir) : a.leaderboard;
  if (lb.empty()) throw aqa::ConfigError("ensemble-select needs --leaderboard");
  const std::string strategy = a.strategy.empty() ? cfg.value("strategy", std::string("intersection:12,12")) : a.strategy;
  std::vector<std::string> members =
      a.members.empty() ? cfg.value("members", std::vector<std::string>{}) : split_list(a.members);
  const auto board = aqa::Leaderboard::load(lb);
  const auto spec = aqa::make_ensemble_spec(board, strategy, members);
  const fs::path dir = prepare_run_dir(a.out);
  freeze_config(dir, "ensemble-select", {{"leaderboard", lb}, {"strategy", strategy}, {"members", members}});
  write_json(dir / "ensemble.json", spec.to_json());
  std::cout << spec.members.size() << " members:";
  for (const auto& m : spec.members) std::cout << " " << m;
  std::cout << "\n";
  return 0;
}

std::map<std::string, aqa::Predictions> read_member_predictions(const fs::path& dir,
                                                                const std::vector<std::string>& ids) {
  std::map<std::string, aqa::Predictions> out;
  for (const auto& id : ids) out.emplace(id, aqa::Predictions::read_tsv(dir / (id + ".tsv")));
  return out;
}

int cmd_ensemble_predict(const EnsembleArgs& a) {
  fs::path cdir;
  const json cfg =
      ensemble_config(a, {"leaderboard", "ensemble", "manifest", "predictions_dir"}, "ensemble-predict config", cdir);
  const std::string lb = a.leaderboard.empty() ? config_path(cfg, "leaderboard", cdir) : a.leaderboard;
  const std::string ens = a.ensemble.empty() ? config_path(cfg, "ensemble", cdir) : a.ensemble;
  const std::string mf = a.manifest.empty() ? config_path(cfg, "manifest", cdir) : a.manifest;
  const std::string pd = a.predictions_dir.empty() ? config_path(cfg, "predictions_dir", cdir) : a.predictions_dir;
  if (ens.empty()) throw aqa::ConfigError("ensemble-predict needs --ensemble");
  if (pd.empty() && (lb.empty() || mf.empty())) {
    throw aqa::ConfigError("ensemble-predict needs --leaderboard and --manifest, or --predictions-dir");
  }
  const auto spec = aqa::EnsembleSpec::from_json(read_json_file(ens));
  aqa::Predictions preds;
  if (!pd.empty()) {
    preds = aqa::average_predictions(read_member_predictions(pd, spec.members));
  } else {
    const auto board = aqa::Leaderboard::load(lb);
    const auto manifest = aqa::data::Manifest::load(mf);
    preds = aqa::ensemble_predict(board, spec.members, manifest);
  }
  const fs::path dir = prepare_run_dir(a.out);
  freeze_config(dir, "ensemble-predict",
                {{"leaderboard", lb}, {"ensemble", ens}, {"manifest", mf}, {"predictions_dir", pd}});
  preds.write_tsv(dir / "predictions.tsv");
  std::cout << "wrote " << preds.size() << " ensemble predictions from " << spec.members.size() << " members\n";
  return 0;
}

int cmd_ensemble_compare(const EnsembleArgs& a) {
  fs::path cdir;
  const json cfg = ensemble_config(a, {"leaderboard", "manifest", "predictions_dir", "n_dev", "n_pam"},
                                   "ensemble-compare config", cdir);
  const std::string lb = a.leaderboard.empty() ? config_path(cfg, "leaderboard", cdir) : a.leaderboard;
  const std::string mf = a.manifest.empty() ? config_path(cfg, "manifest", cdir) : a.manifest;
  const std::string pd = a.predictions_dir.empty() ? config_path(cfg, "predictions_dir", cdir) : a.predictions_dir;
  if (lb.empty() || mf.empty()) throw aqa::ConfigError("ensemble-compare needs --leaderboard and --manifest");
  aqa::CompareOptions opts;
  opts.n_dev = a.n_dev.value_or(cfg.value("n_dev", opts.n_dev));
  opts.n_pam = a.n_pam.value_or(cfg.value("n_pam", opts.n_pam));
  const auto board = aqa::Leaderboard::load(lb);
  const auto manifest = aqa::data::Manifest::load(mf, pd.empty());
  std::vector<aqa::StrategyRow> rows;
  if (pd.empty()) {
    rows = aqa::compare_strategies(board, manifest, opts);
  } else {
    std::vector<std::string> ids;
    for (const auto& r : board.rows) {
      if (r.error.empty() && fs::exists(fs::path(pd) / (r.model_id + ".tsv"))) ids.push_back(r.model_id);
    }
    rows = aqa::compare_strategies(board, read_member_predictions(pd, ids), manifest, opts);
  }
  const fs::path dir = prepare_run_dir(a.out);
  freeze_config(dir, "ensemble-compare", {{"leaderboard", lb},
                                          {"manifest", mf},
                                          {"predictions_dir", pd},
                                          {"n_dev", opts.n_dev},
                                          {"n_pam", opts.n_pam}});
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"strategy", r.name},
                     {"members", r.members},
                     {"report", r.error.empty() ? r.report.to_json() : json()},
                     {"error", r.error}});
  }
  write_json(dir / "comparison.json", {{"format", "aqa-ensemble-comparison"}, {"version", 1}, {"rows", table}});
  const std::string text = aqa::render_comparison(rows);
  write_text(dir / "comparison.txt", text);
  std::cout << text;
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-axis audio quality assessment: train, evaluate and ensemble predictors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "aqa 0.1.0");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic corpus with a known generating map");
  s->add_option("--config", synth.config, "JSON synth config (fields of SynthSpec)");
  s->add_option("--out", synth.out, "Output directory for embeddings and manifest")->required();
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--systems", synth.systems, "Number of systems");
  s->add_option("--per-system", synth.per_system, "Utterances per system");
  s->add_option("--noise-std", synth.noise_std, "Gaussian label noise standard deviation");

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Stratified train/dev split by system");
  sp->add_option("--config", split.config, "JSON split config (manifest, train_fraction, seed)");
  sp->add_option("--out", split.out, "Run directory receiving train.json and dev.json")->required();
  sp->add_option("--manifest", split.manifest, "Manifest to split");
  sp->add_option("--fraction", split.fraction, "Training fraction per system (default 0.8)");
  sp->add_option("--seed", split.seed, "Shuffle seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model, or the standard 16-cell grid with --grid");
  t->add_option("--config", tr.config, "JSON run config with model, train, data and grid sections");
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--train", tr.train, "Training manifest");
  t->add_option("--dev", tr.dev, "Development manifest (early stopping, dev_srcc)");
  t->add_option("--pam", tr.pam, "Optional held-out manifest scored as pam_srcc");
  t->add_option("--seed", tr.seed, "Seed for initialization, shuffling and cropping");
  t->add_option("--encoders", tr.encoders, "Comma-separated encoder ids (grid: the full set)");
  t->add_option("--aggregation", tr.aggregation, "MLP, BLSTM_h or BLSTM_t");
  t->add_option("--loss", tr.loss, "Con, UT, DCQ or CCC");
  t->add_flag("--grid", tr.grid, "Run the 4 losses x 4 head/encoder variants grid and write a leaderboard");
  t->add_option("--jobs", tr.jobs, "Parallel grid cells (default 1)");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Predict the four axis scores for every manifest entry");
  p->add_option("--config", pr.config, "JSON config (checkpoint, manifest)");
  p->add_option("--out", pr.out, "Run directory receiving predictions.tsv")->required();
  p->add_option("--checkpoint", pr.checkpoint, "Model checkpoint");
  p->add_option("--manifest", pr.manifest, "Manifest to score");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score predictions against manifest labels");
  e->add_option("--config", ev.config, "JSON config (predictions, manifest)");
  e->add_option("--out", ev.out, "Run directory receiving report.json and report.txt")->required();
  e->add_option("--predictions", ev.predictions, "Predictions TSV");
  e->add_option("--manifest", ev.manifest, "Labeled manifest");

  EnsembleArgs es, ep, ec;
  auto* esel = app.add_subcommand("ensemble-select", "Choose ensemble members from a leaderboard");
  esel->add_option("--config", es.config, "JSON config (leaderboard, strategy, members)");
  esel->add_option("--out", es.out, "Run directory receiving ensemble.json")->required();
  esel->add_option("--leaderboard", es.leaderboard, "Leaderboard JSON");
  esel->add_option("--strategy", es.strategy,
                   "intersection:<n_dev>,<n_pam> | topk:<dev|pam>:<k> | all | explicit (default intersection:12,12)");
  esel->add_option("--members", es.members, "Comma-separated model ids for the explicit strategy");

  auto* epred = app.add_subcommand("ensemble-predict", "Average member predictions");
  epred->add_option("--config", ep.config, "JSON config (leaderboard, ensemble, manifest, predictions_dir)");
  epred->add_option("--out", ep.out, "Run directory receiving predictions.tsv")->required();
  epred->add_option("--leaderboard", ep.leaderboard, "Leaderboard JSON locating member checkpoints");
  epred->add_option("--ensemble", ep.ensemble, "Ensemble spec from ensemble-select");
  epred->add_option("--manifest", ep.manifest, "Manifest to score");
  epred->add_option("--predictions-dir", ep.predictions_dir, "Directory of <model_id>.tsv member predictions");

  auto* ecmp = app.add_subcommand("ensemble-compare", "Compare ensemble selection strategies on a labeled set");
  ecmp->add_option("--config", ec.config, "JSON config (leaderboard, manifest, predictions_dir, n_dev, n_pam)");
  ecmp->add_option("--out", ec.out, "Run directory receiving comparison.json and comparison.txt")->required();
  ecmp->add_option("--leaderboard", ec.leaderboard, "Leaderboard JSON");
  ecmp->add_option("--manifest", ec.manifest, "Labeled evaluation manifest");
  ecmp->add_option("--predictions-dir", ec.predictions_dir, "Use <model_id>.tsv member predictions instead of checkpoints");
  ecmp->add_option("--n-dev", ec.n_dev, "Dev top-n for the submitted intersection (default 12)");
  ecmp->add_option("--n-pam", ec.n_pam, "PAM top-n for the submitted intersection (default 12)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (*s) return cmd_synth(synth);
  if (*sp) return cmd_split(split);
  if (*t) return cmd_train(tr);
  if (*p) return cmd_predict(pr);
  if (*e) return cmd_evaluate(ev);
  if (*esel) return cmd_ensemble_select(es);
  if (*epred) return cmd_ensemble_predict(ep);
  if (*ecmp) return cmd_ensemble_compare(ec);
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const aqa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const aqa::SelectionError& e) {
    std::cerr << "selection error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const aqa::FormatError& e) {
    std::cerr << "data format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const aqa::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const aqa::DomainError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
