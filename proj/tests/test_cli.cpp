#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "aqa/ensemble.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace aqa;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with `cwd` as working directory; stdout and stderr merged.
Run aqa_cli(const fs::path& cwd, const std::string& args) {
  const fs::path log = cwd / ".cli.log";
  const std::string cmd = "cd '" + cwd.string() + "' && '" + std::string(AQA_CLI_PATH) + "' " + args + " > '" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = test::read_text(log);
  fs::remove(log);
  return r;
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(test::read_text(p)); }

// synth -> split -> train -> predict -> evaluate with relative paths.
void pipeline(const fs::path& root) {
  REQUIRE(aqa_cli(root, "synth --out corpus --systems 40 --per-system 25 --seed 7 --noise-std 0").code == 0);
  REQUIRE(aqa_cli(root, "split --manifest corpus/manifest.json --out split --seed 7").code == 0);
  write(root / "train.json", R"({"model": {"aggregation": "MLP", "loss": {"kind": "UT"}},
                                "train": {"lr": 0.003},
                                "data": {"train": "split/train.json", "dev": "split/dev.json"}})");
  const auto t = aqa_cli(root, "train --config train.json --out run --seed 7");
  REQUIRE_MESSAGE(t.code == 0, t.out);
  REQUIRE(aqa_cli(root, "predict --checkpoint run/checkpoint.aqck --manifest split/dev.json --out pred").code == 0);
  REQUIRE(aqa_cli(root, "evaluate --predictions pred/predictions.tsv --manifest split/dev.json --out eval").code == 0);
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = test::read_bytes(e.path());
  }
  return files;
}

}  // namespace

TEST_CASE("--help on every subcommand exits 0 and lists every flag") {
  test::TempDir dir("cli-help");
  const std::map<std::string, std::vector<std::string>> flags{
      {"synth", {"--config", "--out", "--seed", "--systems", "--per-system", "--noise-std"}},
      {"split", {"--config", "--out", "--manifest", "--fraction", "--seed"}},
      {"train",
       {"--config", "--out", "--train", "--dev", "--pam", "--seed", "--encoders", "--aggregation", "--loss", "--grid",
        "--jobs"}},
      {"predict", {"--config", "--out", "--checkpoint", "--manifest"}},
      {"evaluate", {"--config", "--out", "--predictions", "--manifest"}},
      {"ensemble-select", {"--config", "--out", "--leaderboard", "--strategy", "--members"}},
      {"ensemble-predict", {"--config", "--out", "--leaderboard", "--ensemble", "--manifest", "--predictions-dir"}},
      {"ensemble-compare",
       {"--config", "--out", "--leaderboard", "--manifest", "--predictions-dir", "--n-dev", "--n-pam"}},
  };
  const auto top = aqa_cli(dir.path(), "--help");
  CHECK(top.code == 0);
  for (const auto& [sub, list] : flags) {
    CAPTURE(sub);
    CHECK(top.out.find(sub) != std::string::npos);
    const auto r = aqa_cli(dir.path(), sub + " --help");
    CHECK(r.code == 0);
    for (const auto& f : list) CHECK_MESSAGE(r.out.find(f) != std::string::npos, f);
  }
}

TEST_CASE("configuration errors exit 2") {
  test::TempDir dir("cli-config");
  CHECK(aqa_cli(dir.path(), "").code == 2);
  CHECK(aqa_cli(dir.path(), "bogus").code == 2);
  CHECK(aqa_cli(dir.path(), "synth").code == 2);  // --out missing
  CHECK(aqa_cli(dir.path(), "synth --out x --wat 3").code == 2);
  write(dir / "bad.json", R"({"n_systems": 3, "colour": "red"})");
  CHECK(aqa_cli(dir.path(), "synth --config bad.json --out x").code == 2);
  write(dir / "broken.json", "{ not json");
  CHECK(aqa_cli(dir.path(), "synth --config broken.json --out x").code == 2);
  CHECK(aqa_cli(dir.path(), "split --out s").code == 2);
  write(dir / "blocker", "file");
  CHECK(aqa_cli(dir.path(), "synth --out blocker/inner --systems 2 --per-system 2").code == 2);
}

TEST_CASE("synth writes the requested corpus and is byte-reproducible") {
  test::TempDir a("cli-synth-a"), b("cli-synth-b");
  const std::string args = "synth --out corpus --systems 10 --per-system 10 --seed 7";
  const auto r = aqa_cli(a.path(), args);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("100 utterances") != std::string::npos);
  const auto m = data::Manifest::load(a / "corpus" / "manifest.json");
  CHECK(m.entries.size() == 100);
  CHECK(m.systems().size() == 10);
  REQUIRE(aqa_cli(b.path(), args).code == 0);
  CHECK(snapshot(a.path()) == snapshot(b.path()));
  const auto frozen = read_json(a / "corpus" / "config.json");
  CHECK(frozen["command"] == "synth");
  CHECK(frozen["synth"]["seed"] == 7);
}

TEST_CASE("full pipeline: 40 populated cells, learnable, byte-identical on rerun") {
  test::TempDir a("cli-pipe-a"), b("cli-pipe-b");
  pipeline(a.path());
  const auto report = metrics::MetricReport::from_json(read_json(a / "eval" / "report.json"));
  CHECK(report.defined_cells() == 40);
  const auto srcc = headline_srcc(report);
  REQUIRE(srcc.has_value());
  MESSAGE("pipeline composite SRCC " << *srcc);
  CHECK(*srcc >= 0.95);
  CHECK(fs::exists(a / "run" / "history.json"));
  CHECK(fs::exists(a / "run" / "dev_report.json"));
  for (const char* d : {"corpus", "split", "run", "pred", "eval"}) {
    const auto cfg = read_json(a / d / "config.json");
    CHECK(cfg["format"] == "aqa-run-config");
  }
  const auto frozen = read_json(a / "run" / "config.json");
  CHECK(frozen["train"]["lr"] == 0.003);
  CHECK(frozen["model"]["encoders"] == nlohmann::json{"synth0", "synth1"});

  pipeline(b.path());
  const auto sa = snapshot(a.path());
  const auto sb = snapshot(b.path());
  CHECK(sa.size() == sb.size());
  for (const auto& [rel, bytes] : sa) {
    CAPTURE(rel);
    REQUIRE(sb.contains(rel));
    CHECK(sb.at(rel) == bytes);
  }

  // Rerunning into the same directory reproduces the same bytes too.
  const auto before = snapshot(a / "run");
  REQUIRE(aqa_cli(a.path(), "train --config train.json --out run --seed 7").code == 0);
  CHECK(snapshot(a / "run") == before);
}

TEST_CASE("evaluate: perfect predictions and mismatched utterances") {
  test::TempDir dir("cli-eval");
  REQUIRE(aqa_cli(dir.path(), "synth --out corpus --systems 4 --per-system 3 --seed 2").code == 0);
  const auto m = data::Manifest::load(dir / "corpus" / "manifest.json");
  Predictions p;
  for (const auto& u : m.entries) {
    p.utt_ids.push_back(u.utt_id);
    p.system_ids.push_back(u.system_id);
    p.scores.push_back(*u.scores);
  }
  p.write_tsv(dir / "perfect.tsv");
  REQUIRE(aqa_cli(dir.path(), "evaluate --predictions perfect.tsv --manifest corpus/manifest.json --out ev").code == 0);
  const auto r = metrics::MetricReport::from_json(read_json(dir / "ev" / "report.json"));
  for (std::size_t row = 0; row < metrics::kReportAxes; ++row) {
    for (auto level : {metrics::Level::Utterance, metrics::Level::System}) {
      CHECK(*r.at(row, level).mse == 0.0);
      CHECK(*r.at(row, level).srcc == 1.0);
      CHECK(*r.at(row, level).ktau == 1.0);
      CHECK(std::abs(*r.at(row, level).lcc - 1.0) <= 1e-12);
    }
  }
  CHECK(fs::exists(dir / "ev" / "report.txt"));

  p.utt_ids[0] = "not_in_manifest";
  p.write_tsv(dir / "mismatch.tsv");
  const auto bad = aqa_cli(dir.path(), "evaluate --predictions mismatch.tsv --manifest corpus/manifest.json --out ev2");
  CHECK(bad.code == 3);
  CHECK(bad.out.find("not_in_manifest") != std::string::npos);

  write(dir / "garbage.tsv", "hello\n");
  CHECK(aqa_cli(dir.path(), "evaluate --predictions garbage.tsv --manifest corpus/manifest.json --out ev3").code == 3);
}

TEST_CASE("corrupt inputs exit 3 and divergence exits 4") {
  test::TempDir dir("cli-errors");
  REQUIRE(aqa_cli(dir.path(), "synth --out corpus --systems 4 --per-system 5 --seed 3").code == 0);
  REQUIRE(aqa_cli(dir.path(), "split --manifest corpus/manifest.json --out split").code == 0);
  write(dir / "ck.aqck", "AQCK garbage");
  CHECK(aqa_cli(dir.path(), "predict --checkpoint ck.aqck --manifest split/dev.json --out p").code == 3);

  // Flip one payload byte of an embedding file.
  const auto m = data::Manifest::load(dir / "split" / "dev.json");
  const auto victim = m.embedding_path(m.entries[0], "synth0");
  auto bytes = test::read_bytes(victim);
  bytes[bytes.size() - 9] ^= 0x10;
  std::ofstream(victim, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                 static_cast<std::streamsize>(bytes.size()));
  CHECK(aqa_cli(dir.path(), "train --train split/train.json --dev split/dev.json --out t").code == 3);

  write(dir / "diverge.json", R"({"train": {"lr": 1e300, "batch_size": 4}})");
  const auto r = aqa_cli(dir.path(), "train --config diverge.json --train split/train.json --dev split/train.json --out d");
  CHECK(r.code == 4);
  CHECK(r.out.find("epoch 1") != std::string::npos);
}

TEST_CASE("grid, ensemble-select, ensemble-predict and ensemble-compare") {
  test::TempDir dir("cli-ens");
  REQUIRE(aqa_cli(dir.path(), "synth --out corpus --systems 6 --per-system 6 --seed 4").code == 0);
  REQUIRE(aqa_cli(dir.path(), "split --manifest corpus/manifest.json --out split --seed 4").code == 0);
  write(dir / "grid.json", R"({"model": {"blstm_hidden": 4, "head_hidden": [8]},
                              "train": {"lr": 0.003, "max_epochs": 2, "batch_size": 8},
                              "data": {"train": "split/train.json", "dev": "split/dev.json", "pam": "split/dev.json"},
                              "grid": {"jobs": 2}})");
  const auto g = aqa_cli(dir.path(), "train --config grid.json --grid --out grid");
  REQUIRE_MESSAGE(g.code == 0, g.out);
  const auto board = Leaderboard::load(dir / "grid" / "leaderboard.json");
  REQUIRE(board.rows.size() == 16);
  for (const auto& r : board.rows) {
    CHECK(r.error.empty());
    CHECK(fs::exists(board.checkpoint_path(r)));
  }
  CHECK(test::read_text(dir / "grid" / "leaderboard.txt").starts_with("model_id\t"));

  REQUIRE(aqa_cli(dir.path(), "ensemble-select --leaderboard grid/leaderboard.json --strategy topk:pam:4 --out sel").code == 0);
  const auto spec = EnsembleSpec::from_json(read_json(dir / "sel" / "ensemble.json"));
  CHECK(spec.members.size() == 4);
  CHECK(aqa_cli(dir.path(), "ensemble-select --leaderboard grid/leaderboard.json --strategy topk:pam:17 --out sel2").code == 2);
  CHECK(aqa_cli(dir.path(), "ensemble-select --leaderboard grid/leaderboard.json --strategy nope --out sel3").code == 2);

  REQUIRE(aqa_cli(dir.path(),
                  "ensemble-predict --leaderboard grid/leaderboard.json --ensemble sel/ensemble.json "
                  "--manifest split/dev.json --out ens")
              .code == 0);
  const auto live = Predictions::read_tsv(dir / "ens" / "predictions.tsv");

  // Member predictions written by `predict` reproduce the same ensemble.
  for (const auto& id : spec.members) {
    REQUIRE(aqa_cli(dir.path(), "predict --checkpoint grid/" + id + "/checkpoint.aqck --manifest split/dev.json --out m/" +
                                    id)
                .code == 0);
    fs::create_directories(dir / "member_preds");
    fs::copy_file(dir / "m" / id / "predictions.tsv", dir / "member_preds" / (id + ".tsv"));
  }
  REQUIRE(aqa_cli(dir.path(),
                  "ensemble-predict --leaderboard grid/leaderboard.json --ensemble sel/ensemble.json "
                  "--manifest split/dev.json --predictions-dir member_preds --out ens2")
              .code == 0);
  CHECK(test::read_bytes(dir / "ens2" / "predictions.tsv") == test::read_bytes(dir / "ens" / "predictions.tsv"));
  CHECK(live.size() > 0);

  REQUIRE(aqa_cli(dir.path(), "ensemble-compare --leaderboard grid/leaderboard.json --manifest split/dev.json "
                              "--n-dev 12 --n-pam 12 --out cmp")
              .code == 0);
  const auto cmp = read_json(dir / "cmp" / "comparison.json");
  CHECK(cmp["format"] == "aqa-ensemble-comparison");
  REQUIRE(cmp["rows"].size() == 6);
  CHECK(cmp["rows"][1]["strategy"] == "All models");
  CHECK(cmp["rows"][1]["members"].size() == 16);
  CHECK(test::read_text(dir / "cmp" / "comparison.txt").find("PAM top 4") != std::string::npos);
}
