#include "doctest.h"

#include <cmath>
#include <fstream>
#include <set>

#include "aqa/data.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace aqa;
using namespace aqa::data;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = AQA_FIXTURE_DIR;

nlohmann::json expected_fixtures() {
  std::ifstream in(kFixtures / "expected.json");
  return nlohmann::json::parse(in);
}

EmbeddingSequence random_sequence(Rng& rng, const std::string& id, float rate, std::uint32_t frames,
                                  std::uint32_t dims) {
  EmbeddingSequence s{id, rate, dims, frames, {}};
  s.values.resize(std::size_t{frames} * dims);
  for (auto& v : s.values) v = static_cast<float>(rng.normal());
  return s;
}

FeatureSequence feature(const std::string& id, double rate, std::size_t frames, std::size_t dims,
                        const std::function<double(std::size_t, std::size_t)>& f) {
  FeatureSequence s{id, rate, frames, dims, std::vector<double>(frames * dims)};
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t d = 0; d < dims; ++d) s.values[t * dims + d] = f(t, d);
  }
  return s;
}

Manifest toy_manifest(const std::vector<std::pair<std::string, std::size_t>>& systems) {
  Manifest m;
  for (const auto& [sys, n] : systems) {
    for (std::size_t i = 0; i < n; ++i) {
      Utterance u;
      u.utt_id = sys + "_" + std::to_string(i);
      u.system_id = sys;
      u.scores = AxisScores{{5, 5, 5, 5}};
      m.entries.push_back(u);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("MEB1 round trip is bit-exact") {
  Rng rng(1);
  test::TempDir dir("meb");
  const auto seq = random_sequence(rng, "synth0", 50.0f, 50, 8);
  write_embedding(seq, dir / "a.meb");
  CHECK(read_embedding(dir / "a.meb") == seq);
  CHECK(decode_embedding(encode_embedding(seq)) == seq);
}

TEST_CASE("MEB1 fixtures from the independent writer parse") {
  const auto exp = expected_fixtures();
  for (const char* name : {"clip_2s_25hz.wavlm.meb", "clip_2s_50hz.muq.meb", "utf8_id.meb"}) {
    CAPTURE(name);
    const auto& e = exp.at(name);
    const auto seq = read_embedding(kFixtures / name);
    CHECK(seq.encoder_id == e.at("encoder_id").get<std::string>());
    CHECK(seq.frame_rate_hz == e.at("frame_rate_hz").get<float>());
    CHECK(seq.dims == e.at("dims").get<std::uint32_t>());
    CHECK(seq.frames == e.at("frames").get<std::uint32_t>());
    const auto first = e.at("first").get<std::vector<double>>();
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(static_cast<double>(seq.values[i]) == first[i]);
    CHECK(static_cast<double>(seq.values.back()) == e.at("last").get<double>());
    double sum = 0.0;
    for (float v : seq.values) sum += v;
    CHECK(sum == doctest::Approx(e.at("sum").get<double>()).epsilon(1e-9));
    // Re-encoding with the C++ writer reproduces the fixture byte for byte.
    CHECK(encode_embedding(seq) == test::read_bytes(kFixtures / name));
  }
}

TEST_CASE("2.0 s at 25 Hz holds 50 frames") {
  const auto seq = read_embedding(kFixtures / "clip_2s_25hz.wavlm.meb");
  CHECK(seq.frames == static_cast<std::uint32_t>(std::lround(2.0 * seq.frame_rate_hz)));
  CHECK(widen(seq).duration_s() == 2.0);
}

TEST_CASE("corrupt MEB1 fixtures fail with the expected offsets") {
  const auto exp = expected_fixtures();
  for (const char* name : {"bad_magic.meb", "bad_version.meb", "truncated_payload.meb", "bad_crc.meb",
                           "short_header.meb"}) {
    CAPTURE(name);
    const auto& e = exp.at(name);
    try {
      read_embedding(kFixtures / name);
      FAIL("expected FormatError");
    } catch (const FormatError& err) {
      CHECK(err.byte_offset() == e.at("offset").get<std::uint64_t>());
      CHECK(std::string(err.what()).find(e.at("error").get<std::string>()) != std::string::npos);
    }
  }
}

TEST_CASE("MEB1 frames=10 with a 9-frame payload reports the computed offset") {
  Rng rng(2);
  const auto seq = random_sequence(rng, "abc", 25.0f, 10, 3);
  auto bytes = encode_embedding(seq);
  // Drop the last frame but keep a 4-byte trailer in place of the checksum.
  bytes.erase(bytes.end() - 4 - 12, bytes.end() - 4);
  const std::size_t header_end = 4 + 2 + 2 + 3 + 12;
  try {
    decode_embedding(bytes);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() == header_end + 9 * 3 * 4);
  }
}

TEST_CASE("MEB1 rejects trailing bytes and non-finite payload") {
  Rng rng(3);
  auto seq = random_sequence(rng, "abc", 25.0f, 2, 2);
  auto bytes = encode_embedding(seq);
  bytes.push_back(0);
  CHECK_THROWS_AS(decode_embedding(bytes), FormatError);
  seq.values[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(decode_embedding(encode_embedding(seq)), FormatError);
}

TEST_CASE("fixture manifest loads with paths relative to its directory") {
  const auto m = Manifest::load(kFixtures / "manifest.json");
  REQUIRE(m.entries.size() == 1);
  const auto& u = m.entries[0];
  CHECK(u.utt_id == "clip_2s");
  CHECK(u.scores->values == std::array<double, 4>{7.5, 4.0, 6.25, 5.0});
  CHECK(u.duration_s == 2.0);
  CHECK(m.common_encoders() == std::vector<std::string>{"wavlm", "muq"});
  CHECK(fs::exists(m.embedding_path(u, "wavlm")));
}

TEST_CASE("manifest save rewrites paths relative to the new location") {
  test::TempDir dir("manifest");
  const auto m = Manifest::load(kFixtures / "manifest.json");
  m.save(dir / "nested" / "copy.json");
  const auto back = Manifest::load(dir / "nested" / "copy.json");
  REQUIRE(back.entries.size() == 1);
  CHECK(fs::equivalent(back.embedding_path(back.entries[0], "muq"), m.embedding_path(m.entries[0], "muq")));
  CHECK(back.fingerprint() == m.fingerprint());
}

TEST_CASE("manifest validation") {
  auto base = nlohmann::json::parse(test::read_text(kFixtures / "manifest.json"));
  SUBCASE("unknown field") {
    base["entries"][0]["loudness"] = 3;
    CHECK_THROWS_AS(Manifest::from_json(base, kFixtures), FormatError);
  }
  SUBCASE("partial labels") {
    base["entries"][0].erase("cu");
    CHECK_THROWS_AS(Manifest::from_json(base, kFixtures), FormatError);
  }
  SUBCASE("unlabeled entry is allowed") {
    for (const char* k : {"pq", "pc", "ce", "cu"}) base["entries"][0].erase(k);
    const auto m = Manifest::from_json(base, kFixtures);
    CHECK_FALSE(m.entries[0].scores.has_value());
    CHECK_FALSE(m.labeled());
  }
  SUBCASE("score outside range") {
    base["entries"][0]["pq"] = 11.0;
    CHECK_THROWS_AS(Manifest::from_json(base, kFixtures), FormatError);
  }
  SUBCASE("duplicate utt_id") {
    base["entries"].push_back(base["entries"][0]);
    CHECK_THROWS_AS(Manifest::from_json(base, kFixtures), FormatError);
  }
  SUBCASE("missing embedding file") {
    base["entries"][0]["emb.wavlm"] = "nope.meb";
    const auto m = Manifest::from_json(base, kFixtures);
    CHECK_THROWS_AS(m.check_files(), FormatError);
  }
}

TEST_CASE("split: 10 systems x 10 utterances") {
  std::vector<std::pair<std::string, std::size_t>> systems;
  for (int s = 0; s < 10; ++s) systems.emplace_back("sys" + std::to_string(s), 10);
  const auto m = toy_manifest(systems);
  const auto r = stratified_split(m, 0.8, 5);
  CHECK(r.train.entries.size() == 80);
  CHECK(r.dev.entries.size() == 20);
  std::map<std::string, int> dev_per_system;
  for (const auto& u : r.dev.entries) ++dev_per_system[u.system_id];
  for (const auto& [s, n] : dev_per_system) CHECK(n == 2);
  CHECK(r.warnings.empty());
}

TEST_CASE("split ceiling rule for every stratum size 1..10") {
  CHECK(train_count(5, 0.8) == 4);
  std::vector<std::pair<std::string, std::size_t>> systems;
  for (std::size_t n = 1; n <= 10; ++n) systems.emplace_back("s" + std::to_string(n), n);
  const auto m = toy_manifest(systems);
  const auto r = stratified_split(m, 0.8, 11);
  std::map<std::string, std::size_t> train_per;
  for (const auto& u : r.train.entries) ++train_per[u.system_id];
  for (std::size_t n = 1; n <= 10; ++n) {
    CHECK(train_per["s" + std::to_string(n)] == static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(n) - 1e-9)));
  }
  // Exact partition.
  std::set<std::string> ids;
  for (const auto& u : r.train.entries) ids.insert(u.utt_id);
  for (const auto& u : r.dev.entries) CHECK(ids.insert(u.utt_id).second);
  CHECK(ids.size() == m.entries.size());
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("s1") != std::string::npos);
}

TEST_CASE("split determinism") {
  const auto m = toy_manifest({{"a", 7}, {"b", 9}, {"c", 4}});
  const auto r1 = stratified_split(m, 0.8, 3);
  const auto r2 = stratified_split(m, 0.8, 3);
  const auto r3 = stratified_split(m, 0.8, 4);
  CHECK(r1.train.entries == r2.train.entries);
  CHECK(r1.dev.entries == r2.dev.entries);
  CHECK(r3.train.entries.size() == r1.train.entries.size());
  CHECK(r3.dev.entries != r1.dev.entries);
}

TEST_CASE("normalization hand case and constant dimensions") {
  const std::vector<FeatureSequence> seqs{feature("e", 10, 2, 2, [](std::size_t t, std::size_t d) {
    return d == 0 ? 2.0 * static_cast<double>(t) : 4.0;
  })};
  std::vector<std::string> warnings;
  const auto n = fit_encoder_norm(seqs, &warnings);
  CHECK(n.mean == std::vector<double>{1.0, 4.0});
  CHECK(n.std[0] == 1.0);
  CHECK(n.std[1] == kStdFloor);
  CHECK(warnings.size() == 1);
  const auto z = apply_norm(seqs[0], n);
  CHECK(z.values == std::vector<double>{-1.0, 0.0, 1.0, 0.0});
}

TEST_CASE("normalization gives zero mean and unit std on the fitting data and inverts") {
  Rng rng(6);
  std::vector<FeatureSequence> seqs;
  for (int i = 0; i < 5; ++i) {
    seqs.push_back(feature("e", 25, 3 + rng.index(10), 4, [&](std::size_t, std::size_t d) {
      return 3.0 * static_cast<double>(d) + (1.0 + static_cast<double>(d)) * rng.normal();
    }));
  }
  const auto n = fit_encoder_norm(seqs);
  std::vector<double> sum(4, 0.0), sq(4, 0.0);
  double count = 0.0;
  for (const auto& s : seqs) {
    const auto z = apply_norm(s, n);
    for (std::size_t t = 0; t < z.frames; ++t) {
      for (std::size_t d = 0; d < 4; ++d) {
        sum[d] += z.frame(t)[d];
        sq[d] += z.frame(t)[d] * z.frame(t)[d];
      }
      count += 1.0;
    }
    const auto back = invert_norm(z, n);
    for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(std::abs(back.values[i] - s.values[i]) <= 1e-6);
  }
  for (std::size_t d = 0; d < 4; ++d) {
    CHECK(std::abs(sum[d] / count) <= 1e-6);
    CHECK(std::abs(std::sqrt(sq[d] / count) - 1.0) <= 1e-6);
  }
  // Statistics applied to unseen data: no error, moments unconstrained.
  const auto other = feature("e", 25, 5, 4, [](std::size_t t, std::size_t) { return 100.0 + static_cast<double>(t); });
  CHECK_NOTHROW(apply_norm(other, n));
}

TEST_CASE("norm stats JSON keeps full precision") {
  NormStats s;
  s.encoders["wavlm"] = {{0.1, 1.0 / 3.0}, {2.0 / 7.0, 1e-6}};
  const auto back = NormStats::from_json(nlohmann::json::parse(s.to_json().dump()));
  CHECK(back == s);
}

TEST_CASE("fusion: identity, plain concatenation, canonical order") {
  const auto a = feature("wavlm", 50, 6, 2, [](std::size_t t, std::size_t d) { return static_cast<double>(t * 10 + d); });
  const std::vector<FeatureSequence> one{a};
  CHECK(align_and_fuse(one) == a);

  const auto b = feature("muq", 50, 6, 3, [](std::size_t t, std::size_t d) { return -static_cast<double>(t + d); });
  const auto z = feature("zeta", 50, 6, 1, [](std::size_t, std::size_t) { return 9.0; });
  const auto m = feature("m2d", 50, 6, 1, [](std::size_t, std::size_t) { return 4.0; });
  const std::vector<FeatureSequence> many{z, b, m, a};
  const auto f = align_and_fuse(many);
  CHECK(f.dims == 7);
  CHECK(f.frames == 6);
  CHECK(f.encoder_id == "wavlm+muq+m2d+zeta");
  for (std::size_t t = 0; t < 6; ++t) {
    CHECK(f.frame(t)[0] == a.frame(t)[0]);
    CHECK(f.frame(t)[2] == b.frame(t)[0]);
    CHECK(f.frame(t)[5] == 4.0);
    CHECK(f.frame(t)[6] == 9.0);
  }
  CHECK(canonical_encoder_order({"b", "m2d", "a", "wavlm", "muq"}) ==
        std::vector<std::string>{"wavlm", "muq", "m2d", "a", "b"});
  CHECK_THROWS_AS(align_and_fuse(std::span<const FeatureSequence>{}), DomainError);
}

TEST_CASE("fusion onto the lowest rate: constants stay constant, ramps interpolate") {
  const auto fast = feature("synth0", 50, 100, 2, [](std::size_t, std::size_t) { return 0.375; });
  const auto slow = feature("synth1", 25, 50, 1, [](std::size_t t, std::size_t) { return static_cast<double>(t); });
  const std::vector<FeatureSequence> both{fast, slow};
  const auto f = align_and_fuse(both);
  CHECK(f.frames == 50);
  CHECK(f.frame_rate_hz == 25.0);
  CHECK(f.dims == 3);
  for (std::size_t t = 0; t < 50; ++t) {
    CHECK(f.frame(t)[0] == 0.375);
    CHECK(f.frame(t)[1] == 0.375);
    CHECK(f.frame(t)[2] == static_cast<double>(t));
  }
  // A 50 Hz ramp sampled at 25 Hz picks every other frame.
  const auto ramp = feature("synth0", 50, 100, 1, [](std::size_t t, std::size_t) { return 0.5 * static_cast<double>(t); });
  const std::vector<FeatureSequence> r{ramp, slow};
  const auto g = align_and_fuse(r);
  for (std::size_t t = 0; t < 50; ++t) CHECK(g.frame(t)[0] == static_cast<double>(t));
}

TEST_CASE("fusing the fixture clip at 25 and 50 Hz") {
  NormStats norm;
  norm.encoders["wavlm"] = {std::vector<double>(8, 0.0), std::vector<double>(8, 1.0)};
  norm.encoders["muq"] = {std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)};
  const auto m = Manifest::load(kFixtures / "manifest.json");
  const std::vector<std::string> encs{"wavlm", "muq"};
  const auto ex = load_examples(m, encs, norm);
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].features.frames == 50);
  CHECK(ex[0].features.dims == 12);
  for (std::size_t t = 0; t < 50; ++t) CHECK(ex[0].features.frame(t)[8] == 0.75);
  CHECK(ex[0].label->values[0] == 7.5);
}

TEST_CASE("random crop") {
  Rng rng(9);
  const auto five = feature("e", 25, 125, 2, [](std::size_t t, std::size_t d) { return static_cast<double>(t * 2 + d); });
  CHECK(random_crop(five, 10.0, rng) == five);

  const auto twenty = feature("e", 25, 500, 2, [](std::size_t t, std::size_t d) { return static_cast<double>(t * 2 + d); });
  for (int rep = 0; rep < 20; ++rep) {
    const auto c = random_crop(twenty, 10.0, rng);
    REQUIRE(c.frames == 250);
    const std::size_t start = static_cast<std::size_t>(c.values[0]) / 2;
    for (std::size_t t = 0; t < c.frames; ++t) {
      for (std::size_t d = 0; d < 2; ++d) CHECK(c.frame(t)[d] == twenty.frame(start + t)[d]);
    }
  }
  Rng r1(77), r2(77);
  CHECK(crop_window(500, 25, 10, r1).start == crop_window(500, 25, 10, r2).start);
  Rng r3(1);
  CHECK(crop_window(1000, 33.3, 10.0, r3).frames == 333);
}
