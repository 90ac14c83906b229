#include "doctest.h"

#include <cmath>

#include "aqa/synth.hpp"
#include "support.hpp"

using namespace aqa;
using namespace aqa::synth;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_systems = 6;
  s.utts_per_system = 8;
  s.encoders = {{"synth0", 3, 50.0}, {"synth1", 4, 25.0}};
  s.seed = seed;
  return s;
}

// Solves the normal equations with partial-pivot Gaussian elimination.
std::vector<double> least_squares(const std::vector<std::vector<double>>& rows, const std::vector<double>& y) {
  const std::size_t p = rows.front().size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += rows[r][i] * rows[r][j];
      a[i][p] += rows[r][i] * y[r];
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> x(p);
  for (std::size_t i = 0; i < p; ++i) x[i] = a[i][p] / a[i][i];
  return x;
}

}  // namespace

TEST_CASE("spec validation and JSON round trip") {
  auto s = small_spec(3);
  s.noise_std = 0.25;
  const auto back = SynthSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK_THROWS_AS(SynthSpec::from_json({{"n_sytems", 3}}), ConfigError);
  s.axis_correlation = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec(3);
  s.encoders.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("same seed writes byte-identical corpora; a new seed does not") {
  test::TempDir a("synth-a"), b("synth-b"), c("synth-c");
  const auto ra = synth_corpus(small_spec(7), a.path());
  synth_corpus(small_spec(7), b.path());
  synth_corpus(small_spec(8), c.path());
  CHECK(ra.manifest.entries.size() == 48);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path());
    CAPTURE(rel.string());
    CHECK(test::read_bytes(entry.path()) == test::read_bytes(b / rel));
    ++files;
  }
  CHECK(files == 2 + 48 * 2);
  CHECK(test::read_bytes(a / "manifest.json") != test::read_bytes(c / "manifest.json"));
}

TEST_CASE("noiseless labels are the generating map applied to pooled features") {
  test::TempDir dir("synth-map");
  const auto r = synth_corpus(small_spec(11), dir.path());
  const auto loaded = data::Manifest::load(r.manifest_path);
  const auto map = GeneratingMap::from_json(nlohmann::json::parse(test::read_text(r.map_path)));
  CHECK(map.to_json() == r.map.to_json());
  for (const auto& u : loaded.entries) {
    const auto pooled = pooled_features(loaded, u, map);
    const auto s = map.apply(pooled);
    for (std::size_t k = 0; k < kNumAxes; ++k) {
      const double expected = std::clamp(s[k], loaded.score_min, loaded.score_max);
      CHECK(std::abs(u.scores->values[k] - expected) <= 1e-12);
    }
  }
}

TEST_CASE("least squares on the corpus recovers the generating map") {
  test::TempDir dir("synth-ols");
  auto spec = small_spec(5);
  spec.n_systems = 12;
  const auto r = synth_corpus(spec, dir.path());
  const auto& map = r.map;
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (const auto& u : r.manifest.entries) {
      const double v = u.scores->values[k];
      if (v == spec.score_min || v == spec.score_max) continue;  // clipped
      auto x = pooled_features(r.manifest, u, map);
      x.push_back(1.0);
      rows.push_back(std::move(x));
      y.push_back(v);
    }
    REQUIRE(rows.size() > 2 * map.input_dims());
    const auto beta = least_squares(rows, y);
    for (std::size_t d = 0; d < map.input_dims(); ++d) CHECK(std::abs(beta[d] - map.weights[k][d]) <= 1e-6);
    CHECK(std::abs(beta.back() - map.bias[k]) <= 1e-6);
  }
}

TEST_CASE("frame counts follow duration times rate") {
  test::TempDir dir("synth-frames");
  const auto r = synth_corpus(small_spec(2), dir.path());
  for (const auto& u : r.manifest.entries) {
    for (const auto& enc : small_spec(2).encoders) {
      const auto seq = data::read_embedding(r.manifest.embedding_path(u, enc.id));
      const double expected = std::floor(u.duration_s * enc.frame_rate_hz + 1e-9);
      CHECK(std::abs(static_cast<double>(seq.frames) - expected) <= 1.0);
      CHECK(seq.dims == enc.dims);
    }
  }
}

TEST_CASE("label noise perturbs scores and leaves the map unchanged") {
  test::TempDir a("synth-n0"), b("synth-n1");
  auto spec = small_spec(9);
  const auto clean = synth_corpus(spec, a.path());
  spec.noise_std = 0.5;
  const auto noisy = synth_corpus(spec, b.path());
  CHECK(clean.map.to_json() == noisy.map.to_json());
  std::size_t differing = 0;
  for (std::size_t i = 0; i < clean.manifest.entries.size(); ++i) {
    if (clean.manifest.entries[i].scores != noisy.manifest.entries[i].scores) ++differing;
  }
  CHECK(differing > 0);
}
