#pragma once

// Synthetic corpora with a known ground truth: every label is a fixed affine
// function of the clip's mean-pooled pseudo-encoder features (plus optional
// Gaussian noise). Used for desk-scale verification of the whole pipeline.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "aqa/data.hpp"

namespace aqa::synth {

struct PseudoEncoder {
  std::string id;
  std::size_t dims = 0;
  double frame_rate_hz = 25.0;
};

struct SynthSpec {
  std::size_t n_systems = 40;
  std::size_t utts_per_system = 25;
  std::vector<PseudoEncoder> encoders{{"synth0", 16, 50.0}, {"synth1", 24, 25.0}};
  double noise_std = 0.0;  // label noise
  std::uint64_t seed = 0;
  double min_duration_s = 1.0;
  double max_duration_s = 3.0;
  double frame_noise_std = 0.3;  // per-frame jitter around the clip latent; zero-mean per clip
  double label_std = 1.25;       // target spread of each axis before clipping
  double axis_correlation = 0.7;  // expected cosine between the axis weight directions
  double score_min = 1.0;
  double score_max = 10.0;

  void validate() const;
  nlohmann::json to_json() const;
  // Rejects unknown keys; absent keys keep their defaults.
  static SynthSpec from_json(const nlohmann::json& j);
};

// label[axis] = bias[axis] + weights[axis] . pooled, where pooled is the
// concatenation of per-encoder mean-pooled features in `encoders` order.
struct GeneratingMap {
  std::vector<std::string> encoders;
  std::vector<std::size_t> dims;
  std::array<std::vector<double>, kNumAxes> weights;
  std::array<double, kNumAxes> bias{};

  std::size_t input_dims() const;
  AxisScores apply(std::span<const double> pooled) const;
  nlohmann::json to_json() const;
  static GeneratingMap from_json(const nlohmann::json& j);
};

struct SynthResult {
  data::Manifest manifest;
  GeneratingMap map;
  std::filesystem::path manifest_path;
  std::filesystem::path map_path;
  std::size_t clipped_labels = 0;
};

// Writes <out>/manifest.json, <out>/generator.json and <out>/emb/*.meb.
SynthResult synth_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

// Mean-pooled features of one clip as the generator sees them (f32 payload
// widened to f64, concatenated in map encoder order).
std::vector<double> pooled_features(const data::Manifest& manifest, const data::Utterance& u,
                                    const GeneratingMap& map);

}  // namespace aqa::synth
