#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aqa/common.hpp"
#include "json.hpp"

namespace aqa::data {

// ---------------------------------------------------------------------------
// Manifest

struct Utterance {
  std::string utt_id;
  std::string system_id;
  std::optional<AxisScores> scores;  // absent for unlabeled clips
  std::map<std::string, std::string> embedding_paths;  // encoder id -> path as written
  double duration_s = 0.0;

  bool operator==(const Utterance&) const = default;
};

struct Manifest {
  double score_min = 1.0;
  double score_max = 10.0;
  std::vector<Utterance> entries;
  // Directory that relative embedding paths are resolved against.
  std::filesystem::path base_dir;

  // check_files verifies every referenced embedding file exists.
  static Manifest load(const std::filesystem::path& path, bool check_files = true);
  static Manifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

  // Rewrites embedding paths relative to the directory of `path`.
  void save(const std::filesystem::path& path) const;
  nlohmann::json to_json(const std::filesystem::path& relative_to) const;

  // Unique ids, labels inside [score_min, score_max].
  void validate() const;
  void check_files() const;

  std::filesystem::path resolve(const std::string& path) const;
  std::filesystem::path embedding_path(const Utterance& u, const std::string& encoder) const;
  bool labeled() const;
  // Encoders referenced by every entry, in canonical order.
  std::vector<std::string> common_encoders() const;
  std::vector<std::string> systems() const;
  // CRC32 over ids, systems and labels (not paths), as 8 hex digits.
  std::string fingerprint() const;
};

// ---------------------------------------------------------------------------
// MEB1 embedding files

struct EmbeddingSequence {
  std::string encoder_id;
  float frame_rate_hz = 0.0f;
  std::uint32_t dims = 0;
  std::uint32_t frames = 0;
  std::vector<float> values;  // frames x dims, row-major

  bool operator==(const EmbeddingSequence&) const = default;
};

inline constexpr std::uint16_t kMebVersion = 1;

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq);
// Validates the header before touching the payload. Errors carry the byte
// offset at which the file stopped making sense.
EmbeddingSequence decode_embedding(std::span<const std::uint8_t> bytes);

EmbeddingSequence read_embedding(const std::filesystem::path& path);
void write_embedding(const EmbeddingSequence& seq, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Double-precision working representation

struct FeatureSequence {
  std::string encoder_id;
  double frame_rate_hz = 0.0;
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<double> values;  // frames x dims

  double duration_s() const { return static_cast<double>(frames) / frame_rate_hz; }
  const double* frame(std::size_t t) const { return values.data() + t * dims; }
  bool operator==(const FeatureSequence&) const = default;
};

FeatureSequence widen(const EmbeddingSequence& seq);

// ---------------------------------------------------------------------------
// Normalization

struct EncoderNorm {
  std::vector<double> mean;
  std::vector<double> std;  // floored at kStdFloor
  bool operator==(const EncoderNorm&) const = default;
};

inline constexpr double kStdFloor = 1e-6;

struct NormStats {
  std::map<std::string, EncoderNorm> encoders;
  std::vector<std::string> warnings;

  const EncoderNorm& at(const std::string& encoder) const;
  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
  bool operator==(const NormStats& o) const { return encoders == o.encoders; }
};

// Population mean and standard deviation per dimension over every frame.
EncoderNorm fit_encoder_norm(std::span<const FeatureSequence> seqs, std::vector<std::string>* warnings = nullptr);

// Loads every training embedding for each encoder.
NormStats fit_norm(const Manifest& train, std::span<const std::string> encoders);

FeatureSequence apply_norm(const FeatureSequence& seq, const EncoderNorm& norm);
FeatureSequence invert_norm(const FeatureSequence& seq, const EncoderNorm& norm);

// ---------------------------------------------------------------------------
// Fusion, cropping, splitting

// wavlm, muq, m2d first, then the rest lexicographically.
std::vector<std::string> canonical_encoder_order(std::vector<std::string> encoders);

// Interpolates every input onto the frame grid of the lowest-rate input and
// concatenates features in canonical encoder order.
FeatureSequence align_and_fuse(std::span<const FeatureSequence> seqs);

struct CropWindow {
  std::size_t start = 0;
  std::size_t frames = 0;
};

// Contiguous window of floor(max_seconds * rate) frames at a uniform random
// start when the clip is longer than max_seconds; otherwise the whole clip.
CropWindow crop_window(std::size_t frames, double frame_rate_hz, double max_seconds, Rng& rng);
FeatureSequence random_crop(const FeatureSequence& seq, double max_seconds, Rng& rng);
FeatureSequence slice_frames(const FeatureSequence& seq, CropWindow window);

struct SplitResult {
  Manifest train;
  Manifest dev;
  std::vector<std::string> warnings;
};

// Per system_id stratum, ceil(train_fraction * n) entries go to train.
SplitResult stratified_split(const Manifest& manifest, double train_fraction, std::uint64_t seed);
std::size_t train_count(std::size_t stratum_size, double train_fraction);

// ---------------------------------------------------------------------------
// Model-ready examples

struct Example {
  std::string utt_id;
  std::string system_id;
  std::optional<AxisScores> label;
  FeatureSequence features;  // normalized and fused
};

std::vector<Example> load_examples(const Manifest& manifest, std::span<const std::string> encoders,
                                   const NormStats& norm);

}  // namespace aqa::data
