#include "aqa/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace aqa::data {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'M', 'E', 'B', '1'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[at + static_cast<std::size_t>(i)];
  return v;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int encoder_rank(const std::string& id) {
  if (id == "wavlm") return 0;
  if (id == "muq") return 1;
  if (id == "m2d") return 2;
  return 3;
}

double score_field(const nlohmann::json& e, const char* key) {
  const auto& v = e.at(key);
  if (!v.is_number()) throw FormatError(std::string("manifest field '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

Manifest Manifest::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  Manifest m;
  m.base_dir = base_dir;
  try {
    if (j.value("format", "") != "aqa-manifest") throw FormatError("not an aqa manifest (missing format tag)");
    if (j.value("version", 0) != 1) throw FormatError("unsupported manifest version");
    if (j.contains("score_range")) {
      const auto& r = j.at("score_range");
      m.score_min = r.at(0).get<double>();
      m.score_max = r.at(1).get<double>();
      if (!(m.score_min < m.score_max)) throw FormatError("manifest score_range must be increasing");
    }
    static const std::set<std::string> kAxisKeys{"pq", "pc", "ce", "cu"};
    for (const auto& e : j.at("entries")) {
      Utterance u;
      std::size_t score_keys = 0;
      for (const auto& [key, value] : e.items()) {
        if (key == "utt_id") {
          u.utt_id = value.get<std::string>();
        } else if (key == "system_id") {
          u.system_id = value.get<std::string>();
        } else if (key == "duration_s") {
          u.duration_s = value.get<double>();
        } else if (kAxisKeys.contains(key)) {
          if (!value.is_null()) ++score_keys;
        } else if (key.rfind("emb.", 0) == 0 && key.size() > 4) {
          u.embedding_paths[key.substr(4)] = value.get<std::string>();
        } else {
          throw FormatError("unknown manifest field '" + key + "'");
        }
      }
      if (u.utt_id.empty()) throw FormatError("manifest entry without utt_id");
      if (score_keys == kNumAxes) {
        AxisScores s;
        s[Axis::PQ] = score_field(e, "pq");
        s[Axis::PC] = score_field(e, "pc");
        s[Axis::CE] = score_field(e, "ce");
        s[Axis::CU] = score_field(e, "cu");
        u.scores = s;
      } else if (score_keys != 0) {
        throw FormatError("entry '" + u.utt_id + "' has a partial set of axis scores");
      }
      m.entries.push_back(std::move(u));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

Manifest Manifest::load(const fs::path& path, bool check) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  fs::path base = path.parent_path();
  if (base.empty()) base = ".";
  Manifest m = from_json(j, base);
  if (check) m.check_files();
  return m;
}

nlohmann::json Manifest::to_json(const fs::path& relative_to) const {
  const fs::path target = fs::absolute(relative_to).lexically_normal();
  nlohmann::json entries_json = nlohmann::json::array();
  for (const auto& u : entries) {
    nlohmann::json e;
    e["utt_id"] = u.utt_id;
    e["system_id"] = u.system_id;
    if (u.scores) {
      e["pq"] = (*u.scores)[Axis::PQ];
      e["pc"] = (*u.scores)[Axis::PC];
      e["ce"] = (*u.scores)[Axis::CE];
      e["cu"] = (*u.scores)[Axis::CU];
    }
    e["duration_s"] = u.duration_s;
    for (const auto& [enc, p] : u.embedding_paths) {
      const fs::path resolved = fs::absolute(resolve(p)).lexically_normal();
      e["emb." + enc] = resolved.lexically_relative(target).generic_string();
    }
    entries_json.push_back(std::move(e));
  }
  return {{"format", "aqa-manifest"},
          {"version", 1},
          {"score_range", {score_min, score_max}},
          {"entries", std::move(entries_json)}};
}

void Manifest::save(const fs::path& path) const {
  fs::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest '" + path.string() + "'");
  out << to_json(dir).dump(1) << '\n';
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& u : entries) {
    if (!seen.insert(u.utt_id).second) throw FormatError("duplicate utt_id '" + u.utt_id + "'");
    if (u.scores) {
      for (double s : u.scores->values) {
        if (!std::isfinite(s) || s < score_min || s > score_max) {
          throw FormatError("score of '" + u.utt_id + "' outside [" + std::to_string(score_min) + ", " +
                            std::to_string(score_max) + "]");
        }
      }
    }
  }
}

void Manifest::check_files() const {
  for (const auto& u : entries) {
    for (const auto& [enc, p] : u.embedding_paths) {
      if (!fs::exists(resolve(p))) {
        throw FormatError("embedding file for '" + u.utt_id + "' (" + enc + ") not found: " + resolve(p).string());
      }
    }
  }
}

fs::path Manifest::resolve(const std::string& path) const {
  fs::path p(path);
  if (p.is_absolute()) return p;
  return base_dir / p;
}

fs::path Manifest::embedding_path(const Utterance& u, const std::string& encoder) const {
  auto it = u.embedding_paths.find(encoder);
  if (it == u.embedding_paths.end()) {
    throw FormatError("utterance '" + u.utt_id + "' has no embedding for encoder '" + encoder + "'");
  }
  return resolve(it->second);
}

bool Manifest::labeled() const {
  return std::all_of(entries.begin(), entries.end(), [](const Utterance& u) { return u.scores.has_value(); });
}

std::vector<std::string> Manifest::common_encoders() const {
  if (entries.empty()) return {};
  std::vector<std::string> out;
  for (const auto& [enc, p] : entries.front().embedding_paths) {
    const bool everywhere = std::all_of(entries.begin(), entries.end(),
                                        [&](const Utterance& u) { return u.embedding_paths.contains(enc); });
    if (everywhere) out.push_back(enc);
  }
  return canonical_encoder_order(std::move(out));
}

std::vector<std::string> Manifest::systems() const {
  std::set<std::string> s;
  for (const auto& u : entries) s.insert(u.system_id);
  return {s.begin(), s.end()};
}

std::string Manifest::fingerprint() const {
  std::string text;
  char buf[160];
  for (const auto& u : entries) {
    text += u.utt_id;
    text += '\t';
    text += u.system_id;
    if (u.scores) {
      for (double s : u.scores->values) {
        std::snprintf(buf, sizeof buf, "\t%.17g", s);
        text += buf;
      }
    }
    text += '\n';
  }
  std::snprintf(buf, sizeof buf, "%08x", crc32(text.data(), text.size()));
  return buf;
}

// ---------------------------------------------------------------------------
// MEB1

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq) {
  if (seq.encoder_id.empty() || seq.encoder_id.size() > 0xffff) throw ConfigError("MEB1: bad encoder id length");
  if (!(seq.frame_rate_hz > 0.0f) || !std::isfinite(seq.frame_rate_hz)) throw ConfigError("MEB1: frame rate must be > 0");
  if (seq.dims == 0 || seq.frames == 0) throw ConfigError("MEB1: dims and frames must be positive");
  if (seq.values.size() != static_cast<std::size_t>(seq.dims) * seq.frames) {
    throw ConfigError("MEB1: payload size does not match frames x dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(24 + seq.encoder_id.size() + seq.values.size() * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u16(out, kMebVersion);
  put_u16(out, static_cast<std::uint16_t>(seq.encoder_id.size()));
  out.insert(out.end(), seq.encoder_id.begin(), seq.encoder_id.end());
  put_u32(out, std::bit_cast<std::uint32_t>(seq.frame_rate_hz));
  put_u32(out, seq.dims);
  put_u32(out, seq.frames);
  const std::size_t payload_start = out.size();
  for (float v : seq.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  put_u32(out, crc32(out.data() + payload_start, out.size() - payload_start));
  return out;
}

EmbeddingSequence decode_embedding(std::span<const std::uint8_t> b) {
  if (b.size() < 8) throw FormatError("MEB1: file too short for header", b.size());
  if (std::memcmp(b.data(), kMagic, 4) != 0) throw FormatError("MEB1: bad magic", 0);
  const std::uint16_t version = get_u16(b, 4);
  if (version != kMebVersion) throw FormatError("MEB1: unsupported format version " + std::to_string(version), 4);
  const std::size_t id_len = get_u16(b, 6);
  if (id_len == 0) throw FormatError("MEB1: empty encoder id", 6);
  const std::size_t header_end = 8 + id_len + 12;
  if (b.size() < header_end) throw FormatError("MEB1: truncated header", b.size());

  EmbeddingSequence seq;
  seq.encoder_id.assign(reinterpret_cast<const char*>(b.data() + 8), id_len);
  std::size_t at = 8 + id_len;
  seq.frame_rate_hz = std::bit_cast<float>(get_u32(b, at));
  if (!std::isfinite(seq.frame_rate_hz) || !(seq.frame_rate_hz > 0.0f)) throw FormatError("MEB1: invalid frame rate", at);
  seq.dims = get_u32(b, at + 4);
  if (seq.dims == 0) throw FormatError("MEB1: dims must be positive", at + 4);
  seq.frames = get_u32(b, at + 8);
  if (seq.frames == 0) throw FormatError("MEB1: frames must be positive", at + 8);

  const std::uint64_t frame_bytes = std::uint64_t{seq.dims} * 4;
  const std::uint64_t payload_bytes = frame_bytes * seq.frames;
  const std::uint64_t expected = header_end + payload_bytes + 4;
  if (b.size() < expected) {
    const std::uint64_t available = b.size() >= header_end + 4 ? b.size() - header_end - 4 : 0;
    const std::uint64_t whole = available / frame_bytes;
    throw FormatError("MEB1: truncated payload, header declares " + std::to_string(seq.frames) +
                          " frames but only " + std::to_string(whole) + " are present",
                      header_end + whole * frame_bytes);
  }
  if (b.size() > expected) throw FormatError("MEB1: trailing bytes after checksum", expected);

  const std::uint32_t stored_crc = get_u32(b, header_end + payload_bytes);
  const std::uint32_t actual_crc = crc32(b.data() + header_end, payload_bytes);
  if (stored_crc != actual_crc) throw FormatError("MEB1: payload checksum mismatch", header_end + payload_bytes);

  seq.values.resize(static_cast<std::size_t>(seq.dims) * seq.frames);
  for (std::size_t i = 0; i < seq.values.size(); ++i) {
    const float v = std::bit_cast<float>(get_u32(b, header_end + 4 * i));
    if (!std::isfinite(v)) throw FormatError("MEB1: non-finite value in payload", header_end + 4 * i);
    seq.values[i] = v;
  }
  return seq;
}

EmbeddingSequence read_embedding(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_embedding(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.byte_offset());
  }
}

void write_embedding(const EmbeddingSequence& seq, const fs::path& path) {
  const auto bytes = encode_embedding(seq);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("short write to '" + path.string() + "'");
}

FeatureSequence widen(const EmbeddingSequence& seq) {
  FeatureSequence f;
  f.encoder_id = seq.encoder_id;
  f.frame_rate_hz = seq.frame_rate_hz;
  f.frames = seq.frames;
  f.dims = seq.dims;
  f.values.assign(seq.values.begin(), seq.values.end());
  return f;
}

// ---------------------------------------------------------------------------
// Normalization

const EncoderNorm& NormStats::at(const std::string& encoder) const {
  auto it = encoders.find(encoder);
  if (it == encoders.end()) throw ConfigError("no normalization statistics for encoder '" + encoder + "'");
  return it->second;
}

nlohmann::json NormStats::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [enc, n] : encoders) j[enc] = {{"mean", n.mean}, {"std", n.std}};
  return j;
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats s;
  try {
    for (const auto& [enc, v] : j.items()) {
      EncoderNorm n;
      n.mean = v.at("mean").get<std::vector<double>>();
      n.std = v.at("std").get<std::vector<double>>();
      if (n.mean.size() != n.std.size() || n.mean.empty()) throw FormatError("norm stats for '" + enc + "' are malformed");
      for (double sd : n.std) {
        if (!(sd > 0.0)) throw FormatError("norm stats for '" + enc + "' contain a non-positive std");
      }
      s.encoders[enc] = std::move(n);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed norm stats: ") + e.what());
  }
  return s;
}

EncoderNorm fit_encoder_norm(std::span<const FeatureSequence> seqs, std::vector<std::string>* warnings) {
  if (seqs.empty()) throw DomainError("cannot fit normalization on an empty set");
  const std::size_t dims = seqs.front().dims;
  std::size_t total = 0;
  EncoderNorm n;
  n.mean.assign(dims, 0.0);
  n.std.assign(dims, 0.0);
  for (const auto& s : seqs) {
    if (s.dims != dims) throw FormatError("encoder '" + s.encoder_id + "' has inconsistent dims across the corpus");
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t d = 0; d < dims; ++d) n.mean[d] += s.frame(t)[d];
    }
    total += s.frames;
  }
  if (total < 2) throw DomainError("normalization needs at least 2 frames");
  for (auto& m : n.mean) m /= static_cast<double>(total);
  for (const auto& s : seqs) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t d = 0; d < dims; ++d) {
        const double c = s.frame(t)[d] - n.mean[d];
        n.std[d] += c * c;
      }
    }
  }
  for (std::size_t d = 0; d < dims; ++d) {
    n.std[d] = std::sqrt(n.std[d] / static_cast<double>(total));
    if (n.std[d] < kStdFloor) {
      if (warnings != nullptr) {
        warnings->push_back("encoder '" + seqs.front().encoder_id + "' dim " + std::to_string(d) +
                            " has ~zero variance; std floored");
      }
      n.std[d] = kStdFloor;
    }
  }
  return n;
}

NormStats fit_norm(const Manifest& train, std::span<const std::string> encoders) {
  NormStats stats;
  for (const auto& enc : encoders) {
    std::vector<FeatureSequence> seqs;
    seqs.reserve(train.entries.size());
    for (const auto& u : train.entries) seqs.push_back(widen(read_embedding(train.embedding_path(u, enc))));
    stats.encoders[enc] = fit_encoder_norm(seqs, &stats.warnings);
  }
  return stats;
}

FeatureSequence apply_norm(const FeatureSequence& seq, const EncoderNorm& norm) {
  if (norm.mean.size() != seq.dims) {
    throw ConfigError("normalization for '" + seq.encoder_id + "' expects " + std::to_string(norm.mean.size()) +
                      " dims, sequence has " + std::to_string(seq.dims));
  }
  FeatureSequence out = seq;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t d = 0; d < seq.dims; ++d) {
      double& v = out.values[t * seq.dims + d];
      v = (v - norm.mean[d]) / norm.std[d];
    }
  }
  return out;
}

FeatureSequence invert_norm(const FeatureSequence& seq, const EncoderNorm& norm) {
  if (norm.mean.size() != seq.dims) throw ConfigError("normalization dims mismatch");
  FeatureSequence out = seq;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t d = 0; d < seq.dims; ++d) {
      double& v = out.values[t * seq.dims + d];
      v = v * norm.std[d] + norm.mean[d];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fusion and cropping

std::vector<std::string> canonical_encoder_order(std::vector<std::string> encoders) {
  std::sort(encoders.begin(), encoders.end(), [](const std::string& a, const std::string& b) {
    const int ra = encoder_rank(a);
    const int rb = encoder_rank(b);
    return ra != rb ? ra < rb : a < b;
  });
  return encoders;
}

FeatureSequence align_and_fuse(std::span<const FeatureSequence> seqs) {
  if (seqs.empty()) throw DomainError("align_and_fuse needs at least one sequence");
  if (seqs.size() == 1) return seqs.front();

  std::vector<const FeatureSequence*> ordered;
  for (const auto& s : seqs) {
    if (s.frames == 0 || !(s.frame_rate_hz > 0.0)) throw DomainError("cannot fuse an empty sequence");
    ordered.push_back(&s);
  }
  std::stable_sort(ordered.begin(), ordered.end(), [](const FeatureSequence* a, const FeatureSequence* b) {
    const int ra = encoder_rank(a->encoder_id);
    const int rb = encoder_rank(b->encoder_id);
    return ra != rb ? ra < rb : a->encoder_id < b->encoder_id;
  });
  const FeatureSequence* target = ordered.front();
  for (const auto* s : ordered) {
    if (s->frame_rate_hz < target->frame_rate_hz) target = s;
  }

  FeatureSequence out;
  out.frame_rate_hz = target->frame_rate_hz;
  out.frames = target->frames;
  for (const auto* s : ordered) {
    out.dims += s->dims;
    out.encoder_id += (out.encoder_id.empty() ? "" : "+") + s->encoder_id;
  }
  out.values.assign(out.frames * out.dims, 0.0);

  std::size_t offset = 0;
  for (const auto* s : ordered) {
    const bool same_grid = s->frame_rate_hz == target->frame_rate_hz;
    for (std::size_t k = 0; k < out.frames; ++k) {
      double* dst = out.values.data() + k * out.dims + offset;
      const double pos = same_grid ? static_cast<double>(k)
                                   : static_cast<double>(k) * s->frame_rate_hz / target->frame_rate_hz;
      const auto last = static_cast<double>(s->frames - 1);
      const double clamped = std::min(pos, last);
      const auto i0 = static_cast<std::size_t>(std::floor(clamped));
      const std::size_t i1 = std::min(i0 + 1, s->frames - 1);
      const double frac = clamped - static_cast<double>(i0);
      const double* a = s->frame(i0);
      const double* b = s->frame(i1);
      for (std::size_t d = 0; d < s->dims; ++d) dst[d] = frac == 0.0 ? a[d] : a[d] + frac * (b[d] - a[d]);
    }
    offset += s->dims;
  }
  return out;
}

CropWindow crop_window(std::size_t frames, double frame_rate_hz, double max_seconds, Rng& rng) {
  if (!(max_seconds > 0.0)) throw ConfigError("crop length must be positive");
  const double duration = static_cast<double>(frames) / frame_rate_hz;
  if (duration <= max_seconds) return {0, frames};
  auto window = static_cast<std::size_t>(std::floor(max_seconds * frame_rate_hz + 1e-9));
  window = std::clamp<std::size_t>(window, 1, frames);
  const std::size_t start = static_cast<std::size_t>(rng.index(frames - window + 1));
  return {start, window};
}

FeatureSequence slice_frames(const FeatureSequence& seq, CropWindow window) {
  if (window.start + window.frames > seq.frames || window.frames == 0) throw DomainError("crop window out of range");
  FeatureSequence out;
  out.encoder_id = seq.encoder_id;
  out.frame_rate_hz = seq.frame_rate_hz;
  out.dims = seq.dims;
  out.frames = window.frames;
  const auto begin = seq.values.begin() + static_cast<std::ptrdiff_t>(window.start * seq.dims);
  out.values.assign(begin, begin + static_cast<std::ptrdiff_t>(window.frames * seq.dims));
  return out;
}

FeatureSequence random_crop(const FeatureSequence& seq, double max_seconds, Rng& rng) {
  const CropWindow w = crop_window(seq.frames, seq.frame_rate_hz, max_seconds, rng);
  if (w.start == 0 && w.frames == seq.frames) return seq;
  return slice_frames(seq, w);
}

// ---------------------------------------------------------------------------
// Split

std::size_t train_count(std::size_t n, double f) {
  if (n == 0) return 0;
  const auto k = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

SplitResult stratified_split(const Manifest& manifest, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train fraction must be in (0, 1]");
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& u = manifest.entries[i];
    if (u.system_id.empty()) throw FormatError("entry '" + u.utt_id + "' has no system_id; cannot stratify");
    strata[u.system_id].push_back(i);
  }
  SplitResult result;
  std::vector<bool> to_train(manifest.entries.size(), false);
  Rng rng(seed);
  for (auto& [system, members] : strata) {
    if (members.size() == 1) {
      result.warnings.push_back("system '" + system + "' has a single utterance; assigned to train");
    }
    shuffle(members, rng);
    const std::size_t k = train_count(members.size(), train_fraction);
    for (std::size_t i = 0; i < k; ++i) to_train[members[i]] = true;
  }
  for (Manifest* m : {&result.train, &result.dev}) {
    m->score_min = manifest.score_min;
    m->score_max = manifest.score_max;
    m->base_dir = manifest.base_dir;
  }
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    (to_train[i] ? result.train : result.dev).entries.push_back(manifest.entries[i]);
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<Example> load_examples(const Manifest& manifest, std::span<const std::string> encoders,
                                   const NormStats& norm) {
  if (encoders.empty()) throw ConfigError("at least one encoder is required");
  std::vector<Example> out;
  out.reserve(manifest.entries.size());
  std::vector<FeatureSequence> parts;
  for (const auto& u : manifest.entries) {
    parts.clear();
    for (const auto& enc : encoders) {
      FeatureSequence s = widen(read_embedding(manifest.embedding_path(u, enc)));
      if (s.encoder_id != enc) {
        throw FormatError("file for encoder '" + enc + "' of '" + u.utt_id + "' declares encoder '" + s.encoder_id + "'");
      }
      parts.push_back(apply_norm(s, norm.at(enc)));
    }
    Example ex;
    ex.utt_id = u.utt_id;
    ex.system_id = u.system_id;
    ex.label = u.scores;
    ex.features = align_and_fuse(parts);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace aqa::data
