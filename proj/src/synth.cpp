#include "aqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace aqa::synth {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  if (n_systems == 0 || utts_per_system == 0) throw ConfigError("synth: systems and utterances per system must be > 0");
  if (encoders.empty()) throw ConfigError("synth: at least one pseudo-encoder is required");
  for (const auto& e : encoders) {
    if (e.id.empty() || e.dims == 0 || !(e.frame_rate_hz > 0.0)) {
      throw ConfigError("synth: pseudo-encoder needs an id, positive dims and a positive frame rate");
    }
  }
  if (!(noise_std >= 0.0) || !(frame_noise_std >= 0.0) || !(label_std > 0.0)) {
    throw ConfigError("synth: noise levels must be >= 0 and label_std > 0");
  }
  if (!(axis_correlation >= 0.0 && axis_correlation < 1.0)) {
    throw ConfigError("synth: axis_correlation must lie in [0, 1)");
  }
  if (!(min_duration_s > 0.0) || max_duration_s < min_duration_s) throw ConfigError("synth: bad duration range");
  if (!(score_min < score_max)) throw ConfigError("synth: score range must be increasing");
}

std::size_t GeneratingMap::input_dims() const {
  std::size_t n = 0;
  for (auto d : dims) n += d;
  return n;
}

AxisScores GeneratingMap::apply(std::span<const double> pooled) const {
  if (pooled.size() != input_dims()) throw ConfigError("generating map: pooled vector has wrong length");
  AxisScores s;
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    double acc = bias[k];
    for (std::size_t d = 0; d < pooled.size(); ++d) acc += weights[k][d] * pooled[d];
    s[k] = acc;
  }
  return s;
}

nlohmann::json SynthSpec::to_json() const {
  nlohmann::json encs = nlohmann::json::array();
  for (const auto& e : encoders) encs.push_back({{"id", e.id}, {"dims", e.dims}, {"frame_rate_hz", e.frame_rate_hz}});
  return {{"n_systems", n_systems},
          {"utts_per_system", utts_per_system},
          {"encoders", encs},
          {"noise_std", noise_std},
          {"seed", seed},
          {"min_duration_s", min_duration_s},
          {"max_duration_s", max_duration_s},
          {"frame_noise_std", frame_noise_std},
          {"label_std", label_std},
          {"axis_correlation", axis_correlation},
          {"score_range", {score_min, score_max}}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  SynthSpec s;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_systems") {
        s.n_systems = v.get<std::size_t>();
      } else if (key == "utts_per_system") {
        s.utts_per_system = v.get<std::size_t>();
      } else if (key == "encoders") {
        s.encoders.clear();
        for (const auto& e : v) {
          for (const auto& [ek, ev] : e.items()) {
            if (ek != "id" && ek != "dims" && ek != "frame_rate_hz") {
              throw ConfigError("unknown pseudo-encoder key '" + ek + "'");
            }
          }
          s.encoders.push_back({e.at("id").get<std::string>(), e.at("dims").get<std::size_t>(),
                                e.value("frame_rate_hz", 25.0)});
        }
      } else if (key == "noise_std") {
        s.noise_std = v.get<double>();
      } else if (key == "seed") {
        s.seed = v.get<std::uint64_t>();
      } else if (key == "min_duration_s") {
        s.min_duration_s = v.get<double>();
      } else if (key == "max_duration_s") {
        s.max_duration_s = v.get<double>();
      } else if (key == "frame_noise_std") {
        s.frame_noise_std = v.get<double>();
      } else if (key == "label_std") {
        s.label_std = v.get<double>();
      } else if (key == "axis_correlation") {
        s.axis_correlation = v.get<double>();
      } else if (key == "score_range") {
        const auto r = v.get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("score_range needs two numbers");
        s.score_min = r[0];
        s.score_max = r[1];
      } else {
        throw ConfigError("unknown synth config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed synth config: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json GeneratingMap::to_json() const {
  nlohmann::json w = nlohmann::json::object();
  for (std::size_t k = 0; k < kNumAxes; ++k) w[std::string(axis_name(kAxes[k]))] = weights[k];
  nlohmann::json b = nlohmann::json::object();
  for (std::size_t k = 0; k < kNumAxes; ++k) b[std::string(axis_name(kAxes[k]))] = bias[k];
  return {{"format", "aqa-generating-map"}, {"version", 1}, {"encoders", encoders},
          {"dims", dims},                   {"weights", w}, {"bias", b}};
}

GeneratingMap GeneratingMap::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "aqa-generating-map") throw FormatError("not a generating map");
    GeneratingMap m;
    m.encoders = j.at("encoders").get<std::vector<std::string>>();
    m.dims = j.at("dims").get<std::vector<std::size_t>>();
    for (std::size_t k = 0; k < kNumAxes; ++k) {
      const std::string key(axis_name(kAxes[k]));
      m.weights[k] = j.at("weights").at(key).get<std::vector<double>>();
      m.bias[k] = j.at("bias").at(key).get<double>();
      if (m.weights[k].size() != m.input_dims()) throw FormatError("generating map weights have the wrong length");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed generating map: ") + e.what());
  }
}

std::vector<double> pooled_features(const data::Manifest& manifest, const data::Utterance& u,
                                    const GeneratingMap& map) {
  std::vector<double> pooled;
  pooled.reserve(map.input_dims());
  for (const auto& enc : map.encoders) {
    const auto seq = data::read_embedding(manifest.embedding_path(u, enc));
    std::vector<double> sum(seq.dims, 0.0);
    for (std::size_t t = 0; t < seq.frames; ++t) {
      for (std::size_t d = 0; d < seq.dims; ++d) sum[d] += static_cast<double>(seq.values[t * seq.dims + d]);
    }
    for (double s : sum) pooled.push_back(s / static_cast<double>(seq.frames));
  }
  return pooled;
}

SynthResult synth_corpus(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "emb", ec);
  if (ec) throw ConfigError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  Rng rng(spec.seed);
  SynthResult result;
  GeneratingMap& map = result.map;
  for (const auto& e : spec.encoders) {
    map.encoders.push_back(e.id);
    map.dims.push_back(e.dims);
  }
  const std::size_t total_dims = map.input_dims();

  // Latent coordinates are 0.5 * system + 0.5 * clip, each uniform in
  // [-1, 1], so every pooled dimension has variance 1/6.
  const double pooled_var = 1.0 / 6.0;
  const double scale = spec.label_std / std::sqrt(pooled_var);
  const double center = 0.5 * (spec.score_min + spec.score_max);
  // Each axis direction mixes a shared Gaussian direction with its own, so
  // axes correlate the way perceptual ratings usually do.
  std::vector<double> shared(total_dims);
  for (auto& v : shared) v = rng.normal();
  const double a_shared = std::sqrt(spec.axis_correlation);
  const double a_own = std::sqrt(1.0 - spec.axis_correlation);
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    std::vector<double> w(total_dims);
    double norm = 0.0;
    for (std::size_t d = 0; d < total_dims; ++d) {
      w[d] = a_shared * shared[d] + a_own * rng.normal();
      norm += w[d] * w[d];
    }
    norm = std::sqrt(norm);
    for (auto& v : w) v = v / norm * scale;
    map.weights[k] = std::move(w);
    map.bias[k] = center;
  }

  std::vector<std::vector<double>> system_latent(spec.n_systems, std::vector<double>(total_dims));
  for (auto& s : system_latent) {
    for (auto& v : s) v = rng.uniform(-1.0, 1.0);
  }

  data::Manifest& manifest = result.manifest;
  manifest.score_min = spec.score_min;
  manifest.score_max = spec.score_max;
  manifest.base_dir = out_dir;

  char name[64];
  std::vector<double> latent(total_dims);
  std::vector<double> jitter;
  std::vector<double> pooled(total_dims);
  for (std::size_t sys = 0; sys < spec.n_systems; ++sys) {
    std::snprintf(name, sizeof name, "sys%03zu", sys);
    const std::string system_id = name;
    for (std::size_t n = 0; n < spec.utts_per_system; ++n) {
      std::snprintf(name, sizeof name, "%s_utt%03zu", system_id.c_str(), n);
      data::Utterance u;
      u.utt_id = name;
      u.system_id = system_id;
      u.duration_s = rng.uniform(spec.min_duration_s, spec.max_duration_s);
      for (std::size_t d = 0; d < total_dims; ++d) latent[d] = 0.5 * system_latent[sys][d] + 0.5 * rng.uniform(-1.0, 1.0);

      std::size_t offset = 0;
      for (const auto& enc : spec.encoders) {
        data::EmbeddingSequence seq;
        seq.encoder_id = enc.id;
        seq.frame_rate_hz = static_cast<float>(enc.frame_rate_hz);
        seq.dims = static_cast<std::uint32_t>(enc.dims);
        seq.frames = static_cast<std::uint32_t>(
            std::max(2.0, std::floor(u.duration_s * enc.frame_rate_hz + 1e-9)));
        seq.values.resize(static_cast<std::size_t>(seq.frames) * enc.dims);
        jitter.resize(seq.frames);
        for (std::size_t d = 0; d < enc.dims; ++d) {
          double mean = 0.0;
          for (auto& j : jitter) {
            j = spec.frame_noise_std * rng.normal();
            mean += j;
          }
          mean /= static_cast<double>(seq.frames);
          double sum = 0.0;
          for (std::size_t t = 0; t < seq.frames; ++t) {
            const float v = static_cast<float>(latent[offset + d] + jitter[t] - mean);
            seq.values[t * enc.dims + d] = v;
            sum += static_cast<double>(v);
          }
          pooled[offset + d] = sum / static_cast<double>(seq.frames);
        }
        const std::string file = "emb/" + u.utt_id + "." + enc.id + ".meb";
        data::write_embedding(seq, out_dir / file);
        u.embedding_paths[enc.id] = file;
        offset += enc.dims;
      }

      AxisScores s = map.apply(pooled);
      for (std::size_t k = 0; k < kNumAxes; ++k) {
        if (spec.noise_std > 0.0) s[k] += spec.noise_std * rng.normal();
        const double clipped = std::clamp(s[k], spec.score_min, spec.score_max);
        if (clipped != s[k]) ++result.clipped_labels;
        s[k] = clipped;
      }
      u.scores = s;
      manifest.entries.push_back(std::move(u));
    }
  }

  result.manifest_path = out_dir / "manifest.json";
  result.map_path = out_dir / "generator.json";
  manifest.save(result.manifest_path);
  std::ofstream out(result.map_path);
  if (!out) throw ConfigError("cannot write '" + result.map_path.string() + "'");
  out << map.to_json().dump(1) << '\n';
  return result;
}

}  // namespace aqa::synth
