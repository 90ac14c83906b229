#include "aqa/model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace aqa::model {

namespace fs = std::filesystem;

namespace {

constexpr char kCheckpointMagic[4] = {'A', 'Q', 'C', 'K'};
const char* const kBlstmPrefix = "blstm";

std::string head_param(std::size_t axis, std::size_t layer, const char* which) {
  return "head." + std::string(axis_name(kAxes[axis])) + "." + std::to_string(layer) + "." + which;
}

nn::Blstm make_blstm(const ModelConfig& c, std::size_t input_dims) {
  return nn::Blstm(kBlstmPrefix, input_dims, c.blstm_hidden);
}

nlohmann::json loss_to_json(const losses::LossConfig& l) {
  return {{"kind", losses::loss_name(l.kind)}, {"margin", l.margin},
          {"clip_tau", l.clip_tau},           {"ut_con_weight", l.ut_con_weight},
          {"dcq_dev_weight", l.dcq_dev_weight}, {"dcq_rank_weight", l.dcq_rank_weight}};
}

losses::LossConfig loss_from_json(const nlohmann::json& j) {
  losses::LossConfig l;
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") {
      l.kind = losses::parse_loss(v.get<std::string>());
    } else if (key == "margin") {
      l.margin = v.get<double>();
    } else if (key == "clip_tau") {
      l.clip_tau = v.get<double>();
    } else if (key == "ut_con_weight") {
      l.ut_con_weight = v.get<double>();
    } else if (key == "dcq_dev_weight") {
      l.dcq_dev_weight = v.get<double>();
    } else if (key == "dcq_rank_weight") {
      l.dcq_rank_weight = v.get<double>();
    } else {
      throw ConfigError("unknown loss config key '" + key + "'");
    }
  }
  l.validate();
  return l;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[at + static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

std::string_view aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::MLP: return "MLP";
    case Aggregation::BLSTM_h: return "BLSTM_h";
    case Aggregation::BLSTM_t: return "BLSTM_t";
  }
  return "?";
}

Aggregation parse_aggregation(std::string_view name) {
  std::string s;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (s == "mlp") return Aggregation::MLP;
  if (s == "blstmh") return Aggregation::BLSTM_h;
  if (s == "blstmt") return Aggregation::BLSTM_t;
  throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected MLP, BLSTM_h or BLSTM_t)");
}

void ModelConfig::validate() const {
  if (encoders.empty()) throw ConfigError("model needs at least one encoder");
  std::set<std::string> unique(encoders.begin(), encoders.end());
  if (unique.size() != encoders.size()) throw ConfigError("duplicate encoder in model config");
  if (aggregation != Aggregation::MLP && blstm_hidden == 0) throw ConfigError("blstm_hidden must be positive");
  for (auto h : head_hidden) {
    if (h == 0) throw ConfigError("head hidden sizes must be positive");
  }
  loss.validate();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"encoders", encoders},
          {"aggregation", aggregation_name(aggregation)},
          {"blstm_hidden", blstm_hidden},
          {"head_hidden", head_hidden},
          {"loss", loss_to_json(loss)},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  ModelConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "encoders") {
        c.encoders = v.get<std::vector<std::string>>();
      } else if (key == "aggregation") {
        c.aggregation = parse_aggregation(v.get<std::string>());
      } else if (key == "blstm_hidden") {
        c.blstm_hidden = v.get<std::size_t>();
      } else if (key == "head_hidden") {
        c.head_hidden = v.get<std::vector<std::size_t>>();
      } else if (key == "loss") {
        c.loss = loss_from_json(v);
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else {
        throw ConfigError("unknown model config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.encoders = data::canonical_encoder_order(c.encoders);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config, data::NormStats norm) : config_(std::move(config)), norm_(std::move(norm)) {
  config_.encoders = data::canonical_encoder_order(config_.encoders);
  config_.validate();
  norm_.warnings.clear();
  for (const auto& enc : config_.encoders) input_dims_ += norm_.at(enc).mean.size();
  // Keep only the statistics the model consumes.
  std::map<std::string, data::EncoderNorm> kept;
  for (const auto& enc : config_.encoders) kept[enc] = norm_.at(enc);
  norm_.encoders = std::move(kept);
  init_params();
}

std::size_t Model::feature_width() const {
  return config_.aggregation == Aggregation::MLP ? input_dims_ : 2 * config_.blstm_hidden;
}

void Model::init_params() {
  Rng rng(config_.seed);
  if (config_.aggregation != Aggregation::MLP) make_blstm(config_, input_dims_).init(params_, rng);
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    std::size_t din = feature_width();
    const std::size_t layers = config_.head_hidden.size() + 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t dout = l + 1 < layers ? config_.head_hidden[l] : 1;
      nn::ParamTensor w;
      nn::ParamTensor b;
      nn::init_affine(w, b, din, dout, rng);
      params_[head_param(k, l, "w")] = std::move(w);
      params_[head_param(k, l, "b")] = std::move(b);
      din = dout;
    }
  }
}

std::vector<std::string> Model::head_param_names(std::size_t axis) const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l <= config_.head_hidden.size(); ++l) {
    names.push_back(head_param(axis, l, "w"));
    names.push_back(head_param(axis, l, "b"));
  }
  return names;
}

std::vector<std::string> Model::trunk_param_names() const {
  std::vector<std::string> names;
  for (const auto& [name, t] : params_) {
    if (name.rfind("head.", 0) != 0) names.push_back(name);
  }
  return names;
}

ForwardTrace Model::forward_trace(const nn::SequenceBatch& batch) const {
  batch.validate();
  if (batch.dims != input_dims_) {
    throw ConfigError("model expects " + std::to_string(input_dims_) + " fused input dims, got " +
                      std::to_string(batch.dims));
  }
  ForwardTrace tr;
  tr.batch = batch.batch;
  const std::size_t B = batch.batch;
  switch (config_.aggregation) {
    case Aggregation::MLP:
      tr.pooled = nn::masked_mean_pool(batch);
      tr.features = tr.pooled;
      break;
    case Aggregation::BLSTM_h: {
      tr.pooled = nn::masked_mean_pool(batch);
      tr.pooled_seq = nn::SequenceBatch(B, 1, input_dims_);
      tr.pooled_seq.data = tr.pooled;
      std::fill(tr.pooled_seq.mask.begin(), tr.pooled_seq.mask.end(), 1);
      tr.blstm = make_blstm(config_, input_dims_).forward(params_, tr.pooled_seq);
      tr.features = tr.blstm.final_hidden;
      break;
    }
    case Aggregation::BLSTM_t: {
      tr.blstm = make_blstm(config_, input_dims_).forward(params_, batch);
      tr.blstm_seq = nn::SequenceBatch(B, batch.frames, tr.blstm.width());
      tr.blstm_seq.data = tr.blstm.outputs;
      tr.blstm_seq.mask = batch.mask;
      tr.features = nn::masked_mean_pool(tr.blstm_seq);
      break;
    }
  }

  const std::size_t F = feature_width();
  const std::size_t layers = config_.head_hidden.size() + 1;
  tr.predictions.assign(B * kNumAxes, 0.0);
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    auto& acts = tr.activations[k];
    acts.resize(layers);
    std::size_t din = F;
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& w = params_.at(head_param(k, l, "w"));
      const auto& b = params_.at(head_param(k, l, "b"));
      const std::size_t dout = w.shape[0];
      const std::vector<double>& input = l == 0 ? tr.features : acts[l - 1];
      auto& out = acts[l];
      out.assign(B * dout, 0.0);
      for (std::size_t i = 0; i < B; ++i) {
        std::span<const double> x(input.data() + i * din, din);
        std::span<double> y(out.data() + i * dout, dout);
        nn::affine_forward(x, w, b, y);
        if (l + 1 < layers) {
          for (auto& v : y) v = std::tanh(v);
        }
      }
      din = dout;
    }
    for (std::size_t i = 0; i < B; ++i) tr.predictions[i * kNumAxes + k] = acts.back()[i];
  }
  return tr;
}

std::vector<double> Model::forward(const nn::SequenceBatch& batch) const { return forward_trace(batch).predictions; }

void Model::backward(const nn::SequenceBatch& batch, const ForwardTrace& tr, std::span<const double> d_pred) {
  const std::size_t B = tr.batch;
  if (d_pred.size() != B * kNumAxes) throw ConfigError("backward: d_pred must be batch x 4");
  const std::size_t F = feature_width();
  const std::size_t layers = config_.head_hidden.size() + 1;
  std::vector<double> d_features(B * F, 0.0);
  std::vector<double> d_out;
  std::vector<double> d_in;

  for (std::size_t k = 0; k < kNumAxes; ++k) {
    const auto& acts = tr.activations[k];
    d_out.assign(B, 0.0);
    for (std::size_t i = 0; i < B; ++i) d_out[i] = d_pred[i * kNumAxes + k];
    for (std::size_t l = layers; l-- > 0;) {
      auto& w = params_.at(head_param(k, l, "w"));
      auto& b = params_.at(head_param(k, l, "b"));
      const std::size_t dout = w.shape[0];
      const std::size_t din = w.shape[1];
      if (l + 1 < layers) {
        // tanh'(z) = 1 - tanh(z)^2
        for (std::size_t j = 0; j < B * dout; ++j) d_out[j] *= 1.0 - acts[l][j] * acts[l][j];
      }
      const std::vector<double>& input = l == 0 ? tr.features : acts[l - 1];
      d_in.assign(B * din, 0.0);
      for (std::size_t i = 0; i < B; ++i) {
        nn::affine_backward(std::span<const double>(input.data() + i * din, din),
                            std::span<const double>(d_out.data() + i * dout, dout), w, b,
                            std::span<double>(d_in.data() + i * din, din));
      }
      d_out.swap(d_in);
    }
    for (std::size_t j = 0; j < B * F; ++j) d_features[j] += d_out[j];
  }

  switch (config_.aggregation) {
    case Aggregation::MLP:
      break;
    case Aggregation::BLSTM_h:
      make_blstm(config_, input_dims_).backward(params_, tr.pooled_seq, tr.blstm, {}, d_features, nullptr);
      break;
    case Aggregation::BLSTM_t: {
      const auto d_outputs = nn::masked_mean_pool_backward(tr.blstm_seq, d_features);
      make_blstm(config_, input_dims_).backward(params_, batch, tr.blstm, d_outputs, {}, nullptr);
      break;
    }
  }
}

double Model::loss_and_grad(const nn::SequenceBatch& batch, std::span<const double> labels) {
  nn::zero_grads(params_);
  const ForwardTrace tr = forward_trace(batch);
  const losses::LossValue lv = losses::multi_axis_loss(tr.predictions, labels, config_.loss);
  backward(batch, tr, lv.grad);
  return lv.value;
}

double Model::loss(const nn::SequenceBatch& batch, std::span<const double> labels) const {
  return losses::multi_axis_loss(forward(batch), labels, config_.loss).value;
}

std::vector<AxisScores> Model::predict(std::span<const data::Example> examples, std::size_t chunk) const {
  std::vector<AxisScores> out;
  out.reserve(examples.size());
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const std::size_t n = std::min(chunk, examples.size() - start);
    const auto batch = make_batch(examples.subspan(start, n));
    const auto pred = forward(batch);
    for (std::size_t i = 0; i < n; ++i) {
      AxisScores s;
      for (std::size_t k = 0; k < kNumAxes; ++k) s[k] = pred[i * kNumAxes + k];
      out.push_back(s);
    }
  }
  return out;
}

nn::SequenceBatch make_batch(std::span<const data::FeatureSequence* const> seqs) {
  if (seqs.empty()) throw DomainError("cannot build an empty batch");
  std::size_t frames = 0;
  const std::size_t dims = seqs.front()->dims;
  for (const auto* s : seqs) {
    if (s->dims != dims) throw ConfigError("batch members have different feature dims");
    if (s->frames == 0) throw DomainError("batch member '" + s->encoder_id + "' has no frames");
    frames = std::max(frames, s->frames);
  }
  nn::SequenceBatch batch(seqs.size(), frames, dims);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const auto* s = seqs[b];
    std::copy(s->values.begin(), s->values.end(), batch.frame(b, 0));
    std::fill_n(batch.mask.begin() + static_cast<std::ptrdiff_t>(b * frames), s->frames, 1);
  }
  return batch;
}

nn::SequenceBatch make_batch(std::span<const data::Example> examples) {
  std::vector<const data::FeatureSequence*> seqs;
  seqs.reserve(examples.size());
  for (const auto& e : examples) seqs.push_back(&e.features);
  return make_batch(seqs);
}

std::vector<double> label_matrix(std::span<const data::Example* const> examples) {
  std::vector<double> labels;
  labels.reserve(examples.size() * kNumAxes);
  for (const auto* e : examples) {
    if (!e->label) throw FormatError("utterance '" + e->utt_id + "' has no labels");
    labels.insert(labels.end(), e->label->values.begin(), e->label->values.end());
  }
  return labels;
}

bool head_independence_check(Model& model, const nn::SequenceBatch& batch) {
  const ForwardTrace tr = model.forward_trace(batch);
  std::vector<double> d_pred(tr.batch * kNumAxes);
  for (std::size_t k = 0; k < kNumAxes; ++k) {
    std::fill(d_pred.begin(), d_pred.end(), 0.0);
    for (std::size_t i = 0; i < tr.batch; ++i) d_pred[i * kNumAxes + k] = 1.0;
    nn::zero_grads(model.params());
    model.backward(batch, tr, d_pred);
    for (std::size_t j = 0; j < kNumAxes; ++j) {
      if (j == k) continue;
      for (const auto& name : model.head_param_names(j)) {
        for (double g : model.params().at(name).grad) {
          if (g != 0.0) return false;
        }
      }
    }
  }
  nn::zero_grads(model.params());
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoint format:
//   "AQCK" | u16 version | u32 header length | header (UTF-8 JSON)
//   | f64 parameter blobs in header order | u32 CRC32(header + blobs)

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const TrainMeta& meta) {
  nlohmann::json header;
  header["config"] = model.config().to_json();
  header["norm_stats"] = model.norm().to_json();
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& [name, t] : model.params()) shapes.push_back({{"name", name}, {"shape", t.shape}});
  header["params"] = shapes;
  header["train_meta"] = {{"epochs_run", meta.epochs_run},
                          {"best_epoch", meta.best_epoch},
                          {"best_dev_loss", std::isfinite(meta.best_dev_loss) ? nlohmann::json(meta.best_dev_loss)
                                                                               : nlohmann::json(nullptr)},
                          {"dataset_fingerprint", meta.dataset_fingerprint}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  const std::size_t body_start = out.size();
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : model.params()) {
    for (double v : t.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u32(out, crc32(out.data() + body_start, out.size() - body_start));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> b, const ModelConfig* expected) {
  if (b.size() < 10 || std::memcmp(b.data(), kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint file", 0);
  const auto version = static_cast<std::uint16_t>(get_le(b, 4, 2));
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const auto header_len = static_cast<std::size_t>(get_le(b, 6, 4));
  if (b.size() < 10 + header_len + 4) throw FormatError("checkpoint truncated inside header", b.size());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(b.begin() + 10, b.begin() + 10 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what(), 10);
  }

  ModelConfig config;
  data::NormStats norm;
  TrainMeta meta;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> shapes;
  try {
    config = ModelConfig::from_json(header.at("config"));
    norm = data::NormStats::from_json(header.at("norm_stats"));
    for (const auto& p : header.at("params")) {
      shapes.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<std::vector<std::size_t>>());
    }
    const auto& tm = header.at("train_meta");
    meta.epochs_run = tm.at("epochs_run").get<std::size_t>();
    meta.best_epoch = tm.at("best_epoch").get<std::size_t>();
    meta.best_dev_loss = tm.at("best_dev_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                          : tm.at("best_dev_loss").get<double>();
    meta.dataset_fingerprint = tm.at("dataset_fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what(), 10);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint holds an invalid model config: ") + e.what(), 10);
  }

  if (expected != nullptr) {
    ModelConfig want = *expected;
    want.encoders = data::canonical_encoder_order(want.encoders);
    if (want.aggregation != config.aggregation) {
      throw FormatError("checkpoint aggregation " + std::string(aggregation_name(config.aggregation)) +
                        " does not match requested " + std::string(aggregation_name(want.aggregation)));
    }
    if (want.encoders != config.encoders) throw FormatError("checkpoint encoder subset does not match the request");
    if (want.head_hidden != config.head_hidden ||
        (want.aggregation != Aggregation::MLP && want.blstm_hidden != config.blstm_hidden)) {
      throw FormatError("checkpoint layer sizes do not match the request");
    }
  }

  Model model(config, norm);
  auto& params = model.params();
  if (shapes.size() != params.size()) {
    for (const auto& [name, t] : params) {
      const bool listed = std::any_of(shapes.begin(), shapes.end(), [&](const auto& s) { return s.first == name; });
      if (!listed) throw FormatError("checkpoint is missing parameter '" + name + "'");
    }
    throw FormatError("checkpoint lists parameters the architecture does not have");
  }
  std::size_t payload = 0;
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw FormatError("checkpoint parameter '" + name + "' is not part of the architecture");
    if (it->second.shape != shape) throw FormatError("checkpoint parameter '" + name + "' has the wrong shape");
    payload += it->second.size() * 8;
  }
  const std::size_t body_start = 10;
  const std::size_t blob_start = body_start + header_len;
  const std::size_t expected_size = blob_start + payload + 4;
  if (b.size() != expected_size) {
    throw FormatError("checkpoint parameter blob length is " + std::to_string(b.size() - blob_start - 4) +
                          " bytes, expected " + std::to_string(payload),
                      blob_start);
  }
  const auto stored_crc = static_cast<std::uint32_t>(get_le(b, blob_start + payload, 4));
  if (stored_crc != crc32(b.data() + body_start, blob_start + payload - body_start)) {
    throw FormatError("checkpoint checksum mismatch", blob_start + payload);
  }
  std::size_t at = blob_start;
  for (const auto& [name, shape] : shapes) {
    auto& t = params.at(name);
    for (auto& v : t.values) {
      v = std::bit_cast<double>(get_le(b, at, 8));
      if (!std::isfinite(v)) throw FormatError("checkpoint parameter '" + name + "' holds a non-finite value", at);
      at += 8;
    }
  }
  return Checkpoint{std::move(model), meta};
}

void save_checkpoint(const Model& model, const TrainMeta& meta, const fs::path& path) {
  const auto bytes = encode_checkpoint(model, meta);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const fs::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes, expected);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.byte_offset());
  }
}

}  // namespace aqa::model
