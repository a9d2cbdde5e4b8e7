#include "posbias/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <openssl/evp.h>

namespace posbias {

std::string to_string(Modality m) { return m == Modality::kText ? "text" : "image"; }

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::kStepEqual:
      return "step-equal";
    case Schedule::kEvenSpread:
      return "even-spread";
    case Schedule::kExplicit:
      return "explicit";
  }
  return "step-equal";
}

std::string to_string(Axis a) { return a == Axis::kRows ? "rows" : "columns"; }

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::kText;
  if (s == "image") return Modality::kImage;
  throw ValidationError("unknown modality '" + std::string(s) + "'");
}

Schedule parse_schedule(std::string_view s) {
  if (s == "step-equal") return Schedule::kStepEqual;
  if (s == "even-spread") return Schedule::kEvenSpread;
  if (s == "explicit") return Schedule::kExplicit;
  throw ValidationError("unknown schedule '" + std::string(s) + "'");
}

Axis parse_axis(std::string_view s) {
  if (s == "rows") return Axis::kRows;
  if (s == "columns") return Axis::kColumns;
  throw ValidationError("unknown axis '" + std::string(s) + "'");
}

std::string to_string(VariantMode m) {
  switch (m) {
    case VariantMode::kImportance:
      return "importance";
    case VariantMode::kBiasMask:
      return "bias-mask";
    case VariantMode::kBiasLorem:
      return "bias-lorem";
  }
  return "importance";
}

VariantMode parse_variant_mode(std::string_view s) {
  if (s == "importance") return VariantMode::kImportance;
  if (s == "bias-mask") return VariantMode::kBiasMask;
  if (s == "bias-lorem") return VariantMode::kBiasLorem;
  throw ValidationError("unknown variant mode '" + std::string(s) + "'");
}

std::string make_variant_id(std::string_view item_id, VariantMode mode, int segment, int position) {
  std::string id(item_id);
  id += ':';
  id += to_string(mode);
  id += ':';
  id += std::to_string(segment);
  id += ':';
  id += std::to_string(position);
  return id;
}

void ModelProfile::validate(std::optional<std::int64_t> vocab_size) const {
  if (model_id.empty()) throw ValidationError("profile: empty model_id");
  if (text_window < 4) throw ValidationError("profile: text_window must be >= 4");
  if (image_resolution < 1) throw ValidationError("profile: image_resolution must be >= 1");
  if (patch_size && *patch_size < 1) throw ValidationError("profile: patch_size must be >= 1");
  if (embed_dim < 1) throw ValidationError("profile: embed_dim must be >= 1");
  for (int c = 0; c < 3; ++c) {
    if (!(rgb_mean[c] >= 0.0 && rgb_mean[c] <= 1.0))
      throw ValidationError("profile: rgb_mean components must lie in [0,1]");
    if (!(rgb_std[c] > 0.0 && rgb_std[c] <= 1.0))
      throw ValidationError("profile: rgb_std components must lie in (0,1]");
  }
  for (TokenId id : {bos_token_id, eos_token_id, pad_token_id}) {
    if (id < 0) throw ValidationError("profile: negative special token id");
    if (vocab_size && id >= *vocab_size)
      throw ValidationError("profile: special token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(*vocab_size));
  }
}

void PairDataset::validate(bool require_captions, bool require_labels) const {
  if (items.empty()) throw ValidationError("dataset is empty");
  std::unordered_set<std::string> seen;
  for (const auto& item : items) {
    if (item.item_id.empty()) throw ValidationError("dataset item with empty id");
    if (!seen.insert(item.item_id).second)
      throw ValidationError("duplicate item id '" + item.item_id + "'");
    if (require_captions && item.caption.empty())
      throw ValidationError("item '" + item.item_id + "' has an empty caption");
    if (require_labels && (!item.label || item.label->empty()))
      throw ValidationError("item '" + item.item_id + "' has no label");
  }
}

void SegmentationPlan::validate() const {
  if (num_segments < 2) throw ValidationError("plan: need at least 2 segments");
  if (segment_length < 1) throw ValidationError("plan: segment length must be >= 1");
  if (positions.size() < 2) throw ValidationError("plan: need at least 2 positions");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] < 0 || positions[i] > capacity - segment_length)
      throw ValidationError("plan: offset " + std::to_string(positions[i]) +
                            " does not fit a segment of length " + std::to_string(segment_length) +
                            " in capacity " + std::to_string(capacity));
    if (i > 0 && positions[i] <= positions[i - 1])
      throw ValidationError("plan: offsets must be strictly increasing");
  }
  if (schedule == Schedule::kStepEqual) {
    if (num_positions() != num_segments)
      throw ValidationError("plan: step-equal schedule requires P == N");
    for (int i = 0; i < num_positions(); ++i)
      if (positions[i] != i * segment_length)
        throw ValidationError("plan: step-equal offsets must be multiples of the segment length");
  }
}

void EmbeddingRecord::validate(std::size_t embed_dim) const {
  if (vector.size() != embed_dim)
    throw ValidationError("embedding has dim " + std::to_string(vector.size()) + ", expected " +
                          std::to_string(embed_dim));
  for (float x : vector)
    if (!std::isfinite(x)) throw ValidationError("embedding has a non-finite component");
  if (normalized) {
    double sq = 0.0;
    for (float x : vector) sq += static_cast<double>(x) * x;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-4)
      throw ValidationError("embedding flagged normalized but has norm " +
                            std::to_string(std::sqrt(sq)));
  }
}

std::vector<float> l2_normalize(std::span<const float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ValidationError("degenerate embedding");
  std::vector<float> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(),
                 [norm](float x) { return static_cast<float>(x / norm); });
  return out;
}

std::array<std::uint8_t, 32> sha256(std::string_view bytes) {
  std::array<std::uint8_t, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != digest.size())
    throw std::runtime_error("SHA-256 digest failed");
  return digest;
}

std::string sha256_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto digest = sha256(bytes);
  std::string out(64, '0');
  for (std::size_t i = 0; i < digest.size(); ++i) {
    out[2 * i] = kHex[digest[i] >> 4];
    out[2 * i + 1] = kHex[digest[i] & 0xF];
  }
  return out;
}

std::string content_key(std::string_view model_id, std::string_view payload) {
  std::string buf;
  buf.reserve(8 + model_id.size() + payload.size());
  std::uint64_t n = model_id.size();
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  buf.append(model_id);
  buf.append(payload);
  return sha256_hex(buf);
}

// ---- JSON ----

void to_json(json& j, Modality m) { j = to_string(m); }
void from_json(const json& j, Modality& m) { m = parse_modality(j.get<std::string>()); }
void to_json(json& j, Schedule s) { j = to_string(s); }
void from_json(const json& j, Schedule& s) { s = parse_schedule(j.get<std::string>()); }
void to_json(json& j, Axis a) { j = to_string(a); }
void from_json(const json& j, Axis& a) { a = parse_axis(j.get<std::string>()); }
void to_json(json& j, VariantMode m) { j = to_string(m); }
void from_json(const json& j, VariantMode& m) { m = parse_variant_mode(j.get<std::string>()); }

void to_json(json& j, const ModelProfile& p) {
  j = json{{"model_id", p.model_id},
           {"text_window", p.text_window},
           {"bos_token_id", p.bos_token_id},
           {"eos_token_id", p.eos_token_id},
           {"pad_token_id", p.pad_token_id},
           {"image_resolution", p.image_resolution},
           {"patch_size", p.patch_size ? json(*p.patch_size) : json(nullptr)},
           {"rgb_mean", p.rgb_mean},
           {"rgb_std", p.rgb_std},
           {"embed_dim", p.embed_dim},
           {"normalizes_embeddings", p.normalizes_embeddings}};
}

void from_json(const json& j, ModelProfile& p) {
  j.at("model_id").get_to(p.model_id);
  j.at("text_window").get_to(p.text_window);
  j.at("bos_token_id").get_to(p.bos_token_id);
  j.at("eos_token_id").get_to(p.eos_token_id);
  j.at("pad_token_id").get_to(p.pad_token_id);
  j.at("image_resolution").get_to(p.image_resolution);
  if (auto it = j.find("patch_size"); it != j.end() && !it->is_null())
    p.patch_size = it->get<int>();
  else
    p.patch_size.reset();
  j.at("rgb_mean").get_to(p.rgb_mean);
  j.at("rgb_std").get_to(p.rgb_std);
  j.at("embed_dim").get_to(p.embed_dim);
  p.normalizes_embeddings = j.value("normalizes_embeddings", false);
}

void to_json(json& j, const PairItem& p) {
  j = json{{"id", p.item_id}, {"image", p.image_path}, {"caption", p.caption}};
  if (p.label) j["label"] = *p.label;
}

void from_json(const json& j, PairItem& p) {
  j.at("id").get_to(p.item_id);
  p.image_path = j.value("image", std::string{});
  p.caption = j.value("caption", std::string{});
  if (auto it = j.find("label"); it != j.end() && !it->is_null())
    p.label = it->get<std::string>();
  else
    p.label.reset();
}

void to_json(json& j, const PairDataset& d) { j = json{{"items", d.items}}; }
void from_json(const json& j, PairDataset& d) { j.at("items").get_to(d.items); }

void to_json(json& j, const SegmentationPlan& p) {
  j = json{{"modality", p.modality},           {"num_segments", p.num_segments},
           {"segment_length", p.segment_length}, {"positions", p.positions},
           {"capacity", p.capacity},             {"schedule", p.schedule},
           {"axis", p.axis},                     {"patch_aligned", p.patch_aligned}};
}

void from_json(const json& j, SegmentationPlan& p) {
  j.at("modality").get_to(p.modality);
  j.at("num_segments").get_to(p.num_segments);
  j.at("segment_length").get_to(p.segment_length);
  j.at("positions").get_to(p.positions);
  j.at("capacity").get_to(p.capacity);
  j.at("schedule").get_to(p.schedule);
  p.axis = j.value("axis", Axis::kRows);
  p.patch_aligned = j.value("patch_aligned", false);
}

void to_json(json& j, const EmbeddingRecord& r) {
  j = json{{"key", r.key}, {"normalized", r.normalized}, {"vector", r.vector}};
}

void from_json(const json& j, EmbeddingRecord& r) {
  j.at("key").get_to(r.key);
  j.at("normalized").get_to(r.normalized);
  j.at("vector").get_to(r.vector);
}

void to_json(json& j, const BiasCurve& c) {
  j = json{{"segment", c.segment_index},
           {"accuracies", c.accuracies},
           {"cv", c.cv},
           {"metric_id", c.metric_id},
           {"beginning_biased", c.beginning_biased}};
}

void from_json(const json& j, BiasCurve& c) {
  j.at("segment").get_to(c.segment_index);
  j.at("accuracies").get_to(c.accuracies);
  j.at("cv").get_to(c.cv);
  j.at("metric_id").get_to(c.metric_id);
  c.beginning_biased = j.value("beginning_biased", false);
}

void to_json(json& j, const ImportanceCurve& c) {
  j = json{{"per_segment", c.per_segment},
           {"interpolated", c.interpolated},
           {"metric_id", c.metric_id}};
}

void from_json(const json& j, ImportanceCurve& c) {
  j.at("per_segment").get_to(c.per_segment);
  j.at("interpolated").get_to(c.interpolated);
  c.metric_id = j.value("metric_id", std::string{});
}

}  // namespace posbias
