#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "posbias/errors.hpp"

namespace posbias {

using json = nlohmann::json;
using TokenId = std::int32_t;

enum class Modality { kText, kImage };
enum class Schedule { kStepEqual, kEvenSpread, kExplicit };
// Image segments are either full-width horizontal bands (kRows) or
// full-height vertical strips (kColumns).
enum class Axis { kRows, kColumns };
// How a perturbation variant was produced.
enum class VariantMode { kImportance, kBiasMask, kBiasLorem };

std::string to_string(Modality m);
std::string to_string(Schedule s);
std::string to_string(Axis a);
Modality parse_modality(std::string_view s);
Schedule parse_schedule(std::string_view s);
Axis parse_axis(std::string_view s);
std::string to_string(VariantMode m);
VariantMode parse_variant_mode(std::string_view s);

// "{item_id}:{mode}:{k}:{j}"
std::string make_variant_id(std::string_view item_id, VariantMode mode, int segment, int position);

// Everything the harness needs to know about the model under audit.
struct ModelProfile {
  std::string model_id;
  int text_window = 77;
  TokenId bos_token_id = 49406;
  TokenId eos_token_id = 49407;
  TokenId pad_token_id = 0;
  int image_resolution = 224;
  std::optional<int> patch_size;  // absent for convolutional backbones
  std::array<double, 3> rgb_mean{0.48145466, 0.4578275, 0.40821073};
  std::array<double, 3> rgb_std{0.26862954, 0.26130258, 0.27577711};
  int embed_dim = 512;
  bool normalizes_embeddings = false;

  // Interior token capacity: window minus bos and eos.
  int text_capacity() const noexcept { return text_window - 2; }

  // Throws ValidationError on a broken profile. vocab_size, when given,
  // bounds the special token ids.
  void validate(std::optional<std::int64_t> vocab_size = std::nullopt) const;

  bool operator==(const ModelProfile&) const = default;
};

struct PairItem {
  std::string item_id;
  std::string image_path;
  std::string caption;
  std::optional<std::string> label;

  bool operator==(const PairItem&) const = default;
};

struct PairDataset {
  std::vector<PairItem> items;

  std::size_t size() const noexcept { return items.size(); }
  // Checks id uniqueness and non-emptiness; caption or label presence
  // depending on whether the dataset feeds retrieval or classification.
  void validate(bool require_captions, bool require_labels) const;

  bool operator==(const PairDataset&) const = default;
};

// How one input is cut into segments and where a segment may be placed.
// Offsets are interior token indices (text) or pixel offsets along the
// split axis (image).
struct SegmentationPlan {
  Modality modality = Modality::kText;
  int num_segments = 0;
  int segment_length = 0;
  std::vector<int> positions;
  int capacity = 0;
  Schedule schedule = Schedule::kStepEqual;
  Axis axis = Axis::kRows;    // image plans only
  bool patch_aligned = false;  // image plans only

  int num_positions() const noexcept { return static_cast<int>(positions.size()); }
  void validate() const;

  bool operator==(const SegmentationPlan&) const = default;
};

struct EmbeddingRecord {
  std::vector<float> vector;
  std::string key;
  bool normalized = false;

  std::size_t dim() const noexcept { return vector.size(); }
  void validate(std::size_t embed_dim) const;

  bool operator==(const EmbeddingRecord&) const = default;
};

// Accuracy of one segment across all positions it was moved to.
struct BiasCurve {
  int segment_index = 0;
  std::vector<double> accuracies;
  double cv = 0.0;
  std::string metric_id;
  bool beginning_biased = false;

  bool operator==(const BiasCurve&) const = default;
};

struct ImportanceCurve {
  std::vector<double> per_segment;
  std::vector<double> interpolated;
  std::string metric_id;

  bool operator==(const ImportanceCurve&) const = default;
};

// Unit vector in the direction of v. Accumulates in double.
std::vector<float> l2_normalize(std::span<const float> v);

// Lowercase hex SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);
std::array<std::uint8_t, 32> sha256(std::string_view bytes);

// Cache address of a (model, payload) pair:
// SHA-256( u64le(len(model_id)) || model_id || payload ), as 64 hex chars.
std::string content_key(std::string_view model_id, std::string_view payload);

void to_json(json& j, Modality m);
void from_json(const json& j, Modality& m);
void to_json(json& j, Schedule s);
void from_json(const json& j, Schedule& s);
void to_json(json& j, Axis a);
void from_json(const json& j, Axis& a);
void to_json(json& j, VariantMode m);
void from_json(const json& j, VariantMode& m);
void to_json(json& j, const ModelProfile& p);
void from_json(const json& j, ModelProfile& p);
void to_json(json& j, const PairItem& p);
void from_json(const json& j, PairItem& p);
void to_json(json& j, const PairDataset& d);
void from_json(const json& j, PairDataset& d);
void to_json(json& j, const SegmentationPlan& p);
void from_json(const json& j, SegmentationPlan& p);
void to_json(json& j, const EmbeddingRecord& r);
void from_json(const json& j, EmbeddingRecord& r);
void to_json(json& j, const BiasCurve& c);
void from_json(const json& j, BiasCurve& c);
void to_json(json& j, const ImportanceCurve& c);
void from_json(const json& j, ImportanceCurve& c);

}  // namespace posbias
