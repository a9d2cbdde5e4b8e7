#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "posbias/core.hpp"

namespace posbias {

// A tokenized caption laid out as [bos, interior..., eos, pad...].
struct TokenSequence {
  std::vector<TokenId> ids;
  int valid_len = 0;  // interior (non-special, non-pad) token count
  std::string source_item;
  bool truncated = false;

  std::span<const TokenId> interior() const {
    return std::span<const TokenId>(ids).subspan(1, static_cast<std::size_t>(valid_len));
  }
  void validate(const ModelProfile& profile) const;

  bool operator==(const TokenSequence&) const = default;
};

// Builds [bos, interior, eos, pad...] of length text_window. Interior longer
// than the capacity is cut and the sequence flagged truncated.
TokenSequence make_token_sequence(std::span<const TokenId> interior, const ModelProfile& profile,
                                  std::string source_item = {});

// Parses a provider token row (with or without trailing padding) into a
// window-length TokenSequence.
TokenSequence token_sequence_from_ids(std::span<const TokenId> ids, const ModelProfile& profile,
                                      std::string source_item = {});

struct TextVariant {
  std::string variant_id;
  VariantMode mode = VariantMode::kImportance;
  int segment_index = 0;
  int position_index = 0;
  std::vector<TokenId> ids;  // importance / bias-mask
  std::string text;          // bias-lorem, tokenized downstream

  bool operator==(const TextVariant&) const = default;
};

// Segment length is floor(min(valid_len, capacity) / N). For step-equal the
// positions are multiples of the segment length; even-spread places P offsets
// at round(i * (C - s) / (P - 1)) across the whole interior capacity C.
// `explicit_positions` is required for, and only used by, Schedule::kExplicit.
SegmentationPlan derive_text_plan(const ModelProfile& profile, const TokenSequence& seq,
                                  int num_segments, Schedule schedule,
                                  std::optional<int> num_positions = std::nullopt,
                                  std::span<const int> explicit_positions = {});

// N variants; variant k keeps segment k at its own offset k*s and pads the
// rest of the interior. All variants put eos at the last window slot.
std::vector<TextVariant> make_text_importance_variants(const TokenSequence& seq,
                                                       const SegmentationPlan& plan,
                                                       const ModelProfile& profile);

// N*P variants in k-major order; variant (k, j) places segment k at
// plan.positions[j] and pads the rest.
std::vector<TextVariant> make_text_bias_variants(const TokenSequence& seq,
                                                 const SegmentationPlan& plan,
                                                 const ModelProfile& profile);

// Whitespace words split into N groups whose sizes differ by at most one
// (earlier groups take the remainder).
std::vector<std::vector<std::string>> split_word_groups(std::string_view caption, int num_groups);

// N*P string variants in k-major order. Slot j holds sub-text k; every other
// slot holds filler with the same word count as sub-text k, drawn cyclically
// from the bank starting at its first word for each variant.
std::vector<TextVariant> make_text_lorem_variants(std::string_view caption, int num_segments,
                                                  int num_positions,
                                                  std::span<const std::string> lorem_bank,
                                                  std::string_view item_id = {});

// Built-in filler word list ("lorem ipsum dolor sit amet ...").
const std::vector<std::string>& default_lorem_bank();
// Whitespace-separated words from a plain-text file.
std::vector<std::string> load_lorem_bank(const std::string& path);

// xoshiro256** seeded through splitmix64. Used for every seeded shuffle in the
// project so results can be reproduced outside it.
class Xoshiro256StarStar {
 public:
  explicit Xoshiro256StarStar(std::uint64_t seed);
  std::uint64_t next();

 private:
  std::uint64_t s_[4];
};

// Sentences end at '.', '?' or '!' (a run of delimiters stays with its
// sentence); trailing text without a delimiter is its own sentence.
std::vector<std::string> split_sub_captions(std::string_view caption);

// Reorders sentences with a Fisher-Yates pass (i from n-1 down to 1,
// j = next() % (i + 1)) and joins them with single spaces. Input with fewer
// than two sentences is returned unchanged. A trailing fragment without a
// delimiter is not permuted; it stays at the end.
std::string shuffle_caption(std::string_view caption, std::uint64_t seed);

}  // namespace posbias
