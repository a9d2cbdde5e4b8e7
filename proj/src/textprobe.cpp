#include "posbias/textprobe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace posbias {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void check_text_plan(const SegmentationPlan& plan, const TokenSequence& seq,
                     const ModelProfile& profile) {
  if (plan.modality != Modality::kText) throw ValidationError("plan is not a text plan");
  plan.validate();
  if (plan.capacity != profile.text_capacity())
    throw ValidationError("plan capacity does not match the profile text window");
  if (plan.num_segments * plan.segment_length > seq.valid_len)
    throw ValidationError("plan segments exceed the caption's valid tokens");
}

// [bos, pad * C, eos]
std::vector<TokenId> blank_window(const ModelProfile& profile) {
  std::vector<TokenId> ids(static_cast<std::size_t>(profile.text_window), profile.pad_token_id);
  ids.front() = profile.bos_token_id;
  ids.back() = profile.eos_token_id;
  return ids;
}

TextVariant place_segment(const TokenSequence& seq, const SegmentationPlan& plan,
                          const ModelProfile& profile, VariantMode mode, int segment,
                          int position_index, int offset) {
  TextVariant v;
  v.mode = mode;
  v.segment_index = segment;
  v.position_index = position_index;
  v.variant_id = make_variant_id(seq.source_item, mode, segment, position_index);
  v.ids = blank_window(profile);
  const auto interior = seq.interior();
  const auto s = static_cast<std::size_t>(plan.segment_length);
  const auto src = interior.subspan(static_cast<std::size_t>(segment) * s, s);
  std::copy(src.begin(), src.end(), v.ids.begin() + 1 + offset);
  return v;
}

}  // namespace

void TokenSequence::validate(const ModelProfile& profile) const {
  if (ids.empty() || static_cast<int>(ids.size()) > profile.text_window)
    throw ValidationError("token sequence length outside [1, text_window]");
  if (ids[0] != profile.bos_token_id) throw ValidationError("token sequence must start with bos");
  const auto eos_at = static_cast<std::size_t>(valid_len) + 1;
  if (valid_len < 0 || eos_at >= ids.size() || ids[eos_at] != profile.eos_token_id)
    throw ValidationError("token sequence must carry eos right after the valid tokens");
  for (std::size_t i = 1; i < eos_at; ++i)
    if (ids[i] == profile.eos_token_id) throw ValidationError("token sequence has more than one eos");
  for (std::size_t i = eos_at + 1; i < ids.size(); ++i)
    if (ids[i] != profile.pad_token_id)
      throw ValidationError("token sequence has non-pad tokens after eos");
}

TokenSequence make_token_sequence(std::span<const TokenId> interior, const ModelProfile& profile,
                                  std::string source_item) {
  TokenSequence seq;
  seq.source_item = std::move(source_item);
  const auto cap = static_cast<std::size_t>(profile.text_capacity());
  seq.truncated = interior.size() > cap;
  const auto n = std::min(interior.size(), cap);
  seq.valid_len = static_cast<int>(n);
  seq.ids.assign(static_cast<std::size_t>(profile.text_window), profile.pad_token_id);
  seq.ids[0] = profile.bos_token_id;
  std::copy_n(interior.begin(), n, seq.ids.begin() + 1);
  seq.ids[n + 1] = profile.eos_token_id;
  return seq;
}

TokenSequence token_sequence_from_ids(std::span<const TokenId> ids, const ModelProfile& profile,
                                      std::string source_item) {
  if (ids.empty() || ids[0] != profile.bos_token_id)
    throw ValidationError("provider token row does not start with bos");
  auto eos = std::find(ids.begin() + 1, ids.end(), profile.eos_token_id);
  if (eos == ids.end()) throw ValidationError("provider token row has no eos");
  const auto interior = ids.subspan(1, static_cast<std::size_t>(eos - ids.begin() - 1));
  return make_token_sequence(interior, profile, std::move(source_item));
}

SegmentationPlan derive_text_plan(const ModelProfile& profile, const TokenSequence& seq,
                                  int num_segments, Schedule schedule,
                                  std::optional<int> num_positions,
                                  std::span<const int> explicit_positions) {
  const int capacity = profile.text_capacity();
  if (num_segments < 2) throw ValidationError("need at least 2 segments");
  if (capacity < num_segments)
    throw ValidationError("text window too small for " + std::to_string(num_segments) + " segments");

  SegmentationPlan plan;
  plan.modality = Modality::kText;
  plan.num_segments = num_segments;
  plan.capacity = capacity;
  plan.schedule = schedule;
  const int usable = std::min(seq.valid_len, capacity);
  plan.segment_length = usable / num_segments;
  if (plan.segment_length == 0)
    throw ValidationError("caption too short for " + std::to_string(num_segments) + " segments" +
                          (seq.source_item.empty() ? "" : " (item '" + seq.source_item + "')"));
  const int s = plan.segment_length;

  switch (schedule) {
    case Schedule::kStepEqual:
      if (num_positions && *num_positions != num_segments)
        throw ValidationError("step-equal schedule requires P == N");
      for (int i = 0; i < num_segments; ++i) plan.positions.push_back(i * s);
      break;
    case Schedule::kEvenSpread: {
      const int p = num_positions.value_or(num_segments);
      if (p < 2) throw ValidationError("even-spread schedule needs P >= 2");
      const long long span = capacity - s;
      for (int i = 0; i < p; ++i) {
        // round-half-up of i*span/(p-1) in integer arithmetic
        const long long num = 2LL * i * span + (p - 1);
        const int off = static_cast<int>(num / (2LL * (p - 1)));
        if (plan.positions.empty() || off > plan.positions.back()) plan.positions.push_back(off);
      }
      break;
    }
    case Schedule::kExplicit:
      if (explicit_positions.empty())
        throw ValidationError("explicit schedule needs a list of offsets");
      plan.positions.assign(explicit_positions.begin(), explicit_positions.end());
      break;
  }
  plan.validate();
  return plan;
}

std::vector<TextVariant> make_text_importance_variants(const TokenSequence& seq,
                                                       const SegmentationPlan& plan,
                                                       const ModelProfile& profile) {
  check_text_plan(plan, seq, profile);
  std::vector<TextVariant> out;
  out.reserve(static_cast<std::size_t>(plan.num_segments));
  for (int k = 0; k < plan.num_segments; ++k)
    out.push_back(place_segment(seq, plan, profile, VariantMode::kImportance, k, k,
                                k * plan.segment_length));
  return out;
}

std::vector<TextVariant> make_text_bias_variants(const TokenSequence& seq,
                                                 const SegmentationPlan& plan,
                                                 const ModelProfile& profile) {
  check_text_plan(plan, seq, profile);
  std::vector<TextVariant> out;
  out.reserve(static_cast<std::size_t>(plan.num_segments * plan.num_positions()));
  for (int k = 0; k < plan.num_segments; ++k)
    for (int j = 0; j < plan.num_positions(); ++j)
      out.push_back(place_segment(seq, plan, profile, VariantMode::kBiasMask, k, j,
                                  plan.positions[static_cast<std::size_t>(j)]));
  return out;
}

std::vector<std::vector<std::string>> split_word_groups(std::string_view caption, int num_groups) {
  if (num_groups < 1) throw ValidationError("need at least one word group");
  auto words = split_whitespace(caption);
  const auto n = static_cast<int>(words.size());
  if (n < num_groups)
    throw ValidationError("caption too short: " + std::to_string(n) + " words for " +
                          std::to_string(num_groups) + " segments");
  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(num_groups));
  const int base = n / num_groups;
  const int extra = n % num_groups;
  auto it = words.begin();
  for (int g = 0; g < num_groups; ++g) {
    const int len = base + (g < extra ? 1 : 0);
    groups[static_cast<std::size_t>(g)].assign(std::make_move_iterator(it),
                                               std::make_move_iterator(it + len));
    it += len;
  }
  return groups;
}

std::vector<TextVariant> make_text_lorem_variants(std::string_view caption, int num_segments,
                                                  int num_positions,
                                                  std::span<const std::string> lorem_bank,
                                                  std::string_view item_id) {
  if (num_segments < 2) throw ValidationError("need at least 2 segments");
  if (num_positions < 2) throw ValidationError("need at least 2 positions");
  if (lorem_bank.empty()) throw ValidationError("lorem bank is empty");
  const auto groups = split_word_groups(caption, num_segments);

  std::vector<TextVariant> out;
  out.reserve(static_cast<std::size_t>(num_segments * num_positions));
  for (int k = 0; k < num_segments; ++k) {
    const auto& segment = groups[static_cast<std::size_t>(k)];
    for (int j = 0; j < num_positions; ++j) {
      TextVariant v;
      v.mode = VariantMode::kBiasLorem;
      v.segment_index = k;
      v.position_index = j;
      v.variant_id = make_variant_id(item_id, VariantMode::kBiasLorem, k, j);
      std::size_t cursor = 0;
      for (int slot = 0; slot < num_positions; ++slot) {
        for (std::size_t w = 0; w < segment.size(); ++w) {
          if (!v.text.empty()) v.text += ' ';
          if (slot == j) {
            v.text += segment[w];
          } else {
            v.text += lorem_bank[cursor % lorem_bank.size()];
            ++cursor;
          }
        }
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

const std::vector<std::string>& default_lorem_bank() {
  static const std::vector<std::string> bank = split_whitespace(
      "lorem ipsum dolor sit amet consectetur adipiscing elit sed do eiusmod tempor incididunt "
      "ut labore et dolore magna aliqua ut enim ad minim veniam quis nostrud exercitation "
      "ullamco laboris nisi ut aliquip ex ea commodo consequat duis aute irure dolor in "
      "reprehenderit in voluptate velit esse cillum dolore eu fugiat nulla pariatur excepteur "
      "sint occaecat cupidatat non proident sunt in culpa qui officia deserunt mollit anim id "
      "est laborum");
  return bank;
}

std::vector<std::string> load_lorem_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read lorem bank '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto words = split_whitespace(buf.str());
  if (words.empty()) throw ValidationError("lorem bank '" + path + "' is empty");
  return words;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Xoshiro256StarStar::Xoshiro256StarStar(std::uint64_t seed) {
  for (auto& word : s_) word = splitmix64(seed);
}

std::uint64_t Xoshiro256StarStar::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

std::vector<std::string> split_sub_captions(std::string_view caption) {
  auto is_delim = [](char c) { return c == '.' || c == '?' || c == '!'; };
  std::vector<std::string> parts;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < caption.size()) {
    if (is_delim(caption[i])) {
      while (i < caption.size() && is_delim(caption[i])) ++i;
      auto piece = trim(caption.substr(start, i - start));
      if (!piece.empty()) parts.emplace_back(piece);
      start = i;
    } else {
      ++i;
    }
  }
  auto tail = trim(caption.substr(start));
  if (!tail.empty()) parts.emplace_back(tail);
  return parts;
}

std::string shuffle_caption(std::string_view caption, std::uint64_t seed) {
  auto parts = split_sub_captions(caption);
  if (parts.size() < 2) return std::string(caption);
  // An undelimited tail would fuse with whatever follows it, so it stays last.
  const char last = parts.back().back();
  const bool open_tail = last != '.' && last != '?' && last != '!';
  const std::size_t movable = parts.size() - (open_tail ? 1 : 0);
  Xoshiro256StarStar rng(seed);
  for (std::size_t i = movable - 1; i > 0 && movable > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next() % (i + 1));
    std::swap(parts[i], parts[j]);
  }
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

}  // namespace posbias
