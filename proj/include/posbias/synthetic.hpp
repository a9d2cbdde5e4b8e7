#pragma once

#include <cstdint>
#include <filesystem>

namespace posbias {

struct SyntheticOptions {
  int num_items = 50;
  std::uint64_t seed = 0;
  bool labels = false;  // add a "label" from a 3-class set
  int min_side = 48;
  int max_side = 160;
};

// Writes `dir/manifest.jsonl` plus one PNG per item: multi-sentence captions
// from a small vocabulary and blocky random images. Deterministic in the seed.
// Returns the manifest path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir,
                                              const SyntheticOptions& options = {});

}  // namespace posbias
