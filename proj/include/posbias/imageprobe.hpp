#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "posbias/core.hpp"

namespace posbias {

// 8-bit RGB pixels, row-major, 3 bytes per pixel.
struct ImageCanvas {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageCanvas() = default;
  ImageCanvas(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {}

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  bool operator==(const ImageCanvas&) const = default;
};

struct ImageVariant {
  std::string variant_id;
  VariantMode mode = VariantMode::kImportance;
  int segment_index = 0;
  int position_index = 0;
  ImageCanvas canvas;
};

// Keys cubic kernel (a = -0.5) with the support widened on downscale, as in
// the usual antialiased bicubic resamplers. Equal sizes return the input.
ImageCanvas resize_bicubic(const ImageCanvas& src, int out_width, int out_height);

// Shorter side to image_resolution (long side rounded proportionally), then a
// centered square crop of side image_resolution.
ImageCanvas preprocess_image(const ImageCanvas& raw, const ModelProfile& profile);

// round(255 * rgb_mean[c]) per channel.
std::array<std::uint8_t, 3> mean_fill_color(const ModelProfile& profile);

// Step-equal plan by default: s = resolution / N, positions {0, s, ...}.
// Even-spread uses the same rounding rule as text plans over the full side.
SegmentationPlan derive_image_plan(const ModelProfile& profile, int num_segments,
                                   Axis axis = Axis::kRows,
                                   Schedule schedule = Schedule::kStepEqual,
                                   std::optional<int> num_positions = std::nullopt);

std::vector<ImageVariant> make_image_importance_variants(const ImageCanvas& canvas,
                                                         const SegmentationPlan& plan,
                                                         const ModelProfile& profile,
                                                         const std::string& item_id = {});

// N*P variants, k-major. Variant (k, j) copies source band k to the band
// starting at plan.positions[j]; everything else is mean-filled.
std::vector<ImageVariant> make_image_bias_variants(const ImageCanvas& canvas,
                                                   const SegmentationPlan& plan,
                                                   const ModelProfile& profile,
                                                   const std::string& item_id = {});

// Single variant (k, j) without materializing the whole grid.
ImageCanvas place_band(const ImageCanvas& canvas, const SegmentationPlan& plan,
                       const std::array<std::uint8_t, 3>& fill, int segment, int offset);

}  // namespace posbias
