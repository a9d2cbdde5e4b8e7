#include "posbias/imageprobe.hpp"

#include <algorithm>
#include <cmath>

namespace posbias {

namespace {

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

// Fixed-point weights with 22 fractional bits, as in Pillow's 8-bit resampler.
constexpr int kPrecisionBits = 22;

struct Taps {
  int first = 0;
  std::vector<std::int32_t> weights;
};

std::vector<Taps> compute_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filterscale = std::max(scale, 1.0);
  const double support = 2.0 * filterscale;
  std::vector<Taps> taps(static_cast<std::size_t>(out_size));
  std::vector<double> w;
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale;
    const int lo = std::max(static_cast<int>(center - support + 0.5), 0);
    const int hi = std::min(static_cast<int>(center + support + 0.5), in_size);
    w.clear();
    double total = 0.0;
    for (int i = lo; i < hi; ++i) {
      w.push_back(cubic_kernel((i - center + 0.5) / filterscale));
      total += w.back();
    }
    auto& t = taps[static_cast<std::size_t>(o)];
    t.first = lo;
    for (double x : w) {
      const double v = (total != 0.0 ? x / total : x) * (1 << kPrecisionBits);
      t.weights.push_back(static_cast<std::int32_t>(v < 0 ? std::trunc(v - 0.5) : std::trunc(v + 0.5)));
    }
  }
  return taps;
}

std::uint8_t clip_fixed(std::int64_t acc) {
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(acc >> kPrecisionBits, 0, 255));
}

// One separable pass; each pass rounds back to 8 bits.
ImageCanvas resample_pass(const ImageCanvas& src, int out_size, bool horizontal) {
  const int in_size = horizontal ? src.width : src.height;
  const auto taps = compute_taps(in_size, out_size);
  ImageCanvas out(horizontal ? out_size : src.width, horizontal ? src.height : out_size);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const auto& t = taps[static_cast<std::size_t>(horizontal ? x : y)];
      std::int64_t acc[3] = {1 << (kPrecisionBits - 1), 1 << (kPrecisionBits - 1), 1 << (kPrecisionBits - 1)};
      for (std::size_t i = 0; i < t.weights.size(); ++i) {
        const int at = t.first + static_cast<int>(i);
        const auto* px = horizontal ? src.at(at, y) : src.at(x, at);
        for (int c = 0; c < 3; ++c) acc[c] += static_cast<std::int64_t>(px[c]) * t.weights[i];
      }
      auto* dst = out.at(x, y);
      for (int c = 0; c < 3; ++c) dst[c] = clip_fixed(acc[c]);
    }
  return out;
}

void check_image_plan(const ImageCanvas& canvas, const SegmentationPlan& plan) {
  if (plan.modality != Modality::kImage) throw ValidationError("plan is not an image plan");
  plan.validate();
  const int extent = plan.axis == Axis::kRows ? canvas.height : canvas.width;
  if (extent != plan.capacity)
    throw ValidationError("canvas extent " + std::to_string(extent) +
                          " does not match plan capacity " + std::to_string(plan.capacity));
  if (plan.num_segments * plan.segment_length > extent)
    throw ValidationError("plan segments exceed the canvas");
  if (canvas.pixels.size() != static_cast<std::size_t>(canvas.width) * canvas.height * 3)
    throw ValidationError("canvas pixel buffer has the wrong size");
}

}  // namespace

ImageCanvas resize_bicubic(const ImageCanvas& src, int out_width, int out_height) {
  if (src.width < 1 || src.height < 1 || out_width < 1 || out_height < 1)
    throw ValidationError("resize: image sides must be >= 1");
  if (src.width == out_width && src.height == out_height) return src;

  ImageCanvas out = src.width == out_width ? src : resample_pass(src, out_width, true);
  if (out.height != out_height) out = resample_pass(out, out_height, false);
  return out;
}

ImageCanvas preprocess_image(const ImageCanvas& raw, const ModelProfile& profile) {
  if (raw.width < 1 || raw.height < 1) throw ValidationError("image has an empty side");
  const int r = profile.image_resolution;
  int w = r;
  int h = r;
  if (raw.width >= raw.height) {
    w = static_cast<int>(std::lround(static_cast<double>(raw.width) * r / raw.height));
  } else {
    h = static_cast<int>(std::lround(static_cast<double>(raw.height) * r / raw.width));
  }
  w = std::max(w, r);
  h = std::max(h, r);
  const ImageCanvas resized = resize_bicubic(raw, w, h);
  if (w == r && h == r) return resized;

  const int left = (w - r) / 2;
  const int top = (h - r) / 2;
  ImageCanvas out(r, r);
  for (int y = 0; y < r; ++y)
    std::copy_n(resized.at(left, top + y), static_cast<std::size_t>(r) * 3, out.at(0, y));
  return out;
}

std::array<std::uint8_t, 3> mean_fill_color(const ModelProfile& profile) {
  std::array<std::uint8_t, 3> fill{};
  for (int c = 0; c < 3; ++c) fill[c] = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * profile.rgb_mean[c]), 0L, 255L));
  return fill;
}

SegmentationPlan derive_image_plan(const ModelProfile& profile, int num_segments, Axis axis,
                                   Schedule schedule, std::optional<int> num_positions) {
  if (num_segments < 2) throw ValidationError("need at least 2 segments");
  const int r = profile.image_resolution;
  if (r % num_segments != 0)
    throw ValidationError("resolution not divisible by split count (" + std::to_string(r) + " / " +
                          std::to_string(num_segments) + ")");
  SegmentationPlan plan;
  plan.modality = Modality::kImage;
  plan.num_segments = num_segments;
  plan.segment_length = r / num_segments;
  plan.capacity = r;
  plan.schedule = schedule;
  plan.axis = axis;
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
      for (int i = 0; i < p; ++i) {
        const long long num = 2LL * i * (r - s) + (p - 1);
        const int off = static_cast<int>(num / (2LL * (p - 1)));
        if (plan.positions.empty() || off > plan.positions.back()) plan.positions.push_back(off);
      }
      break;
    }
    case Schedule::kExplicit:
      throw ValidationError("explicit image offsets are not supported; use step-equal or even-spread");
  }
  plan.patch_aligned = profile.patch_size.has_value() && s % *profile.patch_size == 0;
  plan.validate();
  return plan;
}

ImageCanvas place_band(const ImageCanvas& canvas, const SegmentationPlan& plan,
                       const std::array<std::uint8_t, 3>& fill, int segment, int offset) {
  ImageCanvas out(canvas.width, canvas.height);
  for (std::size_t i = 0; i < out.pixels.size(); i += 3)
    std::copy(fill.begin(), fill.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(i));
  const int s = plan.segment_length;
  const int src = segment * s;
  if (plan.axis == Axis::kRows) {
    for (int r = 0; r < s; ++r)
      std::copy_n(canvas.at(0, src + r), static_cast<std::size_t>(canvas.width) * 3,
                  out.at(0, offset + r));
  } else {
    for (int y = 0; y < canvas.height; ++y)
      std::copy_n(canvas.at(src, y), static_cast<std::size_t>(s) * 3, out.at(offset, y));
  }
  return out;
}

std::vector<ImageVariant> make_image_importance_variants(const ImageCanvas& canvas,
                                                         const SegmentationPlan& plan,
                                                         const ModelProfile& profile,
                                                         const std::string& item_id) {
  check_image_plan(canvas, plan);
  const auto fill = mean_fill_color(profile);
  std::vector<ImageVariant> out;
  out.reserve(static_cast<std::size_t>(plan.num_segments));
  for (int k = 0; k < plan.num_segments; ++k) {
    ImageVariant v;
    v.mode = VariantMode::kImportance;
    v.segment_index = k;
    v.position_index = k;
    v.variant_id = make_variant_id(item_id, v.mode, k, k);
    v.canvas = place_band(canvas, plan, fill, k, k * plan.segment_length);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<ImageVariant> make_image_bias_variants(const ImageCanvas& canvas,
                                                   const SegmentationPlan& plan,
                                                   const ModelProfile& profile,
                                                   const std::string& item_id) {
  check_image_plan(canvas, plan);
  const auto fill = mean_fill_color(profile);
  std::vector<ImageVariant> out;
  out.reserve(static_cast<std::size_t>(plan.num_segments * plan.num_positions()));
  for (int k = 0; k < plan.num_segments; ++k) {
    for (int j = 0; j < plan.num_positions(); ++j) {
      ImageVariant v;
      v.mode = VariantMode::kBiasMask;
      v.segment_index = k;
      v.position_index = j;
      v.variant_id = make_variant_id(item_id, v.mode, k, j);
      v.canvas = place_band(canvas, plan, fill, k, plan.positions[static_cast<std::size_t>(j)]);
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace posbias
