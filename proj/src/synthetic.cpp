#include "posbias/synthetic.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "posbias/core.hpp"
#include "posbias/image_io.hpp"
#include "posbias/report.hpp"
#include "posbias/textprobe.hpp"

namespace posbias {

namespace {

constexpr std::array<const char*, 24> kWords = {
    "a",     "dog",   "runs",   "across", "the",    "green", "field",  "while", "two",  "children", "watch", "from",
    "near",  "small", "wooden", "bench",  "clouds", "drift", "over",   "tall",  "red",  "barn",     "quiet", "river"};
constexpr std::array<const char*, 3> kLabels = {"cat", "dog", "horse"};
constexpr std::array<char, 3> kEnds = {'.', '.', '!'};

}  // namespace

std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& options) {
  if (options.num_items < 1) throw ValidationError("synthetic dataset needs at least one item");
  if (options.min_side < 1 || options.max_side < options.min_side)
    throw ValidationError("synthetic dataset: bad image side range");
  std::filesystem::create_directories(dir / "images");
  Xoshiro256StarStar rng(options.seed);
  auto uniform = [&rng](std::uint64_t n) { return rng.next() % n; };

  std::string manifest;
  for (int i = 0; i < options.num_items; ++i) {
    std::string caption;
    const auto sentences = 3 + uniform(3);
    for (std::uint64_t s = 0; s < sentences; ++s) {
      const auto words = 5 + uniform(6);
      std::string sentence;
      for (std::uint64_t w = 0; w < words; ++w) {
        if (w) sentence += ' ';
        sentence += kWords[uniform(kWords.size())];
      }
      sentence[0] = static_cast<char>(sentence[0] - 'a' + 'A');
      if (!caption.empty()) caption += ' ';
      caption += sentence + kEnds[uniform(kEnds.size())];
    }

    const auto span = static_cast<std::uint64_t>(options.max_side - options.min_side + 1);
    ImageCanvas img(options.min_side + static_cast<int>(uniform(span)),
                    options.min_side + static_cast<int>(uniform(span)));
    constexpr int kBlock = 8;
    for (int by = 0; by < img.height; by += kBlock)
      for (int bx = 0; bx < img.width; bx += kBlock) {
        const auto c = rng.next();
        for (int y = by; y < std::min(img.height, by + kBlock); ++y)
          for (int x = bx; x < std::min(img.width, bx + kBlock); ++x) {
            auto* p = img.at(x, y);
            p[0] = static_cast<std::uint8_t>(c);
            p[1] = static_cast<std::uint8_t>(c >> 8);
            p[2] = static_cast<std::uint8_t>(c >> 16);
          }
      }
    const std::string id = "item" + std::to_string(i);
    write_png_file(img, (dir / "images" / (id + ".png")).string());

    json row = {{"id", id}, {"image", "images/" + id + ".png"}, {"caption", caption}};
    if (options.labels) row["label"] = kLabels[uniform(kLabels.size())];
    manifest += row.dump() + "\n";
  }
  const auto path = dir / "manifest.jsonl";
  write_text_file(path, manifest);
  return path;
}

}  // namespace posbias
