#pragma once

#include <string>
#include <string_view>

#include "posbias/imageprobe.hpp"

namespace posbias {

// PNG or JPEG, detected from the leading bytes. Throws ValidationError on
// anything it cannot decode.
ImageCanvas decode_image(std::string_view bytes);
ImageCanvas read_image_file(const std::string& path);

// 8-bit RGB PNG. Output is deterministic for a given libpng/zlib build.
std::string encode_png(const ImageCanvas& canvas);
void write_png_file(const ImageCanvas& canvas, const std::string& path);

}  // namespace posbias
