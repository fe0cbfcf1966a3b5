#pragma once

#include <string>

#include "talkinghead/io/image.hpp"

namespace th::io {

// 8-bit RGB PNG. Values are clamped to [0,1] and rounded on write.
void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

}  // namespace th::io
