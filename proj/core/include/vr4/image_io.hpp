#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vr4/corpus.hpp"

namespace vr4 {

// Decodes any PNG to grayscale. Color images are converted by averaging
// the R, G and B channels; alpha is ignored. The returned frame has index 0.
Frame read_png(const std::filesystem::path& path);
Frame decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Frame& frame);
std::vector<std::uint8_t> encode_png(const Frame& frame);

} // namespace vr4
