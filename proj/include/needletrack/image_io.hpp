#pragma once

#include <filesystem>

#include "needletrack/tensor.hpp"

namespace needletrack {

/// Writes pixel counts as a gray (H,W) or RGB (3,H,W) PNG. Values are
/// rounded and clipped to the bit depth (8 or 16).
void write_png(const std::filesystem::path& path, const Tensor<float>& image, int bit_depth = 8);

/// Reads a PNG as pixel counts: (H,W) for gray, (3,H,W) for colour. Alpha is
/// dropped and palettes are expanded.
Tensor<float> read_png(const std::filesystem::path& path);

}  // namespace needletrack
