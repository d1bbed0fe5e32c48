#pragma once

#include <filesystem>
#include <span>

#include "fovstream/contrast.hpp"

namespace fovstream {

/// Writes values as an 8-bit binary PGM, linearly mapping [lo, hi] to [0, 255] (clamped).
/// lo == hi selects the field's own min/max.
void write_pgm(const std::filesystem::path& path, std::span<const double> values, int width, int height,
               double lo = 0.0, double hi = 0.0);

inline void write_pgm(const std::filesystem::path& path, const LuminanceImage& image) {
  write_pgm(path, image.samples, image.width, image.height, 0.0, 1.0);
}

/// Reads an 8- or 16-bit binary PGM into [0,1] luminance.
LuminanceImage read_pgm(const std::filesystem::path& path);

}  // namespace fovstream
