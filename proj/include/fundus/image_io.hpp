#pragma once

#include <filesystem>

#include "fundus/imaging.hpp"

namespace fundus {

/// Reads an 8-bit PNG or baseline JPEG into RGB. Gray and alpha inputs are
/// expanded/dropped. The format is sniffed from the file signature.
RgbImage read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG.
void write_png(const RgbImage& img, const std::filesystem::path& path);

}  // namespace fundus
