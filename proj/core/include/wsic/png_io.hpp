#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wsic/raster.hpp"

namespace wsic {

std::vector<std::uint8_t> encode_png(const Raster& raster);
/// 1-bit grayscale PNG, set pixels white.
std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask);

Raster decode_png(const std::vector<std::uint8_t>& bytes);
/// Any gray PNG; non-zero pixels become set.
BinaryMask decode_mask_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Raster& raster);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);
Raster read_png(const std::filesystem::path& path);
BinaryMask read_mask_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Box-filter downsample by an integer factor (>= 1).
Raster downsample(const Raster& raster, int factor);

} // namespace wsic
