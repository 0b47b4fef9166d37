#pragma once

// Binary PPM (P6) export and image grids.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vqr {

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

/// round(clamp(v, 0, 1) · 255).
std::uint8_t to_byte(float v);

/// Cells are planar [channels, side, side] images in [0,1]; one or three
/// channels. Rows are laid out left to right, top to bottom, separated by
/// 2-pixel white lines. All rows must have the same number of cells.
RgbImage make_grid(const std::vector<std::vector<std::span<const float>>>& rows,
                   std::size_t channels, std::size_t side);

/// "P6\n<w> <h>\n255\n" then raw RGB bytes.
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const std::string& path, const RgbImage& image);

}  // namespace vqr
