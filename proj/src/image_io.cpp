#include "vqr/image_io.hpp"

#include <algorithm>
#include <cmath>

#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"

namespace vqr {

namespace {
constexpr std::size_t kSeparator = 2;
}

std::uint8_t to_byte(float v) {
  const float c = std::clamp(std::isnan(v) ? 0.0f : v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

RgbImage make_grid(const std::vector<std::vector<std::span<const float>>>& rows,
                   std::size_t channels, std::size_t side) {
  if (channels != 1 && channels != 3) throw ShapeError("make_grid: need 1 or 3 channels");
  if (rows.empty() || rows[0].empty()) throw ShapeError("make_grid: no cells");
  const std::size_t cols = rows[0].size();
  RgbImage img;
  img.width = cols * side + (cols - 1) * kSeparator;
  img.height = rows.size() * side + (rows.size() - 1) * kSeparator;
  img.rgb.assign(img.width * img.height * 3, 255);
  const std::size_t plane = side * side;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw ShapeError("make_grid: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      const auto cell = rows[r][c];
      if (cell.size() != channels * plane) throw ShapeError("make_grid: cell has the wrong size");
      const std::size_t y0 = r * (side + kSeparator), x0 = c * (side + kSeparator);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const float v = cell[(channels == 1 ? 0 : ch) * plane + y * side + x];
            img.rgb[((y0 + y) * img.width + x0 + x) * 3 + ch] = to_byte(v);
          }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.rgb.size() != image.width * image.height * 3)
    throw ShapeError("encode_ppm: pixel buffer does not match dimensions");
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P6") throw FormatError("ppm: not a P6 file");
  RgbImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (token() != "255") throw FormatError("ppm: only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw FormatError("ppm: malformed header");
  }
  ++pos;  // single whitespace after maxval
  if (bytes.size() - std::min(pos, bytes.size()) != img.width * img.height * 3)
    throw FormatError("ppm: pixel data size does not match header");
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

void write_ppm(const std::string& path, const RgbImage& image) { write_file(path, encode_ppm(image)); }

}  // namespace vqr
