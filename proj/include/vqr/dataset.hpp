#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vqr {

/// Images in [0,1], layout [count, channels, side, side], plus labels.
struct ImageBatch {
  std::size_t count = 0;
  std::size_t channels = 0;
  std::size_t side = 0;
  std::vector<float> pixels;
  std::vector<std::int32_t> labels;

  std::size_t image_size() const { return channels * side * side; }
  std::span<const float> image(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * image_size(), image_size());
  }
};

enum class DatasetSource { Cifar10Binary, ShapesSynthetic };
enum class Split { Train, Test };

/// A fully materialized labeled corpus with a fixed iteration order.
struct Dataset {
  DatasetSource source = DatasetSource::ShapesSynthetic;
  Split split = Split::Train;
  std::size_t channels = 3;
  std::size_t side = 32;
  std::size_t num_classes = 0;
  std::string id;  // e.g. "shapes:seed=1:n=2000:classes=4"
  std::vector<float> pixels;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return channels * side * side; }

  /// Copies the listed examples into a batch, in the given order.
  ImageBatch batch(std::span<const std::size_t> indices) const;
  /// Examples [begin, end).
  ImageBatch range(std::size_t begin, std::size_t end) const;
  /// First n examples as a new dataset (evaluation slices).
  Dataset head(std::size_t n) const;
};

/// Reads one or more CIFAR-10 binary batch files (3073-byte records: label
/// byte then 1024 R, 1024 G, 1024 B bytes). Throws FormatError naming the
/// byte offset of the first bad record.
Dataset load_cifar10(const std::vector<std::string>& files, Split split);

/// Same, for a single file already in memory.
Dataset parse_cifar10(std::span<const std::uint8_t> bytes, Split split,
                      const std::string& origin = "<memory>");

/// Deterministic labeled corpus of simple shapes on a noisy background.
/// classes ∈ [2, 8], drawn in order from: square, circle, triangle, cross,
/// ring, bar-h, bar-v, diamond. Labels are assigned round-robin. `noise` is
/// the standard deviation of the per-pixel Gaussian noise.
Dataset gen_shapes(std::uint64_t seed, std::size_t n, std::size_t side, std::size_t classes,
                   Split split = Split::Train, double noise = 0.05);

extern const char* const kShapeNames[8];

}  // namespace vqr
