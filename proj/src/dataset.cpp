#include "vqr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "vqr/config.hpp"
#include "vqr/error.hpp"
#include "vqr/rng.hpp"

namespace vqr {

const char* const kShapeNames[8] = {"square", "circle", "triangle", "cross",
                                    "ring",   "bar-h",  "bar-v",    "diamond"};

ImageBatch Dataset::batch(std::span<const std::size_t> indices) const {
  ImageBatch out;
  out.count = indices.size();
  out.channels = channels;
  out.side = side;
  out.pixels.reserve(indices.size() * image_size());
  for (std::size_t idx : indices) {
    if (idx >= size()) throw Error("Dataset::batch: index " + std::to_string(idx) + " out of range");
    auto first = pixels.begin() + static_cast<std::ptrdiff_t>(idx * image_size());
    out.pixels.insert(out.pixels.end(), first, first + static_cast<std::ptrdiff_t>(image_size()));
    out.labels.push_back(labels[idx]);
  }
  return out;
}

ImageBatch Dataset::range(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < std::min(end, size()); ++i) idx.push_back(i);
  return batch(idx);
}

Dataset Dataset::head(std::size_t n) const {
  Dataset out = *this;
  n = std::min(n, size());
  out.pixels.resize(n * image_size());
  out.labels.resize(n);
  return out;
}

// ---------------------------------------------------------------- CIFAR-10

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;
constexpr std::size_t kCifarRecordsPerFile = 10000;

}  // namespace

Dataset parse_cifar10(std::span<const std::uint8_t> bytes, Split split, const std::string& origin) {
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t whole = bytes.size() / kCifarRecord;
    throw FormatError(origin + ": truncated record at byte offset " +
                      std::to_string(whole * kCifarRecord) + " (file size " +
                      std::to_string(bytes.size()) + " is not a multiple of 3073)");
  }
  Dataset out;
  out.source = DatasetSource::Cifar10Binary;
  out.split = split;
  out.channels = 3;
  out.side = kCifarSide;
  out.num_classes = 10;
  out.id = "cifar10:" + origin;
  const std::size_t records = bytes.size() / kCifarRecord;
  out.labels.reserve(records);
  out.pixels.reserve(records * kCifarPixels);
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t offset = r * kCifarRecord;
    const std::uint8_t label = bytes[offset];
    if (label > 9)
      throw FormatError(origin + ": label " + std::to_string(label) + " > 9 at byte offset " +
                        std::to_string(offset));
    out.labels.push_back(label);
    for (std::size_t p = 0; p < kCifarPixels; ++p)
      out.pixels.push_back(static_cast<float>(bytes[offset + 1 + p]) / 255.0f);
  }
  return out;
}

Dataset load_cifar10(const std::vector<std::string>& files, Split split) {
  if (files.empty()) throw FormatError("load_cifar10: no files given");
  Dataset all;
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() != kCifarRecord * kCifarRecordsPerFile) {
      const std::size_t valid = std::min(bytes.size() / kCifarRecord, kCifarRecordsPerFile);
      throw FormatError(path + ": truncated or oversized file at byte offset " +
                        std::to_string(valid * kCifarRecord) + " (expected " +
                        std::to_string(kCifarRecord * kCifarRecordsPerFile) + " bytes, got " +
                        std::to_string(bytes.size()) + ")");
    }
    Dataset part = parse_cifar10(bytes, split, path);
    if (all.labels.empty()) {
      all = std::move(part);
    } else {
      all.pixels.insert(all.pixels.end(), part.pixels.begin(), part.pixels.end());
      all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
      all.id += "+" + path;
    }
  }
  return all;
}

// ---------------------------------------------------------------- shapes

namespace {

bool inside_shape(std::size_t kind, double dx, double dy, double r) {
  const double d2 = dx * dx + dy * dy;
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (kind) {
    case 0: return ax <= 0.85 * r && ay <= 0.85 * r;
    case 1: return d2 <= r * r;
    case 2: return dy >= -r && dy <= r && ax <= (dy + r) / 2.0;
    case 3: return (ax <= r / 3.0 && ay <= r) || (ay <= r / 3.0 && ax <= r);
    case 4: return d2 <= r * r && d2 >= 0.55 * 0.55 * r * r;
    case 5: return ay <= r / 3.0 && ax <= r;
    case 6: return ax <= r / 3.0 && ay <= r;
    default: return ax + ay <= r;
  }
}

}  // namespace

Dataset gen_shapes(std::uint64_t seed, std::size_t n, std::size_t side, std::size_t classes,
                   Split split, double noise) {
  if (classes < 2 || classes > 8)
    throw FormatError("gen_shapes: classes must be in [2, 8], got " + std::to_string(classes));
  if (side < 8) throw FormatError("gen_shapes: side must be at least 8");
  if (!(noise >= 0.0 && noise <= 1.0)) throw FormatError("gen_shapes: noise must lie in [0, 1]");
  Dataset out;
  out.source = DatasetSource::ShapesSynthetic;
  out.split = split;
  out.channels = 3;
  out.side = side;
  out.num_classes = classes;
  out.id = "shapes:seed=" + std::to_string(seed) + ":n=" + std::to_string(n) +
           ":side=" + std::to_string(side) + ":classes=" + std::to_string(classes) +
           ":noise=" + format_real(noise) + (split == Split::Train ? ":train" : ":test");
  out.pixels.resize(n * 3 * side * side);
  out.labels.resize(n);
  const Rng base = Rng::stream(seed, "shapes").split(split == Split::Train ? 0 : 1);
  const double s = static_cast<double>(side);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = base.split(i);
    const std::size_t kind = i % classes;
    out.labels[i] = static_cast<std::int32_t>(kind);
    double bg[3], fg[3];
    for (double& c : bg) c = rng.uniform(0.05, 0.45);
    for (double& c : fg) c = rng.uniform(0.55, 1.0);
    const double cx = s * (0.5 + rng.uniform(-0.1, 0.1));
    const double cy = s * (0.5 + rng.uniform(-0.1, 0.1));
    const double r = s * rng.uniform(0.22, 0.34);
    float* img = out.pixels.data() + i * 3 * side * side;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const bool on = inside_shape(kind, x + 0.5 - cx, y + 0.5 - cy, r);
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = (on ? fg[c] : bg[c]) + noise * rng.normal();
          const double byte = std::clamp(std::round(v * 255.0), 0.0, 255.0);
          img[(c * side + y) * side + x] = static_cast<float>(byte) / 255.0f;
        }
      }
    }
  }
  return out;
}

}  // namespace vqr
