#pragma once

#include <cstdint>
#include <vector>

#include "vqr/rng.hpp"
#include "vqr/tokenizer.hpp"

namespace testing {

inline std::vector<double> normals(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  vqr::Rng rng = vqr::Rng::stream(seed, "data").split(1000);
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<float> uniforms(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  vqr::Rng rng = vqr::Rng::stream(seed, "data").split(2000);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

// 16×16 RGB images, 8×8 patches → T = 4.
inline vqr::TokenizerConfig small_config(std::uint64_t seed = 0, std::uint32_t books = 1) {
  vqr::TokenizerConfig c;
  c.image_side = 16;
  c.patch_side = 8;
  c.code_dim = 8;
  c.codebook_size = 16;
  c.num_codebooks = books;
  c.encoder_width = 16;
  c.encoder_depth = 1;
  c.seed = seed;
  return c;
}

inline vqr::ImageBatch random_batch(const vqr::TokenizerConfig& c, std::size_t count,
                                    std::uint64_t seed) {
  vqr::ImageBatch b;
  b.count = count;
  b.channels = c.channels;
  b.side = c.image_side;
  b.pixels = uniforms(count * b.image_size(), seed);
  for (std::size_t i = 0; i < count; ++i) b.labels.push_back(static_cast<std::int32_t>(i % 2));
  return b;
}

}  // namespace testing
