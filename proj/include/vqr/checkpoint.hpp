#pragma once

// "VQRB" tokenizer checkpoint container, little-endian throughout:
//
//   magic "VQRB" | u32 version
//   config: u32 image_side, channels, patch_side, tokens, code_dim,
//           codebook_size, num_codebooks, encoder_width, encoder_depth; u64 seed
//   u32 metadata count, then per entry (u32 len, key bytes, u32 len, value bytes)
//   u32 tensor count, then per tensor
//     (u32 name length, name bytes, u32 rank, u32 dims[rank], f32 data[])
//
// Metadata entries are written in key order.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vqr/tokenizer.hpp"

namespace vqr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  TokenizerParams<float> params;
  Metadata metadata;
};

std::vector<std::uint8_t> serialize_checkpoint(const TokenizerParams<float>& params,
                                               const Metadata& metadata = {});
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const TokenizerParams<float>& params,
                     const Metadata& metadata = {});
Checkpoint load_checkpoint(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_file(const std::string& path, std::string_view text);
/// FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);
std::string hex64(std::uint64_t value);

namespace wire {

/// Little-endian writer/reader shared by the checkpoint containers.
class Writer {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void bytes(std::string_view s);
  void str(std::string_view s);  // u32 length + bytes
  void tensor(const std::string& name, const ad::Var<float>& v);
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string fixed(std::size_t n);
  std::string str();
  std::pair<std::string, ad::Var<float>> tensor(bool requires_grad);
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n);
  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace wire

}  // namespace vqr
