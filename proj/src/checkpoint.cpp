#include "vqr/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "vqr/error.hpp"
#include "vqr/rng.hpp"

namespace vqr {

namespace wire {

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void Writer::bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void Writer::tensor(const std::string& name, const ad::Var<float>& v) {
  str(name);
  u32(static_cast<std::uint32_t>(v.rank()));
  for (std::size_t d : v.shape()) u32(static_cast<std::uint32_t>(d));
  for (float x : v.values()) f32(x);
}

void Reader::need(std::size_t n) {
  if (bytes_.size() - pos_ < n)
    throw FormatError(what_ + ": truncated at byte offset " + std::to_string(pos_));
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }

std::string Reader::fixed(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string Reader::str() { return fixed(u32()); }

std::pair<std::string, ad::Var<float>> Reader::tensor(bool requires_grad) {
  std::string name = str();
  const std::uint32_t rank = u32();
  if (rank > 8) throw FormatError(what_ + ": implausible rank " + std::to_string(rank) + " for " + name);
  ad::Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(u32());
  const std::size_t n = ad::numel(shape);
  need(n * 4);
  std::vector<float> data(n);
  for (float& x : data) x = f32();
  auto v = requires_grad ? ad::Var<float>::parameter(shape, std::move(data))
                         : ad::Var<float>::constant(shape, std::move(data));
  return {std::move(name), std::move(v)};
}

}  // namespace wire

std::vector<std::uint8_t> serialize_checkpoint(const TokenizerParams<float>& params,
                                               const Metadata& metadata) {
  const TokenizerConfig& c = params.config;
  wire::Writer w;
  w.bytes("VQRB");
  w.u32(kCheckpointVersion);
  for (std::uint32_t v : {c.image_side, c.channels, c.patch_side, c.tokens(), c.code_dim,
                          c.codebook_size, c.num_codebooks, c.encoder_width, c.encoder_depth})
    w.u32(v);
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    w.str(k);
    w.str(v);
  }
  const auto named = params.named();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, v] : named) w.tensor(name, v);
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes, "checkpoint");
  if (r.fixed(4) != "VQRB") throw FormatError("checkpoint: bad magic (expected VQRB)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  TokenizerConfig c;
  c.image_side = r.u32();
  c.channels = r.u32();
  c.patch_side = r.u32();
  const std::uint32_t tokens = r.u32();
  c.code_dim = r.u32();
  c.codebook_size = r.u32();
  c.num_codebooks = r.u32();
  c.encoder_width = r.u32();
  c.encoder_depth = r.u32();
  c.seed = r.u64();
  c.validate();
  if (tokens != c.tokens())
    throw FormatError("checkpoint: token count " + std::to_string(tokens) +
                      " inconsistent with geometry");
  Checkpoint out;
  const std::uint32_t meta = r.u32();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.str();
    out.metadata[k] = r.str();
  }
  std::unordered_map<std::string, ad::Var<float>> found;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, v] = r.tensor(true);
    found.emplace(std::move(name), std::move(v));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(r.offset()));

  // Fill a freshly laid-out parameter set so that names and shapes are checked.
  TokenizerParams<float> params = init_tokenizer(c);
  auto assign = [&](const std::string& name, ad::Var<float>& slot) {
    auto it = found.find(name);
    if (it == found.end()) throw FormatError("checkpoint: missing tensor " + name);
    if (it->second.shape() != slot.shape())
      throw FormatError("checkpoint: tensor " + name + " has shape " +
                        ad::shape_string(it->second.shape()) + ", expected " +
                        ad::shape_string(slot.shape()));
    slot = it->second;
  };
  assign("encoder.patch.weight", params.patch_w);
  assign("encoder.patch.bias", params.patch_b);
  assign("encoder.pos", params.enc_pos);
  for (std::size_t i = 0; i < params.enc_blocks.size(); ++i) {
    const std::string p = "encoder.block" + std::to_string(i) + ".";
    assign(p + "fc1.weight", params.enc_blocks[i].fc1_w);
    assign(p + "fc1.bias", params.enc_blocks[i].fc1_b);
    assign(p + "fc2.weight", params.enc_blocks[i].fc2_w);
    assign(p + "fc2.bias", params.enc_blocks[i].fc2_b);
  }
  assign("encoder.proj.weight", params.proj_w);
  assign("encoder.proj.bias", params.proj_b);
  assign("codebook", params.codebook);
  assign("decoder.embed.weight", params.embed_w);
  assign("decoder.embed.bias", params.embed_b);
  assign("decoder.pos", params.dec_pos);
  for (std::size_t i = 0; i < params.dec_blocks.size(); ++i) {
    const std::string p = "decoder.block" + std::to_string(i) + ".";
    assign(p + "fc1.weight", params.dec_blocks[i].fc1_w);
    assign(p + "fc1.bias", params.dec_blocks[i].fc1_b);
    assign(p + "fc2.weight", params.dec_blocks[i].fc2_w);
    assign(p + "fc2.bias", params.dec_blocks[i].fc2_b);
  }
  assign("decoder.out.weight", params.out_w);
  assign("decoder.out.bias", params.out_b);
  if (found.size() != params.named().size())
    throw FormatError("checkpoint: unexpected extra tensors");
  out.params = std::move(params);
  return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open for reading");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path + ": write failed");
}

void write_file(const std::string& path, std::string_view text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

void save_checkpoint(const std::string& path, const TokenizerParams<float>& params,
                     const Metadata& metadata) {
  write_file(path, serialize_checkpoint(params, metadata));
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return parse_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string file_hash(const std::string& path) {
  const auto bytes = read_file(path);
  return hex64(fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

}  // namespace vqr
