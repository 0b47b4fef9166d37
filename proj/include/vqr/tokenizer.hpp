#pragma once

// Patch-MLP vector-quantized image tokenizer: encoder to T pre-quantization
// embeddings, nearest-code quantizer (single or multi-codebook), mirror
// decoder, and the VQ pre-training loop.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqr/autodiff.hpp"
#include "vqr/dataset.hpp"

namespace vqr {

struct TokenizerConfig {
  std::uint32_t image_side = 32;
  std::uint32_t channels = 3;
  std::uint32_t patch_side = 8;
  std::uint32_t code_dim = 16;       // d
  std::uint32_t codebook_size = 64;  // K
  std::uint32_t num_codebooks = 1;   // M
  std::uint32_t encoder_width = 64;
  std::uint32_t encoder_depth = 2;
  std::uint64_t seed = 0;

  std::uint32_t grid() const { return image_side / patch_side; }
  /// T = (image_side / patch_side)².
  std::uint32_t tokens() const { return grid() * grid(); }
  std::uint32_t patch_dim() const { return channels * patch_side * patch_side; }
  std::uint32_t sub_dim() const { return code_dim / num_codebooks; }
  /// Throws FormatError on the first violated constraint.
  void validate() const;

  bool operator==(const TokenizerConfig&) const = default;
};

/// Residual MLP block: x + fc2(relu(fc1(layer_norm(x)))).
template <typename T>
struct MlpBlock {
  ad::Var<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
struct TokenizerParams {
  TokenizerConfig config;
  // encoder
  ad::Var<T> patch_w, patch_b, enc_pos;
  std::vector<MlpBlock<T>> enc_blocks;
  ad::Var<T> proj_w, proj_b;
  // quantizer: [K, d] when M == 1, else [M, K, d/M]
  ad::Var<T> codebook;
  // decoder
  ad::Var<T> embed_w, embed_b, dec_pos;
  std::vector<MlpBlock<T>> dec_blocks;
  ad::Var<T> out_w, out_b;

  std::vector<ad::Var<T>> encoder_params() const;
  std::vector<ad::Var<T>> decoder_params() const;
  std::vector<ad::Var<T>> all_params() const;
  /// (name, tensor) pairs in checkpoint order.
  std::vector<std::pair<std::string, ad::Var<T>>> named() const;
  /// Deep copy; every tensor becomes a fresh leaf. With trainable = false
  /// the copy records no parameter gradients (frozen inference).
  TokenizerParams clone(bool trainable = true) const;
};

/// Random initialization from Rng stream "init" of config.seed.
TokenizerParams<float> init_tokenizer(const TokenizerConfig& config);

/// Precision conversion (e.g. float checkpoint → double for gradient checks).
template <typename To, typename From>
TokenizerParams<To> cast_params(const TokenizerParams<From>& params);

/// FNV-1a over names, shapes and raw values of the selected tensors.
std::uint64_t hash_tensors(const std::vector<std::pair<std::string, ad::Var<float>>>& tensors);
std::uint64_t hash_params(const TokenizerParams<float>& params);
std::uint64_t hash_encoder(const TokenizerParams<float>& params);
std::uint64_t hash_codebook(const TokenizerParams<float>& params);
std::uint64_t hash_decoder(const TokenizerParams<float>& params);

template <typename T>
struct TokenizationOutput {
  ad::Var<T> embeddings;  // [B, T, d] pre-quantization
  ad::Var<T> quantized;   // [B, T, d]
  /// Row-major [B·T, M]; with M = 1 simply one index per token.
  std::vector<std::int32_t> indices;
};

/// Converts an image batch into a [B, C, H, W] tensor.
template <typename T>
ad::Var<T> to_tensor(const ImageBatch& batch, bool requires_grad = false);

/// Index map that turns flattened [B, C, H, W] pixels into [B·T, C·p·p]
/// patch rows (and its inverse).
std::vector<std::size_t> patchify_index(const TokenizerConfig& config, std::size_t batch);
std::vector<std::size_t> unpatchify_index(const TokenizerConfig& config, std::size_t batch);

/// φ: images [B, C, H, W] → embeddings [B, T, d].
template <typename T>
ad::Var<T> encode(const TokenizerParams<T>& params, const ad::Var<T>& images);

/// Nearest-code indices of h[..., d]; no gradient.
template <typename T>
std::vector<std::int32_t> nearest_indices(const TokenizerParams<T>& params, const ad::Var<T>& h);

/// Concatenated codebook vectors for indices laid out as [N, M]; N·d values.
template <typename T>
std::vector<T> lookup_codes(const TokenizerParams<T>& params,
                            std::span<const std::int32_t> indices);

/// Nearest-code quantization. `quantized` carries no gradient.
template <typename T>
TokenizationOutput<T> quantize(const TokenizerParams<T>& params, const ad::Var<T>& h);

/// As quantize, but `quantized` passes gradients to h unchanged. With
/// `anchor_offset` the forward value is h + offset instead of the codes;
/// gradient checks pass the offset (codes − h) recorded at the check point so
/// that the finite differences see the same linearization.
template <typename T>
TokenizationOutput<T> quantize_st(const TokenizerParams<T>& params, const ad::Var<T>& h,
                                  const std::vector<T>* anchor_offset = nullptr);

/// Decoder: quantized [B, T, d] → images [B, C, H, W] in (0, 1).
template <typename T>
ad::Var<T> decode(const TokenizerParams<T>& params, const ad::Var<T>& quantized);

/// Convenience: decode(quantize(encode(x))).
ImageBatch reconstruct(const TokenizerParams<float>& params, const ImageBatch& batch);
/// Token indices of every image, [B·T·M].
std::vector<std::int32_t> tokenize(const TokenizerParams<float>& params, const ImageBatch& batch);

/// Quantization with the training terms: `quantized` is straight-through to
/// h, and the codebook loss ‖sg(h) − e_q‖² / commitment ‖h − sg(e_q)‖² are
/// token means.
template <typename T>
struct VqTerms {
  ad::Var<T> quantized;
  ad::Var<T> codebook_loss;
  ad::Var<T> commitment;
  std::vector<std::int32_t> indices;
};

VqTerms<float> vq_terms(const TokenizerParams<float>& params, const ad::Var<float>& h);

struct PretrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 2e-3;
  double beta_commit = 0.25;
  /// Every this many steps, codes unused since the previous check are moved
  /// onto random embeddings of the current batch. 0 disables.
  std::size_t reset_every = 20;
};

struct PretrainLog {
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::vector<double> epoch_recon;  // mean reconstruction MSE per epoch
  std::size_t codes_reset = 0;
};

/// Minimizes MSE(x̂, x) + ‖sg(h) − e_q‖² + β‖h − sg(e_q)‖², token-averaged.
/// The codebook is re-seeded from the first batch's embeddings before the
/// first step. Throws NumericError naming epoch and step on divergence.
TokenizerParams<float> pretrain(const TokenizerParams<float>& start, const Dataset& data,
                                const PretrainOptions& options, PretrainLog* log = nullptr);

struct CodebookUsage {
  std::vector<std::uint64_t> counts;  // per global code index (M·K)
  double dead_fraction = 0.0;
};

CodebookUsage codebook_usage(const TokenizerParams<float>& params, const Dataset& data,
                             std::size_t batch_size = 64);

}  // namespace vqr
