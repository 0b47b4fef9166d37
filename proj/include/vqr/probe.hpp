#pragma once

// Downstream probe classifiers over flattened quantized tokenizer features.

#include <cstdint>
#include <string>
#include <vector>

#include "vqr/autodiff.hpp"
#include "vqr/dataset.hpp"
#include "vqr/tokenizer.hpp"

namespace vqr {

enum class ProbeArch { Linear, Mlp };

const char* to_string(ProbeArch arch);
ProbeArch parse_probe_arch(const std::string& name);

template <typename T>
struct ProbeParams {
  ProbeArch arch = ProbeArch::Linear;
  std::size_t in_dim = 0;
  std::size_t hidden = 0;  // Mlp only
  std::size_t classes = 0;
  // Linear: w1 [in, classes], b1. Mlp: w1 [in, hidden], b1, w2 [hidden, classes], b2.
  ad::Var<T> w1, b1, w2, b2;

  std::vector<ad::Var<T>> params() const;
  ProbeParams clone(bool trainable = true) const;
};

ProbeParams<float> init_probe(ProbeArch arch, std::size_t in_dim, std::size_t hidden,
                              std::size_t classes, std::uint64_t seed);

template <typename To, typename From>
ProbeParams<To> cast_probe(const ProbeParams<From>& probe);

/// Logits [B, classes] from quantized features [B, T, d].
template <typename T>
ad::Var<T> probe_logits(const ProbeParams<T>& probe, const ad::Var<T>& quantized);

std::uint64_t hash_probe(const ProbeParams<float>& probe);

/// Argmax predictions for images run through tokenizer → quantizer → probe.
std::vector<std::int32_t> predict(const TokenizerParams<float>& tokenizer,
                                  const ProbeParams<float>& probe, const ImageBatch& batch);

/// Fraction of `data` classified correctly.
double accuracy(const TokenizerParams<float>& tokenizer, const ProbeParams<float>& probe,
                const Dataset& data, std::size_t batch_size = 100);

struct ProbeTrainOptions {
  ProbeArch arch = ProbeArch::Linear;
  std::size_t hidden = 256;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 3e-3;
  std::uint64_t seed = 0;
};

struct ProbeTrainLog {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

/// Cross-entropy training on the frozen tokenizer's quantized features.
/// Throws if the tokenizer parameters change (hash check) or on divergence.
ProbeParams<float> train_probe(const TokenizerParams<float>& tokenizer, const Dataset& data,
                               const ProbeTrainOptions& options, ProbeTrainLog* log = nullptr);

/// Same training loop on precomputed features [N, in_dim].
ProbeParams<float> train_probe_on_features(const std::vector<float>& features,
                                           std::size_t in_dim,
                                           const std::vector<std::int32_t>& labels,
                                           std::size_t classes, const ProbeTrainOptions& options,
                                           ProbeTrainLog* log = nullptr);

/// "VQRP" container: magic, u32 version, u32 arch, u32 in_dim, hidden, classes,
/// then tensors as in the tokenizer checkpoint.
std::vector<std::uint8_t> serialize_probe(const ProbeParams<float>& probe);
ProbeParams<float> parse_probe(std::span<const std::uint8_t> bytes);
void save_probe(const std::string& path, const ProbeParams<float>& probe);
ProbeParams<float> load_probe(const std::string& path);

}  // namespace vqr
