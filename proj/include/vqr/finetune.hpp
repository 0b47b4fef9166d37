#pragma once

// Unsupervised adversarial fine-tuning of the tokenizer encoder, the
// end-to-end supervised adversarial-training baseline, and a per-sample
// training-cost probe comparing the two.

#include <cstdint>
#include <string>
#include <vector>

#include "vqr/checkpoint.hpp"
#include "vqr/dataset.hpp"
#include "vqr/probe.hpp"
#include "vqr/tokenizer.hpp"

namespace vqr {

struct FinetuneConfig {
  double train_radius = 8.0 / 255.0;
  std::size_t inner_steps = 10;
  std::size_t epochs = 1;
  double lr = 1e-4;
  double warmup_fraction = 0.05;
  std::size_t batch_size = 32;
  /// Uniform start inside the ball for the inner attack. Needed for the
  /// unsupervised objective: at θ = θ_orig and δ = 0 its gradient is zero.
  bool inner_random_start = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FinetuneLog {
  std::vector<double> step_inner_loss;   // batch mean of the inner maximum, per step
  std::vector<double> epoch_inner_loss;  // per epoch
  std::uint64_t reference_hash = 0;
  std::uint64_t frozen_hash_before = 0;  // codebook + decoder
  std::uint64_t frozen_hash_after = 0;
};

/// Learning rate at `step` of `total`: linear warm-up, then constant.
double warmup_lr(const FinetuneConfig& config, std::size_t step, std::size_t total);

/// min_θ mean_x max_{‖δ‖∞ ≤ ε} Σᵢ ‖h_iᶿ(x+δ) − h_i^{θ_orig}(x)‖², encoder only.
/// Throws if the codebook, decoder or reference parameters change.
TokenizerParams<float> unsup_adv_finetune(const TokenizerParams<float>& start,
                                          const TokenizerParams<float>& reference,
                                          const FinetuneConfig& config, const Dataset& data,
                                          FinetuneLog* log = nullptr);

/// Checkpoint metadata for a fine-tuned tokenizer.
Metadata finetune_metadata(const FinetuneConfig& config, const std::string& dataset_id,
                           const std::string& parent_hash, const std::string& mode);

struct EndToEndModel {
  TokenizerParams<float> tokenizer;
  ProbeParams<float> probe;
};

/// Supervised adversarial training: inner APGD on cross-entropy, outer Adam
/// step on encoder, codebook (through the VQ codebook term) and probe.
EndToEndModel end2end_adv_train(const TokenizerParams<float>& tokenizer,
                                const ProbeParams<float>& probe, const FinetuneConfig& config,
                                const Dataset& data, FinetuneLog* log = nullptr);

enum class TrainMode { Unsup, EndToEnd };

struct CostSample {
  double seconds_per_sample = 0.0;
  std::size_t batches = 0;
};

/// Wall-clock cost of full training steps (inner attack + outer update),
/// averaged over `batches` steps after `warmup` untimed ones.
CostSample training_cost_probe(TrainMode mode, const TokenizerParams<float>& tokenizer,
                               const ProbeParams<float>& probe, const FinetuneConfig& config,
                               const Dataset& data, std::size_t batches = 50,
                               std::size_t warmup = 3);

}  // namespace vqr
