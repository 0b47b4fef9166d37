#pragma once

// Measurement pipelines: robust-accuracy grids, the unsupervised objective
// ablation, adversarial reconstructions and targeted-attack demos.

#include <cstdint>
#include <string>
#include <vector>

#include "vqr/attack.hpp"
#include "vqr/image_io.hpp"

namespace vqr {

struct EvalRow {
  std::string objective;
  double epsilon = 0.0;
  std::size_t count = 0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  // Token churn over points the probe classifies correctly, split by outcome.
  std::size_t successes = 0;
  std::size_t failures = 0;
  double mean_changed_success = 0.0;
  double mean_changed_failure = 0.0;
  /// Over every attacked point: mean churn and fraction with no change.
  double mean_changed_all = 0.0;
  double zero_change_fraction = 0.0;
  double seconds = 0.0;
  double max_violation = 0.0;
};

struct EvalReport {
  std::string tokenizer_hash;
  std::string probe_hash;
  std::string config_hash;
  std::size_t tokens = 0;
  std::vector<EvalRow> rows;  // objective-major, ε ascending
  std::vector<std::string> artifacts;
};

/// Runs epsilon_sweep per objective. Epsilon lists are sorted ascending.
EvalReport evaluate_robustness(const TokenizerParams<float>& tokenizer,
                               const ProbeParams<float>& probe,
                               const std::vector<ObjectiveKind>& objectives,
                               std::vector<double> epsilons, const ApgdConfig& config,
                               const Dataset& data, std::size_t batch_size = 50,
                               std::vector<SweepRow>* raw = nullptr);

std::string report_csv(const EvalReport& report);
std::string report_json(const EvalReport& report);
EvalReport parse_report_json(const std::string& text);

struct AblationRow {
  double epsilon = 0.0;
  double robust[4] = {0, 0, 0, 0};  // hh, hq, qh, qq
  bool hh_lowest_or_tied = false;
  bool ordering_holds = false;  // hh ≤ hq ≤ max(qh, qq)
};

struct Ablation {
  EvalReport report;
  std::vector<AblationRow> rows;
  std::size_t hh_best_count = 0;
};

Ablation objective_ablation(const TokenizerParams<float>& tokenizer, const ProbeParams<float>& probe,
                            const std::vector<double>& epsilons, const ApgdConfig& config,
                            const Dataset& data, std::size_t batch_size = 50);
std::string ablation_csv(const Ablation& ablation);

struct ReconstructionRow {
  double epsilon = 0.0;
  double mean_abs_recon_change = 0.0;  // |adv-recon − clean-recon|, per pixel
  double clean_recon_mse = 0.0;        // clean-recon vs clean image
  double adv_recon_mse = 0.0;          // adv-recon vs clean image
  RgbImage grid;  // per image: clean | clean-recon | adv | adv-recon
};

/// Maximizes unsup_hh for `config.n_iters` steps at every ε.
std::vector<ReconstructionRow> reconstruct_adversarial(const TokenizerParams<float>& tokenizer,
                                                       const ImageBatch& clean,
                                                       const std::vector<double>& epsilons,
                                                       const ApgdConfig& config);

enum class TargetMode { Embedding, Class };

struct TargetedPair {
  std::size_t source_id = 0, target_id = 0;
  std::int32_t source_label = 0, target_label = 0;
  std::int32_t pred_source = 0, pred_adv = 0, pred_adv_recon = 0, pred_target = 0;
};

struct TargetedDemo {
  TargetMode mode = TargetMode::Embedding;
  double epsilon = 0.0;
  std::vector<TargetedPair> pairs;
  double adv_is_target = 0.0;        // fraction of pairs
  double recon_is_target = 0.0;      // fraction of pairs
  double adv_preserved = 0.0;        // adversarial image still predicted as source label
  double recon_is_source_given_flip = 0.0;  // among pairs whose adversarial image hit the target
  RgbImage grid;  // per pair: source | adversarial | adv-recon | target
};

/// Source i of `data` is paired with the next example (cyclically) whose
/// label is (label_i + 1) mod classes. Embedding mode minimizes
/// targeted_embed toward that image; class mode minimizes targeted_class.
TargetedDemo targeted_demo(const TokenizerParams<float>& tokenizer, const ProbeParams<float>& probe,
                           const Dataset& data, std::size_t pairs, TargetMode mode,
                           const Budget& budget, const ApgdConfig& config);
std::string targeted_csv(const TargetedDemo& demo);

}  // namespace vqr
