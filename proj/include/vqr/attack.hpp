#pragma once

// Projected-gradient attacks on the tokenizer: objective definitions, the
// APGD optimizer, token-churn counting and dataset-level sweeps.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vqr/autodiff.hpp"
#include "vqr/dataset.hpp"
#include "vqr/probe.hpp"
#include "vqr/tokenizer.hpp"

namespace vqr {

enum class Norm { Linf, L2 };

const char* to_string(Norm norm);
Norm parse_norm(const std::string& name);

struct Budget {
  Norm norm = Norm::Linf;
  double epsilon = 4.0 / 255.0;
  double box_lo = 0.0;
  double box_hi = 1.0;

  /// epsilon = 0 is accepted and means "no perturbation" (clean rows).
  void validate() const;
};

struct ApgdConfig {
  std::size_t n_iters = 100;
  std::size_t n_restarts = 1;
  double momentum = 0.75;
  double step_fraction = 1.0;  // first step is step_fraction · 2ε
  double step_decay = 0.5;
  double rho = 0.75;
  bool random_start = true;
  std::uint64_t seed = 0;

  /// Iterations after which the step-size rule is checked, starting with 0.
  std::vector<std::size_t> checkpoints() const;
  void validate() const;
};

enum class ObjectiveKind {
  UnsupHH,
  UnsupHQ,
  UnsupQH,
  UnsupQQ,
  SupCE,
  TargetedEmbed,
  TargetedClass,
};

inline constexpr ObjectiveKind kAllObjectives[] = {
    ObjectiveKind::UnsupHH,      ObjectiveKind::UnsupHQ,       ObjectiveKind::UnsupQH,
    ObjectiveKind::UnsupQQ,      ObjectiveKind::SupCE,         ObjectiveKind::TargetedEmbed,
    ObjectiveKind::TargetedClass};

const char* to_string(ObjectiveKind kind);
ObjectiveKind parse_objective(const std::string& name);
bool maximizes(ObjectiveKind kind);
bool needs_probe(ObjectiveKind kind);

/// Kind-specific inputs. Labels default to the clean batch's labels.
struct AttackPayload {
  std::vector<std::int32_t> labels;
  std::vector<std::int32_t> target_classes;
  std::optional<ImageBatch> target_images;
};

/// Clean-side constants for one batch plus references to the frozen models.
template <typename T>
struct Objective {
  ObjectiveKind kind = ObjectiveKind::UnsupHH;
  const TokenizerParams<T>* tokenizer = nullptr;
  const ProbeParams<T>* probe = nullptr;
  ad::Var<T> reference;               // [B, T, d]: h(x_clean), q(x_clean) or h(x_target)
  std::vector<std::int32_t> classes;  // true labels or target classes
};

/// Validates the payload for `kind` and precomputes the clean-side terms.
template <typename T>
Objective<T> make_objective(ObjectiveKind kind, const TokenizerParams<T>& tokenizer,
                            const ProbeParams<T>* probe, const ImageBatch& clean,
                            const AttackPayload& payload);

/// Per-example objective values [B] at x_adv [B, C, S, S]. `anchor` is the
/// straight-through offset override (see quantize_st); used by grad checks.
template <typename T>
ad::Var<T> objective_rows(const Objective<T>& objective, const ad::Var<T>& x_adv,
                          const std::vector<T>* anchor = nullptr);

/// Batch mean of objective_rows.
template <typename T>
ad::Var<T> objective_eval(const Objective<T>& objective, const ad::Var<T>& x_adv,
                          const std::vector<T>* anchor = nullptr);

/// code − h at x_adv: the anchor that reproduces the true quantized forward.
template <typename T>
std::vector<T> straight_through_anchor(const Objective<T>& objective, const ad::Var<T>& x_adv);

struct AttackResult {
  ImageBatch x_adv;
  std::vector<float> delta;
  /// Best objective value per example after each iteration (index 0 is the
  /// starting point), in the objective's own sign.
  std::vector<std::vector<double>> best_loss_trace;
  std::vector<double> best_loss;
  std::vector<std::uint8_t> success;
  std::vector<std::int32_t> changed_tokens;
  /// Worst constraint excess seen over every iterate (≤ 0 when feasible).
  double max_violation = 0.0;
  std::size_t gradient_evaluations = 0;
};

/// Differentiable per-example loss [B] of an image tensor [B, C, S, S].
using LossRows = std::function<ad::Var<float>(const ad::Var<float>& x)>;

/// Runs APGD from `clean`, maximizing (or minimizing) every example's loss
/// independently. Restarts use child streams of
/// Rng::stream(config.seed, "attack").split(stream_index).
AttackResult apgd(const LossRows& loss, bool maximize, const Budget& budget,
                  const ApgdConfig& config, const ImageBatch& clean,
                  std::uint64_t stream_index = 0);

/// Hamming distance between token index sequences, per example.
std::vector<std::int32_t> count_changed_tokens(const TokenizerParams<float>& tokenizer,
                                               const ImageBatch& x_clean, const ImageBatch& x_adv);

using SuccessFn = std::function<std::vector<std::uint8_t>(const ImageBatch& x_adv)>;

/// Objective + APGD + token churn. Without a success predicate: probe
/// misclassification (or reaching the target class) when a probe is given,
/// otherwise "any token index changed".
AttackResult run_attack(ObjectiveKind kind, const TokenizerParams<float>& tokenizer,
                        const ProbeParams<float>* probe, const AttackPayload& payload,
                        const Budget& budget, const ApgdConfig& config, const ImageBatch& clean,
                        const SuccessFn& success = {}, std::uint64_t stream_index = 0);

/// Per-example outcome of an untargeted attack on a labeled slice.
struct ExampleOutcome {
  std::size_t example_id = 0;
  std::int32_t label = 0;
  std::int32_t clean_pred = 0;
  std::int32_t adv_pred = 0;
  bool success = false;  // clean prediction correct and adversarial one wrong
  std::int32_t changed_tokens = 0;
  double best_loss = 0.0;
};

struct DatasetAttack {
  std::vector<ExampleOutcome> outcomes;
  std::vector<float> x_adv;  // adversarial pixels, dataset layout
  double max_violation = 0.0;
  double seconds = 0.0;
};

/// Attacks every example of `data` in batches (batch index = stream index).
/// `probe` may be null for unsupervised kinds; predictions are then -1.
DatasetAttack attack_dataset(ObjectiveKind kind, const TokenizerParams<float>& tokenizer,
                             const ProbeParams<float>* probe, const Budget& budget,
                             const ApgdConfig& config, const Dataset& data,
                             std::size_t batch_size = 50);

struct SweepRow {
  double epsilon = 0.0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  std::size_t count = 0;
  double seconds = 0.0;
  double max_violation = 0.0;
  std::vector<ExampleOutcome> outcomes;  // after nesting
};

/// Robust accuracy per budget (sorted ascending). A point fooled at a smaller
/// ε stays fooled at every larger ε: the smaller-ε adversarial point is
/// feasible there too and is evaluated alongside the new attack.
std::vector<SweepRow> epsilon_sweep(ObjectiveKind kind, const TokenizerParams<float>& tokenizer,
                                    const ProbeParams<float>& probe,
                                    const std::vector<Budget>& budgets, const ApgdConfig& config,
                                    const Dataset& data, std::size_t batch_size = 50);

/// CSV columns: example_id,epsilon,objective_kind,clean_pred,adv_pred,success,changed_tokens,best_loss
std::string sweep_csv(ObjectiveKind kind, const std::vector<SweepRow>& rows);
/// JSON summary with one aggregate object per ε.
std::string sweep_json(ObjectiveKind kind, const std::vector<SweepRow>& rows);

}  // namespace vqr
