#include "vqr/finetune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vqr/attack.hpp"
#include "vqr/error.hpp"
#include "vqr/optim.hpp"
#include "vqr/rng.hpp"

namespace vqr {

using ad::Var;

void FinetuneConfig::validate() const {
  if (!(train_radius >= 0.0) || !std::isfinite(train_radius))
    throw FormatError("finetune: train_radius must be >= 0");
  if (batch_size == 0) throw FormatError("finetune: batch_size must be >= 1");
  if (!(lr > 0.0)) throw FormatError("finetune: lr must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    throw FormatError("finetune: warmup_fraction must lie in [0, 1]");
}

double warmup_lr(const FinetuneConfig& config, std::size_t step, std::size_t total) {
  const auto warm = static_cast<std::size_t>(std::ceil(config.warmup_fraction * double(total)));
  if (warm == 0 || step >= warm) return config.lr;
  return config.lr * double(step + 1) / double(warm);
}

namespace {

ApgdConfig inner_attack(const FinetuneConfig& config) {
  ApgdConfig a;
  a.n_iters = config.inner_steps;
  a.random_start = config.inner_random_start;
  a.seed = config.seed;
  return a;
}

Budget train_budget(const FinetuneConfig& config) {
  Budget b;
  b.epsilon = config.train_radius;
  return b;
}

Var<float> distortion_rows(const Var<float>& h, const Var<float>& h_ref) {
  return ad::sum_last(ad::sq_norm_last(ad::sub(h, h_ref)));
}

std::uint64_t frozen_hash(const TokenizerParams<float>& p) {
  return mix64(hash_codebook(p) ^ mix64(hash_decoder(p)));
}

// One unsupervised step: inner attack against the current encoder, then an
// Adam step on the encoder toward the reference embeddings.
class UnsupStep {
 public:
  UnsupStep(TokenizerParams<float>& params, const TokenizerParams<float>& reference,
            const FinetuneConfig& config)
      : params_(params), reference_(reference.clone(false)), config_(config),
        encoder_(params.encoder_params()) {
    adam_.hyper.lr = config.lr;
  }

  double run(const ImageBatch& batch, std::size_t step, double lr) {
    const Var<float> h_ref = ad::stop_gradient(encode(reference_, to_tensor<float>(batch)));
    const auto frozen = params_.clone(false);
    const AttackResult res = apgd(
        [&](const Var<float>& x) { return distortion_rows(encode(frozen, x), h_ref); }, true,
        train_budget(config_), inner_attack(config_), batch, step);
    Var<float> loss = ad::mean(distortion_rows(encode(params_, to_tensor<float>(res.x_adv)), h_ref));
    for (auto& p : encoder_) p.zero_grad();
    ad::backward(loss);
    adam_step<float>(encoder_, adam_, lr);
    return std::accumulate(res.best_loss.begin(), res.best_loss.end(), 0.0) / double(batch.count);
  }

 private:
  TokenizerParams<float>& params_;
  const TokenizerParams<float> reference_;
  const FinetuneConfig& config_;
  std::vector<Var<float>> encoder_;
  AdamState<float> adam_;
};

constexpr double kBetaCommit = 0.25;

class EndToEndStep {
 public:
  EndToEndStep(EndToEndModel& model, const FinetuneConfig& config) : model_(model), config_(config) {
    trainable_ = model.tokenizer.encoder_params();
    trainable_.push_back(model.tokenizer.codebook);
    for (auto& p : model.probe.params()) trainable_.push_back(p);
    adam_.hyper.lr = config.lr;
  }

  double run(const ImageBatch& batch, std::size_t step, double lr) {
    const auto tok = model_.tokenizer.clone(false);
    const auto prb = model_.probe.clone(false);
    const Objective<float> obj = make_objective<float>(ObjectiveKind::SupCE, tok, &prb, batch, {});
    const AttackResult res = apgd([&](const Var<float>& x) { return objective_rows(obj, x); }, true,
                                  train_budget(config_), inner_attack(config_), batch, step);
    const Var<float> h = encode(model_.tokenizer, to_tensor<float>(res.x_adv));
    const VqTerms<float> vq = vq_terms(model_.tokenizer, h);
    Var<float> ce = ad::cross_entropy(probe_logits(model_.probe, vq.quantized), batch.labels);
    Var<float> loss = ad::add(ad::add(ce, vq.codebook_loss),
                              ad::scale(vq.commitment, static_cast<float>(kBetaCommit)));
    for (auto& p : trainable_) p.zero_grad();
    ad::backward(loss);
    adam_step<float>(trainable_, adam_, lr);
    return std::accumulate(res.best_loss.begin(), res.best_loss.end(), 0.0) / double(batch.count);
  }

 private:
  EndToEndModel& model_;
  const FinetuneConfig& config_;
  std::vector<Var<float>> trainable_;
  AdamState<float> adam_;
};

template <typename Step>
void train_epochs(Step& step, const FinetuneConfig& config, const Dataset& data, FinetuneLog* log,
                  const char* what) {
  const std::size_t per_epoch = (data.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total = per_epoch * config.epochs;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const Rng data_rng = Rng::stream(config.seed, "data").split(101);
  std::size_t global = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle = data_rng.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    double acc = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++global) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const ImageBatch batch = data.batch(std::span<const std::size_t>(order).subspan(start, end - start));
      double inner;
      try {
        inner = step.run(batch, global, warmup_lr(config, global, total));
      } catch (const NumericError& e) {
        throw NumericError(std::string(what) + " diverged at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(global) + ": " + e.what());
      }
      acc += inner;
      if (log) log->step_inner_loss.push_back(inner);
    }
    if (log) log->epoch_inner_loss.push_back(acc / double(per_epoch));
  }
}

}  // namespace

TokenizerParams<float> unsup_adv_finetune(const TokenizerParams<float>& start,
                                          const TokenizerParams<float>& reference,
                                          const FinetuneConfig& config, const Dataset& data,
                                          FinetuneLog* log) {
  config.validate();
  if (data.size() == 0) throw Error("unsup_adv_finetune: empty dataset");
  if (!(start.config == reference.config))
    throw Error("unsup_adv_finetune: start and reference tokenizers differ in geometry");
  const std::uint64_t ref_hash = hash_params(reference);
  TokenizerParams<float> params = start.clone(true);
  const std::uint64_t frozen_before = frozen_hash(params);
  UnsupStep step(params, reference, config);
  train_epochs(step, config, data, log, "unsup_adv_finetune");
  const std::uint64_t frozen_after = frozen_hash(params);
  if (log) {
    log->reference_hash = ref_hash;
    log->frozen_hash_before = frozen_before;
    log->frozen_hash_after = frozen_after;
  }
  if (frozen_after != frozen_before)
    throw Error("unsup_adv_finetune: codebook or decoder parameters changed");
  if (hash_params(reference) != ref_hash)
    throw Error("unsup_adv_finetune: reference tokenizer parameters changed");
  return params;
}

Metadata finetune_metadata(const FinetuneConfig& config, const std::string& dataset_id,
                           const std::string& parent_hash, const std::string& mode) {
  std::ostringstream radius;
  radius.precision(17);
  radius << config.train_radius;
  return Metadata{{"dataset_id", dataset_id},
                  {"epochs", std::to_string(config.epochs)},
                  {"inner_steps", std::to_string(config.inner_steps)},
                  {"mode", mode},
                  {"parent_hash", parent_hash},
                  {"train_radius", radius.str()}};
}

EndToEndModel end2end_adv_train(const TokenizerParams<float>& tokenizer,
                                const ProbeParams<float>& probe, const FinetuneConfig& config,
                                const Dataset& data, FinetuneLog* log) {
  config.validate();
  if (data.size() == 0) throw Error("end2end_adv_train: empty dataset");
  EndToEndModel model{tokenizer.clone(true), probe.clone(true)};
  const std::uint64_t decoder_before = hash_decoder(model.tokenizer);
  EndToEndStep step(model, config);
  train_epochs(step, config, data, log, "end2end_adv_train");
  if (hash_decoder(model.tokenizer) != decoder_before)
    throw Error("end2end_adv_train: decoder parameters changed");
  return model;
}

CostSample training_cost_probe(TrainMode mode, const TokenizerParams<float>& tokenizer,
                               const ProbeParams<float>& probe, const FinetuneConfig& config,
                               const Dataset& data, std::size_t batches, std::size_t warmup) {
  config.validate();
  if (data.size() < config.batch_size) throw Error("training_cost_probe: dataset smaller than a batch");
  TokenizerParams<float> params = tokenizer.clone(true);
  EndToEndModel model{tokenizer.clone(true), probe.clone(true)};
  UnsupStep unsup(params, tokenizer, config);
  EndToEndStep e2e(model, config);
  const std::size_t per_epoch = data.size() / config.batch_size;
  double seconds = 0;
  for (std::size_t i = 0; i < warmup + batches; ++i) {
    const std::size_t start = (i % per_epoch) * config.batch_size;
    const ImageBatch batch = data.range(start, start + config.batch_size);
    const auto t0 = std::chrono::steady_clock::now();
    if (mode == TrainMode::Unsup)
      unsup.run(batch, i, config.lr);
    else
      e2e.run(batch, i, config.lr);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (i >= warmup) seconds += dt;
  }
  return {seconds / double(batches * config.batch_size), batches};
}

}  // namespace vqr
