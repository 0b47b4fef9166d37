#include <doctest.h>

#include "helpers.hpp"
#include "vqr/finetune.hpp"

using namespace vqr;

namespace {

struct Setup {
  TokenizerConfig cfg = testing::small_config(41);
  TokenizerParams<float> tok = init_tokenizer(cfg);
  Dataset data = gen_shapes(4, 32, 16, 2);
  ProbeParams<float> probe = init_probe(ProbeArch::Linear, 4 * 8, 0, 2, 41);
  FinetuneConfig f() const {
    FinetuneConfig c;
    c.batch_size = 8;
    c.inner_steps = 3;
    c.lr = 1e-3;
    return c;
  }
};

}  // namespace

TEST_CASE("warm-up schedule") {
  FinetuneConfig c;
  c.lr = 1.0;
  c.warmup_fraction = 0.1;
  CHECK(warmup_lr(c, 0, 100) == doctest::Approx(0.1));
  CHECK(warmup_lr(c, 9, 100) == 1.0);
  CHECK(warmup_lr(c, 50, 100) == 1.0);
  c.warmup_fraction = 0.0;
  CHECK(warmup_lr(c, 0, 100) == 1.0);
}

TEST_CASE("zero radius at the reference leaves the encoder unchanged") {
  Setup s;
  FinetuneConfig c = s.f();
  c.train_radius = 0.0;
  FinetuneLog log;
  const auto out = unsup_adv_finetune(s.tok, s.tok, c, s.data, &log);
  CHECK(hash_params(out) == hash_params(s.tok));
  for (double v : log.step_inner_loss) CHECK(v == 0.0);
}

TEST_CASE("unsupervised fine-tuning touches the encoder only") {
  Setup s;
  FinetuneLog log;
  const auto before_ref = hash_params(s.tok);
  const auto out = unsup_adv_finetune(s.tok, s.tok, s.f(), s.data, &log);
  CHECK(hash_params(s.tok) == before_ref);
  CHECK(hash_encoder(out) != hash_encoder(s.tok));
  CHECK(hash_codebook(out) == hash_codebook(s.tok));
  CHECK(hash_decoder(out) == hash_decoder(s.tok));
  CHECK(log.frozen_hash_before == log.frozen_hash_after);
  CHECK(log.step_inner_loss.size() == 4);
  CHECK(log.epoch_inner_loss.size() == 1);

  FinetuneLog again;
  CHECK(hash_params(unsup_adv_finetune(s.tok, s.tok, s.f(), s.data, &again)) == hash_params(out));
  CHECK(again.step_inner_loss == log.step_inner_loss);

  const auto meta = finetune_metadata(s.f(), s.data.id, "abc", "unsup_adv");
  CHECK(meta.at("parent_hash") == "abc");
  CHECK(meta.at("inner_steps") == "3");
  CHECK(meta.count("train_radius") == 1);
  CHECK(meta.at("dataset_id") == s.data.id);
}

TEST_CASE("end-to-end training") {
  Setup s;
  FinetuneConfig c = s.f();
  c.epochs = 0;
  const auto same = end2end_adv_train(s.tok, s.probe, c, s.data);
  CHECK(hash_params(same.tokenizer) == hash_params(s.tok));
  CHECK(hash_probe(same.probe) == hash_probe(s.probe));

  const auto moved = end2end_adv_train(s.tok, s.probe, s.f(), s.data);
  CHECK(hash_encoder(moved.tokenizer) != hash_encoder(s.tok));
  CHECK(hash_codebook(moved.tokenizer) != hash_codebook(s.tok));
  CHECK(hash_decoder(moved.tokenizer) == hash_decoder(s.tok));
  CHECK(hash_probe(moved.probe) != hash_probe(s.probe));
}

TEST_CASE("training cost probe") {
  Setup s;
  const auto a = training_cost_probe(TrainMode::Unsup, s.tok, s.probe, s.f(), s.data, 3, 1);
  CHECK(a.batches == 3);
  CHECK(a.seconds_per_sample > 0.0);
  FinetuneConfig big = s.f();
  big.batch_size = 64;
  CHECK_THROWS(training_cost_probe(TrainMode::Unsup, s.tok, s.probe, big, s.data, 3, 1));
}
