#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "vqr/attack.hpp"
#include "vqr/error.hpp"
#include "vqr/kernels.hpp"
#include "vqr/probe.hpp"

using namespace vqr;
using ad::Var;

namespace {

ImageBatch scalar_image(float v) {
  ImageBatch b;
  b.count = 1;
  b.channels = 1;
  b.side = 1;
  b.pixels = {v};
  b.labels = {0};
  return b;
}

double linf(std::span<const float> a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

struct Fixture {
  TokenizerParams<float> tok = init_tokenizer(testing::small_config(21));
  ProbeParams<float> probe = init_probe(ProbeArch::Linear, 4 * 8, 0, 2, 21);
  ImageBatch clean = testing::random_batch(tok.config, 4, 22);
};

}  // namespace

TEST_CASE("checkpoint schedule") {
  ApgdConfig c;
  CHECK(c.checkpoints() == std::vector<std::size_t>{0, 22, 41, 57, 70, 80, 87, 93, 99});
  c.n_iters = 10;
  const auto w = c.checkpoints();
  CHECK(w.front() == 0);
  CHECK(std::is_sorted(w.begin(), w.end()));
  CHECK(std::adjacent_find(w.begin(), w.end()) == w.end());
  CHECK(w.back() <= 10);
}

TEST_CASE("one-dimensional linear objective reaches the interval end") {
  Budget b;
  b.epsilon = 0.1;
  ApgdConfig c;
  c.n_iters = 10;
  c.random_start = false;
  auto f = [](const Var<float>& x) { return ad::reshape(x, {1}); };
  const auto res = apgd(f, true, b, c, scalar_image(0.5f));
  CHECK(std::abs(res.x_adv.pixels[0] - 0.6) <= 1e-6);
  // Minimizing heads to the other end, clipped by nothing.
  const auto lo = apgd(f, false, b, c, scalar_image(0.5f));
  CHECK(std::abs(lo.x_adv.pixels[0] - 0.4) <= 1e-6);
  // The pixel box wins over the ball.
  const auto box = apgd(f, true, b, c, scalar_image(0.95f));
  CHECK(box.x_adv.pixels[0] == 1.0f);
}

TEST_CASE("zero budget leaves the batch untouched") {
  Fixture fx;
  Budget b;
  b.epsilon = 0.0;
  ApgdConfig c;
  c.n_iters = 12;
  const auto res = run_attack(ObjectiveKind::UnsupHH, fx.tok, nullptr, {}, b, c, fx.clean);
  CHECK(res.x_adv.pixels == fx.clean.pixels);
  for (const auto& t : res.best_loss_trace)
    for (double v : t) CHECK(v == 0.0);
}

TEST_CASE("constant objective keeps the start point") {
  Fixture fx;
  auto zero = fx.tok.clone();
  for (auto& p : zero.encoder_params())
    for (float& v : p.mutable_values()) v = 0;
  Budget b;
  b.epsilon = 8.0 / 255.0;
  ApgdConfig c;
  c.n_iters = 10;
  const auto res = run_attack(ObjectiveKind::UnsupHH, zero, nullptr, {}, b, c, fx.clean);
  for (double v : res.best_loss) CHECK(v == 0.0);
  CHECK(res.max_violation <= 1e-6);
}

TEST_CASE("feasibility, monotone traces and determinism for every kind") {
  Fixture fx;
  AttackPayload payload;
  payload.labels = fx.clean.labels;
  payload.target_classes = {1, 0, 1, 0};
  payload.target_images = testing::random_batch(fx.tok.config, 4, 23);
  for (Norm norm : {Norm::Linf, Norm::L2}) {
    Budget b;
    b.norm = norm;
    b.epsilon = norm == Norm::Linf ? 8.0 / 255.0 : 0.5;
    ApgdConfig c;
    c.n_iters = 20;
    c.n_restarts = 2;
    for (ObjectiveKind kind : kAllObjectives) {
      CAPTURE(to_string(kind));
      const auto res = run_attack(kind, fx.tok, &fx.probe, payload, b, c, fx.clean);
      CHECK(res.max_violation <= 1e-6);
      for (std::size_t i = 0; i < fx.clean.count; ++i) {
        const auto a = res.x_adv.image(i), o = fx.clean.image(i);
        if (norm == Norm::Linf) {
          CHECK(linf(a, o) <= b.epsilon + 1e-6);
        } else {
          double s = 0;
          for (std::size_t j = 0; j < a.size(); ++j) s += double(a[j] - o[j]) * double(a[j] - o[j]);
          CHECK(std::sqrt(s) <= b.epsilon + 1e-6);
        }
        for (float v : a) CHECK((v >= 0.0f && v <= 1.0f));
        const auto& t = res.best_loss_trace[i];
        REQUIRE(t.size() == 2 * (c.n_iters + 1));
        for (std::size_t j = 1; j < t.size(); ++j)
          CHECK((maximizes(kind) ? t[j] >= t[j - 1] : t[j] <= t[j - 1]));
        CHECK(t.back() == res.best_loss[i]);
      }
      const auto again = run_attack(kind, fx.tok, &fx.probe, payload, b, c, fx.clean);
      CHECK(again.x_adv.pixels == res.x_adv.pixels);
      CHECK(again.best_loss == res.best_loss);
    }
  }
}

TEST_CASE("objective values at special points") {
  Fixture fx;
  AttackPayload payload;
  payload.target_images = testing::random_batch(fx.tok.config, 4, 24);
  auto hh = make_objective<float>(ObjectiveKind::UnsupHH, fx.tok, nullptr, fx.clean, payload);
  const auto hh_rows = objective_rows(hh, to_tensor<float>(fx.clean));
  for (float v : hh_rows.values()) CHECK(v == 0.0f);
  auto qq = make_objective<float>(ObjectiveKind::UnsupQQ, fx.tok, nullptr, fx.clean, payload);
  const auto qq_rows = objective_rows(qq, to_tensor<float>(fx.clean));
  for (float v : qq_rows.values()) CHECK(v == 0.0f);
  auto te = make_objective<float>(ObjectiveKind::TargetedEmbed, fx.tok, nullptr, fx.clean, payload);
  const auto te_rows = objective_rows(te, to_tensor<float>(*payload.target_images));
  for (float v : te_rows.values()) CHECK(v == 0.0f);

  CHECK_THROWS_AS(make_objective<float>(ObjectiveKind::SupCE, fx.tok, nullptr, fx.clean, {}), Error);
  CHECK_THROWS_AS(make_objective<float>(ObjectiveKind::TargetedEmbed, fx.tok, nullptr, fx.clean, {}), Error);
  CHECK_THROWS_AS(make_objective<float>(ObjectiveKind::TargetedClass, fx.tok, &fx.probe, fx.clean, {}), Error);
}

TEST_CASE("unsup_qq equals the code distance over changed positions") {
  Fixture fx;
  Budget b;
  b.epsilon = 16.0 / 255.0;
  ApgdConfig c;
  c.n_iters = 15;
  const auto res = run_attack(ObjectiveKind::UnsupQQ, fx.tok, nullptr, {}, b, c, fx.clean);
  auto qq = make_objective<float>(ObjectiveKind::UnsupQQ, fx.tok, nullptr, fx.clean, {});
  const auto direct = objective_rows(qq, to_tensor<float>(res.x_adv));
  const auto ia = tokenize(fx.tok, fx.clean), ib = tokenize(fx.tok, res.x_adv);
  const std::size_t tokens = fx.tok.config.tokens(), d = fx.tok.config.code_dim;
  const auto book = fx.tok.codebook.values();
  for (std::size_t i = 0; i < fx.clean.count; ++i) {
    double s = 0;
    for (std::size_t t = 0; t < tokens; ++t) {
      const std::size_t a = ia[i * tokens + t], bb = ib[i * tokens + t];
      if (a == bb) continue;
      for (std::size_t j = 0; j < d; ++j) s += double(book[bb * d + j] - book[a * d + j]) * (book[bb * d + j] - book[a * d + j]);
    }
    CHECK(direct.values()[i] == doctest::Approx(s).epsilon(1e-5));
  }
  CHECK(count_changed_tokens(fx.tok, fx.clean, fx.clean) == std::vector<std::int32_t>(4, 0));
}

TEST_CASE("post-quantization gradients equal the pre-quantization ones") {
  // With a zero straight-through offset the quantized branch carries h itself,
  // so qh/qq must reproduce the hh/hq gradients coordinatewise.
  const auto tok = cast_params<double>(init_tokenizer(testing::small_config(25)));
  const auto clean = testing::random_batch(tok.config, 2, 26);
  const auto x_adv = testing::random_batch(tok.config, 2, 27);
  auto grad_of = [&](ObjectiveKind kind, bool zero_anchor) {
    auto obj = make_objective<double>(kind, tok, nullptr, clean, {});
    auto x = to_tensor<double>(x_adv, true);
    std::vector<double> zero(x_adv.count * tok.config.tokens() * tok.config.code_dim, 0.0);
    ad::backward(objective_eval(obj, x, zero_anchor ? &zero : nullptr));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  CHECK(grad_of(ObjectiveKind::UnsupQH, true) == grad_of(ObjectiveKind::UnsupHH, false));
  CHECK(grad_of(ObjectiveKind::UnsupQQ, true) == grad_of(ObjectiveKind::UnsupHQ, false));
}

TEST_CASE("dataset attacks and nested sweeps") {
  TokenizerConfig tc = testing::small_config(31);
  auto tok = init_tokenizer(tc);
  Dataset data = gen_shapes(3, 24, 16, 2, Split::Test);
  std::vector<float> feats;
  {
    auto q = quantize<float>(tok, encode<float>(tok, to_tensor<float>(data.range(0, data.size()))));
    feats.assign(q.quantized.values().begin(), q.quantized.values().end());
  }
  ProbeTrainOptions po;
  po.epochs = 20;
  auto probe = train_probe_on_features(feats, tc.tokens() * tc.code_dim, data.labels, 2, po);
  ApgdConfig c;
  c.n_iters = 10;
  std::vector<Budget> budgets(3);
  budgets[0].epsilon = 0.0;
  budgets[1].epsilon = 2.0 / 255.0;
  budgets[2].epsilon = 8.0 / 255.0;
  const auto rows = epsilon_sweep(ObjectiveKind::SupCE, tok, probe, budgets, c, data, 10);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].robust_accuracy == rows[0].clean_accuracy);
  CHECK(rows[0].clean_accuracy == accuracy(tok, probe, data));
  CHECK(rows[1].robust_accuracy <= rows[0].robust_accuracy);
  CHECK(rows[2].robust_accuracy <= rows[1].robust_accuracy);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (rows[1].outcomes[i].success) CHECK(rows[2].outcomes[i].success);

  const std::string csv = sweep_csv(ObjectiveKind::SupCE, rows);
  CHECK(csv.rfind("example_id,epsilon,objective_kind,clean_pred,adv_pred,success,changed_tokens,best_loss\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 24);

  // Worker count does not change results.
  kernels::set_worker_count(3);
  const auto par = epsilon_sweep(ObjectiveKind::SupCE, tok, probe, budgets, c, data, 10);
  kernels::set_worker_count(1);
  CHECK(sweep_csv(ObjectiveKind::SupCE, par) == csv);
}

TEST_CASE("budget and config validation") {
  Budget b;
  b.epsilon = -0.1;
  CHECK_THROWS_AS(b.validate(), FormatError);
  ApgdConfig c;
  c.rho = 1.0;
  CHECK_THROWS_AS(c.validate(), FormatError);
  CHECK_THROWS_AS(parse_objective("unsup_xx"), FormatError);
  for (ObjectiveKind k : kAllObjectives) CHECK(parse_objective(to_string(k)) == k);
}
