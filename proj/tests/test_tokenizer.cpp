#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"
#include "vqr/tokenizer.hpp"

using namespace vqr;
using ad::Var;

namespace {

// Exhaustive scan, first strict minimum wins.
std::int32_t brute_nearest(std::span<const double> q, std::span<const double> book, std::size_t k,
                           std::size_t d) {
  std::int32_t best = 0;
  double best_d = 0;
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0;
    for (std::size_t t = 0; t < d; ++t) s += (q[t] - book[j * d + t]) * (q[t] - book[j * d + t]);
    if (j == 0 || s < best_d) best = static_cast<std::int32_t>(j), best_d = s;
  }
  return best;
}

TokenizerParams<double> with_codebook(std::size_t k, std::size_t d, std::vector<double> book) {
  TokenizerConfig c = testing::small_config();
  c.codebook_size = static_cast<std::uint32_t>(k);
  c.code_dim = static_cast<std::uint32_t>(d);
  auto p = cast_params<double>(init_tokenizer(c));
  p.codebook = Var<double>::parameter({k, d}, std::move(book));
  return p;
}

}  // namespace

TEST_CASE("config geometry and validation") {
  TokenizerConfig c;
  CHECK(c.tokens() == 16);
  c.validate();
  c.patch_side = 7;
  CHECK_THROWS_AS(c.validate(), FormatError);
  c = TokenizerConfig{};
  c.num_codebooks = 3;
  CHECK_THROWS_AS(c.validate(), FormatError);
  c = TokenizerConfig{};
  c.codebook_size = 1;
  CHECK_THROWS_AS(c.validate(), FormatError);
}

TEST_CASE("quantize examples") {
  auto p = with_codebook(3, 2, {0, 0, 1, 1, 2, 2});
  auto out = quantize<double>(p, Var<double>::constant({1, 1, 2}, {0.9, 0.9}));
  CHECK(out.indices == std::vector<std::int32_t>{1});
  CHECK(out.quantized.values()[0] == 1.0);

  out = quantize<double>(p, Var<double>::constant({1, 1, 2}, {2, 2}));
  CHECK(out.indices == std::vector<std::int32_t>{2});

  // Equidistant from codes 0 and 1.
  out = quantize<double>(p, Var<double>::constant({1, 1, 2}, {0.5, 0.5}));
  CHECK(out.indices == std::vector<std::int32_t>{0});
}

TEST_CASE("quantize matches brute force including exact ties") {
  std::size_t mismatches = 0, ties = 0;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    Rng rng = Rng::stream(trial, "data").split(7);
    const std::size_t k = 2 + rng.below(63), d = 1 + rng.below(16);
    std::vector<double> book(k * d);
    for (double& v : book) v = std::round(rng.normal() * 4.0) / 4.0;
    std::vector<double> q(d);
    if (trial % 3 == 0) {
      // Midpoint of two codes: exact tie whenever no other code is closer.
      const std::size_t a = rng.below(k), b = rng.below(k);
      for (std::size_t t = 0; t < d; ++t) q[t] = (book[a * d + t] + book[b * d + t]) / 2.0;
    } else if (trial % 3 == 1) {
      const std::size_t a = rng.below(k), b = rng.below(k);
      std::copy_n(book.begin() + a * d, d, book.begin() + b * d);  // duplicate row
      for (std::size_t t = 0; t < d; ++t) q[t] = book[a * d + t] + 0.01 * rng.normal();
    } else {
      for (double& v : q) v = rng.normal();
    }
    auto p = with_codebook(k, d, book);
    const auto got = quantize<double>(p, Var<double>::constant({1, 1, d}, q)).indices[0];
    const auto want = brute_nearest(q, book, k, d);
    mismatches += got != want;
    std::size_t at_min = 0;
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < d; ++t) s += (q[t] - book[j * d + t]) * (q[t] - book[j * d + t]);
      double w = 0;
      for (std::size_t t = 0; t < d; ++t)
        w += (q[t] - book[std::size_t(want) * d + t]) * (q[t] - book[std::size_t(want) * d + t]);
      at_min += s == w;
    }
    ties += at_min > 1;
  }
  CHECK(mismatches == 0);
  CHECK(ties >= 100);
}

TEST_CASE("multi-codebook quantization") {
  auto base = init_tokenizer(testing::small_config(3, 1));
  auto multi = init_tokenizer(testing::small_config(3, 2));
  const auto batch = testing::random_batch(base.config, 3, 1);

  // M = 1 through the multi-codebook path is the plain quantizer.
  auto h = encode<float>(base, to_tensor<float>(batch));
  auto q1 = quantize<float>(base, h);
  const auto ids = nearest_indices<float>(base, h);
  CHECK(ids == q1.indices);
  const auto codes = lookup_codes<float>(base, ids);
  CHECK(std::equal(codes.begin(), codes.end(), q1.quantized.values().begin()));

  // Each chunk is quantized against its own codebook.
  auto hm = encode<float>(multi, to_tensor<float>(batch));
  auto qm = quantize<float>(multi, hm);
  const std::size_t d = multi.config.code_dim, sub = multi.config.sub_dim(), k = multi.config.codebook_size;
  CHECK(qm.indices.size() == 3 * multi.config.tokens() * 2);
  for (std::size_t row = 0; row < 3 * multi.config.tokens(); ++row) {
    for (std::size_t m = 0; m < 2; ++m) {
      std::vector<double> q(sub), book(k * sub);
      for (std::size_t t = 0; t < sub; ++t) q[t] = hm.values()[row * d + m * sub + t];
      for (std::size_t j = 0; j < k * sub; ++j) book[j] = multi.codebook.values()[m * k * sub + j];
      const auto want = brute_nearest(q, book, k, sub);
      CHECK(qm.indices[row * 2 + m] == want);
      for (std::size_t t = 0; t < sub; ++t)
        CHECK(qm.quantized.values()[row * d + m * sub + t] == multi.codebook.values()[(m * k + want) * sub + t]);
    }
  }
}

TEST_CASE("quantization is idempotent on codes") {
  auto p = init_tokenizer(testing::small_config(5, 2));
  auto h = encode<float>(p, to_tensor<float>(testing::random_batch(p.config, 4, 2)));
  auto q = quantize<float>(p, h);
  auto qq = quantize<float>(p, q.quantized);
  CHECK(q.indices == qq.indices);
}

TEST_CASE("straight-through contract") {
  auto p = cast_params<double>(init_tokenizer(testing::small_config(4)));
  const auto batch = testing::random_batch(p.config, 2, 3);
  const auto w = testing::normals(2 * p.config.tokens() * p.config.code_dim, 11);
  auto weights = Var<double>::constant({2, p.config.tokens(), p.config.code_dim}, w);

  auto x1 = to_tensor<double>(batch, true);
  auto h1 = encode<double>(p, x1);
  auto st = quantize_st<double>(p, h1);
  auto plain = quantize<double>(p, h1);
  CHECK(std::equal(st.quantized.values().begin(), st.quantized.values().end(),
                   plain.quantized.values().begin()));
  for (auto& v : p.all_params()) v.zero_grad();
  ad::backward(ad::sum(ad::mul(st.quantized, weights)));
  const std::vector<double> g_st(x1.grad().begin(), x1.grad().end());
  for (double g : p.codebook.grad()) CHECK(g == 0.0);

  auto x2 = to_tensor<double>(batch, true);
  ad::backward(ad::sum(ad::mul(encode<double>(p, x2), weights)));
  const std::vector<double> g_id(x2.grad().begin(), x2.grad().end());
  CHECK(g_st == g_id);

  // loss = sum(quantized) gives all-ones on h whatever the codes are.
  auto h3 = Var<double>::parameter({1, 1, p.config.code_dim}, testing::normals(p.config.code_dim, 12));
  ad::backward(ad::sum(quantize_st<double>(p, h3).quantized));
  for (double g : h3.grad()) CHECK(g == 1.0);
}

TEST_CASE("encode and decode basics") {
  auto p = init_tokenizer(testing::small_config(6));
  CHECK(p.config.tokens() == 4);
  auto batch = testing::random_batch(p.config, 2, 4);
  std::copy_n(batch.pixels.begin(), batch.image_size(), batch.pixels.begin() + batch.image_size());
  auto h = encode<float>(p, to_tensor<float>(batch));
  CHECK(h.shape() == ad::Shape{2, 4, 8});
  const std::size_t row = 4 * 8;
  CHECK(std::equal(h.values().begin(), h.values().begin() + row, h.values().begin() + row));

  // Zero projection maps anything to zero embeddings.
  auto z = p.clone();
  for (float& v : z.proj_w.mutable_values()) v = 0;
  for (float& v : z.proj_b.mutable_values()) v = 0;
  ImageBatch zero = batch;
  std::fill(zero.pixels.begin(), zero.pixels.end(), 0.0f);
  const auto hz = encode<float>(z, to_tensor<float>(zero));
  for (float v : hz.values()) CHECK(v == 0.0f);

  auto zq = Var<float>::zeros({1, 4, 8});
  auto d1 = decode<float>(p, zq), d2 = decode<float>(p, zq);
  CHECK(std::equal(d1.values().begin(), d1.values().end(), d2.values().begin()));
  for (float v : d1.values()) CHECK((v > 0.0f && v < 1.0f));

  ImageBatch wrong = batch;
  wrong.side = 8;
  wrong.pixels.resize(2 * 3 * 64);
  CHECK_THROWS_AS(encode<float>(p, to_tensor<float>(wrong)), ShapeError);
}

TEST_CASE("initial codebook rows are distinct") {
  auto p = init_tokenizer(TokenizerConfig{});
  const std::size_t k = 64, d = 16;
  const auto v = p.codebook.values();
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      CHECK_FALSE(std::equal(v.begin() + a * d, v.begin() + (a + 1) * d, v.begin() + b * d));
}

TEST_CASE("pretrain") {
  TokenizerConfig c;
  c.seed = 1;
  const Dataset data = gen_shapes(1, 256, 32, 4);
  const auto init = init_tokenizer(c);

  PretrainOptions none;
  none.epochs = 0;
  CHECK(hash_params(pretrain(init, data, none)) == hash_params(init));

  PretrainOptions opt;
  opt.epochs = 4;
  PretrainLog log_a, log_b;
  const auto a = pretrain(init, data, opt, &log_a);
  const auto b = pretrain(init, data, opt, &log_b);
  CHECK(hash_params(a) == hash_params(b));
  CHECK(log_a.epoch_loss == log_b.epoch_loss);
  REQUIRE(log_a.epoch_loss.size() == 4);
  CHECK(log_a.epoch_loss.back() < 0.5 * log_a.epoch_loss.front());

  const auto usage = codebook_usage(a, data);
  CHECK(std::accumulate(usage.counts.begin(), usage.counts.end(), std::uint64_t{0}) ==
        data.size() * c.tokens() * c.num_codebooks);

  // Frequent dead-code resets keep most of the codebook in use.
  PretrainOptions churn = opt;
  churn.reset_every = 4;
  PretrainLog log_r;
  const auto r = pretrain(init, data, churn, &log_r);
  CHECK(log_r.codes_reset > 0);
  const auto usage_r = codebook_usage(r, data);
  MESSAGE("dead fraction " << usage.dead_fraction << " with frequent resets " << usage_r.dead_fraction);
  CHECK(usage_r.dead_fraction < usage.dead_fraction);
  CHECK(usage_r.dead_fraction < 0.5);
}

TEST_CASE("codebook usage counts land where the embeddings are") {
  TokenizerConfig c = testing::small_config();
  c.codebook_size = 2;
  auto p = init_tokenizer(c);
  for (float& v : p.proj_w.mutable_values()) v = 0;
  for (float& v : p.proj_b.mutable_values()) v = 0;
  auto book = p.codebook.mutable_values();
  std::fill(book.begin(), book.begin() + 8, 0.0f);
  std::fill(book.begin() + 8, book.end(), 5.0f);
  Dataset d = gen_shapes(0, 10, 16, 2);
  const auto u = codebook_usage(p, d);
  CHECK(u.counts == std::vector<std::uint64_t>{40, 0});
  CHECK(u.dead_fraction == 0.5);
}

TEST_CASE("checkpoint round trip and corruption") {
  auto p = init_tokenizer(testing::small_config(9, 2));
  const auto bytes = serialize_checkpoint(p, {{"mode", "pretrain"}, {"dataset_id", "x"}});
  const auto back = parse_checkpoint(bytes);
  CHECK(back.params.config == p.config);
  CHECK(hash_params(back.params) == hash_params(p));
  CHECK(back.metadata.at("mode") == "pretrain");
  CHECK(serialize_checkpoint(back.params, back.metadata) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 2;  // version
  CHECK_THROWS_WITH_AS(parse_checkpoint(bad), doctest::Contains("version"), FormatError);
  bad.assign(bytes.begin(), bytes.end() - 3);
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);
}
