#include "vqr/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "vqr/error.hpp"
#include "vqr/kernels.hpp"
#include "vqr/optim.hpp"
#include "vqr/rng.hpp"

namespace vqr {

using ad::Shape;
using ad::Var;

void TokenizerConfig::validate() const {
  auto fail = [](const std::string& what) { throw FormatError("tokenizer config: " + what); };
  if (image_side == 0 || patch_side == 0 || channels == 0) fail("sizes must be positive");
  if (image_side % patch_side != 0) fail("patch_side must divide image_side");
  if (codebook_size < 2) fail("codebook_size (K) must be at least 2");
  if (code_dim < 1) fail("code_dim (d) must be at least 1");
  if (num_codebooks < 1) fail("num_codebooks (M) must be at least 1");
  if (code_dim % num_codebooks != 0) fail("num_codebooks must divide code_dim");
  if (encoder_width < 1) fail("encoder_width must be positive");
}

// ---------------------------------------------------------------- params

template <typename T>
std::vector<Var<T>> TokenizerParams<T>::encoder_params() const {
  std::vector<Var<T>> out{patch_w, patch_b, enc_pos};
  for (const auto& b : enc_blocks) out.insert(out.end(), {b.fc1_w, b.fc1_b, b.fc2_w, b.fc2_b});
  out.insert(out.end(), {proj_w, proj_b});
  return out;
}

template <typename T>
std::vector<Var<T>> TokenizerParams<T>::decoder_params() const {
  std::vector<Var<T>> out{embed_w, embed_b, dec_pos};
  for (const auto& b : dec_blocks) out.insert(out.end(), {b.fc1_w, b.fc1_b, b.fc2_w, b.fc2_b});
  out.insert(out.end(), {out_w, out_b});
  return out;
}

template <typename T>
std::vector<Var<T>> TokenizerParams<T>::all_params() const {
  std::vector<Var<T>> out = encoder_params();
  out.push_back(codebook);
  for (const auto& v : decoder_params()) out.push_back(v);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> TokenizerParams<T>::named() const {
  std::vector<std::pair<std::string, Var<T>>> out;
  out.emplace_back("encoder.patch.weight", patch_w);
  out.emplace_back("encoder.patch.bias", patch_b);
  out.emplace_back("encoder.pos", enc_pos);
  for (std::size_t i = 0; i < enc_blocks.size(); ++i) {
    const std::string p = "encoder.block" + std::to_string(i) + ".";
    out.emplace_back(p + "fc1.weight", enc_blocks[i].fc1_w);
    out.emplace_back(p + "fc1.bias", enc_blocks[i].fc1_b);
    out.emplace_back(p + "fc2.weight", enc_blocks[i].fc2_w);
    out.emplace_back(p + "fc2.bias", enc_blocks[i].fc2_b);
  }
  out.emplace_back("encoder.proj.weight", proj_w);
  out.emplace_back("encoder.proj.bias", proj_b);
  out.emplace_back("codebook", codebook);
  out.emplace_back("decoder.embed.weight", embed_w);
  out.emplace_back("decoder.embed.bias", embed_b);
  out.emplace_back("decoder.pos", dec_pos);
  for (std::size_t i = 0; i < dec_blocks.size(); ++i) {
    const std::string p = "decoder.block" + std::to_string(i) + ".";
    out.emplace_back(p + "fc1.weight", dec_blocks[i].fc1_w);
    out.emplace_back(p + "fc1.bias", dec_blocks[i].fc1_b);
    out.emplace_back(p + "fc2.weight", dec_blocks[i].fc2_w);
    out.emplace_back(p + "fc2.bias", dec_blocks[i].fc2_b);
  }
  out.emplace_back("decoder.out.weight", out_w);
  out.emplace_back("decoder.out.bias", out_b);
  return out;
}

namespace {

template <typename To, typename From>
Var<To> copy_leaf(const Var<From>& v, bool trainable) {
  return ad::cast<To, From>(v, trainable);
}

template <typename To, typename From>
TokenizerParams<To> convert(const TokenizerParams<From>& p, bool trainable) {
  auto c = [trainable](const Var<From>& v) { return copy_leaf<To, From>(v, trainable); };
  auto blocks = [&](const std::vector<MlpBlock<From>>& in) {
    std::vector<MlpBlock<To>> out;
    for (const auto& b : in) out.push_back({c(b.fc1_w), c(b.fc1_b), c(b.fc2_w), c(b.fc2_b)});
    return out;
  };
  TokenizerParams<To> out;
  out.config = p.config;
  out.patch_w = c(p.patch_w);
  out.patch_b = c(p.patch_b);
  out.enc_pos = c(p.enc_pos);
  out.enc_blocks = blocks(p.enc_blocks);
  out.proj_w = c(p.proj_w);
  out.proj_b = c(p.proj_b);
  out.codebook = c(p.codebook);
  out.embed_w = c(p.embed_w);
  out.embed_b = c(p.embed_b);
  out.dec_pos = c(p.dec_pos);
  out.dec_blocks = blocks(p.dec_blocks);
  out.out_w = c(p.out_w);
  out.out_b = c(p.out_b);
  return out;
}

Var<float> normal_param(Rng& rng, Shape shape, double stddev) {
  std::vector<float> v(ad::numel(shape));
  for (float& x : v) x = static_cast<float>(stddev * rng.normal());
  return Var<float>::parameter(std::move(shape), std::move(v));
}

Var<float> zero_param(Shape shape) { return Var<float>::zeros(std::move(shape), true); }

MlpBlock<float> init_block(Rng& rng, std::size_t width) {
  return {normal_param(rng, {width, width}, std::sqrt(2.0 / width)), zero_param({width}),
          normal_param(rng, {width, width}, 0.5 / std::sqrt(static_cast<double>(width))),
          zero_param({width})};
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return ad::broadcast_add(ad::matmul(x, w), b);
}

template <typename T>
Var<T> run_block(const Var<T>& x, const MlpBlock<T>& blk) {
  Var<T> u = ad::layer_norm(x);
  u = ad::relu(linear(u, blk.fc1_w, blk.fc1_b));
  u = linear(u, blk.fc2_w, blk.fc2_b);
  return ad::add(x, u);
}

// [B·T, W] + pos[T·W] broadcast over the batch.
template <typename T>
Var<T> add_position(const Var<T>& z, const Var<T>& pos, std::size_t batch) {
  const std::size_t rows = z.dim(0), width = z.dim(1);
  Var<T> flat = ad::reshape(z, {batch, rows / batch * width});
  return ad::reshape(ad::broadcast_add(flat, pos), {rows, width});
}

}  // namespace

template <typename T>
TokenizerParams<T> TokenizerParams<T>::clone(bool trainable) const {
  return convert<T, T>(*this, trainable);
}

template <typename To, typename From>
TokenizerParams<To> cast_params(const TokenizerParams<From>& params) {
  return convert<To, From>(params, true);
}

TokenizerParams<float> init_tokenizer(const TokenizerConfig& config) {
  config.validate();
  Rng rng = Rng::stream(config.seed, "init");
  const std::size_t w = config.encoder_width, p = config.patch_dim(), d = config.code_dim;
  const std::size_t t = config.tokens();
  TokenizerParams<float> out;
  out.config = config;
  out.patch_w = normal_param(rng, {p, w}, std::sqrt(1.0 / p));
  out.patch_b = zero_param({w});
  out.enc_pos = normal_param(rng, {t * w}, 0.1);
  for (std::uint32_t i = 0; i < config.encoder_depth; ++i) out.enc_blocks.push_back(init_block(rng, w));
  out.proj_w = normal_param(rng, {w, d}, std::sqrt(1.0 / w));
  out.proj_b = zero_param({d});
  if (config.num_codebooks == 1)
    out.codebook = normal_param(rng, {config.codebook_size, d}, 1.0);
  else
    out.codebook = normal_param(rng, {config.num_codebooks, config.codebook_size, config.sub_dim()}, 1.0);
  out.embed_w = normal_param(rng, {d, w}, std::sqrt(1.0 / d));
  out.embed_b = zero_param({w});
  out.dec_pos = normal_param(rng, {t * w}, 0.1);
  for (std::uint32_t i = 0; i < config.encoder_depth; ++i) out.dec_blocks.push_back(init_block(rng, w));
  out.out_w = normal_param(rng, {w, p}, std::sqrt(1.0 / w));
  out.out_b = zero_param({p});
  return out;
}

std::uint64_t hash_tensors(const std::vector<std::pair<std::string, Var<float>>>& tensors) {
  std::uint64_t h = fnv1a("");
  for (const auto& [name, v] : tensors) {
    h = fnv1a(name, h);
    h = fnv1a(ad::shape_string(v.shape()), h);
    const auto vals = v.values();
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(vals.data()), vals.size_bytes()), h);
  }
  return h;
}

namespace {

std::vector<std::pair<std::string, Var<float>>> select(const TokenizerParams<float>& p,
                                                       std::string_view prefix) {
  std::vector<std::pair<std::string, Var<float>>> out;
  for (auto& nv : p.named())
    if (nv.first.rfind(prefix, 0) == 0) out.push_back(nv);
  return out;
}

}  // namespace

std::uint64_t hash_params(const TokenizerParams<float>& params) { return hash_tensors(params.named()); }
std::uint64_t hash_encoder(const TokenizerParams<float>& params) { return hash_tensors(select(params, "encoder.")); }
std::uint64_t hash_codebook(const TokenizerParams<float>& params) { return hash_tensors(select(params, "codebook")); }
std::uint64_t hash_decoder(const TokenizerParams<float>& params) { return hash_tensors(select(params, "decoder.")); }

// ---------------------------------------------------------------- forward

template <typename T>
Var<T> to_tensor(const ImageBatch& batch, bool requires_grad) {
  std::vector<T> v(batch.pixels.begin(), batch.pixels.end());
  Shape s{batch.count, batch.channels, batch.side, batch.side};
  return requires_grad ? Var<T>::parameter(std::move(s), std::move(v))
                       : Var<T>::constant(std::move(s), std::move(v));
}

std::vector<std::size_t> patchify_index(const TokenizerConfig& c, std::size_t batch) {
  const std::size_t s = c.image_side, p = c.patch_side, g = c.grid(), ch = c.channels;
  const std::size_t t = c.tokens(), pd = c.patch_dim();
  std::vector<std::size_t> idx(batch * t * pd);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t gy = 0; gy < g; ++gy)
      for (std::size_t gx = 0; gx < g; ++gx) {
        const std::size_t row = b * t + gy * g + gx;
        for (std::size_t k = 0; k < ch; ++k)
          for (std::size_t py = 0; py < p; ++py)
            for (std::size_t px = 0; px < p; ++px) {
              const std::size_t col = (k * p + py) * p + px;
              idx[row * pd + col] = ((b * ch + k) * s + gy * p + py) * s + gx * p + px;
            }
      }
  return idx;
}

std::vector<std::size_t> unpatchify_index(const TokenizerConfig& c, std::size_t batch) {
  const std::vector<std::size_t> fwd = patchify_index(c, batch);
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
  return inv;
}

template <typename T>
Var<T> encode(const TokenizerParams<T>& params, const Var<T>& images) {
  const TokenizerConfig& c = params.config;
  const Shape expect{images.rank() == 4 ? images.dim(0) : 0, c.channels, c.image_side, c.image_side};
  if (images.shape() != expect)
    throw ShapeError("encode: images of shape " + ad::shape_string(images.shape()) +
                     " do not match tokenizer geometry " + ad::shape_string(expect));
  const std::size_t b = images.dim(0), t = c.tokens();
  const auto idx = patchify_index(c, b);
  Var<T> z = ad::gather(images, idx, {b * t, c.patch_dim()});
  z = add_position(linear(z, params.patch_w, params.patch_b), params.enc_pos, b);
  for (const auto& blk : params.enc_blocks) z = run_block(z, blk);
  Var<T> h = linear(z, params.proj_w, params.proj_b);
  return ad::reshape(h, {b, t, c.code_dim});
}

template <typename T>
std::vector<std::int32_t> nearest_indices(const TokenizerParams<T>& params, const Var<T>& h) {
  const TokenizerConfig& c = params.config;
  const std::size_t d = c.code_dim;
  if (h.rank() == 0 || h.shape().back() != d)
    throw ShapeError("quantize: embedding shape " + ad::shape_string(h.shape()) +
                     " does not end in code dim " + std::to_string(d));
  const std::size_t n = h.size() / d, m = c.num_codebooks, k = c.codebook_size, sub = c.sub_dim();
  const auto book = params.codebook.values();
  std::vector<std::int32_t> out(n * m);
  if (m == 1) {
    kernels::nearest_code<T>(h.values(), book, out, n, k, d);
    return out;
  }
  std::vector<T> chunk(n * sub);
  std::vector<std::int32_t> part(n);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(h.values().begin() + i * d + j * sub, sub, chunk.begin() + i * sub);
    kernels::nearest_code<T>(chunk, book.subspan(j * k * sub, k * sub), part, n, k, sub);
    for (std::size_t i = 0; i < n; ++i) out[i * m + j] = part[i];
  }
  return out;
}

template <typename T>
std::vector<T> lookup_codes(const TokenizerParams<T>& params, std::span<const std::int32_t> indices) {
  const TokenizerConfig& c = params.config;
  const std::size_t m = c.num_codebooks, k = c.codebook_size, sub = c.sub_dim();
  const std::size_t n = indices.size() / m;
  const auto book = params.codebook.values();
  std::vector<T> out(n * c.code_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const auto code = static_cast<std::size_t>(indices[i * m + j]);
      std::copy_n(book.begin() + (j * k + code) * sub, sub, out.begin() + i * c.code_dim + j * sub);
    }
  return out;
}

template <typename T>
TokenizationOutput<T> quantize(const TokenizerParams<T>& params, const Var<T>& h) {
  TokenizationOutput<T> out;
  out.embeddings = h;
  out.indices = nearest_indices(params, h);
  out.quantized = Var<T>::constant(h.shape(), lookup_codes(params, out.indices));
  return out;
}

template <typename T>
TokenizationOutput<T> quantize_st(const TokenizerParams<T>& params, const Var<T>& h,
                                  const std::vector<T>* anchor_offset) {
  TokenizationOutput<T> out;
  out.embeddings = h;
  out.indices = nearest_indices(params, h);
  std::vector<T> forward;
  if (anchor_offset != nullptr) {
    if (anchor_offset->size() != h.size())
      throw ShapeError("quantize_st: anchor offset size does not match embeddings");
    forward.resize(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) forward[i] = h.values()[i] + (*anchor_offset)[i];
  } else {
    forward = lookup_codes(params, out.indices);
  }
  out.quantized = ad::straight_through(h, std::move(forward));
  return out;
}

template <typename T>
Var<T> decode(const TokenizerParams<T>& params, const Var<T>& quantized) {
  const TokenizerConfig& c = params.config;
  const std::size_t t = c.tokens(), d = c.code_dim;
  if (quantized.rank() != 3 || quantized.dim(1) != t || quantized.dim(2) != d)
    throw ShapeError("decode: quantized shape " + ad::shape_string(quantized.shape()) +
                     " does not match [B," + std::to_string(t) + "," + std::to_string(d) + "]");
  const std::size_t b = quantized.dim(0);
  Var<T> z = ad::reshape(quantized, {b * t, d});
  z = add_position(linear(z, params.embed_w, params.embed_b), params.dec_pos, b);
  for (const auto& blk : params.dec_blocks) z = run_block(z, blk);
  Var<T> pix = ad::sigmoid(linear(z, params.out_w, params.out_b));
  const auto idx = unpatchify_index(c, b);
  return ad::gather(pix, idx, {b, c.channels, c.image_side, c.image_side});
}

ImageBatch reconstruct(const TokenizerParams<float>& params, const ImageBatch& batch) {
  const TokenizerParams<float> frozen = params.clone(false);
  auto h = encode(frozen, to_tensor<float>(batch));
  auto rec = decode(frozen, quantize(frozen, h).quantized);
  ImageBatch out = batch;
  out.pixels.assign(rec.values().begin(), rec.values().end());
  return out;
}

std::vector<std::int32_t> tokenize(const TokenizerParams<float>& params, const ImageBatch& batch) {
  const TokenizerParams<float> frozen = params.clone(false);
  return nearest_indices(frozen, encode(frozen, to_tensor<float>(batch)));
}

// ---------------------------------------------------------------- training

namespace {

// Replaces every codebook row with a (jittered) pre-quantization chunk drawn
// from the batch embeddings, without replacement while enough chunks exist.
void seed_codebook(TokenizerParams<float>& params, std::span<const float> h, Rng rng) {
  const TokenizerConfig& c = params.config;
  const std::size_t m = c.num_codebooks, k = c.codebook_size, sub = c.sub_dim(), d = c.code_dim;
  const std::size_t n = h.size() / d;
  auto book = params.codebook.mutable_values();
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t code = 0; code < k; ++code) {
      std::size_t pick;
      if (code < n) {
        const std::size_t r = code + rng.below(n - code);
        std::swap(pool[code], pool[r]);
        pick = pool[code];
      } else {
        pick = rng.below(n);
      }
      for (std::size_t e = 0; e < sub; ++e)
        book[(j * k + code) * sub + e] =
            h[pick * d + j * sub + e] + static_cast<float>(1e-3 * rng.normal());
    }
  }
}

// Moves every code that went unused since the last reset onto a randomly
// chosen (jittered) embedding chunk of the current batch.
std::size_t reset_dead_codes(TokenizerParams<float>& params, std::span<const float> h,
                             std::vector<std::uint64_t>& usage, Rng rng) {
  const TokenizerConfig& c = params.config;
  const std::size_t k = c.codebook_size, sub = c.sub_dim(), d = c.code_dim;
  const std::size_t n = h.size() / d;
  auto book = params.codebook.mutable_values();
  std::size_t moved = 0;
  for (std::size_t g = 0; g < usage.size(); ++g) {
    if (usage[g] != 0) continue;
    const std::size_t j = g / k, pick = rng.below(n);
    for (std::size_t e = 0; e < sub; ++e)
      book[g * sub + e] = h[pick * d + j * sub + e] + static_cast<float>(1e-3 * rng.normal());
    ++moved;
  }
  std::fill(usage.begin(), usage.end(), 0);
  return moved;
}

void shuffle(std::vector<std::size_t>& v, Rng rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

VqTerms<float> vq_terms(const TokenizerParams<float>& params, const Var<float>& h) {
  const TokenizerConfig& c = params.config;
  const std::size_t n = h.size() / c.code_dim;
  Var<float> h2 = ad::reshape(h, {n, c.code_dim});
  VqTerms<float> out;
  out.indices = nearest_indices(params, h2);
  std::vector<std::int32_t> rows(out.indices.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i] = static_cast<std::int32_t>((i % c.num_codebooks) * c.codebook_size) + out.indices[i];
  Var<float> flat_book = ad::reshape(params.codebook, {c.num_codebooks * c.codebook_size, c.sub_dim()});
  Var<float> codes = ad::reshape(ad::take_rows(flat_book, rows), {n, c.code_dim});
  out.quantized = ad::straight_through(h, std::vector<float>(codes.values().begin(), codes.values().end()));
  out.codebook_loss = ad::mean(ad::sq_norm_last(ad::sub(ad::stop_gradient(h2), codes)));
  out.commitment = ad::mean(ad::sq_norm_last(ad::sub(h2, ad::stop_gradient(codes))));
  return out;
}

TokenizerParams<float> pretrain(const TokenizerParams<float>& start, const Dataset& data,
                                const PretrainOptions& options, PretrainLog* log) {
  start.config.validate();
  if (data.size() == 0) throw Error("pretrain: empty dataset");
  // Parameters are shared handles; train a private copy so the caller's tokenizer is untouched.
  TokenizerParams<float> params = start.clone(true);
  if (options.epochs == 0) return params;
  const TokenizerConfig& c = params.config;
  const float beta = static_cast<float>(options.beta_commit);
  const Rng data_rng = Rng::stream(c.seed, "data");
  AdamState<float> adam;
  adam.hyper.lr = options.lr;
  std::vector<Var<float>> trainable = params.all_params();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  bool seeded = false;
  std::vector<std::uint64_t> usage(static_cast<std::size_t>(c.num_codebooks) * c.codebook_size, 0);
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    shuffle(order, data_rng.split(epoch));
    double loss_acc = 0, recon_acc = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const ImageBatch batch =
          data.batch(std::span<const std::size_t>(order).subspan(start, end - start));
      try {
        Var<float> x = to_tensor<float>(batch);
        if (!seeded) {
          const auto frozen = params.clone(false);
          const auto h0 = encode(frozen, x);
          seed_codebook(params, h0.values(), Rng::stream(c.seed, "init").split(1));
          seeded = true;
        }
        Var<float> h = encode(params, x);
        const VqTerms<float> vq = vq_terms(params, h);
        Var<float> q = vq.quantized;
        for (std::size_t i = 0; i < vq.indices.size(); ++i)
          ++usage[(i % c.num_codebooks) * c.codebook_size + static_cast<std::size_t>(vq.indices[i])];
        Var<float> recon = decode(params, q);
        Var<float> rec_loss = ad::mse(recon, x);
        Var<float> loss = ad::add(ad::add(rec_loss, vq.codebook_loss), ad::scale(vq.commitment, beta));
        for (auto& p : trainable) p.zero_grad();
        ad::backward(loss);
        adam_step<float>(trainable, adam);
        ++global_step;
        if (options.reset_every > 0 && global_step % options.reset_every == 0) {
          const std::size_t moved = reset_dead_codes(params, h.values(), usage,
                                                     Rng::stream(c.seed, "init").split(2).split(global_step));
          if (log) log->codes_reset += moved;
        }
        loss_acc += loss.item();
        recon_acc += rec_loss.item();
        ++steps;
      } catch (const NumericError& e) {
        throw NumericError("pretrain diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(steps) + ": " + e.what());
      }
    }
    if (log) {
      log->epoch_loss.push_back(loss_acc / steps);
      log->epoch_recon.push_back(recon_acc / steps);
    }
  }
  return params;
}

CodebookUsage codebook_usage(const TokenizerParams<float>& params, const Dataset& data,
                             std::size_t batch_size) {
  const TokenizerConfig& c = params.config;
  CodebookUsage out;
  out.counts.assign(static_cast<std::size_t>(c.num_codebooks) * c.codebook_size, 0);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const auto idx = tokenize(params, data.range(start, start + batch_size));
    for (std::size_t i = 0; i < idx.size(); ++i)
      ++out.counts[(i % c.num_codebooks) * c.codebook_size + static_cast<std::size_t>(idx[i])];
  }
  const auto dead = std::count(out.counts.begin(), out.counts.end(), 0u);
  out.dead_fraction = static_cast<double>(dead) / static_cast<double>(out.counts.size());
  return out;
}

// ---------------------------------------------------------------- instantiation

#define VQR_INSTANTIATE_TOKENIZER(T)                                                          \
  template struct TokenizerParams<T>;                                                         \
  template Var<T> to_tensor<T>(const ImageBatch&, bool);                                      \
  template Var<T> encode<T>(const TokenizerParams<T>&, const Var<T>&);                        \
  template std::vector<std::int32_t> nearest_indices<T>(const TokenizerParams<T>&,            \
                                                        const Var<T>&);                       \
  template std::vector<T> lookup_codes<T>(const TokenizerParams<T>&,                          \
                                          std::span<const std::int32_t>);                     \
  template TokenizationOutput<T> quantize<T>(const TokenizerParams<T>&, const Var<T>&);       \
  template TokenizationOutput<T> quantize_st<T>(const TokenizerParams<T>&, const Var<T>&,     \
                                                const std::vector<T>*);                       \
  template Var<T> decode<T>(const TokenizerParams<T>&, const Var<T>&);

VQR_INSTANTIATE_TOKENIZER(float)
VQR_INSTANTIATE_TOKENIZER(double)

template TokenizerParams<double> cast_params<double, float>(const TokenizerParams<float>&);
template TokenizerParams<float> cast_params<float, double>(const TokenizerParams<double>&);
template TokenizerParams<float> cast_params<float, float>(const TokenizerParams<float>&);
template TokenizerParams<double> cast_params<double, double>(const TokenizerParams<double>&);

#undef VQR_INSTANTIATE_TOKENIZER

}  // namespace vqr
