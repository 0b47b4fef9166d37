#include "vqr/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"
#include "vqr/optim.hpp"
#include "vqr/rng.hpp"

namespace vqr {

using ad::Var;

const char* to_string(ProbeArch arch) { return arch == ProbeArch::Linear ? "linear" : "mlp"; }

ProbeArch parse_probe_arch(const std::string& name) {
  if (name == "linear") return ProbeArch::Linear;
  if (name == "mlp") return ProbeArch::Mlp;
  throw FormatError("unknown probe architecture '" + name + "' (expected linear or mlp)");
}

template <typename T>
std::vector<Var<T>> ProbeParams<T>::params() const {
  if (arch == ProbeArch::Linear) return {w1, b1};
  return {w1, b1, w2, b2};
}

namespace {

template <typename To, typename From>
ProbeParams<To> convert(const ProbeParams<From>& p, bool trainable) {
  ProbeParams<To> out;
  out.arch = p.arch;
  out.in_dim = p.in_dim;
  out.hidden = p.hidden;
  out.classes = p.classes;
  out.w1 = ad::cast<To, From>(p.w1, trainable);
  out.b1 = ad::cast<To, From>(p.b1, trainable);
  if (p.arch == ProbeArch::Mlp) {
    out.w2 = ad::cast<To, From>(p.w2, trainable);
    out.b2 = ad::cast<To, From>(p.b2, trainable);
  }
  return out;
}

Var<float> gaussian(Rng& rng, ad::Shape shape, double stddev) {
  std::vector<float> v(ad::numel(shape));
  for (float& x : v) x = static_cast<float>(stddev * rng.normal());
  return Var<float>::parameter(std::move(shape), std::move(v));
}

}  // namespace

template <typename T>
ProbeParams<T> ProbeParams<T>::clone(bool trainable) const {
  return convert<T, T>(*this, trainable);
}

template <typename To, typename From>
ProbeParams<To> cast_probe(const ProbeParams<From>& probe) {
  return convert<To, From>(probe, true);
}

ProbeParams<float> init_probe(ProbeArch arch, std::size_t in_dim, std::size_t hidden,
                              std::size_t classes, std::uint64_t seed) {
  if (in_dim == 0 || classes < 2) throw FormatError("probe: need in_dim > 0 and at least 2 classes");
  Rng rng = Rng::stream(seed, "init").split(7);
  ProbeParams<float> p;
  p.arch = arch;
  p.in_dim = in_dim;
  p.classes = classes;
  if (arch == ProbeArch::Linear) {
    p.w1 = gaussian(rng, {in_dim, classes}, 0.01);
    p.b1 = Var<float>::zeros({classes}, true);
  } else {
    if (hidden == 0) throw FormatError("probe: mlp needs hidden > 0");
    p.hidden = hidden;
    p.w1 = gaussian(rng, {in_dim, hidden}, std::sqrt(2.0 / in_dim));
    p.b1 = Var<float>::zeros({hidden}, true);
    p.w2 = gaussian(rng, {hidden, classes}, std::sqrt(1.0 / hidden));
    p.b2 = Var<float>::zeros({classes}, true);
  }
  return p;
}

template <typename T>
Var<T> probe_logits(const ProbeParams<T>& probe, const Var<T>& quantized) {
  if (quantized.rank() == 0 || quantized.size() % probe.in_dim != 0 ||
      quantized.size() / quantized.dim(0) != probe.in_dim)
    throw ShapeError("probe: features of shape " + ad::shape_string(quantized.shape()) +
                     " do not flatten to " + std::to_string(probe.in_dim));
  const std::size_t b = quantized.dim(0);
  Var<T> x = ad::reshape(quantized, {b, probe.in_dim});
  Var<T> z = ad::broadcast_add(ad::matmul(x, probe.w1), probe.b1);
  if (probe.arch == ProbeArch::Linear) return z;
  return ad::broadcast_add(ad::matmul(ad::relu(z), probe.w2), probe.b2);
}

std::uint64_t hash_probe(const ProbeParams<float>& probe) {
  std::vector<std::pair<std::string, Var<float>>> named{{"w1", probe.w1}, {"b1", probe.b1}};
  if (probe.arch == ProbeArch::Mlp) {
    named.emplace_back("w2", probe.w2);
    named.emplace_back("b2", probe.b2);
  }
  return hash_tensors(named);
}

namespace {

std::vector<std::int32_t> argmax_rows(const Var<float>& logits) {
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  std::vector<std::int32_t> out(b);
  for (std::size_t r = 0; r < b; ++r) {
    const float* row = logits.values().data() + r * c;
    out[r] = static_cast<std::int32_t>(std::max_element(row, row + c) - row);
  }
  return out;
}

}  // namespace

std::vector<std::int32_t> predict(const TokenizerParams<float>& tokenizer,
                                  const ProbeParams<float>& probe, const ImageBatch& batch) {
  const auto tok = tokenizer.clone(false);
  const auto prb = probe.clone(false);
  auto q = quantize(tok, encode(tok, to_tensor<float>(batch))).quantized;
  return argmax_rows(probe_logits(prb, q));
}

double accuracy(const TokenizerParams<float>& tokenizer, const ProbeParams<float>& probe,
                const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const ImageBatch b = data.range(start, start + batch_size);
    const auto pred = predict(tokenizer, probe, b);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

ProbeParams<float> train_probe_on_features(const std::vector<float>& features, std::size_t in_dim,
                                           const std::vector<std::int32_t>& labels,
                                           std::size_t classes, const ProbeTrainOptions& options,
                                           ProbeTrainLog* log) {
  const std::size_t n = labels.size();
  if (n == 0 || features.size() != n * in_dim) throw Error("train_probe: empty or inconsistent features");
  ProbeParams<float> probe = init_probe(options.arch, in_dim, options.hidden, classes, options.seed);
  auto params = probe.params();
  AdamState<float> adam;
  adam.hyper.lr = options.lr;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const Rng rng = Rng::stream(options.seed, "data").split(11);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng shuffle = rng.split(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    double total = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t end = std::min(n, start + options.batch_size);
      std::vector<float> xb;
      std::vector<std::int32_t> yb;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        xb.insert(xb.end(), features.begin() + idx * in_dim, features.begin() + (idx + 1) * in_dim);
        yb.push_back(labels[idx]);
      }
      try {
        auto x = Var<float>::constant({end - start, in_dim}, std::move(xb));
        auto loss = ad::cross_entropy(probe_logits(probe, x), yb);
        for (auto& p : params) p.zero_grad();
        ad::backward(loss);
        adam_step<float>(params, adam);
        total += loss.item();
        ++steps;
      } catch (const NumericError& e) {
        throw NumericError("train_probe diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    if (log) log->epoch_loss.push_back(total / steps);
  }
  if (log) {
    auto logits = probe_logits(probe.clone(false), Var<float>::constant({n, in_dim}, features));
    const auto pred = argmax_rows(logits);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < n; ++i) ok += pred[i] == labels[i];
    log->train_accuracy = static_cast<double>(ok) / static_cast<double>(n);
  }
  return probe;
}

ProbeParams<float> train_probe(const TokenizerParams<float>& tokenizer, const Dataset& data,
                               const ProbeTrainOptions& options, ProbeTrainLog* log) {
  const std::uint64_t before = hash_params(tokenizer);
  const auto frozen = tokenizer.clone(false);
  const std::size_t in_dim = std::size_t{frozen.config.tokens()} * frozen.config.code_dim;
  std::vector<float> features;
  features.reserve(data.size() * in_dim);
  for (std::size_t start = 0; start < data.size(); start += 100) {
    auto q = quantize(frozen, encode(frozen, to_tensor<float>(data.range(start, start + 100)))).quantized;
    features.insert(features.end(), q.values().begin(), q.values().end());
  }
  auto probe = train_probe_on_features(features, in_dim, data.labels, data.num_classes, options, log);
  if (hash_params(tokenizer) != before) throw Error("train_probe: tokenizer parameters changed");
  return probe;
}

std::vector<std::uint8_t> serialize_probe(const ProbeParams<float>& probe) {
  wire::Writer w;
  w.bytes("VQRP");
  w.u32(1);
  w.u32(probe.arch == ProbeArch::Linear ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(probe.in_dim));
  w.u32(static_cast<std::uint32_t>(probe.hidden));
  w.u32(static_cast<std::uint32_t>(probe.classes));
  const auto ps = probe.params();
  const char* names[] = {"w1", "b1", "w2", "b2"};
  w.u32(static_cast<std::uint32_t>(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) w.tensor(names[i], ps[i]);
  return w.take();
}

ProbeParams<float> parse_probe(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes, "probe");
  if (r.fixed(4) != "VQRP") throw FormatError("probe: bad magic (expected VQRP)");
  const std::uint32_t version = r.u32();
  if (version != 1) throw FormatError("probe: unsupported format version " + std::to_string(version));
  const std::uint32_t arch = r.u32();
  if (arch > 1) throw FormatError("probe: unknown architecture code " + std::to_string(arch));
  ProbeParams<float> p;
  p.arch = arch == 0 ? ProbeArch::Linear : ProbeArch::Mlp;
  p.in_dim = r.u32();
  p.hidden = r.u32();
  p.classes = r.u32();
  const std::uint32_t count = r.u32();
  if (count != (p.arch == ProbeArch::Linear ? 2u : 4u)) throw FormatError("probe: wrong tensor count");
  std::vector<Var<float>*> slots{&p.w1, &p.b1, &p.w2, &p.b2};
  for (std::uint32_t i = 0; i < count; ++i) *slots[i] = r.tensor(true).second;
  const std::size_t out_in = p.arch == ProbeArch::Linear ? p.in_dim : p.hidden;
  const Var<float>& last_w = p.arch == ProbeArch::Linear ? p.w1 : p.w2;
  if (p.w1.rank() != 2 || p.w1.dim(0) != p.in_dim || last_w.rank() != 2 ||
      last_w.dim(0) != out_in || last_w.dim(1) != p.classes)
    throw FormatError("probe: tensor shapes inconsistent with header");
  if (!r.done()) throw FormatError("probe: trailing bytes");
  return p;
}

void save_probe(const std::string& path, const ProbeParams<float>& probe) {
  write_file(path, serialize_probe(probe));
}

ProbeParams<float> load_probe(const std::string& path) { return parse_probe(read_file(path)); }

template struct ProbeParams<float>;
template struct ProbeParams<double>;
template ProbeParams<double> cast_probe<double, float>(const ProbeParams<float>&);
template ProbeParams<float> cast_probe<float, float>(const ProbeParams<float>&);
template Var<float> probe_logits<float>(const ProbeParams<float>&, const Var<float>&);
template Var<double> probe_logits<double>(const ProbeParams<double>&, const Var<double>&);

}  // namespace vqr
