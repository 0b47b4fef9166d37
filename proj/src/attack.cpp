#include "vqr/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "vqr/error.hpp"
#include "vqr/kernels.hpp"
#include "vqr/rng.hpp"

namespace vqr {

using ad::Var;

const char* to_string(Norm norm) { return norm == Norm::Linf ? "linf" : "l2"; }

Norm parse_norm(const std::string& name) {
  if (name == "linf") return Norm::Linf;
  if (name == "l2") return Norm::L2;
  throw FormatError("unknown norm '" + name + "' (expected linf or l2)");
}

void Budget::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
    throw FormatError("budget: epsilon must be a finite value >= 0");
  if (!(box_lo < box_hi)) throw FormatError("budget: box_lo must be below box_hi");
}

std::vector<std::size_t> ApgdConfig::checkpoints() const {
  std::vector<std::size_t> out{0};
  double prev = 0.0, cur = 0.22;
  while (true) {
    // The tolerance keeps accumulated rounding in `cur` from bumping an exact
    // product such as 0.57 · 100 to the next integer.
    const auto w = static_cast<std::size_t>(std::ceil(cur * static_cast<double>(n_iters) - 1e-9));
    if (w > n_iters || cur > 1.0) break;
    if (w > out.back()) out.push_back(w);
    const double next = cur + std::max(cur - prev - 0.03, 0.06);
    prev = cur;
    cur = next;
  }
  return out;
}

void ApgdConfig::validate() const {
  if (n_restarts == 0) throw FormatError("apgd: n_restarts must be >= 1");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw FormatError("apgd: momentum must lie in [0, 1]");
  if (!(step_decay > 0.0 && step_decay < 1.0)) throw FormatError("apgd: step_decay must lie in (0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) throw FormatError("apgd: rho must lie in (0, 1)");
  if (!(step_fraction > 0.0)) throw FormatError("apgd: step_fraction must be positive");
}

namespace {

constexpr const char* kObjectiveNames[] = {"unsup_hh", "unsup_hq",       "unsup_qh",      "unsup_qq",
                                           "sup_ce",   "targeted_embed", "targeted_class"};

bool quantized_adv(ObjectiveKind k) {
  return k == ObjectiveKind::UnsupQH || k == ObjectiveKind::UnsupQQ || k == ObjectiveKind::SupCE ||
         k == ObjectiveKind::TargetedClass;
}

}  // namespace

const char* to_string(ObjectiveKind kind) { return kObjectiveNames[static_cast<int>(kind)]; }

ObjectiveKind parse_objective(const std::string& name) {
  for (int i = 0; i < 7; ++i)
    if (name == kObjectiveNames[i]) return static_cast<ObjectiveKind>(i);
  throw FormatError("unknown objective kind '" + name + "'");
}

bool maximizes(ObjectiveKind kind) {
  return kind != ObjectiveKind::TargetedEmbed && kind != ObjectiveKind::TargetedClass;
}

bool needs_probe(ObjectiveKind kind) {
  return kind == ObjectiveKind::SupCE || kind == ObjectiveKind::TargetedClass;
}

template <typename T>
Objective<T> make_objective(ObjectiveKind kind, const TokenizerParams<T>& tokenizer,
                            const ProbeParams<T>* probe, const ImageBatch& clean,
                            const AttackPayload& payload) {
  Objective<T> obj;
  obj.kind = kind;
  obj.tokenizer = &tokenizer;
  const std::string name = to_string(kind);
  if (needs_probe(kind)) {
    if (probe == nullptr) throw Error("objective " + name + " needs a probe classifier");
    obj.probe = probe;
    obj.classes = kind == ObjectiveKind::SupCE
                      ? (payload.labels.empty() ? clean.labels : payload.labels)
                      : payload.target_classes;
    if (obj.classes.size() != clean.count)
      throw Error("objective " + name + " needs one " +
                  (kind == ObjectiveKind::SupCE ? "label" : "target class") + " per example");
    for (auto c : obj.classes)
      if (c < 0 || static_cast<std::size_t>(c) >= probe->classes)
        throw Error("objective " + name + ": class " + std::to_string(c) + " out of range");
    return obj;
  }
  const ImageBatch* source = &clean;
  if (kind == ObjectiveKind::TargetedEmbed) {
    if (!payload.target_images || payload.target_images->count != clean.count ||
        payload.target_images->image_size() != clean.image_size())
      throw Error("objective targeted_embed needs one target image per example");
    source = &*payload.target_images;
  }
  Var<T> h = encode(tokenizer, to_tensor<T>(*source));
  if (kind == ObjectiveKind::UnsupHQ || kind == ObjectiveKind::UnsupQQ)
    obj.reference = ad::stop_gradient(quantize(tokenizer, h).quantized);
  else
    obj.reference = ad::stop_gradient(h);
  return obj;
}

template <typename T>
Var<T> objective_rows(const Objective<T>& obj, const Var<T>& x_adv, const std::vector<T>* anchor) {
  if (obj.tokenizer == nullptr) throw Error("objective: not initialized");
  Var<T> h = encode(*obj.tokenizer, x_adv);
  Var<T> feat = quantized_adv(obj.kind) ? quantize_st(*obj.tokenizer, h, anchor).quantized : h;
  if (needs_probe(obj.kind))
    return ad::cross_entropy_rows(probe_logits(*obj.probe, feat), obj.classes);
  if (feat.shape() != obj.reference.shape())
    throw ShapeError("objective: adversarial batch does not match the clean batch");
  return ad::sum_last(ad::sq_norm_last(ad::sub(feat, obj.reference)));
}

template <typename T>
Var<T> objective_eval(const Objective<T>& obj, const Var<T>& x_adv, const std::vector<T>* anchor) {
  return ad::mean(objective_rows(obj, x_adv, anchor));
}

template <typename T>
std::vector<T> straight_through_anchor(const Objective<T>& obj, const Var<T>& x_adv) {
  Var<T> h = encode(*obj.tokenizer, x_adv);
  std::vector<T> codes = lookup_codes(*obj.tokenizer, nearest_indices(*obj.tokenizer, h));
  for (std::size_t i = 0; i < codes.size(); ++i) codes[i] -= h.values()[i];
  return codes;
}

// ---------------------------------------------------------------- APGD

namespace {

struct Feasible {
  const Budget& budget;
  std::size_t dim;
  std::span<const float> x0;

  void project(std::span<float> x, std::size_t b) const {
    const float* c = x0.data() + b * dim;
    float* v = x.data() + b * dim;
    const auto lo = static_cast<float>(budget.box_lo), hi = static_cast<float>(budget.box_hi);
    const auto eps = static_cast<float>(budget.epsilon);
    if (budget.norm == Norm::Linf) {
      for (std::size_t i = 0; i < dim; ++i)
        v[i] = std::clamp(std::clamp(v[i], c[i] - eps, c[i] + eps), lo, hi);
      return;
    }
    double n = 0;
    for (std::size_t i = 0; i < dim; ++i) n += double(v[i] - c[i]) * double(v[i] - c[i]);
    n = std::sqrt(n);
    if (n > budget.epsilon) {
      const double s = budget.epsilon / n;
      for (std::size_t i = 0; i < dim; ++i) v[i] = c[i] + static_cast<float>((v[i] - c[i]) * s);
    }
    for (std::size_t i = 0; i < dim; ++i) v[i] = std::clamp(v[i], lo, hi);
  }

  // Largest excess over the ball radius or the box across all examples.
  double violation(std::span<const float> x) const {
    double worst = -budget.epsilon;
    const std::size_t count = x.size() / dim;
    for (std::size_t b = 0; b < count; ++b) {
      double norm = 0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double v = x[b * dim + i], d = v - double(x0[b * dim + i]);
        worst = std::max({worst, budget.box_lo - v, v - budget.box_hi});
        norm = budget.norm == Norm::Linf ? std::max(norm, std::abs(d)) : norm + d * d;
      }
      if (budget.norm == Norm::L2) norm = std::sqrt(norm);
      worst = std::max(worst, norm - budget.epsilon);
    }
    return worst;
  }
};

struct RunState {
  std::vector<float> x_best;
  std::vector<double> f_best;  // internal maximization sign
  std::vector<std::vector<double>> trace;
  double max_violation = 0;
  std::size_t evaluations = 0;
};

RunState apgd_run(const LossRows& loss, double sign, const Budget& budget, const ApgdConfig& cfg,
                  const ImageBatch& clean, Rng rng) {
  const std::size_t batch = clean.count, dim = clean.image_size();
  const ad::Shape shape{batch, clean.channels, clean.side, clean.side};
  const Feasible feas{budget, dim, clean.pixels};
  const double eps = budget.epsilon;

  std::vector<float> x = clean.pixels;
  if (cfg.random_start && eps > 0) {
    for (std::size_t b = 0; b < batch; ++b) {
      float* v = x.data() + b * dim;
      if (budget.norm == Norm::Linf) {
        for (std::size_t i = 0; i < dim; ++i) v[i] += static_cast<float>(rng.uniform(-eps, eps));
      } else {
        std::vector<double> t(dim);
        double n = 0;
        for (double& e : t) {
          e = rng.normal();
          n += e * e;
        }
        const double r = eps * rng.uniform() / std::max(std::sqrt(n), 1e-12);
        for (std::size_t i = 0; i < dim; ++i) v[i] += static_cast<float>(t[i] * r);
      }
      feas.project(x, b);
    }
  }

  RunState st;
  st.max_violation = feas.violation(x);
  std::vector<double> f(batch);
  std::vector<float> g(batch * dim);
  auto evaluate = [&](std::size_t iter) {
    auto xv = Var<float>::parameter(shape, x);
    try {
      Var<float> rows = loss(xv);
      if (rows.size() != batch)
        throw ShapeError("apgd: loss returned " + std::to_string(rows.size()) + " values for " +
                         std::to_string(batch) + " examples");
      ad::backward(ad::sum(rows));
      for (std::size_t b = 0; b < batch; ++b) f[b] = sign * double(rows.values()[b]);
    } catch (const NumericError& e) {
      throw NumericError("apgd: non-finite value at iteration " + std::to_string(iter) + " (" +
                         e.what() + ")");
    }
    const auto grad = xv.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(sign * grad[i]);
    for (float v : g)
      if (!std::isfinite(v))
        throw NumericError("apgd: non-finite gradient at iteration " + std::to_string(iter));
    ++st.evaluations;
  };

  evaluate(0);
  st.x_best = x;
  st.f_best = f;
  std::vector<float> g_best = g;
  st.trace.assign(batch, {});
  for (std::size_t b = 0; b < batch; ++b) st.trace[b].push_back(sign * st.f_best[b]);

  std::vector<double> eta(batch, cfg.step_fraction * 2.0 * eps);
  std::vector<float> x_prev = x;
  std::vector<double> f_prev = f;
  std::vector<std::size_t> improved(batch, 0);
  std::vector<std::uint8_t> reduced_last(batch, 0);
  std::vector<double> best_at_check = st.f_best;
  const auto checks = cfg.checkpoints();
  std::size_t next_check = 1;

  std::vector<float> z(dim);
  for (std::size_t k = 0; k < cfg.n_iters; ++k) {
    const double a = k == 0 ? 1.0 : cfg.momentum;
    for (std::size_t b = 0; b < batch; ++b) {
      float* xb = x.data() + b * dim;
      float* pb = x_prev.data() + b * dim;
      const float* gb = g.data() + b * dim;
      double scale = eta[b];
      if (budget.norm == Norm::L2) {
        double n = 0;
        for (std::size_t i = 0; i < dim; ++i) n += double(gb[i]) * gb[i];
        scale = n > 0 ? eta[b] / std::sqrt(n) : 0.0;
      }
      for (std::size_t i = 0; i < dim; ++i) {
        const double step = budget.norm == Norm::Linf ? (gb[i] > 0 ? 1.0 : gb[i] < 0 ? -1.0 : 0.0)
                                                      : double(gb[i]);
        z[i] = static_cast<float>(xb[i] + scale * step);
      }
      Feasible single{budget, dim, std::span<const float>(clean.pixels).subspan(b * dim, dim)};
      single.project(z, 0);
      for (std::size_t i = 0; i < dim; ++i) {
        const float cur = xb[i];
        xb[i] = static_cast<float>(cur + a * (z[i] - cur) + (1.0 - a) * (cur - pb[i]));
        pb[i] = cur;
      }
      feas.project(x, b);
    }
    st.max_violation = std::max(st.max_violation, feas.violation(x));
    evaluate(k + 1);
    for (std::size_t b = 0; b < batch; ++b) {
      if (f[b] > f_prev[b]) ++improved[b];
      f_prev[b] = f[b];
      if (f[b] > st.f_best[b]) {
        st.f_best[b] = f[b];
        std::copy_n(x.begin() + b * dim, dim, st.x_best.begin() + b * dim);
        std::copy_n(g.begin() + b * dim, dim, g_best.begin() + b * dim);
      }
      st.trace[b].push_back(sign * st.f_best[b]);
    }
    if (next_check < checks.size() && k + 1 == checks[next_check]) {
      const double span = double(checks[next_check] - checks[next_check - 1]);
      for (std::size_t b = 0; b < batch; ++b) {
        const bool oscillating = double(improved[b]) < cfg.rho * span;
        const bool stalled = !reduced_last[b] && st.f_best[b] <= best_at_check[b];
        const bool reduce = oscillating || stalled;
        reduced_last[b] = reduce;
        best_at_check[b] = st.f_best[b];
        improved[b] = 0;
        if (reduce) {
          eta[b] *= cfg.step_decay;
          std::copy_n(st.x_best.begin() + b * dim, dim, x.begin() + b * dim);
          std::copy_n(st.x_best.begin() + b * dim, dim, x_prev.begin() + b * dim);
          std::copy_n(g_best.begin() + b * dim, dim, g.begin() + b * dim);
          f_prev[b] = st.f_best[b];
        }
      }
      ++next_check;
    }
  }
  return st;
}

}  // namespace

AttackResult apgd(const LossRows& loss, bool maximize, const Budget& budget,
                  const ApgdConfig& config, const ImageBatch& clean, std::uint64_t stream_index) {
  budget.validate();
  config.validate();
  for (float v : clean.pixels)
    if (!(v >= budget.box_lo && v <= budget.box_hi))
      throw Error("apgd: clean batch has pixels outside the box");
  const double sign = maximize ? 1.0 : -1.0;
  const Rng base = Rng::stream(config.seed, "attack").split(stream_index);
  const std::size_t batch = clean.count, dim = clean.image_size();

  AttackResult res;
  res.best_loss_trace.assign(batch, {});
  std::vector<double> f_best(batch, -INFINITY);
  std::vector<float> x_best = clean.pixels;
  res.max_violation = -budget.epsilon;
  for (std::size_t r = 0; r < config.n_restarts; ++r) {
    RunState st = apgd_run(loss, sign, budget, config, clean, base.split(r));
    res.max_violation = std::max(res.max_violation, st.max_violation);
    res.gradient_evaluations += st.evaluations;
    for (std::size_t b = 0; b < batch; ++b) {
      for (double v : st.trace[b]) {
        const double internal = std::max(sign * v, f_best[b]);
        res.best_loss_trace[b].push_back(sign * internal);
      }
      if (st.f_best[b] > f_best[b]) {
        f_best[b] = st.f_best[b];
        std::copy_n(st.x_best.begin() + b * dim, dim, x_best.begin() + b * dim);
      }
    }
  }
  res.x_adv = clean;
  res.x_adv.pixels = std::move(x_best);
  res.delta.resize(res.x_adv.pixels.size());
  for (std::size_t i = 0; i < res.delta.size(); ++i) res.delta[i] = res.x_adv.pixels[i] - clean.pixels[i];
  res.best_loss.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) res.best_loss[b] = sign * f_best[b];
  return res;
}

std::vector<std::int32_t> count_changed_tokens(const TokenizerParams<float>& tokenizer,
                                               const ImageBatch& x_clean, const ImageBatch& x_adv) {
  if (x_clean.count != x_adv.count || x_clean.image_size() != x_adv.image_size())
    throw ShapeError("count_changed_tokens: batches differ in shape");
  const auto a = tokenize(tokenizer, x_clean), b = tokenize(tokenizer, x_adv);
  const std::size_t per = a.size() / std::max<std::size_t>(x_clean.count, 1);
  std::vector<std::int32_t> out(x_clean.count, 0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i / per] += a[i] != b[i];
  return out;
}

AttackResult run_attack(ObjectiveKind kind, const TokenizerParams<float>& tokenizer,
                        const ProbeParams<float>* probe, const AttackPayload& payload,
                        const Budget& budget, const ApgdConfig& config, const ImageBatch& clean,
                        const SuccessFn& success, std::uint64_t stream_index) {
  const auto tok = tokenizer.clone(false);
  std::optional<ProbeParams<float>> prb;
  if (probe) prb = probe->clone(false);
  const Objective<float> obj = make_objective<float>(kind, tok, prb ? &*prb : nullptr, clean, payload);
  AttackResult res = apgd([&](const Var<float>& x) { return objective_rows(obj, x); },
                          maximizes(kind), budget, config, clean, stream_index);
  res.changed_tokens = count_changed_tokens(tok, clean, res.x_adv);
  if (success) {
    res.success = success(res.x_adv);
  } else if (prb) {
    const auto pred = predict(tok, *prb, res.x_adv);
    const auto& want = kind == ObjectiveKind::TargetedClass ? payload.target_classes
                       : payload.labels.empty()            ? clean.labels
                                                           : payload.labels;
    res.success.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
      res.success[i] = kind == ObjectiveKind::TargetedClass ? pred[i] == want.at(i) : pred[i] != want.at(i);
  } else {
    res.success.resize(clean.count);
    for (std::size_t i = 0; i < clean.count; ++i) res.success[i] = res.changed_tokens[i] > 0;
  }
  return res;
}

DatasetAttack attack_dataset(ObjectiveKind kind, const TokenizerParams<float>& tokenizer,
                             const ProbeParams<float>* probe, const Budget& budget,
                             const ApgdConfig& config, const Dataset& data,
                             std::size_t batch_size) {
  if (maximizes(kind) == false)
    throw Error("attack_dataset: targeted objectives need per-example targets; use run_attack");
  const auto t0 = std::chrono::steady_clock::now();
  DatasetAttack out;
  out.outcomes.resize(data.size());
  out.x_adv.resize(data.pixels.size());
  const std::size_t n_batches = (data.size() + batch_size - 1) / batch_size;
  std::vector<double> violations(n_batches, -budget.epsilon);
  std::string failure;

#pragma omp parallel for schedule(dynamic) num_threads(kernels::worker_count()) if (kernels::worker_count() > 1)
  for (std::size_t bi = 0; bi < n_batches; ++bi) {
    try {
      const std::size_t begin = bi * batch_size, end = std::min(data.size(), begin + batch_size);
      const ImageBatch clean = data.range(begin, end);
      AttackResult res = run_attack(kind, tokenizer, probe, AttackPayload{}, budget, config, clean,
                                    [](const ImageBatch& x) { return std::vector<std::uint8_t>(x.count, 0); },
                                    bi);
      std::vector<std::int32_t> clean_pred(clean.count, -1), adv_pred(clean.count, -1);
      if (probe) {
        clean_pred = predict(tokenizer, *probe, clean);
        adv_pred = predict(tokenizer, *probe, res.x_adv);
      }
      for (std::size_t i = 0; i < clean.count; ++i) {
        ExampleOutcome& o = out.outcomes[begin + i];
        o.example_id = begin + i;
        o.label = clean.labels[i];
        o.clean_pred = clean_pred[i];
        o.adv_pred = adv_pred[i];
        o.success = probe && clean_pred[i] == o.label && adv_pred[i] != o.label;
        o.changed_tokens = res.changed_tokens[i];
        o.best_loss = res.best_loss[i];
      }
      std::copy(res.x_adv.pixels.begin(), res.x_adv.pixels.end(),
                out.x_adv.begin() + begin * data.image_size());
      violations[bi] = res.max_violation;
    } catch (const std::exception& e) {
#pragma omp critical(vqr_attack_failure)
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw Error(failure);
  out.max_violation = *std::max_element(violations.begin(), violations.end());
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<SweepRow> epsilon_sweep(ObjectiveKind kind, const TokenizerParams<float>& tokenizer,
                                    const ProbeParams<float>& probe,
                                    const std::vector<Budget>& budgets, const ApgdConfig& config,
                                    const Dataset& data, std::size_t batch_size) {
  for (std::size_t i = 1; i < budgets.size(); ++i)
    if (budgets[i].epsilon < budgets[i - 1].epsilon)
      throw Error("epsilon_sweep: budgets must be sorted by epsilon");
  std::vector<SweepRow> rows;
  std::vector<std::uint8_t> fooled(data.size(), 0);
  std::vector<std::int32_t> fooled_pred(data.size(), 0);
  for (const Budget& budget : budgets) {
    DatasetAttack da = attack_dataset(kind, tokenizer, &probe, budget, config, data, batch_size);
    SweepRow row;
    row.epsilon = budget.epsilon;
    row.count = data.size();
    row.seconds = da.seconds;
    row.max_violation = da.max_violation;
    std::size_t clean_ok = 0, robust_ok = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      ExampleOutcome o = da.outcomes[i];
      if (fooled[i] && !o.success) {
        // the smaller-ε adversarial point is feasible here and still fools the probe
        o.success = true;
        o.adv_pred = fooled_pred[i];
      }
      if (o.success && !fooled[i]) {
        fooled[i] = 1;
        fooled_pred[i] = o.adv_pred;
      }
      clean_ok += o.clean_pred == o.label;
      robust_ok += o.clean_pred == o.label && !o.success;
      row.outcomes.push_back(o);
    }
    row.clean_accuracy = data.size() ? double(clean_ok) / data.size() : 0.0;
    row.robust_accuracy = data.size() ? double(robust_ok) / data.size() : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(ObjectiveKind kind, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "example_id,epsilon,objective_kind,clean_pred,adv_pred,success,changed_tokens,best_loss\n";
  for (const auto& row : rows)
    for (const auto& o : row.outcomes)
      os << o.example_id << ',' << row.epsilon << ',' << to_string(kind) << ',' << o.clean_pred << ','
         << o.adv_pred << ',' << (o.success ? 1 : 0) << ',' << o.changed_tokens << ',' << o.best_loss
         << '\n';
  return os.str();
}

std::string sweep_json(ObjectiveKind kind, const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json j;
  j["objective_kind"] = to_string(kind);
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    double churn = 0;
    for (const auto& o : row.outcomes) churn += o.changed_tokens;
    j["rows"].push_back({{"epsilon", row.epsilon},
                         {"count", row.count},
                         {"clean_accuracy", row.clean_accuracy},
                         {"robust_accuracy", row.robust_accuracy},
                         {"mean_changed_tokens", row.outcomes.empty() ? 0.0 : churn / row.outcomes.size()},
                         {"max_violation", row.max_violation}});
  }
  return j.dump(2) + "\n";
}

#define VQR_INSTANTIATE_OBJECTIVE(T)                                                             \
  template Objective<T> make_objective<T>(ObjectiveKind, const TokenizerParams<T>&,            \
                                          const ProbeParams<T>*, const ImageBatch&,            \
                                          const AttackPayload&);                               \
  template Var<T> objective_rows<T>(const Objective<T>&, const Var<T>&, const std::vector<T>*); \
  template Var<T> objective_eval<T>(const Objective<T>&, const Var<T>&, const std::vector<T>*); \
  template std::vector<T> straight_through_anchor<T>(const Objective<T>&, const Var<T>&);

VQR_INSTANTIATE_OBJECTIVE(float)
VQR_INSTANTIATE_OBJECTIVE(double)

}  // namespace vqr
