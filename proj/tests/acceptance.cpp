// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any criterion fails. Usage: acceptance <work_dir> [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "vqr/attack.hpp"
#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"
#include "vqr/eval.hpp"
#include "vqr/optim.hpp"
#include "vqr/probe.hpp"
#include "vqr/rng.hpp"
#include "vqr/tokenizer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vqr;
using ad::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ------------------------------------------------------------ pipeline runs

class Workspace {
 public:
  explicit Workspace(std::string root) : root_(std::move(root)) { fs::create_directories(root_); }

  std::string dir(const std::string& name) const { return root_ + "/" + name; }

  /// Runs a CLI command once per name; later calls reuse the summary.
  const json& run(const std::string& name, const std::string& command,
                  const std::vector<std::string>& overrides) {
    auto it = done_.find(name);
    if (it != done_.end()) return it->second;
    RunConfig cfg;
    for (const auto& o : overrides) cfg.apply(o);
    const auto t0 = Clock::now();
    const std::string line = cli::run_command(command, cfg, dir(name));
    seconds_[name] = since(t0);
    std::printf("  [%s] %s in %.1fs\n", name.c_str(), command.c_str(), seconds_[name]);
    std::fflush(stdout);
    return done_.emplace(name, json::parse(line)).first->second;
  }

  /// Wall time of a completed run.
  double seconds(const std::string& name) const { return seconds_.at(name); }

  std::string tokenizer() {
    run("pre", "pretrain", {});
    return dir("pre") + "/tokenizer.vqrb";
  }
  std::string probe() {
    run("probe", "train-probe", {"input.tokenizer=" + tokenizer()});
    return dir("probe") + "/probe.vqrp";
  }
  std::string finetuned(int radius) {
    const std::string name = "ft" + std::to_string(radius);
    run(name, "advtrain",
        {"input.tokenizer=" + tokenizer(), "finetune.train_radius=" + std::to_string(radius) + "/255"});
    return dir(name) + "/tokenizer.vqrb";
  }

  /// Eval rows keyed by (objective, ε·255 rounded).
  std::map<std::pair<std::string, int>, EvalRow> eval(const std::string& name, const std::string& tok,
                                                      const std::string& epsilons) {
    run(name, "eval",
        {"input.tokenizer=" + tok, "input.probe=" + probe(), "eval.objectives=sup_ce,unsup_hh",
         "eval.epsilons=" + epsilons});
    const auto bytes = read_file(dir(name) + "/eval.json");
    const EvalReport rep = parse_report_json(std::string(bytes.begin(), bytes.end()));
    std::map<std::pair<std::string, int>, EvalRow> out;
    for (const auto& r : rep.rows) out[{r.objective, int(std::lround(r.epsilon * 255))}] = r;
    return out;
  }

 private:
  std::string root_;
  std::map<std::string, json> done_;
  std::map<std::string, double> seconds_;
};

// ------------------------------------------------------------ criterion 1

TokenizerConfig grad_config(std::uint64_t seed) {
  TokenizerConfig c;
  c.image_side = 8;
  c.patch_side = 4;
  c.code_dim = 8;
  c.codebook_size = 16;
  c.num_codebooks = 2;
  c.encoder_width = 16;
  c.encoder_depth = 1;
  c.seed = seed;
  return c;
}

std::vector<double> normal_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

ImageBatch uniform_batch(const TokenizerConfig& c, std::size_t count, Rng& rng) {
  ImageBatch b;
  b.count = count;
  b.channels = c.channels;
  b.side = c.image_side;
  b.pixels.resize(count * b.image_size());
  for (float& v : b.pixels) v = static_cast<float>(rng.uniform(0.1, 0.9));
  for (std::size_t i = 0; i < count; ++i) b.labels.push_back(static_cast<std::int32_t>(i % 3));
  return b;
}

Var<double> weighted_sum(const Var<double>& y, const std::vector<double>& w) {
  return ad::sum(ad::mul(y, Var<double>::constant(y.shape(), w)));
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  const int seeds = 50;
  std::map<std::string, double> worst;
  for (int s = 0; s < seeds; ++s) {
    const TokenizerConfig c = grad_config(static_cast<std::uint64_t>(s));
    const auto tok = cast_params<double, float>(init_tokenizer(c));
    const std::size_t T = c.tokens(), d = c.code_dim, in_dim = T * d;
    const auto probe = cast_probe<double, float>(init_probe(ProbeArch::Linear, in_dim, 0, 3, s));
    const auto mlp = cast_probe<double, float>(init_probe(ProbeArch::Mlp, in_dim, 8, 3, s));
    Rng rng = Rng::stream(static_cast<std::uint64_t>(s), "data").split(77);
    const ImageBatch clean = uniform_batch(c, 2, rng);
    const ad::Shape img{2, c.channels, c.image_side, c.image_side};
    std::vector<double> x0(clean.pixels.size());
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = clean.pixels[i] + 0.02 * rng.normal();
    const std::vector<std::int32_t> labels{0, 1};
    auto note = [&](const std::string& what, double err) { worst[what] = std::max(worst[what], err); };

    const auto w_h = normal_vec(rng, 2 * in_dim);
    note("encoder/input", grad_check([&](const Var<double>& x) { return weighted_sum(encode(tok, x), w_h); },
                                     img, x0));
    {
      const auto pw = tok.patch_w.values();
      note("encoder/params", grad_check(
                                 [&](const Var<double>& w) {
                                   auto t = tok;
                                   t.patch_w = w;
                                   return weighted_sum(encode(t, Var<double>::constant(img, x0)), w_h);
                                 },
                                 tok.patch_w.shape(), std::vector<double>(pw.begin(), pw.end())));
    }
    const auto z0 = normal_vec(rng, 2 * in_dim);
    const auto w_img = normal_vec(rng, x0.size());
    note("decoder/input", grad_check([&](const Var<double>& z) { return weighted_sum(decode(tok, z), w_img); },
                                     {2, T, d}, z0));
    {
      const auto ow = tok.out_w.values();
      note("decoder/params", grad_check(
                                 [&](const Var<double>& w) {
                                   auto t = tok;
                                   t.out_w = w;
                                   return weighted_sum(decode(t, Var<double>::constant({2, T, d}, z0)), w_img);
                                 },
                                 tok.out_w.shape(), std::vector<double>(ow.begin(), ow.end())));
    }
    for (const auto* p : {&probe, &mlp}) {
      const std::string tag = p->arch == ProbeArch::Linear ? "probe-linear" : "probe-mlp";
      note(tag + "/input", grad_check(
                               [&](const Var<double>& z) {
                                 return ad::cross_entropy(probe_logits(*p, z), std::span<const std::int32_t>(labels));
                               },
                               {2, T, d}, z0));
      const auto w1 = p->w1.values();
      note(tag + "/params", grad_check(
                                [&](const Var<double>& w) {
                                  auto q = *p;
                                  q.w1 = w;
                                  return ad::cross_entropy(probe_logits(q, Var<double>::constant({2, T, d}, z0)),
                                                           std::span<const std::int32_t>(labels));
                                },
                                p->w1.shape(), std::vector<double>(w1.begin(), w1.end())));
    }
    AttackPayload payload;
    payload.target_images = uniform_batch(c, 2, rng);
    payload.target_classes = {2, 0};
    const auto x_point = Var<double>::constant(img, x0);
    for (ObjectiveKind kind : kAllObjectives) {
      const auto obj = make_objective<double>(kind, tok, &probe, clean, payload);
      // Pin the straight-through offset at the evaluation point so the
      // finite differences see the same smooth surface the gradient does.
      const auto anchor = straight_through_anchor(obj, x_point);
      note(std::string("objective/") + to_string(kind),
           grad_check([&](const Var<double>& x) { return objective_eval(obj, x, &anchor); }, img, x0));
    }
  }
  double max_err = 0;
  std::string detail;
  for (const auto& [what, e] : worst) {
    max_err = std::max(max_err, e);
    detail += what + "=" + fmt("%.1e", e) + " ";
  }
  const double secs = since(t0);
  return {max_err <= 1e-4 && secs <= 120,
          std::to_string(seeds) + " seeds, max rel err " + fmt("%.2e", max_err) + " in " + fmt("%.0f", secs) +
              "s (" + detail + ")"};
}

// ------------------------------------------------------------ criterion 2

Outcome criterion2() {
  Rng rng = Rng::stream(2, "data");
  std::size_t cases = 0, mismatches = 0, ties = 0;
  while (cases < 1000) {
    TokenizerConfig c;
    c.codebook_size = static_cast<std::uint32_t>(2 + rng.below(63));
    c.code_dim = static_cast<std::uint32_t>(1 + rng.below(16));
    c.num_codebooks = 1;
    c.image_side = 8;
    c.patch_side = 8;
    c.seed = cases;
    auto tok = init_tokenizer(c);
    auto book = tok.codebook.mutable_values();
    const std::size_t K = c.codebook_size, d = c.code_dim;
    // Quarter-step grid values make exact ties common.
    for (float& v : book) v = static_cast<float>(std::round(rng.normal() * 2.0) / 4.0);
    std::vector<float> h(d);
    const bool tie = cases % 3 == 0;
    if (tie) {
      // Midpoint between two distinct codes, or a duplicated code.
      const std::size_t a = rng.below(K), b = rng.below(K);
      if (a == b) continue;
      if (cases % 2 == 0) std::copy_n(book.begin() + a * d, d, book.begin() + b * d);
      for (std::size_t t = 0; t < d; ++t) h[t] = 0.5f * (book[a * d + t] + book[b * d + t]);
    } else {
      for (float& v : h) v = static_cast<float>(std::round(rng.normal() * 4.0) / 4.0);
    }
    std::int32_t best = -1;
    double best_d = 0;
    std::size_t at_best = 0;
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0;
      for (std::size_t t = 0; t < d; ++t) {
        const double e = double(h[t]) - double(book[k * d + t]);
        s += e * e;
      }
      if (best < 0 || s < best_d) {
        best = static_cast<std::int32_t>(k);
        best_d = s;
        at_best = 1;
      } else if (s == best_d) {
        ++at_best;
      }
    }
    if (at_best > 1) ++ties;
    const auto got = nearest_indices(tok, Var<float>::constant({1, 1, d}, h));
    if (got.size() != 1 || got[0] != best) ++mismatches;
    ++cases;
  }
  return {mismatches == 0 && ties >= 100,
          std::to_string(cases) + " cases, " + std::to_string(ties) + " with exact ties, " +
              std::to_string(mismatches) + " mismatches"};
}

// ------------------------------------------------------------ criterion 3

Outcome criterion3() {
  std::size_t checked = 0, bad_input = 0, bad_book = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    for (std::uint32_t books : {1u, 2u}) {
      TokenizerConfig c = grad_config(s);
      c.num_codebooks = books;
      const auto tok = cast_params<double, float>(init_tokenizer(c));
      Rng rng = Rng::stream(s, "data").split(3);
      const ad::Shape shape{2, c.tokens(), c.code_dim};
      const auto h0 = normal_vec(rng, 2 * c.tokens() * c.code_dim);
      const auto w = normal_vec(rng, h0.size());

      auto via_st = Var<double>::parameter(shape, h0);
      auto t = tok.clone(true);
      ad::backward(weighted_sum(quantize_st(t, via_st).quantized, w));
      auto via_id = Var<double>::parameter(shape, h0);
      ad::backward(weighted_sum(via_id, w));
      const auto a = via_st.grad(), b = via_id.grad();
      for (std::size_t i = 0; i < a.size(); ++i) bad_input += a[i] != b[i];
      for (double g : t.codebook.grad()) bad_book += g != 0.0;
      checked += a.size();
    }
  }
  return {bad_input == 0 && bad_book == 0,
          std::to_string(checked) + " coordinates, " + std::to_string(bad_input) + " input mismatches, " +
              std::to_string(bad_book) + " nonzero codebook grads"};
}

// ------------------------------------------------------------ criterion 4

Outcome criterion4(Workspace& ws) {
  const auto ck = load_checkpoint(ws.tokenizer());
  const auto probe = load_probe(ws.probe());
  const Dataset test = gen_shapes(0, 50, 32, 4, Split::Test);
  const ImageBatch clean = test.range(0, 50);
  double worst = -1;
  std::size_t runs = 0, non_monotone = 0;
  RunConfig defaults;
  for (Norm norm : {Norm::Linf, Norm::L2}) {
    for (double eps : defaults.epsilons("eval.epsilons")) {
      for (ObjectiveKind kind : kAllObjectives) {
        if (kind == ObjectiveKind::TargetedEmbed || kind == ObjectiveKind::TargetedClass) continue;
        Budget b;
        b.norm = norm;
        b.epsilon = norm == Norm::Linf ? eps : eps * 16;
        ApgdConfig a;
        a.n_iters = 100;
        const auto r = run_attack(kind, ck.params, &probe, {}, b, a, clean);
        worst = std::max(worst, r.max_violation);
        for (const auto& tr : r.best_loss_trace)
          for (std::size_t i = 1; i < tr.size(); ++i) non_monotone += tr[i] < tr[i - 1];
        ++runs;
      }
    }
  }
  // Pipeline evaluation grid as written by the eval command.
  const auto rows = ws.eval("ev_pre", ws.tokenizer(), "2/255,4/255,8/255,16/255");
  for (const auto& [k, r] : rows) worst = std::max(worst, r.max_violation);

  // 1-D toy: maximize x on [0.5 − 0.1, 0.5 + 0.1] ∩ [0, 1]; optimum 0.6.
  ImageBatch one;
  one.count = 1;
  one.channels = 1;
  one.side = 1;
  one.pixels = {0.5f};
  one.labels = {0};
  Budget b;
  b.epsilon = 0.1;
  ApgdConfig a;
  a.n_iters = 10;
  a.random_start = false;
  const auto toy = apgd([](const Var<float>& x) { return ad::reshape(x, {1}); }, true, b, a, one);
  const double toy_err = std::abs(double(toy.x_adv.pixels[0]) - 0.6);
  return {worst <= 1e-6 && non_monotone == 0 && toy_err <= 1e-6,
          std::to_string(runs) + " attack runs + eval grid, max violation " + fmt("%.2e", worst) + ", " +
              std::to_string(non_monotone) + " trace decreases, toy |x-0.6| = " + fmt("%.1e", toy_err)};
}

// ------------------------------------------------------------ criteria 5-9

Outcome criterion5(Workspace& ws) {
  const double probe_acc = ws.run("probe", "train-probe", {"input.tokenizer=" + ws.tokenizer()})["test_accuracy"];
  const auto rows = ws.eval("ev_pre", ws.tokenizer(), "2/255,4/255,8/255,16/255");
  const double secs = ws.seconds("ev_pre");
  const double sup8 = rows.at({"sup_ce", 8}).robust_accuracy;
  bool close = true;
  std::string gaps;
  for (int e : {8, 16}) {
    const double gap = rows.at({"unsup_hh", e}).robust_accuracy - rows.at({"sup_ce", e}).robust_accuracy;
    close = close && gap <= 0.20;
    gaps += " unsup_hh-sup_ce@" + std::to_string(e) + "/255=" + fmt("%.3f", gap);
  }
  return {probe_acc >= 0.9 && sup8 <= 0.10 && close,
          "probe clean " + fmt("%.3f", probe_acc) + ", sup_ce@8/255 " + fmt("%.3f", sup8) + "," + gaps +
              " (eval " + fmt("%.0f", secs) + "s)"};
}

Outcome criterion6(Workspace& ws) {
  const auto pre = ws.eval("ev_pre", ws.tokenizer(), "2/255,4/255,8/255,16/255");
  const auto ft = ws.eval("ev_ft8", ws.finetuned(8), "2/255,4/255");
  const double secs = ws.seconds("ft8") + ws.seconds("ev_ft8");
  bool pass = true;
  std::string detail;
  for (const char* obj : {"sup_ce", "unsup_hh"}) {
    const double lift = ft.at({obj, 4}).robust_accuracy - pre.at({obj, 4}).robust_accuracy;
    pass = pass && lift >= 0.30;
    detail += std::string(obj) + "@4/255 " + fmt("%.3f", pre.at({obj, 4}).robust_accuracy) + " -> " +
              fmt("%.3f", ft.at({obj, 4}).robust_accuracy) + ", ";
  }
  const double clean_drop = pre.at({"sup_ce", 4}).clean_accuracy - ft.at({"sup_ce", 4}).clean_accuracy;
  pass = pass && clean_drop <= 0.15;
  return {pass, detail + "clean drop " + fmt("%.3f", clean_drop) + " (" + fmt("%.0f", secs) + "s)"};
}

Outcome criterion7(Workspace& ws) {
  std::vector<double> clean, robust;
  std::string detail;
  for (int r : {4, 8, 12, 16}) {
    const auto rows = ws.eval("ev_ft" + std::to_string(r), ws.finetuned(r), "2/255,4/255");
    clean.push_back(rows.at({"sup_ce", 4}).clean_accuracy);
    robust.push_back(rows.at({"sup_ce", 4}).robust_accuracy);
    detail += std::to_string(r) + "/255: clean " + fmt("%.3f", clean.back()) + " robust " +
              fmt("%.3f", robust.back()) + "; ";
  }
  bool non_increasing = true;
  for (std::size_t i = 1; i < clean.size(); ++i) non_increasing = non_increasing && clean[i] <= clean[i - 1] + 0.02;
  return {non_increasing && robust[1] > robust[0], detail};
}

Outcome criterion8(Workspace& ws) {
  const auto pre = ws.eval("ev_pre", ws.tokenizer(), "2/255,4/255,8/255,16/255");
  const auto ft = ws.eval("ev_ft8", ws.finetuned(8), "2/255,4/255");
  const auto ck = load_checkpoint(ws.tokenizer());
  const double indices = double(ck.params.config.tokens()) * ck.params.config.num_codebooks;
  const auto& hh4 = pre.at({"unsup_hh", 4});
  const double churn = hh4.mean_changed_all / indices;
  const double zero = ft.at({"unsup_hh", 2}).zero_change_fraction;
  return {churn > 0.5 && zero >= 0.9,
          "non-robust churn@4/255 " + fmt("%.3f", churn) + " of " + fmt("%.0f", indices) +
              " indices (successful attacks: " + fmt("%.3f", hh4.mean_changed_success / indices) +
              "), fine-tuned zero-change fraction@2/255 " + fmt("%.3f", zero) + " (mean changed " +
              fmt("%.2f", ft.at({"unsup_hh", 2}).mean_changed_all) + ")"};
}

Outcome criterion9(Workspace& ws) {
  const auto& s = ws.run("ablate", "ablate-objective", {"input.tokenizer=" + ws.tokenizer(), "input.probe=" + ws.probe()});
  const auto bytes = read_file(ws.dir("ablate") + "/ablation.csv");
  std::string csv(bytes.begin(), bytes.end());
  for (char& ch : csv)
    if (ch == '\n') ch = ' ';
  const std::size_t best = s["hh_lowest_or_tied"];
  return {best >= 2, "hh lowest or tied at " + std::to_string(best) + "/" + std::to_string(std::size_t(s["epsilons"])) +
                         " budgets: " + csv};
}

// ------------------------------------------------------------ criteria 10-12

Outcome criterion10(Workspace& ws) {
  const auto& s = ws.run("bench", "bench-cost", {"input.tokenizer=" + ws.tokenizer()});
  const double secs = ws.seconds("bench");
  const double ratio = s["ratio"];
  return {ratio > 1.0 && secs <= 600,
          "unsup " + fmt("%.3e", double(s["unsup_s_per_sample"])) + " s/sample, e2e " +
              fmt("%.3e", double(s["e2e_s_per_sample"])) + " s/sample, ratio " + fmt("%.2f", ratio) + " (" +
              fmt("%.0f", secs) + "s)"};
}

Outcome criterion11(Workspace& ws) {
  const auto& e = ws.run("targeted_embed", "targeted-demo",
                         {"input.tokenizer=" + ws.tokenizer(), "input.probe=" + ws.probe(), "targeted.mode=embed"});
  const auto& c = ws.run("targeted_class", "targeted-demo",
                         {"input.tokenizer=" + ws.tokenizer(), "input.probe=" + ws.probe(), "targeted.mode=class"});
  const double embed_recon = e["recon_is_target"];
  const double class_adv = c["adv_is_target"];
  const double class_recon_src = c["recon_is_source_given_flip"];
  return {embed_recon >= 0.7 && class_adv >= 0.7 && class_recon_src >= 0.7,
          "embed: recon->target " + fmt("%.2f", embed_recon) + "; class: adv->target " + fmt("%.2f", class_adv) +
              ", recon stays source " + fmt("%.2f", class_recon_src)};
}

bool same_files(const std::string& a, const std::string& b, std::size_t& compared, std::string& diff) {
  static const std::set<std::string> kinds{".vqrb", ".vqrp", ".csv", ".ppm"};
  bool ok = true;
  for (const auto& entry : fs::directory_iterator(a)) {
    if (!kinds.count(entry.path().extension().string())) continue;
    const std::string name = entry.path().filename().string();
    ++compared;
    if (!fs::exists(b + "/" + name) || read_file(entry.path().string()) != read_file(b + "/" + name)) {
      ok = false;
      diff += name + " ";
    }
  }
  return ok;
}

Outcome criterion12(Workspace& ws) {
  const std::vector<std::string> small{"data.train_size=200", "data.test_size=40", "pretrain.epochs=2",
                                       "probe.epochs=5", "apgd.n_iters=10"};
  auto with = [&](std::vector<std::string> extra) {
    extra.insert(extra.begin(), small.begin(), small.end());
    return extra;
  };
  std::size_t compared = 0;
  std::string diff;
  bool ok = true;
  for (const char* rep : {"a", "b"}) {
    const std::string p = std::string("det_") + rep + "_";
    ws.run(p + "pre", "pretrain", with({}));
    const std::string tok = ws.dir(p + "pre") + "/tokenizer.vqrb";
    ws.run(p + "probe", "train-probe", with({"input.tokenizer=" + tok}));
    const std::string prb = ws.dir(p + "probe") + "/probe.vqrp";
    ws.run(p + "ft", "advtrain", with({"input.tokenizer=" + tok, "finetune.inner_steps=3"}));
    ws.run(p + "e2e", "advtrain-e2e", with({"input.tokenizer=" + tok, "input.probe=" + prb, "finetune.inner_steps=3"}));
    ws.run(p + "attack", "attack", with({"input.tokenizer=" + tok, "input.probe=" + prb}));
    ws.run(p + "eval", "eval", with({"input.tokenizer=" + tok, "input.probe=" + prb}));
    ws.run(p + "ablate", "ablate-objective", with({"input.tokenizer=" + tok, "input.probe=" + prb}));
    ws.run(p + "recon", "reconstruct", with({"input.tokenizer=" + tok, "reconstruct.iters=10", "reconstruct.images=3"}));
    ws.run(p + "targeted", "targeted-demo",
           with({"input.tokenizer=" + tok, "input.probe=" + prb, "targeted.pairs=6", "targeted.iters=10"}));
    ws.run(p + "report", "report", with({"input.reports=" + ws.dir(p + "eval") + "/eval.json"}));
  }
  for (const char* step : {"pre", "probe", "ft", "e2e", "attack", "eval", "ablate", "recon", "targeted", "report"})
    ok = same_files(ws.dir(std::string("det_a_") + step), ws.dir(std::string("det_b_") + step), compared, diff) && ok;
  return {ok && compared >= 10,
          std::to_string(compared) + " artifacts compared across two runs" + (diff.empty() ? "" : ", differing: " + diff)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <work_dir> [criterion...]\n");
    return 2;
  }
  const std::string root = argv[1];
  if (fs::exists(root)) fs::remove_all(root);
  Workspace ws(root);
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion1},
      {"quantizer oracle", criterion2},
      {"straight-through contract", criterion3},
      {"attack feasibility and monotonicity", [&] { return criterion4(ws); }},
      {"attack effectiveness", [&] { return criterion5(ws); }},
      {"defense effectiveness", [&] { return criterion6(ws); }},
      {"radius tradeoff", [&] { return criterion7(ws); }},
      {"token churn", [&] { return criterion8(ws); }},
      {"objective ablation", [&] { return criterion9(ws); }},
      {"training cost", [&] { return criterion10(ws); }},
      {"targeted-attack dichotomy", [&] { return criterion11(ws); }},
      {"determinism", [&] { return criterion12(ws); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.0fs]\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(),
                o.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
