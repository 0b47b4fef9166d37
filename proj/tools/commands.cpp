#include "commands.hpp"

#include <filesystem>
#include <functional>
#include <map>

#include <json.hpp>

#include "vqr/attack.hpp"
#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"
#include "vqr/eval.hpp"
#include "vqr/finetune.hpp"
#include "vqr/image_io.hpp"
#include "vqr/probe.hpp"
#include "vqr/report.hpp"
#include "vqr/tokenizer.hpp"

namespace vqr::cli {

namespace {

using json = nlohmann::ordered_json;

struct Context {
  const RunConfig& cfg;
  std::string out;
  std::map<std::string, std::string> inputs;  // role → file hash
  std::vector<std::string> artifacts;
  json summary;

  std::string path(const std::string& name) const { return out + "/" + name; }
  void wrote(const std::string& name) { artifacts.push_back(name); }
  void text(const std::string& name, const std::string& body) {
    write_file(path(name), body);
    wrote(name);
  }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg.integer("run.seed")); }
};

Dataset load_split(const Context& c, Split split) {
  const std::string source = c.cfg.str("data.source");
  const std::size_t n = c.cfg.count(split == Split::Train ? "data.train_size" : "data.test_size");
  if (source == "shapes")
    return gen_shapes(c.seed(), n, c.cfg.count("tokenizer.image_side"), c.cfg.count("data.classes"), split,
                      c.cfg.real("data.noise"));
  if (source == "cifar10") {
    const auto files = c.cfg.list(split == Split::Train ? "data.cifar_train" : "data.cifar_test");
    if (files.empty()) throw Error("data.source = cifar10 needs data.cifar_train / data.cifar_test files");
    Dataset d = load_cifar10(files, split);
    return n > 0 && n < d.size() ? d.head(n) : d;
  }
  throw FormatError("data.source must be shapes or cifar10, got '" + source + "'");
}

TokenizerConfig tokenizer_config(const Context& c) {
  TokenizerConfig t;
  t.image_side = static_cast<std::uint32_t>(c.cfg.count("tokenizer.image_side"));
  t.channels = static_cast<std::uint32_t>(c.cfg.count("tokenizer.channels"));
  t.patch_side = static_cast<std::uint32_t>(c.cfg.count("tokenizer.patch_side"));
  t.code_dim = static_cast<std::uint32_t>(c.cfg.count("tokenizer.code_dim"));
  t.codebook_size = static_cast<std::uint32_t>(c.cfg.count("tokenizer.codebook_size"));
  t.num_codebooks = static_cast<std::uint32_t>(c.cfg.count("tokenizer.num_codebooks"));
  t.encoder_width = static_cast<std::uint32_t>(c.cfg.count("tokenizer.encoder_width"));
  t.encoder_depth = static_cast<std::uint32_t>(c.cfg.count("tokenizer.encoder_depth"));
  t.seed = c.seed();
  t.validate();
  return t;
}

Checkpoint input_tokenizer(Context& c, const std::string& key = "input.tokenizer") {
  const std::string p = c.cfg.str(key);
  if (p.empty()) throw Error(key + " is required for this command");
  c.inputs[key] = file_hash(p);
  return load_checkpoint(p);
}

ProbeParams<float> input_probe(Context& c) {
  const std::string p = c.cfg.str("input.probe");
  if (p.empty()) throw Error("input.probe is required for this command");
  c.inputs["input.probe"] = file_hash(p);
  return load_probe(p);
}

ApgdConfig apgd_config(const Context& c) {
  ApgdConfig a;
  a.n_iters = c.cfg.count("apgd.n_iters");
  a.n_restarts = c.cfg.count("apgd.n_restarts");
  a.momentum = c.cfg.real("apgd.momentum");
  a.step_fraction = c.cfg.real("apgd.step_fraction");
  a.step_decay = c.cfg.real("apgd.step_decay");
  a.rho = c.cfg.real("apgd.rho");
  a.random_start = c.cfg.flag("apgd.random_start");
  a.seed = c.seed();
  a.validate();
  return a;
}

Budget budget(const Context& c, double epsilon) {
  Budget b;
  b.norm = parse_norm(c.cfg.str("budget.norm"));
  b.epsilon = epsilon;
  b.validate();
  return b;
}

FinetuneConfig finetune_config(const Context& c) {
  FinetuneConfig f;
  f.train_radius = c.cfg.epsilon("finetune.train_radius");
  f.inner_steps = c.cfg.count("finetune.inner_steps");
  f.epochs = c.cfg.count("finetune.epochs");
  f.lr = c.cfg.real("finetune.lr");
  f.warmup_fraction = c.cfg.real("finetune.warmup_fraction");
  f.batch_size = c.cfg.count("finetune.batch_size");
  f.inner_random_start = c.cfg.flag("finetune.inner_random_start");
  f.seed = c.seed();
  f.validate();
  return f;
}

std::vector<ObjectiveKind> objectives(const Context& c, const std::string& key) {
  std::vector<ObjectiveKind> out;
  for (const auto& name : c.cfg.list(key)) out.push_back(parse_objective(name));
  if (out.empty()) throw Error(key + " is empty");
  return out;
}

std::string eps_tag(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", e * 255.0);
  std::string s = buf;
  for (char& ch : s)
    if (ch == '.') ch = 'p';
  return s;
}

std::string step_log_csv(const FinetuneLog& log) {
  std::string out = "step,inner_loss\n";
  for (std::size_t i = 0; i < log.step_inner_loss.size(); ++i)
    out += std::to_string(i) + "," + format_real(log.step_inner_loss[i]) + "\n";
  return out;
}

// ------------------------------------------------------------------ commands

void cmd_pretrain(Context& c) {
  const Dataset train = load_split(c, Split::Train);
  TokenizerConfig tc = tokenizer_config(c);
  if (tc.channels != train.channels || tc.image_side != train.side)
    throw Error("tokenizer geometry does not match the dataset images");
  PretrainOptions opt;
  opt.epochs = c.cfg.count("pretrain.epochs");
  opt.batch_size = c.cfg.count("pretrain.batch_size");
  opt.lr = c.cfg.real("pretrain.lr");
  opt.beta_commit = c.cfg.real("pretrain.beta_commit");
  opt.reset_every = c.cfg.count("pretrain.reset_every");
  PretrainLog log;
  auto params = pretrain(init_tokenizer(tc), train, opt, &log);
  save_checkpoint(c.path("tokenizer.vqrb"), params,
                  {{"dataset_id", train.id}, {"epochs", std::to_string(opt.epochs)}, {"mode", "pretrain"}});
  c.wrote("tokenizer.vqrb");
  const auto usage = codebook_usage(params, train);
  c.summary["checkpoint"] = c.path("tokenizer.vqrb");
  c.summary["tokenizer_hash"] = hex64(hash_params(params));
  c.summary["final_loss"] = log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back();
  c.summary["final_recon_mse"] = log.epoch_recon.empty() ? 0.0 : log.epoch_recon.back();
  c.summary["dead_code_fraction"] = usage.dead_fraction;
  c.summary["codes_reset"] = log.codes_reset;
}

void cmd_train_probe(Context& c) {
  const Checkpoint ck = input_tokenizer(c);
  const Dataset train = load_split(c, Split::Train), test = load_split(c, Split::Test);
  ProbeTrainOptions opt;
  opt.arch = parse_probe_arch(c.cfg.str("probe.arch"));
  opt.hidden = c.cfg.count("probe.hidden");
  opt.epochs = c.cfg.count("probe.epochs");
  opt.batch_size = c.cfg.count("probe.batch_size");
  opt.lr = c.cfg.real("probe.lr");
  opt.seed = c.seed();
  ProbeTrainLog log;
  const auto probe = train_probe(ck.params, train, opt, &log);
  save_probe(c.path("probe.vqrp"), probe);
  c.wrote("probe.vqrp");
  c.summary["probe"] = c.path("probe.vqrp");
  c.summary["train_accuracy"] = log.train_accuracy;
  c.summary["test_accuracy"] = accuracy(ck.params, probe, test);
}

void cmd_attack(Context& c) {
  const Checkpoint ck = input_tokenizer(c);
  const Dataset test = load_split(c, Split::Test);
  const ObjectiveKind kind = parse_objective(c.cfg.str("attack.objective"));
  if (!maximizes(kind)) throw Error("attack: targeted objectives run through targeted-demo");
  const Budget b = budget(c, c.cfg.epsilon("budget.epsilon"));
  const ApgdConfig a = apgd_config(c);
  const std::size_t bs = c.cfg.count("attack.batch_size");
  std::vector<SweepRow> rows;
  if (!c.cfg.str("input.probe").empty()) {
    const auto probe = input_probe(c);
    rows = epsilon_sweep(kind, ck.params, probe, {b}, a, test, bs);
  } else {
    if (needs_probe(kind)) throw Error(std::string("attack: ") + to_string(kind) + " needs input.probe");
    DatasetAttack da = attack_dataset(kind, ck.params, nullptr, b, a, test, bs);
    SweepRow row;
    row.epsilon = b.epsilon;
    row.count = test.size();
    row.max_violation = da.max_violation;
    row.outcomes = std::move(da.outcomes);
    for (auto& o : row.outcomes) o.success = o.changed_tokens > 0;
    rows.push_back(std::move(row));
  }
  c.text("attack.csv", sweep_csv(kind, rows));
  c.text("attack_summary.json", sweep_json(kind, rows));
  double churn = 0;
  for (const auto& o : rows[0].outcomes) churn += o.changed_tokens;
  c.summary["objective"] = to_string(kind);
  c.summary["epsilon"] = b.epsilon;
  c.summary["robust_accuracy"] = rows[0].robust_accuracy;
  c.summary["mean_changed_tokens"] = rows[0].outcomes.empty() ? 0.0 : churn / rows[0].outcomes.size();
  c.summary["max_violation"] = rows[0].max_violation;
  c.summary["csv"] = c.path("attack.csv");
}

void cmd_advtrain(Context& c) {
  const Checkpoint ck = input_tokenizer(c);
  TokenizerParams<float> reference = ck.params;
  if (!c.cfg.str("input.reference").empty()) reference = input_tokenizer(c, "input.reference").params;
  const Dataset train = load_split(c, Split::Train);
  const FinetuneConfig f = finetune_config(c);
  FinetuneLog log;
  const auto tuned = unsup_adv_finetune(ck.params, reference, f, train, &log);
  save_checkpoint(c.path("tokenizer.vqrb"), tuned,
                  finetune_metadata(f, train.id, c.inputs["input.tokenizer"], "unsup_adv"));
  c.wrote("tokenizer.vqrb");
  c.summary["checkpoint"] = c.path("tokenizer.vqrb");
  c.summary["tokenizer_hash"] = hex64(hash_params(tuned));
  c.text("advtrain_log.csv", step_log_csv(log));
  c.summary["epoch_inner_loss"] = log.epoch_inner_loss;
  c.summary["frozen_hash"] = hex64(log.frozen_hash_after);
}

void cmd_advtrain_e2e(Context& c) {
  const Checkpoint ck = input_tokenizer(c);
  const auto probe = input_probe(c);
  const Dataset train = load_split(c, Split::Train);
  const FinetuneConfig f = finetune_config(c);
  FinetuneLog log;
  const auto model = end2end_adv_train(ck.params, probe, f, train, &log);
  save_checkpoint(c.path("tokenizer.vqrb"), model.tokenizer,
                  finetune_metadata(f, train.id, c.inputs["input.tokenizer"], "end2end_adv"));
  c.wrote("tokenizer.vqrb");
  save_probe(c.path("probe.vqrp"), model.probe);
  c.wrote("probe.vqrp");
  c.text("advtrain_log.csv", step_log_csv(log));
  c.summary["checkpoint"] = c.path("tokenizer.vqrb");
  c.summary["probe"] = c.path("probe.vqrp");
  c.summary["epoch_inner_loss"] = log.epoch_inner_loss;
}

void cmd_eval(Context& c) {
  const Checkpoint ck = input_tokenizer(c);
  const auto probe = input_probe(c);
  const Dataset test = load_split(c, Split::Test);
  const auto kinds = objectives(c, "eval.objectives");
  std::vector<SweepRow> raw;
  EvalReport rep = evaluate_robustness(ck.params, probe, kinds, c.cfg.epsilons("eval.epsilons"),
                                       apgd_config(c), test, c.cfg.count("attack.batch_size"), &raw);
  rep.config_hash = hex64(c.cfg.hash());
  std::string per_example;
  const std::size_t per_kind = raw.size() / kinds.size();
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    std::vector<SweepRow> part(raw.begin() + k * per_kind, raw.begin() + (k + 1) * per_kind);
    std::string csv = sweep_csv(kinds[k], part);
    per_example += k == 0 ? csv : csv.substr(csv.find('\n') + 1);
  }
  c.text("eval_examples.csv", per_example);
  c.text("eval.csv", report_csv(rep));
  rep.artifacts = {"eval.csv", "eval_examples.csv"};
  c.text("eval.json", report_json(rep));
  c.summary["rows"] = rep.rows.size();
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"objective", r.objective}, {"epsilon", r.epsilon},
                    {"clean", r.clean_accuracy}, {"robust", r.robust_accuracy},
                    {"seconds", r.seconds}});
  c.summary["table"] = rows;
  c.summary["report"] = c.path("eval.json");
}

void cmd_ablate(Context& c) {
  const Checkpoint ck = input_tokenizer(c);
  const auto probe = input_probe(c);
  const Dataset test = load_split(c, Split::Test);
  Ablation ab = objective_ablation(ck.params, probe, c.cfg.epsilons("ablation.epsilons"),
                                   apgd_config(c), test, c.cfg.count("attack.batch_size"));
  ab.report.config_hash = hex64(c.cfg.hash());
  c.text("ablation.csv", ablation_csv(ab));
  c.text("ablation_eval.json", report_json(ab.report));
  c.summary["hh_lowest_or_tied"] = ab.hh_best_count;
  c.summary["epsilons"] = ab.rows.size();
  c.summary["csv"] = c.path("ablation.csv");
}

void cmd_reconstruct(Context& c) {
  const Checkpoint ck = input_tokenizer(c);
  const Dataset test = load_split(c, Split::Test);
  const ImageBatch batch = test.range(0, c.cfg.count("reconstruct.images"));
  ApgdConfig a = apgd_config(c);
  a.n_iters = c.cfg.count("reconstruct.iters");
  const auto rows = reconstruct_adversarial(ck.params, batch, c.cfg.epsilons("reconstruct.epsilons"), a);
  std::string csv = "epsilon,mean_abs_recon_change,clean_recon_mse,adv_recon_mse,grid\n";
  json stats = json::array();
  for (const auto& r : rows) {
    const std::string name = "reconstruct_eps" + eps_tag(r.epsilon) + ".ppm";
    write_ppm(c.path(name), r.grid);
    c.wrote(name);
    csv += format_real(r.epsilon) + "," + format_real(r.mean_abs_recon_change) + "," +
           format_real(r.clean_recon_mse) + "," + format_real(r.adv_recon_mse) + "," + name + "\n";
    stats.push_back({{"epsilon", r.epsilon}, {"adv_recon_mse", r.adv_recon_mse},
                     {"clean_recon_mse", r.clean_recon_mse}});
  }
  c.text("reconstruct.csv", csv);
  c.summary["rows"] = stats;
}

void cmd_targeted(Context& c) {
  const Checkpoint ck = input_tokenizer(c);
  const auto probe = input_probe(c);
  const Dataset test = load_split(c, Split::Test);
  const std::string mode = c.cfg.str("targeted.mode");
  if (mode != "embed" && mode != "class") throw FormatError("targeted.mode must be embed or class");
  ApgdConfig a = apgd_config(c);
  a.n_iters = c.cfg.count("targeted.iters");
  const TargetedDemo demo =
      targeted_demo(ck.params, probe, test, c.cfg.count("targeted.pairs"),
                    mode == "embed" ? TargetMode::Embedding : TargetMode::Class,
                    budget(c, c.cfg.epsilon("targeted.epsilon")), a);
  c.text("targeted.csv", targeted_csv(demo));
  write_ppm(c.path("targeted.ppm"), demo.grid);
  c.wrote("targeted.ppm");
  c.summary["mode"] = mode;
  c.summary["pairs"] = demo.pairs.size();
  c.summary["adv_is_target"] = demo.adv_is_target;
  c.summary["recon_is_target"] = demo.recon_is_target;
  c.summary["recon_is_source_given_flip"] = demo.recon_is_source_given_flip;
}

void cmd_bench_cost(Context& c) {
  TokenizerParams<float> tok;
  if (c.cfg.str("input.tokenizer").empty())
    tok = init_tokenizer(tokenizer_config(c));
  else
    tok = input_tokenizer(c).params;
  const Dataset train = load_split(c, Split::Train);
  const std::size_t in_dim = std::size_t{tok.config.tokens()} * tok.config.code_dim;
  const auto probe = init_probe(parse_probe_arch(c.cfg.str("bench.probe_arch")), in_dim,
                                c.cfg.count("bench.probe_hidden"), train.num_classes, c.seed());
  const FinetuneConfig f = finetune_config(c);
  const std::size_t batches = c.cfg.count("bench.batches"), warm = c.cfg.count("bench.warmup");
  const CostSample u = training_cost_probe(TrainMode::Unsup, tok, probe, f, train, batches, warm);
  const CostSample e = training_cost_probe(TrainMode::EndToEnd, tok, probe, f, train, batches, warm);
  c.summary["unsup_s_per_sample"] = u.seconds_per_sample;
  c.summary["e2e_s_per_sample"] = e.seconds_per_sample;
  c.summary["ratio"] = e.seconds_per_sample / u.seconds_per_sample;
  c.summary["batches"] = batches;
  c.text("bench.json", c.summary.dump(2) + "\n");
}

void cmd_report(Context& c) {
  const auto paths = c.cfg.list("input.reports");
  if (paths.empty()) throw Error("report: input.reports lists no eval.json files");
  std::vector<EvalReport> reps;
  for (const auto& p : paths) {
    c.inputs["report:" + p] = file_hash(p);
    const auto bytes = read_file(p);
    reps.push_back(parse_report_json(std::string(bytes.begin(), bytes.end())));
  }
  const ReportFiles files = emit_report(reps, c.out);
  for (const char* n : {"report_table.csv", "report_curve.csv", "report.txt"}) c.wrote(n);
  c.summary["table_rows"] = files.table_rows;
  c.summary["tokenizers"] = reps.size();
}

const std::map<std::string, std::function<void(Context&)>>& registry() {
  static const std::map<std::string, std::function<void(Context&)>> r{
      {"pretrain", cmd_pretrain},     {"train-probe", cmd_train_probe},
      {"attack", cmd_attack},         {"advtrain", cmd_advtrain},
      {"advtrain-e2e", cmd_advtrain_e2e}, {"eval", cmd_eval},
      {"ablate-objective", cmd_ablate}, {"reconstruct", cmd_reconstruct},
      {"targeted-demo", cmd_targeted}, {"bench-cost", cmd_bench_cost},
      {"report", cmd_report}};
  return r;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{
      "pretrain", "train-probe",   "attack",     "advtrain", "advtrain-e2e", "eval",
      "ablate-objective", "reconstruct", "targeted-demo", "bench-cost", "report"};
  return names;
}

std::string run_command(const std::string& name, const RunConfig& config, const std::string& out_dir) {
  auto it = registry().find(name);
  if (it == registry().end()) throw Error("unknown command '" + name + "'");
  std::filesystem::create_directories(out_dir);
  Context c{config, out_dir, {}, {}, json::object()};
  c.summary["command"] = name;
  c.summary["out"] = out_dir;
  it->second(c);
  c.text("config.cfg", config.serialize());
  write_manifest(out_dir, name, config, c.inputs, c.artifacts);
  c.summary["manifest"] = c.path("manifest.json");
  return c.summary.dump();
}

}  // namespace vqr::cli
