#include "vqr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "vqr/checkpoint.hpp"
#include "vqr/config.hpp"
#include "vqr/error.hpp"

namespace vqr {

using json = nlohmann::ordered_json;

EvalReport evaluate_robustness(const TokenizerParams<float>& tokenizer,
                               const ProbeParams<float>& probe,
                               const std::vector<ObjectiveKind>& objectives,
                               std::vector<double> epsilons, const ApgdConfig& config,
                               const Dataset& data, std::size_t batch_size,
                               std::vector<SweepRow>* raw) {
  std::sort(epsilons.begin(), epsilons.end());
  std::vector<Budget> budgets;
  for (double e : epsilons) {
    Budget b;
    b.epsilon = e;
    budgets.push_back(b);
  }
  EvalReport report;
  report.tokenizer_hash = hex64(hash_params(tokenizer));
  report.probe_hash = hex64(hash_probe(probe));
  report.tokens = std::size_t{tokenizer.config.tokens()} * tokenizer.config.num_codebooks;
  for (ObjectiveKind kind : objectives) {
    if (!maximizes(kind)) throw Error(std::string("evaluate_robustness: ") + to_string(kind) +
                                      " is targeted; use targeted_demo");
    auto sweep = epsilon_sweep(kind, tokenizer, probe, budgets, config, data, batch_size);
    for (const SweepRow& s : sweep) {
      EvalRow row;
      row.objective = to_string(kind);
      row.epsilon = s.epsilon;
      row.count = s.count;
      row.clean_accuracy = s.clean_accuracy;
      row.robust_accuracy = s.robust_accuracy;
      row.seconds = s.seconds;
      row.max_violation = s.max_violation;
      double churn_s = 0, churn_f = 0, churn_all = 0;
      std::size_t zero = 0;
      for (const auto& o : s.outcomes) {
        churn_all += o.changed_tokens;
        zero += o.changed_tokens == 0;
        if (o.clean_pred != o.label) continue;
        if (o.success) {
          ++row.successes;
          churn_s += o.changed_tokens;
        } else {
          ++row.failures;
          churn_f += o.changed_tokens;
        }
      }
      row.mean_changed_success = row.successes ? churn_s / double(row.successes) : 0.0;
      row.mean_changed_failure = row.failures ? churn_f / double(row.failures) : 0.0;
      row.mean_changed_all = s.outcomes.empty() ? 0.0 : churn_all / double(s.outcomes.size());
      row.zero_change_fraction = s.outcomes.empty() ? 0.0 : double(zero) / double(s.outcomes.size());
      report.rows.push_back(row);
      if (raw) raw->push_back(s);
    }
  }
  return report;
}

namespace {

const char* kCsvHeader =
    "objective,epsilon,count,clean_accuracy,robust_accuracy,successes,failures,"
    "mean_changed_success,mean_changed_failure,mean_changed_all,zero_change_fraction,"
    "max_violation\n";

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << kCsvHeader;
  for (const auto& r : report.rows)
    os << r.objective << ',' << format_real(r.epsilon) << ',' << r.count << ','
       << format_real(r.clean_accuracy) << ',' << format_real(r.robust_accuracy) << ',' << r.successes
       << ',' << r.failures << ',' << format_real(r.mean_changed_success) << ','
       << format_real(r.mean_changed_failure) << ',' << format_real(r.mean_changed_all) << ','
       << format_real(r.zero_change_fraction) << ',' << format_real(r.max_violation) << '\n';
  return os.str();
}

// Wall-clock is left out of the persisted forms so that reruns are
// byte-identical; commands print it in their summaries instead.
std::string report_json(const EvalReport& report) {
  json j;
  j["tokenizer_hash"] = report.tokenizer_hash;
  j["probe_hash"] = report.probe_hash;
  j["config_hash"] = report.config_hash;
  j["tokens"] = report.tokens;
  j["rows"] = json::array();
  for (const auto& r : report.rows)
    j["rows"].push_back({{"objective", r.objective},
                         {"epsilon", r.epsilon},
                         {"count", r.count},
                         {"clean_accuracy", r.clean_accuracy},
                         {"robust_accuracy", r.robust_accuracy},
                         {"successes", r.successes},
                         {"failures", r.failures},
                         {"mean_changed_success", r.mean_changed_success},
                         {"mean_changed_failure", r.mean_changed_failure},
                         {"mean_changed_all", r.mean_changed_all},
                         {"zero_change_fraction", r.zero_change_fraction},
                         {"max_violation", r.max_violation}});
  j["artifacts"] = report.artifacts;
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text) {
  EvalReport rep;
  try {
    const json j = json::parse(text);
    rep.tokenizer_hash = j.at("tokenizer_hash").get<std::string>();
    rep.probe_hash = j.at("probe_hash").get<std::string>();
    rep.config_hash = j.value("config_hash", "");
    rep.tokens = j.value("tokens", std::size_t{0});
    for (const auto& r : j.at("rows")) {
      EvalRow row;
      row.objective = r.at("objective").get<std::string>();
      row.epsilon = r.at("epsilon").get<double>();
      row.count = r.at("count").get<std::size_t>();
      row.clean_accuracy = r.at("clean_accuracy").get<double>();
      row.robust_accuracy = r.at("robust_accuracy").get<double>();
      row.successes = r.value("successes", std::size_t{0});
      row.failures = r.value("failures", std::size_t{0});
      row.mean_changed_success = r.value("mean_changed_success", 0.0);
      row.mean_changed_failure = r.value("mean_changed_failure", 0.0);
      row.mean_changed_all = r.value("mean_changed_all", 0.0);
      row.zero_change_fraction = r.value("zero_change_fraction", 0.0);
      row.max_violation = r.value("max_violation", 0.0);
      rep.rows.push_back(row);
    }
    if (j.contains("artifacts")) rep.artifacts = j["artifacts"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return rep;
}

Ablation objective_ablation(const TokenizerParams<float>& tokenizer, const ProbeParams<float>& probe,
                            const std::vector<double>& epsilons, const ApgdConfig& config,
                            const Dataset& data, std::size_t batch_size) {
  const std::vector<ObjectiveKind> kinds{ObjectiveKind::UnsupHH, ObjectiveKind::UnsupHQ,
                                         ObjectiveKind::UnsupQH, ObjectiveKind::UnsupQQ};
  Ablation ab;
  ab.report = evaluate_robustness(tokenizer, probe, kinds, epsilons, config, data, batch_size);
  const std::size_t n_eps = ab.report.rows.size() / kinds.size();
  for (std::size_t e = 0; e < n_eps; ++e) {
    AblationRow row;
    row.epsilon = ab.report.rows[e].epsilon;
    for (std::size_t k = 0; k < 4; ++k) row.robust[k] = ab.report.rows[k * n_eps + e].robust_accuracy;
    row.hh_lowest_or_tied = row.robust[0] <= *std::min_element(row.robust, row.robust + 4);
    row.ordering_holds = row.robust[0] <= row.robust[1] && row.robust[1] <= std::max(row.robust[2], row.robust[3]);
    ab.hh_best_count += row.hh_lowest_or_tied;
    ab.rows.push_back(row);
  }
  return ab;
}

std::string ablation_csv(const Ablation& ablation) {
  std::ostringstream os;
  os << "epsilon,unsup_hh,unsup_hq,unsup_qh,unsup_qq,hh_lowest_or_tied,ordering_holds\n";
  for (const auto& r : ablation.rows) {
    os << format_real(r.epsilon);
    for (double v : r.robust) os << ',' << format_real(v);
    os << ',' << (r.hh_lowest_or_tied ? 1 : 0) << ',' << (r.ordering_holds ? 1 : 0) << '\n';
  }
  return os.str();
}

namespace {

double mse(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i] - b[i]) * double(a[i] - b[i]);
  return a.empty() ? 0.0 : s / double(a.size());
}

}  // namespace

std::vector<ReconstructionRow> reconstruct_adversarial(const TokenizerParams<float>& tokenizer,
                                                       const ImageBatch& clean,
                                                       const std::vector<double>& epsilons,
                                                       const ApgdConfig& config) {
  const ImageBatch clean_recon = reconstruct(tokenizer, clean);
  std::vector<ReconstructionRow> out;
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    Budget budget;
    budget.epsilon = epsilons[e];
    const AttackResult res =
        run_attack(ObjectiveKind::UnsupHH, tokenizer, nullptr, {}, budget, config, clean, {}, e);
    const ImageBatch adv_recon = reconstruct(tokenizer, res.x_adv);
    ReconstructionRow row;
    row.epsilon = epsilons[e];
    double diff = 0;
    for (std::size_t i = 0; i < adv_recon.pixels.size(); ++i)
      diff += std::abs(double(adv_recon.pixels[i]) - double(clean_recon.pixels[i]));
    row.mean_abs_recon_change = diff / double(std::max<std::size_t>(adv_recon.pixels.size(), 1));
    row.clean_recon_mse = mse(clean_recon.pixels, clean.pixels);
    row.adv_recon_mse = mse(adv_recon.pixels, clean.pixels);
    std::vector<std::vector<std::span<const float>>> cells;
    for (std::size_t i = 0; i < clean.count; ++i)
      cells.push_back({clean.image(i), clean_recon.image(i), res.x_adv.image(i), adv_recon.image(i)});
    row.grid = make_grid(cells, clean.channels, clean.side);
    out.push_back(std::move(row));
  }
  return out;
}

TargetedDemo targeted_demo(const TokenizerParams<float>& tokenizer, const ProbeParams<float>& probe,
                           const Dataset& data, std::size_t pairs, TargetMode mode,
                           const Budget& budget, const ApgdConfig& config) {
  if (data.size() < 2 || data.num_classes < 2) throw Error("targeted_demo: need at least two classes");
  pairs = std::min(pairs, data.size());
  TargetedDemo demo;
  demo.mode = mode;
  demo.epsilon = budget.epsilon;
  std::vector<std::size_t> src_ids, tgt_ids;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::int32_t want = (data.labels[i] + 1) % static_cast<std::int32_t>(data.num_classes);
    std::size_t j = (i + 1) % data.size();
    while (data.labels[j] != want) {
      j = (j + 1) % data.size();
      if (j == i) throw Error("targeted_demo: no example of class " + std::to_string(want));
    }
    src_ids.push_back(i);
    tgt_ids.push_back(j);
  }
  const ImageBatch sources = data.batch(src_ids), targets = data.batch(tgt_ids);
  AttackPayload payload;
  if (mode == TargetMode::Embedding)
    payload.target_images = targets;
  else
    payload.target_classes = targets.labels;
  const ObjectiveKind kind = mode == TargetMode::Embedding ? ObjectiveKind::TargetedEmbed
                                                           : ObjectiveKind::TargetedClass;
  const AttackResult res = run_attack(kind, tokenizer, &probe, payload, budget, config, sources,
                                      [](const ImageBatch& x) { return std::vector<std::uint8_t>(x.count, 0); });
  const ImageBatch adv_recon = reconstruct(tokenizer, res.x_adv);
  const auto p_src = predict(tokenizer, probe, sources);
  const auto p_adv = predict(tokenizer, probe, res.x_adv);
  const auto p_rec = predict(tokenizer, probe, adv_recon);
  const auto p_tgt = predict(tokenizer, probe, targets);
  std::size_t adv_hit = 0, rec_hit = 0, preserved = 0, rec_source_given_flip = 0;
  std::vector<std::vector<std::span<const float>>> cells;
  for (std::size_t i = 0; i < pairs; ++i) {
    TargetedPair p{src_ids[i], tgt_ids[i], sources.labels[i], targets.labels[i],
                   p_src[i],   p_adv[i],   p_rec[i],          p_tgt[i]};
    adv_hit += p.pred_adv == p.target_label;
    rec_hit += p.pred_adv_recon == p.target_label;
    preserved += p.pred_adv == p.source_label;
    if (p.pred_adv == p.target_label) rec_source_given_flip += p.pred_adv_recon == p.source_label;
    demo.pairs.push_back(p);
    cells.push_back({sources.image(i), res.x_adv.image(i), adv_recon.image(i), targets.image(i)});
  }
  demo.adv_is_target = double(adv_hit) / double(pairs);
  demo.recon_is_target = double(rec_hit) / double(pairs);
  demo.adv_preserved = double(preserved) / double(pairs);
  demo.recon_is_source_given_flip = adv_hit ? double(rec_source_given_flip) / double(adv_hit) : 0.0;
  demo.grid = make_grid(cells, data.channels, data.side);
  return demo;
}

std::string targeted_csv(const TargetedDemo& demo) {
  std::ostringstream os;
  os << "source_id,target_id,source_label,target_label,pred_source,pred_adv,pred_adv_recon,pred_target\n";
  for (const auto& p : demo.pairs)
    os << p.source_id << ',' << p.target_id << ',' << p.source_label << ',' << p.target_label << ','
       << p.pred_source << ',' << p.pred_adv << ',' << p.pred_adv_recon << ',' << p.pred_target << '\n';
  return os.str();
}

}  // namespace vqr
