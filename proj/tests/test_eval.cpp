#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "helpers.hpp"
#include "vqr/checkpoint.hpp"
#include "vqr/eval.hpp"
#include "vqr/report.hpp"

using namespace vqr;

namespace {

struct Small {
  TokenizerConfig cfg = testing::small_config(51);
  TokenizerParams<float> tok = init_tokenizer(cfg);
  Dataset data = gen_shapes(5, 16, 16, 2, Split::Test);
  ProbeParams<float> probe = init_probe(ProbeArch::Linear, 4 * 8, 0, 2, 51);
  ApgdConfig apgd() const {
    ApgdConfig a;
    a.n_iters = 5;
    return a;
  }
};

}  // namespace

TEST_CASE("robustness report rows, csv and json") {
  Small s;
  const auto rep = evaluate_robustness(s.tok, s.probe, {ObjectiveKind::SupCE, ObjectiveKind::UnsupHH},
                                       {4.0 / 255.0, 0.0}, s.apgd(), s.data, 8);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows[0].objective == "sup_ce");
  CHECK(rep.rows[0].epsilon == 0.0);
  CHECK(rep.rows[0].robust_accuracy == rep.rows[0].clean_accuracy);
  CHECK(rep.rows[0].clean_accuracy == accuracy(s.tok, s.probe, s.data));
  for (const auto& r : rep.rows) {
    CHECK(r.robust_accuracy <= r.clean_accuracy);
    CHECK(r.count == 16);
    CHECK(r.max_violation <= 1e-6);
  }
  CHECK(rep.rows[1].zero_change_fraction <= 1.0);
  CHECK(rep.tokens == 4);

  const auto back = parse_report_json(report_json(rep));
  CHECK(report_json(back) == report_json(rep));
  CHECK(report_csv(back) == report_csv(rep));
}

TEST_CASE("report rendering is deterministic and side by side") {
  EvalReport a, b;
  a.tokenizer_hash = "aaaa";
  b.tokenizer_hash = "bbbb";
  for (double eps : {0.0, 4.0 / 255.0}) {
    EvalRow r;
    r.objective = "sup_ce";
    r.epsilon = eps;
    r.clean_accuracy = 0.9;
    r.robust_accuracy = eps == 0 ? 0.9 : 0.1;
    a.rows.push_back(r);
    r.robust_accuracy = eps == 0 ? 0.8 : 0.6;
    b.rows.push_back(r);
  }
  const auto f1 = render_report({a, b}), f2 = render_report({a, b});
  CHECK(f1.table_csv == f2.table_csv);
  CHECK(f1.curve_csv == f2.curve_csv);
  CHECK(f1.summary_txt == f2.summary_txt);
  CHECK(f1.table_rows == 2);
  CHECK(f1.table_csv.find("robust_aaaa") != std::string::npos);
  CHECK(f1.table_csv.find("robust_bbbb") != std::string::npos);

  const auto dir = (std::filesystem::temp_directory_path() / "vqr_report_test").string();
  std::filesystem::create_directories(dir);
  emit_report({a, b}, dir);
  CHECK(read_file(dir + "/report_table.csv").size() == f1.table_csv.size());
  RunConfig cfg;
  write_manifest(dir, "report", cfg, {{"input.reports", "0123"}}, {"report_table.csv"});
  const auto manifest = read_file(dir + "/manifest.json");
  const auto m = nlohmann::json::parse(std::string(manifest.begin(), manifest.end()));
  CHECK(m.at("command") == "report");
  CHECK(m.at("config_hash") == hex64(cfg.hash()));
}

TEST_CASE("objective ablation table") {
  Small s;
  const auto ab = objective_ablation(s.tok, s.probe, {1.0 / 255.0, 2.0 / 255.0}, s.apgd(), s.data, 8);
  REQUIRE(ab.rows.size() == 2);
  CHECK(ab.report.rows.size() == 8);
  for (const auto& r : ab.rows) {
    const double lowest = std::min({r.robust[0], r.robust[1], r.robust[2], r.robust[3]});
    CHECK(r.hh_lowest_or_tied == (r.robust[0] == lowest));
  }
  const auto csv = ablation_csv(ab);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("reconstructions grow with the budget") {
  Small s;
  const auto batch = s.data.range(0, 3);
  const auto rows = reconstruct_adversarial(s.tok, batch, {0.0, 8.0 / 255.0}, s.apgd());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mean_abs_recon_change == 0.0);
  CHECK(rows[1].mean_abs_recon_change >= 0.0);
  CHECK(rows[0].grid.width == 4 * 16 + 3 * 2);
  CHECK(rows[0].grid.height == 3 * 16 + 2 * 2);
}

TEST_CASE("targeted demo pairs sources with the next class") {
  Small s;
  Budget b;
  b.epsilon = 8.0 / 255.0;
  const auto demo = targeted_demo(s.tok, s.probe, s.data, 5, TargetMode::Embedding, b, s.apgd());
  REQUIRE(demo.pairs.size() == 5);
  for (const auto& p : demo.pairs) {
    CHECK(p.target_label == (p.source_label + 1) % 2);
    CHECK(s.data.labels[p.target_id] == p.target_label);
    CHECK(s.data.labels[p.source_id] == p.source_label);
  }
  const auto csv = targeted_csv(demo);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}
