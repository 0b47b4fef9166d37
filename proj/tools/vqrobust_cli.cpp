#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "vqr/checkpoint.hpp"
#include "vqr/config.hpp"
#include "vqr/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Robustness experiments for vector-quantized image tokenizers", "vqrobust"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::vector<std::string> overrides;
  const std::map<std::string, std::string> about{
      {"pretrain", "train a tokenizer (encoder, codebook, decoder) from scratch"},
      {"train-probe", "fit a classifier on frozen quantized tokens"},
      {"attack", "run one APGD attack over the test split"},
      {"advtrain", "unsupervised adversarial fine-tuning of the encoder"},
      {"advtrain-e2e", "supervised adversarial training of encoder and probe"},
      {"eval", "clean and robust accuracy over objectives and budgets"},
      {"ablate-objective", "compare the four unsupervised objectives"},
      {"reconstruct", "decode adversarial images and write PPM grids"},
      {"targeted-demo", "embedding- or class-targeted attacks on source/target pairs"},
      {"bench-cost", "time unsupervised vs end-to-end training steps"},
      {"report", "merge eval.json files into tables and curves"}};
  for (const auto& name : vqr::cli::command_names()) {
    auto* sub = app.add_subcommand(name, about.count(name) ? about.at(name) : "");
    sub->add_option("--config", config_path, "configuration file (section.key = value)");
    sub->add_option("--set", overrides, "override, e.g. budget.epsilon=8/255")->allow_extra_args(false);
    sub->add_option("--out", out_dir, "artifact directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    vqr::RunConfig cfg;
    if (!config_path.empty()) {
      const auto bytes = vqr::read_file(config_path);
      cfg = vqr::RunConfig::parse(std::string(bytes.begin(), bytes.end()), config_path);
    }
    for (const auto& o : overrides) cfg.apply(o);
    const std::string summary = vqr::cli::run_command(app.get_subcommands().front()->get_name(), cfg, out_dir);
    std::fputs((summary + "\n").c_str(), stdout);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
}
