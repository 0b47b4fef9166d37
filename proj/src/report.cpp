#include "vqr/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"

namespace vqr {

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.1f", 100.0 * v);
  return buf;
}

std::string eps_label(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f/255", e * 255.0);
  return buf;
}

}  // namespace

ReportFiles render_report(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error("emit_report: need at least one report");
  // Union of (objective, epsilon) keys in first-seen order of objectives,
  // ascending epsilon within each.
  std::vector<std::string> objectives;
  std::map<std::string, std::set<double>> eps;
  for (const auto& rep : reports)
    for (const auto& r : rep.rows) {
      if (std::find(objectives.begin(), objectives.end(), r.objective) == objectives.end())
        objectives.push_back(r.objective);
      eps[r.objective].insert(r.epsilon);
    }
  auto lookup = [](const EvalReport& rep, const std::string& obj, double e) -> const EvalRow* {
    for (const auto& r : rep.rows)
      if (r.objective == obj && r.epsilon == e) return &r;
    return nullptr;
  };

  ReportFiles out;
  std::ostringstream table, curve, txt;
  table << "objective,epsilon";
  for (const auto& rep : reports) table << ",clean_" << rep.tokenizer_hash << ",robust_" << rep.tokenizer_hash;
  table << '\n';
  curve << "tokenizer_hash,objective,epsilon,robust_accuracy\n";

  txt << "Clean / robust accuracy (%) per tokenizer\n\n";
  for (std::size_t i = 0; i < reports.size(); ++i)
    txt << "  [" << i << "] tokenizer " << reports[i].tokenizer_hash << "  probe " << reports[i].probe_hash
        << "  config " << (reports[i].config_hash.empty() ? "-" : reports[i].config_hash) << '\n';
  txt << "\n" << std::string(16, ' ') << "epsilon   ";
  for (std::size_t i = 0; i < reports.size(); ++i) txt << "  [" << i << "] clean  robust";
  txt << '\n';

  for (const auto& obj : objectives) {
    for (double e : eps[obj]) {
      table << obj << ',' << format_real(e);
      char head[64];
      std::snprintf(head, sizeof head, "%-16s%-10s", obj.c_str(), eps_label(e).c_str());
      txt << head;
      for (const auto& rep : reports) {
        const EvalRow* r = lookup(rep, obj, e);
        if (r) {
          table << ',' << format_real(r->clean_accuracy) << ',' << format_real(r->robust_accuracy);
          txt << "      " << pct(r->clean_accuracy) << "  " << pct(r->robust_accuracy);
        } else {
          table << ",,";
          txt << "           -       -";
        }
      }
      table << '\n';
      txt << '\n';
      ++out.table_rows;
    }
  }
  for (const auto& rep : reports)
    for (const auto& r : rep.rows)
      curve << rep.tokenizer_hash << ',' << r.objective << ',' << format_real(r.epsilon) << ','
            << format_real(r.robust_accuracy) << '\n';

  out.table_csv = table.str();
  out.curve_csv = curve.str();
  out.summary_txt = txt.str();
  return out;
}

ReportFiles emit_report(const std::vector<EvalReport>& reports, const std::string& out_dir) {
  ReportFiles files = render_report(reports);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir + "/report_table.csv", files.table_csv);
  write_file(out_dir + "/report_curve.csv", files.curve_csv);
  write_file(out_dir + "/report.txt", files.summary_txt);
  return files;
}

void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& config,
                    const std::map<std::string, std::string>& input_hashes,
                    const std::vector<std::string>& artifacts) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = hex64(config.hash());
  j["config"] = config.serialize();
  j["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : input_hashes) j["inputs"][k] = v;
  nlohmann::ordered_json arts = nlohmann::ordered_json::object();
  for (const auto& a : artifacts) arts[a] = file_hash(out_dir + "/" + a);
  j["artifacts"] = arts;
  write_file(out_dir + "/manifest.json", j.dump(2) + "\n");
}

}  // namespace vqr
