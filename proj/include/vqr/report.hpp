#pragma once

// Human-readable and machine tables across evaluation reports, and the
// per-directory run manifest.

#include <map>
#include <string>
#include <vector>

#include "vqr/config.hpp"
#include "vqr/eval.hpp"

namespace vqr {

struct ReportFiles {
  std::string table_csv;   // objective,epsilon, then clean_<hash>,robust_<hash> per tokenizer
  std::string curve_csv;   // long form: tokenizer_hash,objective,epsilon,robust_accuracy
  std::string summary_txt;
  std::size_t table_rows = 0;
};

/// Pure rendering; identical inputs give identical bytes.
ReportFiles render_report(const std::vector<EvalReport>& reports);

/// Writes report_table.csv, report_curve.csv and report.txt into `out_dir`.
ReportFiles emit_report(const std::vector<EvalReport>& reports, const std::string& out_dir);

/// manifest.json: command, config snapshot and hash, input file hashes and
/// the artifacts written.
void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& config,
                    const std::map<std::string, std::string>& input_hashes,
                    const std::vector<std::string>& artifacts);

}  // namespace vqr
