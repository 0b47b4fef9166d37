#pragma once

#include <string>
#include <vector>

#include "vqr/config.hpp"

namespace vqr::cli {

const std::vector<std::string>& command_names();

/// Runs one subcommand, writing artifacts and manifest.json under out_dir.
/// Returns the one-line JSON summary. Throws vqr::Error on failure.
std::string run_command(const std::string& name, const RunConfig& config, const std::string& out_dir);

}  // namespace vqr::cli
