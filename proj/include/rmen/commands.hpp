#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "rmen/run_config.hpp"

namespace rmen {

// train, eval-classify, eval-rank, grid-search, ablate, export-scores,
// transe-train
const std::vector<std::string>& command_names();

// Runs one command with a validated config, writing its artifacts and
// effective-config.txt under config.out. Progress goes to `log`. Throws on
// failure.
void run_command(const std::string& name, const RunConfig& config, std::ostream& log);

}  // namespace rmen
