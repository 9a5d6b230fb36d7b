#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "nlsq/config.hpp"

namespace nlsq {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_not_converged = 3, exit_abort = 4 };

struct ResultRecord {
  std::string run_id;
  std::string command;
  std::string started, finished;  // ISO 8601 UTC
  nlohmann::json config;
  nlohmann::json headline = nlohmann::json::object();
  std::vector<std::string> artifacts;
  int exit_code = exit_ok;
  std::string message;
  nlohmann::json to_json() const;
};

struct RunOptions {
  bool write_files = true;
  bool quiet = true;
};

// eigs | groundstate | evolve | reduce1d | curve | sweep | compare.
// Solver failures are folded into exit_code; ConfigError propagates.
ResultRecord run_command(const std::string& command, const RunConfig& cfg, const RunOptions& opt = {});

// the sweep points: Cartesian product over the non-empty ranges
std::vector<RunConfig> sweep_points(const RunConfig& cfg);

// full command-line entry point, returns the process exit code
int cli_main(int argc, char** argv);

}  // namespace nlsq
