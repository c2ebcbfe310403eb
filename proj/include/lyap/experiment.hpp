#pragma once

#include "lyap/system.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace lyap {

// Schema violations; the CLI maps them to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exit statuses of run_experiment.
enum ExitStatus : int {
  kExitOk = 0,
  kExitMismatch = 1,  // simulate: expectation not met; reproduce: a claim not reproduced
  kExitUsage = 2,
  kExitRefuted = 3,   // refutation, escape or decay violation (witness files written)
};

struct ExperimentResult {
  int status = kExitOk;
  std::vector<std::string> files;  // relative to the output directory, in write order
  std::string summary;
  nlohmann::json result;
};

// Throws ConfigError on schema violations. The config must carry "task";
// "seed" defaults to 1. See README.md for the per-task keys.
void validate_config(const nlohmann::json& config);

// Model by zoo name ("scalar_ii", "blowup", ...) or descriptor object.
SystemModel resolve_model(const nlohmann::json& spec);

// Runs one task and writes manifest.json, summary.txt, config.json and the
// task outputs into `out_dir` (created if needed).
ExperimentResult run_experiment(const nlohmann::json& config, const std::filesystem::path& out_dir);

}  // namespace lyap
