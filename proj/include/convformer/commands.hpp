#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "convformer/evaluate.hpp"
#include "convformer/run_config.hpp"
#include "convformer/train.hpp"

namespace convformer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 2;
inline constexpr int kExitNumeric = 3;

struct RunOutcome {
  TrainResult train;
  EvalReport report;
  std::filesystem::path checkpoint;
};

/// Loads data, trains, writes checkpoint.json, history.csv, report.json,
/// config.json and any sampled candidate files into `out_dir`.
RunOutcome run_training(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Sweep values used by `ablate` when none are given.
std::vector<std::string> default_axis_values(const std::string& axis);
/// Copy of `base` with one axis set to `value`.
RunConfig with_axis(const RunConfig& base, const std::string& axis, const std::string& value);

/// Parses argv (without the program name) and runs a verb. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace convformer::cli
