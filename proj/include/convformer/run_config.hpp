#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "convformer/evaluate.hpp"
#include "convformer/model.hpp"
#include "convformer/train.hpp"

namespace convformer {

inline constexpr int kConfigSchemaVersion = 1;

struct DataConfig {
  std::string path;                     // sequence file; required
  std::size_t min_count = 5;
  std::string valid_candidates;         // empty: sample and write into the output dir
  std::string test_candidates;
  std::uint64_t candidate_seed = 2024;
};

struct EvalConfig {
  EvalMode mode = EvalMode::OneVs99;
  data::Split split = data::Split::Test;
};

struct OutputConfig {
  std::string dir = "run";
};

/// Everything a train / ablate run needs. vocab_size inside `model` is
/// filled in from the dataset at run time.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  std::uint64_t init_seed = 1;
  TrainConfig train;
  EvalConfig eval;
  OutputConfig output;
};

/// Strict parse: unknown keys, wrong types and out-of-range values raise
/// ConfigError carrying the dotted field path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

nlohmann::json model_config_to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "model");

}  // namespace convformer
