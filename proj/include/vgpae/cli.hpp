#pragma once

#include "vgpae/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace vgpae::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericError = 4;

struct GenerateOptions {
  std::string kind = "ordinal";  // "ordinal" or "glyph"
  int steps = 360;
  int image_side = 28;
  double glyph_noise = 0.0;
  double asymmetry = 3.0;
  SyntheticOrdinalConfig ordinal;
};

struct GradCheckSettings {
  Eigen::Index n = 16;
  double step = 1e-5;
  double tolerance = 1e-4;
  double perturbation = 0.2;  // random offset applied to the default state
};

/// Everything one invocation needs, after merging defaults, the config file
/// and command-line flags (in increasing precedence).
struct RunConfig {
  std::string subcommand;
  std::filesystem::path manifest;
  std::filesystem::path query;  // project: rows to embed (default: manifest)
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::filesystem::path config_file;
  std::string split = "test";  // evaluate: which rows to score
  bool unsupervised = false;   // forces ordinal weight 0
  int levels = 0;              // 0 = take from the data
  TrainConfig train;
  GenerateOptions generate;
  GradCheckSettings gradcheck;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays config-file keys onto `cfg`. Unknown keys are a ConfigError.
void merge_run_config(const nlohmann::json& j, RunConfig& cfg);

int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_evaluate(const RunConfig& cfg, std::ostream& log);
int cmd_project(const RunConfig& cfg, std::ostream& log);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& log);
int cmd_generate(const RunConfig& cfg, std::ostream& log);

/// Parses `args` (without the program name), dispatches, and maps library
/// exceptions onto exit codes. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace vgpae::cli
