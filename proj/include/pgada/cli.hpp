#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgada/episodes.hpp"
#include "pgada/experiments.hpp"

namespace pgada {

// Exit codes of the pgada binary.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitNumeric = 3, kExitVerify = 4 };

struct CliConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int jobs = 0;
  std::size_t episodes = 500;
  std::string variant = "full";
  TaskGeometry geometry;
  std::size_t pool_classes = 8;
  std::size_t pool_size = 0;  // 0: batch * epochs
  ShiftSpec shift;
  TrainConfig train;
  EvalConfig eval;
  Theorem1Options theorem1;
  Lemma1Options lemma1;

  std::size_t resolved_pool_size() const;
  // Range checks for every field; throws UsageError naming the field.
  void validate() const;
};

CliConfig default_config();
// Overlays the keys present in `j` onto `base`. Unknown keys and values of
// the wrong type or out of range raise UsageError with the JSON path.
CliConfig config_from_json(const nlohmann::json& j, CliConfig base = default_config());
nlohmann::json config_to_json(const CliConfig& c);
// Parse errors carry the byte offset of the problem.
CliConfig load_config(const std::filesystem::path& path);

// Entry point of the pgada binary; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace pgada
