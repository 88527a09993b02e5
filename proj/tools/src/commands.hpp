#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace nll::cli {

inline constexpr const char* kVersion = "nll 0.1.0";

// Output directory already holds results and --force was not given.
class OutputExists : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Where each stage reads and writes inside a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path noisy() const { return root / "noisy"; }
  std::filesystem::path train() const { return root / "train"; }
  std::filesystem::path pseudo() const { return root / "pseudo"; }
  std::filesystem::path eval() const { return root / "eval"; }
};

struct RunOptions {
  bool force = false;
};

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

void cmd_gen(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);
void cmd_corrupt(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);
// Also runs the pseudo-labeling stage when pseudo.enabled is set.
void cmd_train(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);
void cmd_eval(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);
void cmd_pipeline(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);

// One pipeline per seed under <out>/seed-<s>, at most `threads` at a time.
// Rethrows the first failure after all runs finish.
void cmd_pipeline_seeds(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                        const RunOptions& opts, std::size_t threads, std::ostream& log);

// NLL_THREADS if set and positive, otherwise the hardware concurrency.
std::size_t thread_budget();

// Full command-line entry point. Returns the process exit code: 0 success,
// 2 configuration error, 3 data-format error, 4 numeric failure or undefined
// metric.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace nll::cli
