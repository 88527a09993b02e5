#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nll/noise.hpp"
#include "nll/pipeline.hpp"

namespace nll::cli {

// Bad or missing configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using RawConfig = std::map<std::string, std::string>;

// key=value lines; '#' starts a comment; blank lines ignored. Throws
// ConfigError on malformed lines, duplicate keys or keys outside known_keys().
RawConfig parse_config(const std::string& text);
RawConfig load_config(const std::filesystem::path& path);

const std::vector<std::string>& known_keys();

enum class DataSource { blobs, csv, cifar10 };
enum class Scale { desk, full };

struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> scale;
};

struct ExperimentConfig {
  std::filesystem::path out;
  std::uint64_t seed = 0;  // noise and training
  Scale scale = Scale::desk;

  DataSource source = DataSource::blobs;
  std::size_t classes = 4;
  std::size_t n_train = 4000;
  std::size_t n_test = 2000;
  std::size_t dim = 8;
  double separation = 6.0;
  std::uint64_t data_seed = 17;
  std::filesystem::path train_csv;
  std::filesystem::path test_csv;
  std::vector<std::filesystem::path> cifar_train;
  std::vector<std::filesystem::path> cifar_test;

  bool noise_enabled = false;
  NoiseSpec noise;
  std::string noise_map_text;
  std::filesystem::path noise_groups_path;

  TrainRunConfig train;
  bool pseudo_enabled = false;
  PseudoLabelConfig pseudo;
  std::size_t eval_bins = 20;

  // Every key with its resolved value, sorted; feeding it back through
  // parse_config + resolve reproduces this config.
  std::string canonical_text() const;
};

// Relative paths are taken relative to `base_dir`. Throws ConfigError naming
// the offending key.
ExperimentConfig resolve(const RawConfig& raw, const Overrides& overrides,
                         const std::filesystem::path& base_dir);

}  // namespace nll::cli
