#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "ddlab/data.hpp"
#include "ddlab/metrics.hpp"
#include "ddlab/network.hpp"

namespace ddlab {

// Minimal TOML reader: [section] headers, `key = value` lines, # comments.
// Values are quoted strings, booleans, integers, reals, or flat arrays of
// numbers. Keys are returned fully qualified ("section.key").
using TomlValue = std::variant<std::string, bool, long long, double, std::vector<double>>;
using TomlTable = std::map<std::string, TomlValue>;

TomlTable parse_toml(const std::string& text);

struct DatasetConfig {
  enum class Kind { cifar10, synthetic };
  Kind kind = Kind::cifar10;
  std::filesystem::path path = "cifar-10-batches-bin";
  std::size_t train_limit = 0;  // 0: use every record
  std::size_t test_limit = 0;
  SyntheticParams synthetic;
};

struct RunConfig {
  DatasetConfig dataset;
  double noise_probability = 0.3;
  std::uint64_t noise_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::filesystem::path noise_mask;  // optional; replaces seeded injection

  std::string preset = "mlp7";
  std::vector<std::size_t> hidden_dims;  // overrides the preset when set

  OptimConfig optim;
  std::uint64_t max_epoch = 100000;
  std::vector<std::size_t> probe_layers;  // empty: every hidden layer
  std::filesystem::path output_dir = "run";

  PhaseMode phase_mode = PhaseMode::config;
  std::vector<std::uint64_t> phase_boundaries;

  /// Hidden dims after preset expansion.
  std::vector<std::size_t> resolved_hidden_dims() const;
  NetworkSpec network_spec(std::size_t input_dim, std::size_t n_classes) const;

  void validate() const;
};

/// Unknown keys and wrongly typed values are errors (std::invalid_argument).
/// Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& file);

/// Every resolved setting, seeds included, as JSON.
std::string run_config_json(const RunConfig& config);

}  // namespace ddlab
