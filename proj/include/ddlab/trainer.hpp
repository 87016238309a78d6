#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "ddlab/checkpoint.hpp"
#include "ddlab/config.hpp"
#include "ddlab/data.hpp"
#include "ddlab/metrics.hpp"
#include "ddlab/network.hpp"
#include "ddlab/rng.hpp"
#include "ddlab/snapshot.hpp"

namespace ddlab {

/// Loads or generates the dataset named by `config` and applies label noise
/// (seeded injection, or the noise mask when one is configured).
DatasetBundle prepare_dataset(const RunConfig& config);

/// Everything measured at one probe epoch from a single pass over the data.
struct EpochProbe {
  std::array<MetricRecord, 4> metrics;
  ProbeSnapshot snapshot;
  double train_loss = 0.0;  // mean assigned-label loss over the whole train set
  std::size_t n_train = 0;
};

/// Mini-batch Adam over a reshuffled permutation each epoch. The final short
/// batch is kept.
class Trainer {
 public:
  Trainer(const RunConfig& config, const DatasetBundle& bundle);
  Trainer(const RunConfig& config, const DatasetBundle& bundle, const RunCheckpoint& resume);

  std::uint64_t epoch() const { return epoch_; }
  const NetworkState& state() const { return state_; }

  /// Throws NonFiniteError naming the epoch and batch on a non-finite loss
  /// or update.
  void train_epoch();

  EpochProbe probe() const;

  RunCheckpoint checkpoint() const;

 private:
  const RunConfig& config_;
  const DatasetBundle& bundle_;
  NetworkState state_;
  Rng shuffle_rng_;
  std::uint64_t epoch_ = 0;
};

struct TrainOptions {
  /// Stop after the last schedule epoch not above this (0: run to max_epoch).
  std::uint64_t stop_after = 0;
  std::ostream* log = nullptr;
  std::function<void(const Trainer&, const EpochProbe&)> on_probe;
};

/// The train command: creates or resumes config.output_dir, trains to
/// max_epoch, and at every schedule epoch writes the probe snapshot,
/// metrics.csv and the checkpoint. Writes phases.json when max_epoch is
/// reached.
void run_training(const RunConfig& config, const TrainOptions& options = {});

namespace run_files {
inline constexpr const char* kConfig = "run.json";
inline constexpr const char* kDataset = "dataset.json";
inline constexpr const char* kNoiseMask = "noise_mask.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kCheckpoint = "checkpoint.ddl";
inline constexpr const char* kFinalNetwork = "network.ddl";
inline constexpr const char* kPhases = "phases.json";
inline constexpr const char* kProbes = "probes";
}  // namespace run_files

}  // namespace ddlab
