#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ddlab/data.hpp"
#include "ddlab/network.hpp"

namespace ddlab {

/// Streaming mean and sum of squared deviations (Welford), per coordinate.
class ActivationAccumulator {
 public:
  ActivationAccumulator() = default;
  explicit ActivationAccumulator(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}
  ActivationAccumulator(std::size_t n, std::vector<double> mean, std::vector<double> m2);

  void add(std::span<const double> x);

  /// Chan et al. pairwise combination.
  void merge(const ActivationAccumulator& other);

  std::size_t count() const { return n_; }
  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& m2() const { return m2_; }

  /// Population standard deviation of coordinate i.
  double stddev(std::size_t i) const;

  bool operator==(const ActivationAccumulator&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

enum class ProbeGroup { clean_train, noisy_train, test, test_correct, test_incorrect };

const char* to_string(ProbeGroup group);
ProbeGroup parse_probe_group(const std::string& text);

struct SnapshotKey {
  std::size_t layer = 1;  // 1-based hidden layer index
  ProbeGroup group = ProbeGroup::clean_train;
  GroupMode mode = GroupMode::input_based;
  int class_id = 0;

  auto operator<=>(const SnapshotKey&) const = default;
};

/// Per-class activation accumulators of every hidden layer at one epoch.
/// Groups that received no samples for a class have no entry.
class ProbeSnapshot {
 public:
  ProbeSnapshot() = default;
  /// `probed_layers` are 1-based hidden layer indices; empty means all.
  ProbeSnapshot(std::uint64_t epoch, std::vector<std::size_t> layer_dims, std::size_t n_classes,
                std::vector<std::size_t> probed_layers = {});

  std::uint64_t epoch() const { return epoch_; }
  std::size_t layer_count() const { return layer_dims_.size(); }
  std::size_t layer_dim(std::size_t layer) const;
  const std::vector<std::size_t>& layer_dims() const { return layer_dims_; }
  const std::vector<std::size_t>& probed_layers() const { return probed_layers_; }
  std::size_t n_classes() const { return n_classes_; }

  /// Adds every row of `trace` (row i belongs to samples[i]) to `group`,
  /// under both grouping modes, for each probed layer.
  void add(const ForwardTrace& trace, std::span<const Sample> samples, ProbeGroup group);

  /// Adds row `row` of `trace`, which belongs to `sample`.
  void add_row(const ForwardTrace& trace, std::size_t row, const Sample& sample, ProbeGroup group);

  void insert(const SnapshotKey& key, ActivationAccumulator acc);

  /// nullptr when the group has no samples of that class.
  const ActivationAccumulator* find(const SnapshotKey& key) const;

  /// Merge of every class of `group` under `mode` at `layer`; empty if none.
  ActivationAccumulator group_total(std::size_t layer, ProbeGroup group, GroupMode mode) const;

  const std::map<SnapshotKey, ActivationAccumulator>& entries() const { return entries_; }

  bool operator==(const ProbeSnapshot&) const = default;

 private:
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> layer_dims_;
  std::size_t n_classes_ = 0;
  std::vector<std::size_t> probed_layers_;
  std::map<SnapshotKey, ActivationAccumulator> entries_;
};

// On disk a snapshot is epoch_<8 digits>.jsonl with one record per entry
//   {"epoch","layer","group","mode","class","n","dim","sidecar",
//    "mean_offset","m2_offset"}
// and epoch_<8 digits>.bin holding the referenced f64 little-endian vectors.
// The first JSONL line is a header record
//   {"epoch","layer_dims","n_classes","probed_layers"}.

std::string snapshot_stem(std::uint64_t epoch);

/// Writes the sidecar first and the JSONL last, each atomically.
void write_snapshot(const ProbeSnapshot& snapshot, const std::filesystem::path& dir);

ProbeSnapshot read_snapshot(const std::filesystem::path& jsonl_file);

/// All snapshots in `dir`, ordered by epoch.
std::vector<ProbeSnapshot> read_snapshots(const std::filesystem::path& dir);

}  // namespace ddlab
