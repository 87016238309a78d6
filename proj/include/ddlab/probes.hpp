#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddlab/data.hpp"
#include "ddlab/network.hpp"
#include "ddlab/snapshot.hpp"

namespace ddlab {

struct ClassMeanActivation {
  std::size_t layer = 1;
  int class_id = 0;
  ProbeGroup group = ProbeGroup::clean_train;
  GroupMode mode = GroupMode::input_based;
  std::vector<double> mean_vector;
  std::size_t n = 0;
};

/// Mean post-ReLU activation at hidden `layer` (1-based) over the samples of
/// `key`. Row i of `trace` belongs to samples[i]. Returns nullopt when the
/// class has no samples; throws std::out_of_range for a bad layer.
std::optional<ClassMeanActivation> mean_class_activation(const ForwardTrace& trace,
                                                         std::span<const Sample> samples,
                                                         std::size_t layer, GroupKey key,
                                                         ProbeGroup group);

/// Same, read from a snapshot's accumulators.
std::optional<ClassMeanActivation> mean_class_activation(const ProbeSnapshot& snapshot,
                                                         std::size_t layer, GroupKey key,
                                                         ProbeGroup group);

/// u.v / (|u| |v|). Throws UndefinedSimilarityError if either norm is zero and
/// DimensionError on a length mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct GroupRef {
  ProbeGroup group = ProbeGroup::clean_train;
  GroupMode mode = GroupMode::input_based;
};

struct SimilarityPair {
  std::string name;
  GroupRef a;
  GroupRef b;
};

/// clean_vs_noisy, test_correct_vs_clean, test_correct_vs_noisy,
/// test_incorrect_vs_clean, test_incorrect_vs_noisy; all input-based.
const std::vector<SimilarityPair>& standard_similarity_pairs();

struct SimilarityRecord {
  std::uint64_t epoch = 0;
  std::size_t layer = 1;
  std::string pair;
  std::vector<std::optional<double>> per_class;  // nullopt: class excluded
  std::vector<int> excluded_classes;
  std::optional<double> mean;  // nullopt when no class is present on both sides
  double std_across_classes = 0.0;  // population std over included classes
};

/// The similarity record of a single hidden layer.
SimilarityRecord layer_similarity(const ProbeSnapshot& snapshot, std::size_t layer,
                                  const SimilarityPair& pair);

/// One record per probed hidden layer, in layer order. Classes missing on either
/// side are excluded from the mean and listed. A zero-norm class mean throws
/// UndefinedSimilarityError.
std::vector<SimilarityRecord> layer_similarity_sweep(const ProbeSnapshot& snapshot,
                                                     const SimilarityPair& pair);

struct PredictionSplit {
  std::vector<Sample> correct;
  std::vector<Sample> incorrect;
};

/// Partitions by argmax prediction against the original label.
PredictionSplit split_test_by_prediction(const NetworkState& state,
                                         std::span<const Sample> test);

struct LargeActivationRecord {
  std::uint64_t epoch = 0;
  std::size_t layer = 1;
  std::size_t tracked_neuron = 0;
  double ratio = 0.0;
  double a_max = 0.0;
  double rms_rest = 0.0;
  std::size_t m = 0;
  bool is_large = false;
};

inline constexpr double kLargeActivationThreshold = 10.0;

/// r = a[i*] / sqrt(mean over i != i* of a[i]^2), flagged large when r > 10.
/// Throws std::invalid_argument for fewer than two neurons or a bad index and
/// UndefinedRatioError when every other activation is zero.
LargeActivationRecord large_activation_ratio(std::span<const double> neuron_means,
                                             std::size_t tracked);

/// Per-neuron mean activation at `layer` over the whole training set.
std::vector<double> training_neuron_means(const ProbeSnapshot& snapshot, std::size_t layer);

LargeActivationRecord large_activation_ratio(const ProbeSnapshot& snapshot, std::size_t layer,
                                             std::size_t tracked);

/// Argmax of the last series entry; ties go to the lowest index.
std::size_t track_final_epoch_neuron(std::span<const std::vector<double>> neuron_means_series);

/// Uses the snapshot with the largest epoch.
std::size_t track_final_epoch_neuron(std::span<const ProbeSnapshot> snapshots, std::size_t layer);

struct ClassMagnitude {
  ProbeGroup group = ProbeGroup::clean_train;
  GroupMode mode = GroupMode::input_based;
  int class_id = 0;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // across samples, population
};

struct PerClassMagnitudes {
  std::vector<ClassMagnitude> entries;  // groups in request order, then classes
  std::optional<double> noisy_reference;  // mean over all noisy training data
};

PerClassMagnitudes per_class_large_activation(const ProbeSnapshot& snapshot, std::size_t layer,
                                              std::size_t tracked, GroupMode mode,
                                              std::span<const ProbeGroup> groups);

}  // namespace ddlab
