#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ddlab/matrix.hpp"

namespace ddlab {

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordBytes = kCifarPixels + 1;

struct Sample {
  std::vector<double> pixels;
  int original_label = 0;
  int assigned_label = 0;
  bool is_noisy = false;

  bool operator==(const Sample&) const = default;
};

struct DatasetBundle {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::size_t n_classes = 10;
  double noise_probability = 0.0;
  std::uint64_t noise_seed = 0;

  std::size_t input_dim() const;

  bool operator==(const DatasetBundle&) const = default;
};

enum class GroupMode { input_based, label_based };

struct GroupKey {
  GroupMode mode = GroupMode::input_based;
  int class_id = 0;
};

const char* to_string(GroupMode mode);
GroupMode parse_group_mode(const std::string& text);

/// Label used by `mode`: original for input-based, assigned for label-based.
inline int group_label(const Sample& s, GroupMode mode) {
  return mode == GroupMode::input_based ? s.original_label : s.assigned_label;
}

/// Reads one CIFAR-10 binary batch (records of 1 label byte + 3072 pixel bytes).
std::vector<Sample> read_cifar10_batch(const std::filesystem::path& file);

/// Inverse of read_cifar10_batch for samples whose pixels are multiples of 1/255.
void write_cifar10_batch(std::span<const Sample> samples, const std::filesystem::path& file);

/// data_batch_1..5.bin as train, test_batch.bin as test; noise not applied.
DatasetBundle load_cifar10(const std::filesystem::path& directory);

/// With probability p per training sample, reassigns the label uniformly
/// among the other classes. Test samples are left untouched.
DatasetBundle inject_label_noise(DatasetBundle bundle, double p, std::uint64_t seed);

struct CleanNoisySplit {
  std::vector<Sample> clean;
  std::vector<Sample> noisy;
};

CleanNoisySplit split_clean_noisy(const DatasetBundle& bundle);

std::vector<Sample> group_samples(std::span<const Sample> samples, GroupKey key);

struct SyntheticParams {
  std::size_t n_train = 1000;
  std::size_t n_test = 200;
  std::size_t n_classes = 10;
  std::size_t dim = 64;
  double sigma = 0.5;
  std::uint64_t seed = 0;
};

/// Gaussian class clusters around random unit mean vectors, clipped into
/// [0, 1] after the affine map x -> 0.5 + 0.5 x. Sample i has class
/// i mod n_classes.
DatasetBundle make_synthetic(const SyntheticParams& params);

/// Row-stacked pixels of `samples`.
Matrix pixel_matrix(std::span<const Sample> samples);

// Noise-mask CSV: header "index,assigned_label", one row per noisy training
// sample in index order.
void write_noise_mask(const DatasetBundle& bundle, const std::filesystem::path& file);

/// Resets every training label to its original, then applies the mask.
DatasetBundle apply_noise_mask(DatasetBundle bundle, const std::filesystem::path& file);

/// Per-class counts, noise probability, noise seed and generator name.
std::string bundle_metadata_json(const DatasetBundle& bundle);

}  // namespace ddlab
