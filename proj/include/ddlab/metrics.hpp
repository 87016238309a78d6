#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddlab/data.hpp"
#include "ddlab/network.hpp"

namespace ddlab {

enum class Split { clean_train, noisy_train_noisy, noisy_train_clean, test };

inline constexpr std::array<Split, 4> kAllSplits = {
    Split::clean_train, Split::noisy_train_noisy, Split::noisy_train_clean, Split::test};

const char* to_string(Split split);
Split parse_split(const std::string& text);

struct MetricRecord {
  std::uint64_t epoch = 0;
  Split split = Split::clean_train;
  std::optional<double> loss;  // absent when n == 0
  std::optional<double> accuracy;
  std::size_t n = 0;

  bool operator==(const MetricRecord&) const = default;
};

/// Sums per-sample losses and hits in the order they are added.
class SplitAccumulator {
 public:
  void add(double loss, bool correct) {
    loss_sum_ += loss;
    correct_ += correct ? 1 : 0;
    ++n_;
  }
  std::size_t count() const { return n_; }
  double loss_sum() const { return loss_sum_; }
  MetricRecord finish(std::uint64_t epoch, Split split) const;

 private:
  double loss_sum_ = 0.0;
  std::size_t correct_ = 0;
  std::size_t n_ = 0;
};

/// Loss and accuracy on the four splits, in kAllSplits order. Reads the
/// network only.
std::array<MetricRecord, 4> evaluate_all_splits(const NetworkState& state,
                                                const DatasetBundle& bundle,
                                                std::uint64_t epoch = 0);

/// Mean loss over the whole training set against assigned labels.
double full_train_loss(const NetworkState& state, const DatasetBundle& bundle);

struct EpochSchedule {
  std::uint64_t max_epoch = 1;
  std::vector<std::uint64_t> points;

  bool contains(std::uint64_t epoch) const;
};

/// Every n * 10^m (n = 1..9) not above max_epoch, plus max_epoch.
EpochSchedule build_schedule(std::uint64_t max_epoch);

enum class PhaseMode { config, heuristic };

struct PhaseAnnotation {
  std::vector<std::uint64_t> boundaries;
  std::vector<std::string> labels;
  PhaseMode mode = PhaseMode::config;

  bool operator==(const PhaseAnnotation&) const = default;
};

/// Config mode validates and echoes `configured`. Heuristic mode needs at
/// least 10 probed epochs: the first boundary is the first epoch at which
/// noisy_train_noisy accuracy exceeds twice chance, the second is the
/// test-loss maximum after it, kept only if that maximum is above the loss at
/// the first boundary and test loss later falls at least 5% below it.
PhaseAnnotation annotate_phases(std::span<const MetricRecord> history, PhaseMode mode,
                                std::span<const std::uint64_t> configured = {},
                                std::size_t n_classes = 10);

std::string phases_json(const PhaseAnnotation& phases);
PhaseAnnotation parse_phases_json(const std::string& text);

/// CSV with header epoch,split,loss,accuracy,n. Reals use the shortest
/// round-trip representation; absent loss/accuracy are empty fields.
std::string format_metrics_csv(std::span<const MetricRecord> history);
std::vector<MetricRecord> parse_metrics_csv(const std::string& text);

void save_metrics(std::span<const MetricRecord> history, const std::filesystem::path& file);
std::vector<MetricRecord> load_metrics(const std::filesystem::path& file);

}  // namespace ddlab

#include <functional>

namespace ddlab {

using ChunkVisitor = std::function<void(const ForwardTrace& trace, std::span<const Sample> chunk)>;

/// Forwards `samples` in fixed-size chunks, in order, calling `visit` for each.
void for_each_chunk(const NetworkState& state, std::span<const Sample> samples,
                    const ChunkVisitor& visit, std::size_t chunk_size = 512);

/// Accumulates the four splits chunk by chunk, in sample order.
class SplitEvaluator {
 public:
  void add_train(const ForwardTrace& trace, std::span<const Sample> chunk);
  void add_test(const ForwardTrace& trace, std::span<const Sample> chunk);
  std::array<MetricRecord, 4> finish(std::uint64_t epoch) const;

  /// Sum of assigned-label losses over every training sample seen.
  double train_loss_sum() const { return train_total_.loss_sum(); }
  std::size_t train_count() const { return train_total_.count(); }

 private:
  SplitAccumulator clean_, noisy_noisy_, noisy_clean_, test_, train_total_;
};

}  // namespace ddlab
