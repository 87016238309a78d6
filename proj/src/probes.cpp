#include "ddlab/probes.hpp"

#include <algorithm>
#include <cmath>

#include "ddlab/error.hpp"

namespace ddlab {

std::optional<ClassMeanActivation> mean_class_activation(const ForwardTrace& trace,
                                                         std::span<const Sample> samples,
                                                         std::size_t layer, GroupKey key,
                                                         ProbeGroup group) {
  if (layer == 0 || layer > trace.hidden.size())
    throw std::out_of_range("hidden layer " + std::to_string(layer) + " out of range");
  const Matrix& h = trace.hidden[layer - 1];
  if (h.rows() != samples.size()) throw DimensionError("trace rows do not match samples");
  ActivationAccumulator acc(h.cols());
  for (std::size_t r = 0; r < samples.size(); ++r)
    if (group_label(samples[r], key.mode) == key.class_id) acc.add(h.row(r));
  if (acc.count() == 0) return std::nullopt;
  return ClassMeanActivation{layer, key.class_id, group, key.mode, acc.mean(), acc.count()};
}

std::optional<ClassMeanActivation> mean_class_activation(const ProbeSnapshot& snapshot,
                                                         std::size_t layer, GroupKey key,
                                                         ProbeGroup group) {
  snapshot.layer_dim(layer);
  const auto* acc = snapshot.find({layer, group, key.mode, key.class_id});
  if (acc == nullptr) return std::nullopt;
  return ClassMeanActivation{layer, key.class_id, group, key.mode, acc->mean(), acc->count()};
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine_similarity: length mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0)
    throw UndefinedSimilarityError("cosine similarity undefined for a zero-norm vector");
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

const std::vector<SimilarityPair>& standard_similarity_pairs() {
  static const std::vector<SimilarityPair> pairs = {
      {"clean_vs_noisy", {ProbeGroup::clean_train}, {ProbeGroup::noisy_train}},
      {"test_correct_vs_clean", {ProbeGroup::test_correct}, {ProbeGroup::clean_train}},
      {"test_correct_vs_noisy", {ProbeGroup::test_correct}, {ProbeGroup::noisy_train}},
      {"test_incorrect_vs_clean", {ProbeGroup::test_incorrect}, {ProbeGroup::clean_train}},
      {"test_incorrect_vs_noisy", {ProbeGroup::test_incorrect}, {ProbeGroup::noisy_train}},
  };
  return pairs;
}

SimilarityRecord layer_similarity(const ProbeSnapshot& snapshot, std::size_t layer,
                                  const SimilarityPair& pair) {
  snapshot.layer_dim(layer);
  SimilarityRecord rec;
  rec.epoch = snapshot.epoch();
  rec.layer = layer;
  rec.pair = pair.name;
  std::vector<double> included;
  for (std::size_t c = 0; c < snapshot.n_classes(); ++c) {
    const int cls = static_cast<int>(c);
    const auto* a = snapshot.find({layer, pair.a.group, pair.a.mode, cls});
    const auto* b = snapshot.find({layer, pair.b.group, pair.b.mode, cls});
    if (a == nullptr || b == nullptr) {
      rec.per_class.emplace_back();
      rec.excluded_classes.push_back(cls);
      continue;
    }
    double cs;
    try {
      cs = cosine_similarity(a->mean(), b->mean());
    } catch (const UndefinedSimilarityError&) {
      throw UndefinedSimilarityError("cosine similarity undefined: zero mean activation in " +
                                     pair.name + ", layer " + std::to_string(layer) + ", class " +
                                     std::to_string(cls));
    }
    rec.per_class.emplace_back(cs);
    included.push_back(cs);
  }
  if (!included.empty()) {
    double sum = 0.0;
    for (double v : included) sum += v;
    const double mean = sum / static_cast<double>(included.size());
    double ss = 0.0;
    for (double v : included) ss += (v - mean) * (v - mean);
    rec.mean = mean;
    rec.std_across_classes = std::sqrt(ss / static_cast<double>(included.size()));
  }
  return rec;
}

std::vector<SimilarityRecord> layer_similarity_sweep(const ProbeSnapshot& snapshot,
                                                     const SimilarityPair& pair) {
  std::vector<SimilarityRecord> records;
  for (std::size_t layer : snapshot.probed_layers())
    records.push_back(layer_similarity(snapshot, layer, pair));
  return records;
}

PredictionSplit split_test_by_prediction(const NetworkState& state,
                                         std::span<const Sample> test) {
  PredictionSplit split;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    const auto chunk = test.subspan(start, std::min(kChunk, test.size() - start));
    const auto pred = predictions(forward(state, pixel_matrix(chunk)));
    for (std::size_t i = 0; i < chunk.size(); ++i)
      (pred[i] == chunk[i].original_label ? split.correct : split.incorrect).push_back(chunk[i]);
  }
  return split;
}

LargeActivationRecord large_activation_ratio(std::span<const double> neuron_means,
                                             std::size_t tracked) {
  const std::size_t m = neuron_means.size();
  if (m < 2) throw std::invalid_argument("large_activation_ratio: layer needs >= 2 neurons");
  if (tracked >= m) throw std::invalid_argument("large_activation_ratio: tracked index out of range");
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (i != tracked) ss += neuron_means[i] * neuron_means[i];
  if (ss == 0.0)
    throw UndefinedRatioError("large activation ratio undefined: all other activations are zero");
  LargeActivationRecord rec;
  rec.tracked_neuron = tracked;
  rec.m = m;
  rec.a_max = neuron_means[tracked];
  rec.rms_rest = std::sqrt(ss / static_cast<double>(m - 1));
  rec.ratio = rec.a_max / rec.rms_rest;
  rec.is_large = rec.ratio > kLargeActivationThreshold;
  return rec;
}

std::vector<double> training_neuron_means(const ProbeSnapshot& snapshot, std::size_t layer) {
  ActivationAccumulator total = snapshot.group_total(layer, ProbeGroup::clean_train,
                                                     GroupMode::input_based);
  total.merge(snapshot.group_total(layer, ProbeGroup::noisy_train, GroupMode::input_based));
  if (total.count() == 0)
    throw std::invalid_argument("snapshot has no training activations at layer " +
                                std::to_string(layer));
  return total.mean();
}

LargeActivationRecord large_activation_ratio(const ProbeSnapshot& snapshot, std::size_t layer,
                                             std::size_t tracked) {
  LargeActivationRecord rec =
      large_activation_ratio(training_neuron_means(snapshot, layer), tracked);
  rec.epoch = snapshot.epoch();
  rec.layer = layer;
  return rec;
}

std::size_t track_final_epoch_neuron(std::span<const std::vector<double>> neuron_means_series) {
  if (neuron_means_series.empty() || neuron_means_series.back().empty())
    throw std::invalid_argument("track_final_epoch_neuron: no final epoch");
  const auto& last = neuron_means_series.back();
  return static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin());
}

std::size_t track_final_epoch_neuron(std::span<const ProbeSnapshot> snapshots, std::size_t layer) {
  if (snapshots.empty()) throw std::invalid_argument("track_final_epoch_neuron: no snapshots");
  const auto final = std::max_element(
      snapshots.begin(), snapshots.end(),
      [](const ProbeSnapshot& a, const ProbeSnapshot& b) { return a.epoch() < b.epoch(); });
  const std::vector<std::vector<double>> series{training_neuron_means(*final, layer)};
  return track_final_epoch_neuron(series);
}

PerClassMagnitudes per_class_large_activation(const ProbeSnapshot& snapshot, std::size_t layer,
                                              std::size_t tracked, GroupMode mode,
                                              std::span<const ProbeGroup> groups) {
  if (tracked >= snapshot.layer_dim(layer))
    throw std::invalid_argument("per_class_large_activation: tracked index out of range");
  PerClassMagnitudes out;
  for (ProbeGroup group : groups) {
    for (std::size_t c = 0; c < snapshot.n_classes(); ++c) {
      const auto* acc = snapshot.find({layer, group, mode, static_cast<int>(c)});
      if (acc == nullptr) continue;
      out.entries.push_back({group, mode, static_cast<int>(c), acc->count(),
                             acc->mean()[tracked], acc->stddev(tracked)});
    }
  }
  const auto noisy = snapshot.group_total(layer, ProbeGroup::noisy_train, GroupMode::input_based);
  if (noisy.count() > 0) out.noisy_reference = noisy.mean()[tracked];
  return out;
}

}  // namespace ddlab
