#include <cmath>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "ddlab/error.hpp"
#include "ddlab/probes.hpp"
#include "ddlab/rng.hpp"
#include "ddlab/snapshot.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ddlab;
using ddlab::testing::TempDir;

namespace {

std::vector<Sample> random_samples(std::size_t n, std::size_t dim, std::size_t classes, Rng& rng,
                                   bool noisy = false) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    for (std::size_t k = 0; k < dim; ++k) s.pixels.push_back(rng.uniform());
    s.original_label = static_cast<int>(i % classes);
    s.assigned_label = noisy ? static_cast<int>((i + 1) % classes) : s.original_label;
    s.is_noisy = noisy;
    out.push_back(std::move(s));
  }
  return out;
}

oracle::Rows rows_of(const Matrix& m, const std::vector<Sample>& samples, int cls,
                     GroupMode mode = GroupMode::input_based) {
  oracle::Rows rows;
  for (std::size_t r = 0; r < samples.size(); ++r)
    if (group_label(samples[r], mode) == cls) rows.emplace_back(m.row(r).begin(), m.row(r).end());
  return rows;
}

ProbeSnapshot snapshot_with_means(std::uint64_t epoch, const std::vector<std::vector<double>>& layer_means) {
  std::vector<std::size_t> dims;
  for (const auto& m : layer_means) dims.push_back(m.size());
  ProbeSnapshot snap(epoch, dims, 2);
  for (std::size_t l = 0; l < layer_means.size(); ++l) {
    const auto& m = layer_means[l];
    snap.insert({l + 1, ProbeGroup::clean_train, GroupMode::input_based, 0},
                ActivationAccumulator(1, m, std::vector<double>(m.size(), 0.0)));
  }
  return snap;
}

}  // namespace

TEST_CASE("mean_class_activation: single sample and two orthogonal samples") {
  ForwardTrace t;
  t.hidden.push_back(Matrix(2, 2));
  t.hidden[0](0, 0) = 1.0;
  t.hidden[0](1, 1) = 1.0;
  const std::vector<Sample> samples = {Sample{{0.0}, 3, 3, false}, Sample{{0.0}, 3, 3, false}};
  const auto both = mean_class_activation(t, samples, 1, {GroupMode::input_based, 3}, ProbeGroup::clean_train);
  REQUIRE(both);
  CHECK(both->mean_vector == std::vector<double>{0.5, 0.5});
  CHECK(both->n == 2);

  const std::vector<Sample> one = {samples[0]};
  ForwardTrace t1;
  t1.hidden.push_back(Matrix(1, 2));
  t1.hidden[0](0, 0) = 0.25;
  t1.hidden[0](0, 1) = 4.0;
  const auto single = mean_class_activation(t1, one, 1, {GroupMode::input_based, 3}, ProbeGroup::clean_train);
  REQUIRE(single);
  CHECK(single->mean_vector == std::vector<double>{0.25, 4.0});

  CHECK_FALSE(mean_class_activation(t, samples, 1, {GroupMode::input_based, 1}, ProbeGroup::clean_train));
  CHECK_THROWS_AS(mean_class_activation(t, samples, 2, {GroupMode::input_based, 3}, ProbeGroup::clean_train),
                  std::out_of_range);
  CHECK_THROWS_AS(mean_class_activation(t, samples, 0, {GroupMode::input_based, 3}, ProbeGroup::clean_train),
                  std::out_of_range);
}

TEST_CASE("mean_class_activation: 50 samples through a fixed net match a two-pass oracle") {
  Rng rng(101);
  const NetworkState s = init_network(NetworkSpec{6, {7, 5}, 3, 102});
  const auto samples = random_samples(50, 6, 3, rng);
  const ForwardTrace t = forward(s, pixel_matrix(samples));
  ProbeSnapshot snap(1, {7, 5}, 3);
  snap.add(t, samples, ProbeGroup::clean_train);
  for (std::size_t layer = 1; layer <= 2; ++layer)
    for (int c = 0; c < 3; ++c) {
      const auto rows = rows_of(t.hidden[layer - 1], samples, c);
      const auto ref = oracle::mean_of(rows);
      const auto direct = mean_class_activation(t, samples, layer, {GroupMode::input_based, c}, ProbeGroup::clean_train);
      const auto stored = mean_class_activation(snap, layer, {GroupMode::input_based, c}, ProbeGroup::clean_train);
      REQUIRE(direct);
      REQUIRE(stored);
      CHECK(stored->n == rows.size());
      for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(std::abs(direct->mean_vector[i] - ref[i]) <= 1e-12);
        CHECK(std::abs(stored->mean_vector[i] - ref[i]) <= 1e-12);
        CHECK(direct->mean_vector[i] >= 0.0);
      }
    }
}

TEST_CASE("cosine_similarity: examples") {
  const std::vector<double> u = {3.0, 4.0, 1.0};
  CHECK(std::abs(cosine_similarity(u, u) - 1.0) <= 1e-12);
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(std::abs(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 1}) -
                 0.7071067811865476) <= 1e-15);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 1}),
                  UndefinedSimilarityError);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 1, 1}),
                  DimensionError);
}

TEST_CASE("cosine_similarity: symmetry, scale invariance, positive multiples") {
  Rng rng(111);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> u(12), v(12);
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    const double alpha = rng.uniform(0.01, 100.0);
    std::vector<double> scaled = u;
    for (double& x : scaled) x *= alpha;
    const double c = cosine_similarity(u, v);
    CHECK(c == cosine_similarity(v, u));
    CHECK(std::abs(cosine_similarity(scaled, v) - c) <= 1e-12);
    CHECK(std::abs(cosine_similarity(scaled, u) - 1.0) <= 1e-12);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(std::abs(c - oracle::cosine(u, v)) <= 1e-12);
  }
}

TEST_CASE("layer_similarity_sweep: identical groups give 1 everywhere") {
  Rng rng(121);
  const NetworkState s = init_network(NetworkSpec{5, {6, 4}, 3, 122});
  const auto samples = random_samples(30, 5, 3, rng);
  const ForwardTrace t = forward(s, pixel_matrix(samples));
  ProbeSnapshot snap(10, {6, 4}, 3);
  snap.add(t, samples, ProbeGroup::clean_train);
  snap.add(t, samples, ProbeGroup::noisy_train);
  const auto recs = layer_similarity_sweep(snap, standard_similarity_pairs().front());
  REQUIRE(recs.size() == 2);
  for (const auto& r : recs) {
    CHECK(r.epoch == 10);
    CHECK(r.excluded_classes.empty());
    for (const auto& cs : r.per_class) CHECK(std::abs(*cs - 1.0) <= 1e-12);
    CHECK(std::abs(*r.mean - 1.0) <= 1e-12);
  }
}

TEST_CASE("layer_similarity_sweep: zero-weight net is undefined") {
  NetworkState s = init_network(NetworkSpec{5, {4}, 2, 0});
  for (auto& layer : s.layers) layer.weight.fill(0.0);
  Rng rng(131);
  const auto samples = random_samples(10, 5, 2, rng);
  const ForwardTrace t = forward(s, pixel_matrix(samples));
  ProbeSnapshot snap(1, {4}, 2);
  snap.add(t, samples, ProbeGroup::clean_train);
  snap.add(t, samples, ProbeGroup::noisy_train);
  CHECK_THROWS_AS(layer_similarity_sweep(snap, standard_similarity_pairs().front()),
                  UndefinedSimilarityError);
}

TEST_CASE("layer_similarity_sweep: random net, two classes, matches the direct oracle") {
  Rng rng(141);
  const NetworkState s = init_network(NetworkSpec{8, {6, 5, 4}, 2, 142});
  const auto clean = random_samples(20, 8, 2, rng);
  const auto noisy = random_samples(20, 8, 2, rng, true);
  const ForwardTrace tc = forward(s, pixel_matrix(clean));
  const ForwardTrace tn = forward(s, pixel_matrix(noisy));
  ProbeSnapshot snap(5, {6, 5, 4}, 2);
  snap.add(tc, clean, ProbeGroup::clean_train);
  snap.add(tn, noisy, ProbeGroup::noisy_train);
  const auto recs = layer_similarity_sweep(snap, standard_similarity_pairs().front());
  REQUIRE(recs.size() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    std::vector<oracle::Rows> a, b;
    for (int c = 0; c < 2; ++c) {
      a.push_back(rows_of(tc.hidden[l], clean, c));
      b.push_back(rows_of(tn.hidden[l], noisy, c));  // input-based: original label
    }
    const auto ref = oracle::layer_similarity(a, b);
    CHECK(recs[l].layer == l + 1);
    for (int c = 0; c < 2; ++c) CHECK(std::abs(*recs[l].per_class[c] - *ref.per_class[c]) <= 1e-12);
    CHECK(std::abs(*recs[l].mean - ref.mean) <= 1e-12);
    CHECK(std::abs(recs[l].std_across_classes - ref.std) <= 1e-12);
    CHECK(*recs[l].mean >= 0.0);
    CHECK(*recs[l].mean <= 1.0 + 1e-12);
  }
}

TEST_CASE("layer_similarity: classes missing on one side are excluded and flagged") {
  Rng rng(151);
  const NetworkState s = init_network(NetworkSpec{5, {4}, 3, 152});
  const auto clean = random_samples(30, 5, 3, rng);
  auto noisy = random_samples(30, 5, 3, rng, true);
  std::erase_if(noisy, [](const Sample& x) { return x.original_label == 1; });
  ProbeSnapshot snap(1, {4}, 3);
  snap.add(forward(s, pixel_matrix(clean)), clean, ProbeGroup::clean_train);
  snap.add(forward(s, pixel_matrix(noisy)), noisy, ProbeGroup::noisy_train);
  const auto rec = layer_similarity(snap, 1, standard_similarity_pairs().front());
  CHECK(rec.excluded_classes == std::vector<int>{1});
  CHECK_FALSE(rec.per_class[1]);
  REQUIRE(rec.mean);
  CHECK(std::abs(*rec.mean - (*rec.per_class[0] + *rec.per_class[2]) / 2.0) <= 1e-15);

  // nothing shared at all: no mean
  const auto empty = layer_similarity(snap, 1, standard_similarity_pairs()[1]);
  CHECK_FALSE(empty.mean);
  CHECK(empty.excluded_classes.size() == 3);
}

TEST_CASE("split_test_by_prediction") {
  NetworkState s = init_network(NetworkSpec{4, {3}, 5, 0});
  for (auto& layer : s.layers) layer.weight.fill(0.0);
  Rng rng(161);
  const auto test = random_samples(25, 4, 5, rng);
  const auto split = split_test_by_prediction(s, test);
  CHECK(split.correct.size() + split.incorrect.size() == 25);
  for (const auto& x : split.correct) CHECK(x.original_label == 0);
  CHECK(split.correct.size() == 5);

  // a trained toy problem: output bias forces class 2, only class-2 samples are correct
  s.layers[1].bias[2] = 5.0;
  const auto biased = split_test_by_prediction(s, test);
  for (const auto& x : biased.correct) CHECK(x.original_label == 2);
  for (const auto& x : biased.incorrect) CHECK(x.original_label != 2);
  std::vector<Sample> only_two;
  for (const auto& x : test)
    if (x.original_label == 2) only_two.push_back(x);
  const auto fitted = split_test_by_prediction(s, only_two);
  CHECK(fitted.correct.size() == only_two.size());
  CHECK(fitted.incorrect.empty());
}

TEST_CASE("large_activation_ratio: examples") {
  std::vector<double> a(8, 1.0);
  a[3] = 10.0;
  const auto r = large_activation_ratio(a, 3);
  CHECK(r.ratio == 10.0);
  CHECK_FALSE(r.is_large);
  CHECK(r.m == 8);
  CHECK(r.a_max == 10.0);
  CHECK(r.rms_rest == 1.0);
  a[3] = 10.000001;
  CHECK(large_activation_ratio(a, 3).is_large);

  const std::vector<double> equal(5, 2.5);
  CHECK(large_activation_ratio(equal, 0).ratio == 1.0);

  CHECK_THROWS_AS(large_activation_ratio(std::vector<double>{3.0}, 0), std::invalid_argument);
  CHECK_THROWS_AS(large_activation_ratio(equal, 5), std::invalid_argument);
  CHECK_THROWS_AS(large_activation_ratio(std::vector<double>{3.0, 0.0, 0.0}, 0), UndefinedRatioError);
}

TEST_CASE("large_activation_ratio: 8 neurons x 100 samples match the direct formula") {
  Rng rng(171);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix act(100, 8);
    for (double& v : act.flat()) v = std::max(0.0, rng.uniform(-0.5, 2.0));
    std::vector<double> means(8, 0.0);
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t r = 0; r < 100; ++r) means[i] += act(r, i);
      means[i] /= 100.0;
    }
    ProbeSnapshot snap(1, {8}, 2);
    ForwardTrace t;
    t.hidden.push_back(act);
    std::vector<Sample> samples;
    for (int r = 0; r < 100; ++r) samples.push_back(Sample{{0.0}, r % 2, r % 2, false});
    snap.add(t, samples, ProbeGroup::clean_train);

    const std::size_t tracked = rng.below(8);
    const auto rec = large_activation_ratio(snap, 1, tracked);
    CHECK(std::abs(rec.ratio - oracle::large_activation_ratio(means, tracked)) <= 1e-12);
    CHECK(rec.ratio == rec.a_max / rec.rms_rest);

    // uniform scaling leaves the ratio unchanged
    std::vector<double> scaled = means;
    for (double& v : scaled) v *= 37.5;
    CHECK(std::abs(large_activation_ratio(scaled, tracked).ratio - rec.ratio) <= 1e-12);
  }
}

TEST_CASE("training_neuron_means merges clean and noisy samples") {
  ProbeSnapshot snap(1, {2}, 2);
  snap.insert({1, ProbeGroup::clean_train, GroupMode::input_based, 0},
              ActivationAccumulator(2, {1.0, 2.0}, {0.0, 0.0}));
  snap.insert({1, ProbeGroup::noisy_train, GroupMode::input_based, 1},
              ActivationAccumulator(2, {3.0, 6.0}, {0.0, 0.0}));
  snap.insert({1, ProbeGroup::test, GroupMode::input_based, 1},
              ActivationAccumulator(4, {100.0, 100.0}, {0.0, 0.0}));
  CHECK(training_neuron_means(snap, 1) == std::vector<double>{2.0, 4.0});
}

TEST_CASE("track_final_epoch_neuron") {
  std::vector<std::vector<double>> series;
  for (int t = 0; t < 10; ++t) {
    std::vector<double> a(6, 1.0);
    a[1] = 5.0 - 0.5 * t;   // early leader
    a[4] = 1.0 + 0.8 * t;   // final leader
    series.push_back(a);
  }
  CHECK(track_final_epoch_neuron(series) == 4);
  series.back() = std::vector<double>(6, 2.0);
  CHECK(track_final_epoch_neuron(series) == 0);

  std::vector<ProbeSnapshot> snaps = {snapshot_with_means(100, {{1.0, 9.0, 1.0}}),
                                      snapshot_with_means(1, {{9.0, 1.0, 1.0}})};
  CHECK(track_final_epoch_neuron(snaps, 1) == 1);
}

TEST_CASE("per_class_large_activation matches a two-pass oracle") {
  Rng rng(181);
  const NetworkState s = init_network(NetworkSpec{6, {5}, 3, 182});
  const auto clean = random_samples(40, 6, 3, rng);
  const auto noisy = random_samples(31, 6, 3, rng, true);
  const ForwardTrace tc = forward(s, pixel_matrix(clean));
  const ForwardTrace tn = forward(s, pixel_matrix(noisy));
  ProbeSnapshot snap(1, {5}, 3);
  snap.add(tc, clean, ProbeGroup::clean_train);
  snap.add(tn, noisy, ProbeGroup::noisy_train);
  const std::size_t tracked = 2;
  const std::vector<ProbeGroup> groups = {ProbeGroup::clean_train, ProbeGroup::noisy_train};
  for (GroupMode mode : {GroupMode::input_based, GroupMode::label_based}) {
    const auto res = per_class_large_activation(snap, 1, tracked, mode, groups);
    CHECK(res.entries.size() == 6);
    for (const auto& e : res.entries) {
      const auto& samples = e.group == ProbeGroup::clean_train ? clean : noisy;
      const auto& trace = e.group == ProbeGroup::clean_train ? tc : tn;
      const auto rows = rows_of(trace.hidden[0], samples, e.class_id, mode);
      CHECK(e.n == rows.size());
      CHECK(std::abs(e.mean - oracle::mean_of(rows)[tracked]) <= 1e-12);
      CHECK(std::abs(e.std - oracle::std_of(rows, tracked)) <= 1e-12);
    }
    oracle::Rows all_noisy;
    for (std::size_t r = 0; r < noisy.size(); ++r)
      all_noisy.emplace_back(tn.hidden[0].row(r).begin(), tn.hidden[0].row(r).end());
    REQUIRE(res.noisy_reference);
    CHECK(std::abs(*res.noisy_reference - oracle::mean_of(all_noisy)[tracked]) <= 1e-12);
  }
  // clean groups agree across modes
  const auto a = per_class_large_activation(snap, 1, tracked, GroupMode::input_based, std::vector<ProbeGroup>{ProbeGroup::clean_train});
  const auto b = per_class_large_activation(snap, 1, tracked, GroupMode::label_based, std::vector<ProbeGroup>{ProbeGroup::clean_train});
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].mean == b.entries[i].mean);
    CHECK(a.entries[i].std == b.entries[i].std);
  }
}

TEST_CASE("per_class_large_activation: single-sample class has std 0, empty class absent") {
  ProbeSnapshot snap(1, {3}, 3);
  ForwardTrace t;
  t.hidden.push_back(Matrix(1, 3, 2.0));
  const std::vector<Sample> one = {Sample{{0.0}, 1, 1, false}};
  snap.add(t, one, ProbeGroup::clean_train);
  const auto res = per_class_large_activation(snap, 1, 0, GroupMode::input_based,
                                              std::vector<ProbeGroup>{ProbeGroup::clean_train});
  REQUIRE(res.entries.size() == 1);
  CHECK(res.entries[0].class_id == 1);
  CHECK(res.entries[0].std == 0.0);
  CHECK_FALSE(res.noisy_reference);
}

TEST_CASE("ActivationAccumulator: merge equals sequential accumulation") {
  Rng rng(191);
  ActivationAccumulator whole(4), left(4), right(4);
  oracle::Rows rows;
  for (int i = 0; i < 57; ++i) {
    std::vector<double> x(4);
    for (double& v : x) v = rng.uniform(0.0, 3.0);
    whole.add(x);
    (i < 20 ? left : right).add(x);
    rows.push_back(x);
  }
  left.merge(right);
  CHECK(left.count() == 57);
  const auto mean = oracle::mean_of(rows);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(left.mean()[i] - mean[i]) <= 1e-12);
    CHECK(std::abs(whole.mean()[i] - mean[i]) <= 1e-12);
    CHECK(std::abs(left.stddev(i) - oracle::std_of(rows, i)) <= 1e-12);
    CHECK(std::abs(whole.stddev(i) - oracle::std_of(rows, i)) <= 1e-12);
  }
  ActivationAccumulator empty(4);
  empty.merge(whole);
  CHECK(empty == whole);
}

TEST_CASE("snapshot: write/read round trip is exact") {
  TempDir dir("snap_rt");
  Rng rng(201);
  const NetworkState s = init_network(NetworkSpec{5, {6, 3}, 3, 202});
  const auto clean = random_samples(17, 5, 3, rng);
  const auto noisy = random_samples(8, 5, 3, rng, true);
  ProbeSnapshot snap(1234, {6, 3}, 3, {2});
  snap.add(forward(s, pixel_matrix(clean)), clean, ProbeGroup::clean_train);
  snap.add(forward(s, pixel_matrix(noisy)), noisy, ProbeGroup::noisy_train);
  write_snapshot(snap, dir.path());
  CHECK(std::filesystem::exists(dir / (snapshot_stem(1234) + ".jsonl")));
  CHECK(std::filesystem::exists(dir / (snapshot_stem(1234) + ".bin")));
  CHECK(snapshot_stem(1234) == "epoch_00001234");
  const ProbeSnapshot back = read_snapshot(dir / (snapshot_stem(1234) + ".jsonl"));
  CHECK(back == snap);
  CHECK(back.probed_layers() == std::vector<std::size_t>{2});
  CHECK(snap.find({1, ProbeGroup::clean_train, GroupMode::input_based, 0}) == nullptr);

  ProbeSnapshot early(7, {6, 3}, 3);
  write_snapshot(early, dir.path());
  const auto all = read_snapshots(dir.path());
  REQUIRE(all.size() == 2);
  CHECK(all[0].epoch() == 7);
  CHECK(all[1].epoch() == 1234);

  std::ofstream(dir / "epoch_00000009.jsonl") << "{not json\n";
  CHECK_THROWS_AS(read_snapshot(dir / "epoch_00000009.jsonl"), ParseError);
}
