#include <cstdint>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "ddlab/checkpoint.hpp"
#include "ddlab/data.hpp"
#include "ddlab/error.hpp"
#include "test_util.hpp"

using namespace ddlab;
using ddlab::testing::TempDir;

namespace {

std::vector<std::uint8_t> cifar_record(std::uint8_t label, std::uint8_t seed) {
  std::vector<std::uint8_t> rec(kCifarRecordBytes);
  rec[0] = label;
  for (std::size_t i = 1; i < rec.size(); ++i) rec[i] = static_cast<std::uint8_t>((i * 7 + seed) % 256);
  return rec;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DatasetBundle labelled_bundle(std::size_t n, std::size_t classes = 10) {
  DatasetBundle b;
  b.n_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    b.train.push_back(Sample{{0.0}, c, c, false});
  }
  for (std::size_t i = 0; i < 20; ++i) {
    const int c = static_cast<int>(i % classes);
    b.test.push_back(Sample{{0.0}, c, c, false});
  }
  return b;
}

}  // namespace

TEST_CASE("read_cifar10_batch: hand-crafted two-record file") {
  TempDir dir("cifar_two");
  auto bytes = cifar_record(6, 0);
  bytes[1] = 255;
  bytes[2] = 0;
  bytes[3] = 128;
  bytes[4] = 1;
  bytes[5] = 254;
  const auto second = cifar_record(3, 9);
  bytes.insert(bytes.end(), second.begin(), second.end());
  write_bytes(dir / "b.bin", bytes);

  const auto samples = read_cifar10_batch(dir / "b.bin");
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].original_label == 6);
  CHECK(samples[0].assigned_label == 6);
  CHECK_FALSE(samples[0].is_noisy);
  CHECK(samples[0].pixels.size() == 3072);
  CHECK(samples[0].pixels[0] == 1.0);
  CHECK(samples[0].pixels[1] == 0.0);
  CHECK(samples[0].pixels[2] == 128.0 / 255.0);
  CHECK(samples[0].pixels[3] == 1.0 / 255.0);
  CHECK(samples[0].pixels[4] == 254.0 / 255.0);
  CHECK(samples[1].original_label == 3);
}

TEST_CASE("read_cifar10_batch: errors") {
  TempDir dir("cifar_bad");
  CHECK_THROWS_AS(read_cifar10_batch(dir / "missing.bin"), IoError);
  auto bytes = cifar_record(1, 0);
  bytes.pop_back();
  write_bytes(dir / "short.bin", bytes);
  CHECK_THROWS_AS(read_cifar10_batch(dir / "short.bin"), ParseError);
  write_bytes(dir / "label.bin", cifar_record(10, 0));
  CHECK_THROWS_AS(read_cifar10_batch(dir / "label.bin"), ParseError);
}

TEST_CASE("load_cifar10: train and test batches in order") {
  TempDir dir("cifar_dir");
  for (int b = 1; b <= 5; ++b) {
    std::vector<std::uint8_t> bytes;
    for (int r = 0; r < 3; ++r) {
      const auto rec = cifar_record(static_cast<std::uint8_t>((b + r) % 10), static_cast<std::uint8_t>(b));
      bytes.insert(bytes.end(), rec.begin(), rec.end());
    }
    write_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"), bytes);
  }
  write_bytes(dir / "test_batch.bin", cifar_record(4, 77));
  const DatasetBundle bundle = load_cifar10(dir.path());
  CHECK(bundle.train.size() == 15);
  CHECK(bundle.test.size() == 1);
  CHECK(bundle.train[0].original_label == 1);
  CHECK(bundle.train[14].original_label == 7);
  CHECK(bundle.test[0].original_label == 4);

  std::filesystem::remove(dir / "data_batch_3.bin");
  CHECK_THROWS_AS(load_cifar10(dir.path()), IoError);
}

TEST_CASE("cifar round trip reproduces the bytes") {
  TempDir dir("cifar_rt");
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < 4; ++r) {
    const auto rec = cifar_record(static_cast<std::uint8_t>(r * 3 % 10), static_cast<std::uint8_t>(r * 31));
    bytes.insert(bytes.end(), rec.begin(), rec.end());
  }
  write_bytes(dir / "in.bin", bytes);
  const auto samples = read_cifar10_batch(dir / "in.bin");
  write_cifar10_batch(samples, dir / "out.bin");
  CHECK(read_file_bytes(dir / "out.bin") == bytes);
}

TEST_CASE("inject_label_noise: p = 0 gives no noisy samples") {
  const DatasetBundle b = inject_label_noise(labelled_bundle(500), 0.0, 3);
  for (const auto& s : b.train) {
    CHECK_FALSE(s.is_noisy);
    CHECK(s.assigned_label == s.original_label);
  }
  const auto split = split_clean_noisy(b);
  CHECK(split.clean.size() == 500);
  CHECK(split.noisy.empty());
}

TEST_CASE("inject_label_noise: p = 0.3 on 50,000 samples") {
  const DatasetBundle b = inject_label_noise(labelled_bundle(50000), 0.3, 1);
  std::size_t noisy = 0, violations = 0;
  std::vector<std::size_t> reassigned(10, 0);
  for (const auto& s : b.train) {
    if (s.is_noisy) {
      ++noisy;
      if (s.assigned_label == s.original_label) ++violations;
      ++reassigned[static_cast<std::size_t>(s.assigned_label)];
    } else if (s.assigned_label != s.original_label) {
      ++violations;
    }
  }
  CHECK(noisy >= 14450);
  CHECK(noisy <= 15550);
  CHECK(violations == 0);
  // every class receives reassigned labels
  for (std::size_t c = 0; c < 10; ++c) CHECK(reassigned[c] > 0);
  for (std::size_t i = 0; i < b.test.size(); ++i)
    CHECK(b.test[i].assigned_label == b.test[i].original_label);

  const DatasetBundle again = inject_label_noise(labelled_bundle(50000), 0.3, 1);
  CHECK(again == b);
  const DatasetBundle other = inject_label_noise(labelled_bundle(50000), 0.3, 2);
  CHECK_FALSE(other == b);
}

TEST_CASE("inject_label_noise: invalid probability") {
  CHECK_THROWS_AS(inject_label_noise(labelled_bundle(10), 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(inject_label_noise(labelled_bundle(10), -0.1, 0), std::invalid_argument);
}

TEST_CASE("split_clean_noisy partitions the training set") {
  const DatasetBundle b = inject_label_noise(labelled_bundle(1000), 0.3, 1);
  const auto split = split_clean_noisy(b);
  CHECK(split.clean.size() + split.noisy.size() == 1000);
  for (const auto& s : split.clean) CHECK_FALSE(s.is_noisy);
  for (const auto& s : split.noisy) CHECK(s.is_noisy);
  const auto again = split_clean_noisy(inject_label_noise(labelled_bundle(1000), 0.3, 1));
  CHECK(again.noisy == split.noisy);
}

TEST_CASE("group_samples: modes and partition") {
  const DatasetBundle b = inject_label_noise(labelled_bundle(400), 0.3, 5);
  const auto split = split_clean_noisy(b);
  const auto a = group_samples(split.clean, {GroupMode::input_based, 6});
  const auto l = group_samples(split.clean, {GroupMode::label_based, 6});
  CHECK(a == l);

  const Sample noisy{{0.0}, 6, 2, true};
  const std::vector<Sample> one = {noisy};
  CHECK(group_samples(one, {GroupMode::input_based, 6}).size() == 1);
  CHECK(group_samples(one, {GroupMode::input_based, 2}).empty());
  CHECK(group_samples(one, {GroupMode::label_based, 2}).size() == 1);

  for (GroupMode mode : {GroupMode::input_based, GroupMode::label_based}) {
    std::size_t total = 0;
    for (int c = 0; c < 10; ++c) total += group_samples(b.train, {mode, c}).size();
    CHECK(total == b.train.size());
  }
}

TEST_CASE("make_synthetic: balanced, deterministic, clipped") {
  SyntheticParams p;
  p.n_train = 100;
  p.n_test = 30;
  p.dim = 16;
  p.seed = 4;
  const DatasetBundle b = make_synthetic(p);
  CHECK(b.train.size() == 100);
  CHECK(b.test.size() == 30);
  std::vector<int> counts(10, 0);
  for (const auto& s : b.train) {
    ++counts[static_cast<std::size_t>(s.original_label)];
    CHECK(s.pixels.size() == 16);
    for (double v : s.pixels) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  for (int c : counts) CHECK(c == 10);
  CHECK(make_synthetic(p) == b);
  p.seed = 5;
  CHECK_FALSE(make_synthetic(p) == b);
}

TEST_CASE("make_synthetic: sigma 0 makes each class a single point") {
  SyntheticParams p;
  p.n_train = 50;
  p.n_test = 10;
  p.dim = 8;
  p.sigma = 0.0;
  const DatasetBundle b = make_synthetic(p);
  for (const auto& s : b.train)
    CHECK(s.pixels == b.train[static_cast<std::size_t>(s.original_label)].pixels);
  CHECK(b.test[3].pixels == b.train[3].pixels);
}

TEST_CASE("noise mask round trip") {
  TempDir dir("mask");
  const DatasetBundle b = inject_label_noise(labelled_bundle(300), 0.3, 9);
  write_noise_mask(b, dir / "mask.csv");
  DatasetBundle fresh = labelled_bundle(300);
  fresh.noise_probability = b.noise_probability;
  fresh.noise_seed = b.noise_seed;
  const DatasetBundle restored = apply_noise_mask(fresh, dir / "mask.csv");
  CHECK(restored.train == b.train);

  std::ofstream(dir / "bad.csv") << "index,assigned_label\n0,x\n";
  CHECK_THROWS_AS(apply_noise_mask(labelled_bundle(10), dir / "bad.csv"), ParseError);
  std::ofstream(dir / "range.csv") << "index,assigned_label\n50,1\n";
  CHECK_THROWS_AS(apply_noise_mask(labelled_bundle(10), dir / "range.csv"), ParseError);
}

TEST_CASE("bundle metadata lists counts and noise settings") {
  const DatasetBundle b = inject_label_noise(labelled_bundle(100), 0.3, 12);
  const auto j = nlohmann::json::parse(bundle_metadata_json(b));
  CHECK(j["noise_seed"] == 12);
  CHECK(j["noise_probability"] == 0.3);
  CHECK(j.dump().find("mt19937_64") != std::string::npos);
}
