#include "ddlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ddlab/error.hpp"
#include "ddlab/rng.hpp"

namespace ddlab {

std::size_t DatasetBundle::input_dim() const {
  if (!train.empty()) return train.front().pixels.size();
  if (!test.empty()) return test.front().pixels.size();
  return 0;
}

const char* to_string(GroupMode mode) {
  return mode == GroupMode::input_based ? "input_based" : "label_based";
}

GroupMode parse_group_mode(const std::string& text) {
  if (text == "input_based") return GroupMode::input_based;
  if (text == "label_based") return GroupMode::label_based;
  throw std::invalid_argument("unknown grouping mode '" + text + "'");
}

std::vector<Sample> read_cifar10_batch(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-10 batch " + file.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  if (bytes.size() % kCifarRecordBytes != 0)
    throw ParseError(file.string() + ": length " + std::to_string(bytes.size()) +
                     " is not a multiple of " + std::to_string(kCifarRecordBytes));
  std::vector<Sample> samples(bytes.size() / kCifarRecordBytes);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const unsigned char* record = bytes.data() + i * kCifarRecordBytes;
    if (record[0] > 9)
      throw ParseError(file.string() + ": record " + std::to_string(i) + " has label byte " +
                       std::to_string(record[0]));
    Sample& s = samples[i];
    s.original_label = s.assigned_label = record[0];
    s.pixels.resize(kCifarPixels);
    for (std::size_t k = 0; k < kCifarPixels; ++k) s.pixels[k] = record[k + 1] / 255.0;
  }
  return samples;
}

void write_cifar10_batch(std::span<const Sample> samples, const std::filesystem::path& file) {
  std::vector<char> bytes;
  bytes.reserve(samples.size() * kCifarRecordBytes);
  for (const Sample& s : samples) {
    if (s.pixels.size() != kCifarPixels)
      throw DimensionError("write_cifar10_batch: sample is not 3072 pixels");
    bytes.push_back(static_cast<char>(s.original_label));
    for (double p : s.pixels)
      bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0))));
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DatasetBundle load_cifar10(const std::filesystem::path& directory) {
  DatasetBundle bundle;
  for (int i = 1; i <= 5; ++i) {
    auto part = read_cifar10_batch(directory / ("data_batch_" + std::to_string(i) + ".bin"));
    std::move(part.begin(), part.end(), std::back_inserter(bundle.train));
  }
  bundle.test = read_cifar10_batch(directory / "test_batch.bin");
  return bundle;
}

DatasetBundle inject_label_noise(DatasetBundle bundle, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("noise probability must be in [0, 1)");
  if (bundle.n_classes < 2 && p > 0.0)
    throw std::invalid_argument("label noise needs at least two classes");
  Rng rng(seed);
  const auto others = static_cast<std::uint64_t>(bundle.n_classes - 1);
  for (Sample& s : bundle.train) {
    s.assigned_label = s.original_label;
    s.is_noisy = false;
    if (rng.uniform() < p) {
      const int k = static_cast<int>(rng.below(others));
      s.assigned_label = k < s.original_label ? k : k + 1;
      s.is_noisy = true;
    }
  }
  bundle.noise_probability = p;
  bundle.noise_seed = seed;
  return bundle;
}

CleanNoisySplit split_clean_noisy(const DatasetBundle& bundle) {
  CleanNoisySplit split;
  for (const Sample& s : bundle.train) (s.is_noisy ? split.noisy : split.clean).push_back(s);
  return split;
}

std::vector<Sample> group_samples(std::span<const Sample> samples, GroupKey key) {
  std::vector<Sample> out;
  for (const Sample& s : samples)
    if (group_label(s, key.mode) == key.class_id) out.push_back(s);
  return out;
}

DatasetBundle make_synthetic(const SyntheticParams& params) {
  if (params.n_train == 0 || params.n_test == 0 || params.n_classes == 0 || params.dim == 0)
    throw std::invalid_argument("make_synthetic: sizes must be positive");
  if (!(params.sigma >= 0.0)) throw std::invalid_argument("make_synthetic: sigma must be >= 0");
  Rng rng(params.seed);

  std::vector<std::vector<double>> means(params.n_classes, std::vector<double>(params.dim));
  for (auto& mean : means) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& v : mean) {
        v = rng.normal();
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : mean) v *= inv;
  }

  auto draw = [&](std::size_t n) {
    std::vector<Sample> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
      Sample& s = samples[i];
      s.original_label = s.assigned_label = static_cast<int>(i % params.n_classes);
      const auto& mean = means[static_cast<std::size_t>(s.original_label)];
      s.pixels.resize(params.dim);
      for (std::size_t k = 0; k < params.dim; ++k) {
        const double x = mean[k] + params.sigma * rng.normal();
        s.pixels[k] = std::clamp(0.5 + 0.5 * x, 0.0, 1.0);
      }
    }
    return samples;
  };

  DatasetBundle bundle;
  bundle.n_classes = params.n_classes;
  bundle.train = draw(params.n_train);
  bundle.test = draw(params.n_test);
  return bundle;
}

Matrix pixel_matrix(std::span<const Sample> samples) {
  if (samples.empty()) return {};
  Matrix m(samples.size(), samples.front().pixels.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].pixels.size() != m.cols())
      throw DimensionError("pixel_matrix: samples differ in dimension");
    std::copy(samples[i].pixels.begin(), samples[i].pixels.end(), m.row(i).begin());
  }
  return m;
}

void write_noise_mask(const DatasetBundle& bundle, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << "index,assigned_label\n";
  for (std::size_t i = 0; i < bundle.train.size(); ++i)
    if (bundle.train[i].is_noisy) out << i << ',' << bundle.train[i].assigned_label << '\n';
}

DatasetBundle apply_noise_mask(DatasetBundle bundle, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open noise mask " + file.string());
  for (Sample& s : bundle.train) {
    s.assigned_label = s.original_label;
    s.is_noisy = false;
  }
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != "index,assigned_label")
    throw ParseError("noise mask: missing header", 1);
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t index = 0;
    int label = 0;
    char comma = 0;
    if (!(row >> index >> comma >> label) || comma != ',' || !row.eof())
      throw ParseError("noise mask: malformed row", line_no);
    if (index >= bundle.train.size() || label < 0 ||
        static_cast<std::size_t>(label) >= bundle.n_classes)
      throw ParseError("noise mask: index or label out of range", line_no);
    Sample& s = bundle.train[index];
    s.assigned_label = label;
    s.is_noisy = label != s.original_label;
  }
  return bundle;
}

std::string bundle_metadata_json(const DatasetBundle& bundle) {
  const std::size_t k = bundle.n_classes;
  std::vector<std::size_t> original(k, 0), assigned(k, 0), clean(k, 0), noisy(k, 0), test(k, 0);
  for (const Sample& s : bundle.train) {
    ++original[static_cast<std::size_t>(s.original_label)];
    ++assigned[static_cast<std::size_t>(s.assigned_label)];
    ++(s.is_noisy ? noisy : clean)[static_cast<std::size_t>(s.original_label)];
  }
  for (const Sample& s : bundle.test) ++test[static_cast<std::size_t>(s.original_label)];
  nlohmann::ordered_json j;
  j["n_train"] = bundle.train.size();
  j["n_test"] = bundle.test.size();
  j["n_classes"] = k;
  j["input_dim"] = bundle.input_dim();
  j["noise_probability"] = bundle.noise_probability;
  j["noise_seed"] = bundle.noise_seed;
  j["noise_rng"] = Rng::kAlgorithm;
  j["train_original_per_class"] = original;
  j["train_assigned_per_class"] = assigned;
  j["train_clean_per_class"] = clean;
  j["train_noisy_per_class"] = noisy;
  j["test_per_class"] = test;
  return j.dump(2) + "\n";
}

}  // namespace ddlab
