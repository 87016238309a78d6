#include "ddlab/snapshot.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ddlab/checkpoint.hpp"
#include "ddlab/error.hpp"
#include "json.hpp"

namespace ddlab {

ActivationAccumulator::ActivationAccumulator(std::size_t n, std::vector<double> mean,
                                             std::vector<double> m2)
    : n_(n), mean_(std::move(mean)), m2_(std::move(m2)) {
  if (mean_.size() != m2_.size()) throw DimensionError("accumulator: mean/m2 size mismatch");
}

void ActivationAccumulator::add(std::span<const double> x) {
  if (x.size() != mean_.size()) throw DimensionError("accumulator: vector size mismatch");
  ++n_;
  const double inv = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = x[i] - mean_[i];
    mean_[i] += delta * inv;
    m2_[i] += delta * (x[i] - mean_[i]);
  }
}

void ActivationAccumulator::merge(const ActivationAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  if (other.dim() != dim()) throw DimensionError("accumulator: merge size mismatch");
  const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_);
  const double n = na + nb;
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    const double delta = other.mean_[i] - mean_[i];
    mean_[i] += delta * nb / n;
    m2_[i] += other.m2_[i] + delta * delta * na * nb / n;
  }
  n_ += other.n_;
}

double ActivationAccumulator::stddev(std::size_t i) const {
  if (n_ == 0) return 0.0;
  return std::sqrt(std::max(0.0, m2_.at(i) / static_cast<double>(n_)));
}

const char* to_string(ProbeGroup group) {
  switch (group) {
    case ProbeGroup::clean_train: return "clean_train";
    case ProbeGroup::noisy_train: return "noisy_train";
    case ProbeGroup::test: return "test";
    case ProbeGroup::test_correct: return "test_correct";
    case ProbeGroup::test_incorrect: return "test_incorrect";
  }
  return "?";
}

ProbeGroup parse_probe_group(const std::string& text) {
  for (ProbeGroup g : {ProbeGroup::clean_train, ProbeGroup::noisy_train, ProbeGroup::test,
                       ProbeGroup::test_correct, ProbeGroup::test_incorrect})
    if (text == to_string(g)) return g;
  throw std::invalid_argument("unknown probe group '" + text + "'");
}

ProbeSnapshot::ProbeSnapshot(std::uint64_t epoch, std::vector<std::size_t> layer_dims,
                             std::size_t n_classes, std::vector<std::size_t> probed_layers)
    : epoch_(epoch),
      layer_dims_(std::move(layer_dims)),
      n_classes_(n_classes),
      probed_layers_(std::move(probed_layers)) {
  if (probed_layers_.empty())
    for (std::size_t l = 1; l <= layer_dims_.size(); ++l) probed_layers_.push_back(l);
  std::sort(probed_layers_.begin(), probed_layers_.end());
  probed_layers_.erase(std::unique(probed_layers_.begin(), probed_layers_.end()),
                       probed_layers_.end());
  for (std::size_t l : probed_layers_) layer_dim(l);
}

std::size_t ProbeSnapshot::layer_dim(std::size_t layer) const {
  if (layer == 0 || layer > layer_dims_.size())
    throw std::out_of_range("hidden layer " + std::to_string(layer) + " out of range");
  return layer_dims_[layer - 1];
}

void ProbeSnapshot::add(const ForwardTrace& trace, std::span<const Sample> samples,
                        ProbeGroup group) {
  if (!trace.hidden.empty() && trace.hidden.front().rows() != samples.size())
    throw DimensionError("snapshot: trace rows do not match samples");
  for (std::size_t r = 0; r < samples.size(); ++r) add_row(trace, r, samples[r], group);
}

void ProbeSnapshot::add_row(const ForwardTrace& trace, std::size_t row, const Sample& sample,
                            ProbeGroup group) {
  if (trace.hidden.size() != layer_dims_.size())
    throw DimensionError("snapshot: trace layer count mismatch");
  for (std::size_t layer : probed_layers_) {
    const Matrix& h = trace.hidden[layer - 1];
    if (h.cols() != layer_dims_[layer - 1]) throw DimensionError("snapshot: layer width mismatch");
    if (row >= h.rows()) throw DimensionError("snapshot: row out of range");
    for (GroupMode mode : {GroupMode::input_based, GroupMode::label_based}) {
      SnapshotKey key{layer, group, mode, group_label(sample, mode)};
      auto it = entries_.find(key);
      if (it == entries_.end())
        it = entries_.emplace(key, ActivationAccumulator(h.cols())).first;
      it->second.add(h.row(row));
    }
  }
}

void ProbeSnapshot::insert(const SnapshotKey& key, ActivationAccumulator acc) {
  if (acc.dim() != layer_dim(key.layer)) throw DimensionError("snapshot: insert width mismatch");
  if (acc.count() == 0) return;
  entries_[key] = std::move(acc);
}

const ActivationAccumulator* ProbeSnapshot::find(const SnapshotKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

ActivationAccumulator ProbeSnapshot::group_total(std::size_t layer, ProbeGroup group,
                                                 GroupMode mode) const {
  ActivationAccumulator total(layer_dim(layer));
  for (std::size_t c = 0; c < n_classes_; ++c)
    if (const auto* acc = find({layer, group, mode, static_cast<int>(c)})) total.merge(*acc);
  return total;
}

std::string snapshot_stem(std::uint64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%08llu", static_cast<unsigned long long>(epoch));
  return buf;
}

void write_snapshot(const ProbeSnapshot& snapshot, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = snapshot_stem(snapshot.epoch());
  const std::string sidecar = stem + ".bin";

  std::vector<std::uint8_t> bin;
  auto put = [&bin](const std::vector<double>& values) {
    const std::size_t offset = bin.size();
    for (double v : values) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) bin.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return offset;
  };

  std::string jsonl;
  nlohmann::ordered_json header;
  header["epoch"] = snapshot.epoch();
  header["layer_dims"] = snapshot.layer_dims();
  header["n_classes"] = snapshot.n_classes();
  header["probed_layers"] = snapshot.probed_layers();
  jsonl += header.dump() + "\n";
  for (const auto& [key, acc] : snapshot.entries()) {
    nlohmann::ordered_json rec;
    rec["epoch"] = snapshot.epoch();
    rec["layer"] = key.layer;
    rec["group"] = to_string(key.group);
    rec["mode"] = to_string(key.mode);
    rec["class"] = key.class_id;
    rec["n"] = acc.count();
    rec["dim"] = acc.dim();
    rec["sidecar"] = sidecar;
    rec["mean_offset"] = put(acc.mean());
    rec["m2_offset"] = put(acc.m2());
    jsonl += rec.dump() + "\n";
  }
  write_file_atomic(dir / sidecar, bin);
  write_file_atomic(dir / (stem + ".jsonl"), jsonl);
}

ProbeSnapshot read_snapshot(const std::filesystem::path& jsonl_file) {
  std::ifstream in(jsonl_file);
  if (!in) throw IoError("cannot open snapshot " + jsonl_file.string());
  std::string line;
  std::size_t line_no = 0;
  auto parse = [&](const std::string& text) {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(jsonl_file.string() + ": " + e.what(), line_no);
    }
  };
  if (!std::getline(in, line)) throw ParseError(jsonl_file.string() + ": empty snapshot", 1);
  ++line_no;
  ProbeSnapshot snapshot;
  std::vector<std::uint8_t> bin;
  std::string loaded_sidecar;
  try {
    const auto header = parse(line);
    snapshot = ProbeSnapshot(header.at("epoch").get<std::uint64_t>(),
                             header.at("layer_dims").get<std::vector<std::size_t>>(),
                             header.at("n_classes").get<std::size_t>(),
                             header.at("probed_layers").get<std::vector<std::size_t>>());
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto rec = parse(line);
      const std::string sidecar = rec.at("sidecar").get<std::string>();
      if (sidecar != loaded_sidecar) {
        bin = read_file_bytes(jsonl_file.parent_path() / sidecar);
        loaded_sidecar = sidecar;
      }
      const std::size_t dim = rec.at("dim").get<std::size_t>();
      auto fetch = [&](std::size_t offset) {
        if (offset > bin.size() || bin.size() - offset < dim * 8)
          throw ParseError(jsonl_file.string() + ": sidecar reference out of range", line_no);
        std::vector<double> v(dim);
        for (std::size_t i = 0; i < dim; ++i) {
          std::uint64_t bits = 0;
          for (int b = 0; b < 8; ++b)
            bits |= std::uint64_t{bin[offset + i * 8 + b]} << (8 * b);
          v[i] = std::bit_cast<double>(bits);
        }
        return v;
      };
      SnapshotKey key{rec.at("layer").get<std::size_t>(),
                      parse_probe_group(rec.at("group").get<std::string>()),
                      parse_group_mode(rec.at("mode").get<std::string>()),
                      rec.at("class").get<int>()};
      snapshot.insert(key, ActivationAccumulator(rec.at("n").get<std::size_t>(),
                                                 fetch(rec.at("mean_offset").get<std::size_t>()),
                                                 fetch(rec.at("m2_offset").get<std::size_t>())));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(jsonl_file.string() + ": " + e.what(), line_no);
  } catch (const std::invalid_argument& e) {
    throw ParseError(jsonl_file.string() + ": " + e.what(), line_no);
  } catch (const std::out_of_range& e) {
    throw ParseError(jsonl_file.string() + ": " + e.what(), line_no);
  }
  return snapshot;
}

std::vector<ProbeSnapshot> read_snapshots(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(dir))
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.path().extension() == ".jsonl" &&
          entry.path().filename().string().starts_with("epoch_"))
        files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<ProbeSnapshot> out;
  for (const auto& f : files) out.push_back(read_snapshot(f));
  return out;
}

}  // namespace ddlab
