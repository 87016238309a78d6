#include "ddlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ddlab/error.hpp"

namespace ddlab {

namespace {

constexpr char kNetworkMagic[4] = {'D', 'D', 'L', '1'};
constexpr char kRunMagic[4] = {'R', 'U', 'N', '1'};

class Writer {
 public:
  void magic(const char (&m)[4]) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void reals(std::span<const double> values) {
    for (double v : values) u64(std::bit_cast<std::uint64_t>(v));
  }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void magic(const char (&m)[4], const char* what) {
    need(4, what);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0)
      throw ParseError(std::string(what) + ": bad magic bytes");
    pos_ += 4;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  void reals(std::span<double> out, const char* what) {
    need(out.size() * 8, what);
    for (double& v : out) v = std::bit_cast<double>(u64(what));
  }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw ParseError(std::string(what) + ": truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void encode_into(Writer& w, const NetworkState& state) {
  const NetworkSpec& spec = state.spec;
  w.magic(kNetworkMagic);
  w.u64(spec.input_dim);
  w.u64(spec.hidden_dims.size());
  for (std::size_t d : spec.hidden_dims) w.u64(d);
  w.u64(spec.output_dim);
  w.u64(spec.seed);
  for (const DenseLayer& layer : state.layers) {
    w.reals(layer.weight.flat());
    w.reals(layer.bias);
    w.reals(layer.weight_m.flat());
    w.reals(layer.weight_v.flat());
    w.reals(layer.bias_m);
    w.reals(layer.bias_v);
  }
  w.u64(state.adam_steps);
}

NetworkState decode_from(Reader& r) {
  constexpr const char* what = "network checkpoint";
  r.magic(kNetworkMagic, what);
  NetworkState state;
  NetworkSpec& spec = state.spec;
  spec.input_dim = r.u64(what);
  const std::uint64_t hidden = r.u64(what);
  if (hidden > 4096) throw ParseError("network checkpoint: implausible hidden layer count");
  for (std::uint64_t i = 0; i < hidden; ++i) spec.hidden_dims.push_back(r.u64(what));
  spec.output_dim = r.u64(what);
  spec.seed = r.u64(what);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("network checkpoint: ") + e.what());
  }
  const auto dims = spec.layer_dims();
  for (std::size_t l = 1; l < dims.size(); ++l) {
    const std::size_t in = dims[l - 1], out = dims[l];
    DenseLayer layer{Matrix(out, in), std::vector<double>(out), Matrix(out, in),
                     Matrix(out, in), std::vector<double>(out), std::vector<double>(out)};
    r.reals(layer.weight.flat(), what);
    r.reals(layer.bias, what);
    r.reals(layer.weight_m.flat(), what);
    r.reals(layer.weight_v.flat(), what);
    r.reals(layer.bias_m, what);
    r.reals(layer.bias_v, what);
    state.layers.push_back(std::move(layer));
  }
  state.adam_steps = r.u64(what);
  return state;
}

}  // namespace

std::vector<std::uint8_t> encode_network(const NetworkState& state) {
  Writer w;
  encode_into(w, state);
  return w.take();
}

NetworkState decode_network(std::span<const std::uint8_t> bytes, std::size_t& consumed) {
  Reader r(bytes);
  NetworkState state = decode_from(r);
  consumed = r.position();
  return state;
}

NetworkState decode_network(std::span<const std::uint8_t> bytes) {
  std::size_t consumed = 0;
  NetworkState state = decode_network(bytes, consumed);
  if (consumed != bytes.size()) throw ParseError("network checkpoint: trailing bytes");
  return state;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

void save_network(const NetworkState& state, const std::filesystem::path& path) {
  write_file_atomic(path, encode_network(state));
}

NetworkState load_network(const std::filesystem::path& path) {
  return decode_network(read_file_bytes(path));
}

void save_run_checkpoint(const RunCheckpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  encode_into(w, ckpt.network);
  w.magic(kRunMagic);
  w.u64(ckpt.epoch);
  w.u64(ckpt.shuffle_rng_state.size());
  w.raw(ckpt.shuffle_rng_state);
  write_file_atomic(path, w.take());
}

RunCheckpoint load_run_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  Reader r(bytes);
  RunCheckpoint ckpt;
  ckpt.network = decode_from(r);
  r.magic(kRunMagic, "run checkpoint");
  ckpt.epoch = r.u64("run checkpoint");
  const std::uint64_t len = r.u64("run checkpoint");
  ckpt.shuffle_rng_state = r.raw(len, "run checkpoint");
  if (r.position() != bytes.size()) throw ParseError("run checkpoint: trailing bytes");
  return ckpt;
}

}  // namespace ddlab
