#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ddlab/network.hpp"

namespace ddlab {

// Network checkpoint layout (all integers u64 little-endian, reals f64
// little-endian):
//   "DDL1"
//   input_dim, hidden_count, hidden_dims[hidden_count], output_dim, seed
//   per layer: weight, bias, weight_m, weight_v, bias_m, bias_v (row-major)
//   adam_steps

std::vector<std::uint8_t> encode_network(const NetworkState& state);

/// Decodes a network from the front of `bytes`; `consumed` receives the
/// number of bytes read. Throws ParseError on malformed input.
NetworkState decode_network(std::span<const std::uint8_t> bytes, std::size_t& consumed);

/// Decodes a buffer that must contain exactly one network.
NetworkState decode_network(std::span<const std::uint8_t> bytes);

void save_network(const NetworkState& state, const std::filesystem::path& path);
NetworkState load_network(const std::filesystem::path& path);

/// Training checkpoint: a network image followed by a "RUN1" trailer with
/// the completed epoch count and the shuffle generator state.
struct RunCheckpoint {
  NetworkState network;
  std::uint64_t epoch = 0;
  std::string shuffle_rng_state;
};

void save_run_checkpoint(const RunCheckpoint& ckpt, const std::filesystem::path& path);
RunCheckpoint load_run_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace ddlab
