#pragma once

// Flat name -> matrix container used for checkpoints.
//
// Layout (all integers little-endian):
//   8 bytes   magic "RGBTVGCK"
//   u32       format version (1)
//   u64       entry count
//   per entry, sorted by name:
//     u32 name length, name bytes (UTF-8)
//     u32 rows, u32 cols
//     rows*cols IEEE-754 binary64 values, row-major, little-endian

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "rgbtvg/matrix.hpp"

namespace rgbtvg {

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WeightMap = std::map<std::string, Matrix>;

inline constexpr std::uint32_t kSnapshotVersion = 1;

std::string encode_snapshot(const WeightMap& weights);
WeightMap decode_snapshot(std::string_view bytes);
void write_snapshot(const WeightMap& weights, const std::filesystem::path& path);
WeightMap read_snapshot(const std::filesystem::path& path);

/// Order-independent digest of a weight map (names, shapes and values).
std::uint64_t weights_checksum(const WeightMap& weights);

}  // namespace rgbtvg
