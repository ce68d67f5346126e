#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stereodistill/tensor.hpp"

namespace stereodistill {

/// Binary tensor container shared by checkpoints and teacher-tap files.
///
///   bytes 0..3   magic "SDCK"
///   u32          format version (1)
///   u64          metadata length L, then L bytes of UTF-8 JSON
///   u32          entry count E
///   E entries:   u32 name length, name bytes, u8 dtype (0 = float32),
///                u8 rank, rank x u64 dims, u64 offset, u64 byte length
///   blob region: tensor payloads, row-major little-endian float32, at
///                `offset` bytes from the start of the region
///
/// All integers are little-endian.
struct Container {
  static constexpr char kMagic[4] = {'S', 'D', 'C', 'K'};
  static constexpr uint32_t kVersion = 1;

  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> entries;

  const Tensor* find(const std::string& name) const;
  /// Throws IoError when absent.
  const Tensor& at(const std::string& name) const;
  void add(std::string name, Tensor t);
};

void write_container(const std::string& path, const Container& c);
/// Throws IoError on bad magic, unsupported version or truncation.
Container read_container(const std::string& path);

}  // namespace stereodistill
