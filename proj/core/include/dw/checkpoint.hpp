#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "dw/models.hpp"

/// Self-describing checkpoint container.
///
/// Layout: the 4 bytes "DWCK", a little-endian u32 format version, a u64 header
/// length, a JSON header, then every parameter as contiguous little-endian
/// float64 values. The header records the model spec, free-form string
/// metadata and a table of {name, shape, offset, trainable} entries where
/// offset counts doubles from the start of the data block.
namespace dw::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

void save(const std::filesystem::path& path, const model::Network& net,
          const std::map<std::string, std::string>& info = {});

struct Loaded {
  std::unique_ptr<model::Network> net;
  std::map<std::string, std::string> info;
};

/// Rebuilds the network from the stored spec and restores every array.
Loaded load(const std::filesystem::path& path);

}  // namespace dw::ckpt
