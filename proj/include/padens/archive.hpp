#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "padens/nn/tensor.hpp"

namespace padens {

// Binary tensor container shared by checkpoints and pretrained weight files.
//
//   "PDNSARCH"            8-byte magic
//   u32 version           kArchiveVersion
//   u64 n, n bytes        JSON metadata header
//   u64 count             named tensors follow
//     u32 n, n bytes      name
//     u32 rank, i64[rank] shape
//     f64[numel]          values
//
// All integers and doubles are little-endian.
inline constexpr std::uint32_t kArchiveVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Tensor tensor;
  bool operator==(const NamedTensor&) const = default;
};

struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
// Throws CheckpointError on bad magic, version mismatch or truncation.
Archive read_archive(const std::filesystem::path& path);

}  // namespace padens
