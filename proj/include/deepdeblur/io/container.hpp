#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deepdeblur/diffcore/tensor.hpp"

namespace deepdeblur::io {

// On-disk container shared by model files and kernel datasets:
//
//   8 bytes   magic "DDBLOB01"
//   8 bytes   manifest length M (little-endian u64)
//   M bytes   UTF-8 JSON manifest
//   rest      blob of little-endian f32 values, row-major
//
// The manifest carries caller metadata under "meta" and one entry per tensor
// under "tensors": {"name", "shape", "offset", "length"} with offsets and
// lengths in bytes relative to the blob start. "blob_bytes" records the total.
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, diff::Tensor>> tensors;

  const diff::Tensor& at(const std::string& name) const;
};

inline constexpr int kContainerVersion = 1;

std::string encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(const std::string& bytes);

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

// Whole-file helpers that raise IoError.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace deepdeblur::io
