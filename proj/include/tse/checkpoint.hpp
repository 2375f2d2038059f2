#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

namespace tse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container shared by every trainable component:
//
//   "TSECKPT\0"              8-byte magic
//   u32 version
//   u64 n, n bytes           metadata JSON (config snapshot, kind, tags)
//   u64 count
//   count x { u32 n, name | u32 ndim | i64 dims[ndim] | u8 dtype | u64 n, data }
//
// All integers little-endian; arrays are written in name order so identical
// contents produce identical bytes.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, torch::Tensor> arrays;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool has(const std::string& name) const { return arrays.count(name) != 0; }
  const torch::Tensor& at(const std::string& name) const;
};

// Copies every parameter and buffer of `module` into the checkpoint under
// "<prefix>/<name>".
void export_module(const torch::nn::Module& module, const std::string& prefix,
                   Checkpoint& ckpt);

// Overwrites `module`'s parameters and buffers with the arrays stored under
// `prefix`. Missing names or shape differences raise kCheckpointMismatch.
void import_module(torch::nn::Module& module, const std::string& prefix,
                   const Checkpoint& ckpt);

}  // namespace tse
