#pragma once

// Binary checkpoint: every tensor with its name and shape, the vocabulary,
// the model config and free-form JSON metadata. Values are stored as raw
// little-endian IEEE doubles, so save -> load is bit-exact.
//
//   "PRQACKPT" u32 version
//   u64 n, n bytes of JSON {model config, metadata}
//   u64 vocab size, then per token: u32 n, n bytes
//   u64 row count, then one byte per row (1 = pretrained embedding)
//   u64 tensor count, then per tensor: u32 n, name, u32 rank, u64 dims..., f64 values

#include <filesystem>
#include <string>

#include "prqa/model.hpp"

namespace prqa {

inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  ModelParams params;
  std::string metadata_json = "{}";
};

std::string serialize_checkpoint(const ModelParams& params,
                                 const std::string& metadata_json = "{}");
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::string& metadata_json = "{}");
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace prqa
