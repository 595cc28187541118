#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "glmotion/tensor.hpp"
#include "json.hpp"

namespace glmotion {

/// Named tensors plus free-form JSON metadata, stored in a little-endian
/// binary file: magic "GLMCKPT\0", u32 version, u64 metadata length,
/// metadata bytes, u64 tensor count, then per tensor u32 name length, name,
/// u32 rank, u64 dims, float64 values.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  /// Throws DataError when the name is absent.
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws DataError when unreadable, FormatError on a malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values from `ckpt` into same-named tensors of `dest` in place.
/// Throws DataError on a missing name and ShapeError on a shape mismatch.
void restore_tensors(const Checkpoint& ckpt, const std::vector<std::pair<std::string, Tensor>>& dest,
                     const std::string& prefix = "");

}  // namespace glmotion
