#pragma once

#include <filesystem>

#include "pivot/nn/model.hpp"

namespace pivot::nn {

inline constexpr int kCheckpointVersion = 1;

/// Writes `path` (JSON manifest: version, architecture, hyper, target scales, tensor names
/// and shapes in blob order) and `path` + ".bin" (little-endian float64 tensors, then the
/// input mean and scale). Round-trips bit-exactly.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);

/// Throws IntegrityError on a version mismatch or a blob whose size disagrees with the manifest,
/// ParseError on a malformed manifest.
ModelParams load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& path);

}  // namespace pivot::nn
