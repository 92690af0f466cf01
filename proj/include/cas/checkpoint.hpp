#pragma once

#include "cas/clustering.hpp"
#include "cas/network.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace cas {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  NetworkParams<float> params;
  NetworkConfig config;
  std::optional<ClusterState> clusters;
  nlohmann::json extra = nlohmann::json::object();  // free-form metadata, e.g. config digest
};

/// Writes a POSIX ustar archive holding `meta.json`, one raw little-endian
/// float32 array per parameter tensor under `params/`, and, when present,
/// the centroids as float64 in `centroids.f64`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws CorruptFileError on truncated or malformed archives and
/// VersionMismatchError for an unknown format version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cas
