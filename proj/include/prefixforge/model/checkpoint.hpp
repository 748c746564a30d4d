#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "prefixforge/model/policy_model.hpp"

namespace prefixforge {

// Checkpoint container, little-endian:
//   8 bytes   magic "PFXCKPT\n"
//   u32       format version (kCheckpointVersion)
//   u64       header length H
//   H bytes   JSON header {"version", "dtype": "f32"|"f64", "config": ModelConfig,
//                          "metadata": {...}, "tensors": [{"name","rows","cols","offset"}]}
//   ...       tensor payloads, column-major, offsets relative to the end of the header

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const PolicyModel<Scalar>& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

template <typename Scalar>
struct LoadedCheckpoint {
    PolicyModel<Scalar> model;
    nlohmann::json metadata;
};

/// Loads into either scalar type regardless of the stored dtype.
template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::filesystem::path& path);

}  // namespace prefixforge
