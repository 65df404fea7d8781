#pragma once

#include <filesystem>
#include <string>

#include "svct/nn/network.hpp"

namespace svct::nn {

inline constexpr int checkpoint_format_version = 2;

struct CheckpointInfo {
    NetSpec spec;
    std::string hash;  // FNV-1a of the weight blob
    std::size_t values = 0;
};

// "<stem>.bin" holds the network state as little-endian float64;
// "<stem>.json" holds the spec, format version and blob hash.
CheckpointInfo save_checkpoint(const std::filesystem::path& blob_path, const Network& net);
Network load_checkpoint(const std::filesystem::path& blob_path, CheckpointInfo* info = nullptr);

}  // namespace svct::nn
