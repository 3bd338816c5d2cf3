#pragma once

#include <string>

#include "diflo/net.hpp"

namespace diflo {

// Binary checkpoint, little-endian:
//   magic "DIFLO\x01"
//   u32 layer count
//   per layer: u32 rows, u32 cols, f64 weights row-major, f64 biases
//   u64 metadata length, then that many bytes of JSON (widths, seed,
//   config_hash).
void save_checkpoint(const std::string& path, const MlpParams& params, std::uint64_t seed,
                     const std::string& config_hash);

struct CheckpointData {
    MlpParams params;
    std::uint64_t seed = 0;
    std::string config_hash;
};

CheckpointData load_checkpoint(const std::string& path);

}  // namespace diflo
