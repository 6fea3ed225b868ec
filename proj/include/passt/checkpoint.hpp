#pragma once

#include <string>

#include "passt/encoder.hpp"

namespace passt {

// Checkpoint container: 8-byte magic "PSSTCKPT", u32 LE version, u64 LE
// length-prefixed JSON header (config, geometry, mel, tensor directory with
// name/shape/dtype/offset), then raw little-endian tensor blobs in header
// order. dtype f64 round-trips bit-exactly; f32 is a lossy storage mode.
inline constexpr char kCheckpointMagic[8] = {'P', 'S', 'S', 'T',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const PasstModel& model, const std::string& path,
                     bool as_f32 = false);
PasstModel load_checkpoint(const std::string& path);

// Contract check for extraction runs that expect a particular embedding
// width; names both dimensions on mismatch.
void require_model_dim(const PasstModel& model, size_t expected_d);

}  // namespace passt
