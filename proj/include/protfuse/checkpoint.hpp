#pragma once

#include "protfuse/training.hpp"

#include <cstdint>
#include <string>

namespace protfuse {

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Stable 64-bit fingerprint of every shape-determining model setting.
std::uint64_t model_config_hash(const ModelConfig& cfg);

/// Single-file layout, all integers and floats little-endian:
///   magic "PFCKPT01", u32 version, u64 config hash, u64 payload size,
///   u64 FNV-1a checksum of the payload, payload.
/// The payload holds the stage name, step, seed, loss history (f64) and the
/// named float32 arrays params/*, adam_m/*, adam_v/* in declared order.
std::string encode_checkpoint(const TrainState<float>& state, std::uint64_t config_hash);
TrainState<float> decode_checkpoint(const std::string& bytes, std::uint64_t* config_hash = nullptr);

void save_checkpoint(const TrainState<float>& state, const ModelConfig& cfg, const std::string& path);

/// Throws CheckpointError on a bad magic, version mismatch, truncation,
/// checksum failure, or (when `cfg` is given) a config hash or array layout
/// that differs from the configured model.
TrainState<float> load_checkpoint(const std::string& path, const ModelConfig* cfg = nullptr);

}  // namespace protfuse
