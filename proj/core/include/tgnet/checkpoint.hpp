#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tgnet/data.hpp"
#include "tgnet/model.hpp"
#include "tgnet/train.hpp"

namespace tgnet {

inline constexpr char kCheckpointMagic[4] = {'T', 'G', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

struct Checkpoint {
  Vocabulary vocab;
  ModelParams<float> params;  // carries the hyperparameters and ablation
  std::optional<OptimizerState<float>> optimizer;
  double best_perplexity = 0.0;
};

/// Little-endian layout:
///   "TGN1" | u32 version | u32 n + hyperparameter JSON | u8 ablation
///   | u32 words, each u32 n + bytes (non-special vocabulary in id order)
///   | u32 tensors, each u32 n + name, u32 rank, u32 dims..., f32 payload
///   | u8 has_optimizer [ i64 step | f64 lr | moment tensors m then v ]
///   | f64 best perplexity
std::string serialize_checkpoint(const Checkpoint& ckpt);

// Rejects bad magic, unknown versions, truncation, trailing bytes and any
// tensor whose name or shape disagrees with the declared configuration.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tgnet
