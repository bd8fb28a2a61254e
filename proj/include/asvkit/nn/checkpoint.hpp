#pragma once

#include <optional>
#include <string>
#include <vector>

#include "asvkit/nn/optim.hpp"
#include "asvkit/nn/tensor.hpp"

namespace asv::nn {

/// ASVM layout, little-endian:
///   "ASVM", u16 version, u32 metadata length, metadata bytes,
///   u32 parameter count, then per parameter: u16 name length, name,
///   u8 rank, rank x u32 dims, float64 values;
///   u8 optimizer flag, and when set: u8 kind, f64 lr, u64 step, then the
///   first and second moment lists, each as u32 count and per entry u32
///   length plus float64 values (empty for SGD).
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct StoredArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string metadata;
  std::vector<StoredArray> params;
  std::optional<OptimizerState> optimizer;
};

void save_checkpoint(const std::string& path, const std::string& metadata,
                     const std::vector<NamedTensor>& params,
                     const OptimizerState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::string& path);

/// Copies stored values into live parameters matched by name. Throws
/// ShapeMismatch ("dimension mismatch") when names or shapes disagree.
void restore_params(const Checkpoint& ckpt, std::vector<NamedTensor>& params);

}  // namespace asv::nn
