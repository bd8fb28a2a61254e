#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asvkit/nn/tensor.hpp"

namespace asv::nn {

/// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
/// Keeps near-zero gradients from being judged on round-off alone.
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::string label;
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

/// Compares backward() of `loss_fn` against central differences for every
/// element of each tensor in `wrt` (or up to `max_per_tensor` evenly spaced
/// elements when non-zero). `loss_fn` must be deterministic.
GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               std::vector<NamedTensor> wrt,
                               double step = 1e-5,
                               std::size_t max_per_tensor = 0);

/// Runs the per-layer checks: dense, conv2d, maxpool, residual block,
/// LSTM cell over 3 steps, fused LSTM sequence, BiLSTM, attention, and
/// softmax + cross-entropy.
std::vector<GradCheckReport> run_layer_gradchecks(std::uint64_t seed);

}  // namespace asv::nn
