#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asvkit/nn/tensor.hpp"

namespace asv::nn {

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind kind);
/// "sgd" or "adam"; throws InvalidArgument otherwise.
OptimizerKind parse_optimizer_kind(const std::string& text);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // Adam first moments, one per param
  std::vector<std::vector<double>> v;  // Adam second moments
};

/// Applies SGD or bias-corrected Adam updates to a fixed parameter list.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, std::vector<NamedTensor> params);

  /// p <- p - lr * g (SGD) or the Adam update, using current grads.
  void step();
  void zero_grad();
  /// Divides every grad by `factor` (mini-batch averaging).
  void scale_grads(double factor);

  const OptimizerState& state() const { return state_; }
  /// Restores moments and step count; throws ShapeMismatch on layout drift.
  void load_state(OptimizerState state);
  const std::vector<NamedTensor>& params() const { return params_; }

 private:
  OptimizerState state_;
  std::vector<NamedTensor> params_;
};

}  // namespace asv::nn
