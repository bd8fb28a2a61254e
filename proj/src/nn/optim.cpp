#include "asvkit/nn/optim.hpp"

#include <cmath>

#include "asvkit/error.hpp"

namespace asv::nn {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd") return OptimizerKind::Sgd;
  if (text == "adam") return OptimizerKind::Adam;
  fail(Errc::InvalidArgument, "unknown optimizer '" + text + "'");
}

Optimizer::Optimizer(OptimizerKind kind, double lr,
                     std::vector<NamedTensor> params)
    : params_(std::move(params)) {
  if (!(lr > 0.0)) fail(Errc::InvalidArgument, "learning rate must be > 0");
  state_.kind = kind;
  state_.lr = lr;
  if (kind == OptimizerKind::Adam) {
    for (const auto& p : params_) {
      state_.m.emplace_back(p.tensor.size(), 0.0);
      state_.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
}

void Optimizer::step() {
  ++state_.step;
  if (state_.kind == OptimizerKind::Sgd) {
    for (auto& p : params_) {
      auto data = p.tensor.mutable_data();
      auto grad = p.tensor.grad();
      for (std::size_t i = 0; i < data.size(); ++i) data[i] -= state_.lr * grad[i];
    }
    return;
  }
  const double t = static_cast<double>(state_.step);
  const double correct1 = 1.0 - std::pow(state_.beta1, t);
  const double correct2 = 1.0 - std::pow(state_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].tensor.mutable_data();
    auto grad = params_[k].tensor.grad();
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = state_.beta1 * m[i] + (1.0 - state_.beta1) * grad[i];
      v[i] = state_.beta2 * v[i] + (1.0 - state_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      data[i] -= state_.lr * m_hat / (std::sqrt(v_hat) + state_.eps);
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::scale_grads(double factor) {
  for (auto& p : params_) {
    for (double& g : p.tensor.mutable_grad()) g /= factor;
  }
}

void Optimizer::load_state(OptimizerState state) {
  if (state.kind == OptimizerKind::Adam) {
    if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
      fail(Errc::ShapeMismatch, "optimizer state does not match parameters");
    }
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (state.m[k].size() != params_[k].tensor.size() ||
          state.v[k].size() != params_[k].tensor.size()) {
        fail(Errc::ShapeMismatch,
             "optimizer moment shape mismatch for " + params_[k].name);
      }
    }
  }
  state_ = std::move(state);
}

}  // namespace asv::nn
