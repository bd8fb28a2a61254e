#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "asvkit/nn/ops.hpp"
#include "asvkit/nn/tensor.hpp"
#include "asvkit/rng.hpp"

namespace asv::nn {

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), in place.
void xavier_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out,
                    Rng& rng);

// ---------------------------------------------------------------------------
// LSTM

/// Gate weights act on the concatenation [h_{t-1}, x_t]:
///   f = sigmoid(W_f z + b_f), i = sigmoid(W_i z + b_i),
///   o = sigmoid(W_o z + b_o), c~ = tanh(W_c z + b_c),
///   C_t = f * C_{t-1} + i * c~, h_t = o * tanh(C_t).
struct LstmCellParams {
  Tensor w_forget, w_input, w_output, w_cell;  // [hidden x (hidden + input)]
  Tensor b_forget, b_input, b_output, b_cell;  // [hidden]

  /// Xavier-uniform weights, zero biases except forget bias +1.
  static LstmCellParams init(std::size_t input, std::size_t hidden, Rng& rng);
  static LstmCellParams zeros(std::size_t input, std::size_t hidden);

  std::size_t hidden() const { return b_forget.size(); }
  std::size_t input() const { return w_forget.dim(1) - hidden(); }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// One recurrence step built from primitive taped ops.
LstmState lstm_cell_step(const LstmCellParams& p, const Tensor& x,
                         const Tensor& h_prev, const Tensor& c_prev);

/// Runs the cell over [T x input] from zero state and returns the hidden
/// states [T x hidden] indexed by input position. With `reverse` the
/// recurrence runs from t = T-1 down to 0. Single fused tape node with a
/// hand-written backward-through-time.
Tensor lstm_sequence(const LstmCellParams& p, const Tensor& seq,
                     bool reverse = false);

/// Same contract as lstm_sequence, composed from lstm_cell_step.
Tensor lstm_sequence_stepwise(const LstmCellParams& p, const Tensor& seq,
                              bool reverse = false);

struct BiLstm {
  LstmCellParams forward;
  LstmCellParams backward;

  static BiLstm init(std::size_t input, std::size_t hidden, Rng& rng);
  std::size_t output_size() const { return 2 * forward.hidden(); }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

/// [T x d] -> [T x 2h]; forward half first at each step.
Tensor bilstm_forward(const LstmCellParams& fwd, const LstmCellParams& bwd,
                      const Tensor& seq);
inline Tensor bilstm_forward(const BiLstm& layer, const Tensor& seq) {
  return bilstm_forward(layer.forward, layer.backward, seq);
}

// ---------------------------------------------------------------------------
// Attention over a short sequence of hidden states

/// P = tanh(W_h H), alpha = softmax(w^T P), R = H alpha^T,
/// h* = tanh(W_m R + W_n h_x), with H holding one column per step.
struct AttentionParams {
  Tensor w_h;  // [attn x d]
  Tensor w;    // [attn]
  Tensor w_m;  // [out x d]
  Tensor w_n;  // [out x query]

  /// `out` and `query` default to d.
  static AttentionParams init(std::size_t d, std::size_t attn, Rng& rng,
                              std::size_t out = 0, std::size_t query = 0);
  std::size_t input_size() const { return w_h.dim(1); }
  std::size_t query_size() const { return w_n.dim(1); }
  std::size_t output_size() const { return w_m.dim(0); }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

struct AttentionOutput {
  Tensor h_star;  // [d]
  Tensor alpha;   // [T]
};

/// `states` is [d x T]; `query` is [query]; h* is [out].
AttentionOutput attention_forward(const AttentionParams& p,
                                  const Tensor& states, const Tensor& query);

// ---------------------------------------------------------------------------
// Feed-forward and convolutional layers

struct Dense {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  static Dense init(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::size_t output_size() const { return bias.size(); }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

struct Conv2d {
  Tensor weight;  // [out x in x k x k]
  Tensor bias;    // [out]
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// Odd kernel; padding k/2 so stride 1 preserves the spatial size.
  static Conv2d init(std::size_t in, std::size_t out, std::size_t kernel,
                     std::size_t stride, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::size_t out_channels() const { return bias.size(); }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

/// relu(conv2(relu(conv1(x))) + shortcut(x)); the shortcut is identity
/// unless channels or stride change, then a 1x1 projection.
struct ResidualBlock {
  Conv2d conv1;
  Conv2d conv2;
  std::optional<Conv2d> projection;

  static ResidualBlock init(std::size_t in, std::size_t out, std::size_t stride,
                            Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

}  // namespace asv::nn
