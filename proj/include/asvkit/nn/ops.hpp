#pragma once

#include <cstddef>
#include <vector>

#include "asvkit/nn/tensor.hpp"
#include "asvkit/rng.hpp"

namespace asv::nn {

// Elementwise. Binary ops require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

/// [m x k] * [k x n] -> [m x n], or [m x k] * [k] -> [m].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Adds a length-n bias to every row of [m x n].
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// Concatenates rank-1 tensors.
Tensor concat(const std::vector<Tensor>& parts);
/// Concatenates [T x a] and [T x b] into [T x (a + b)].
Tensor concat_cols(const Tensor& left, const Tensor& right);
/// Stacks equal-length rank-1 tensors as the rows of a matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);
/// Row i of a matrix as a rank-1 tensor.
Tensor row(const Tensor& x, std::size_t i);
/// Elements [start, start + length) of a rank-1 tensor.
Tensor slice(const Tensor& x, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum of squares.
Tensor sum_squares(const Tensor& x);

/// Max-subtracted softmax over a rank-1 tensor.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);
/// -log softmax(logits)[target]. Throws InvalidArgument when target is out
/// of range.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Cross-correlation of [C x H x W] with [O x C x k x k] plus bias [O].
/// `padding` zeros are added on every side.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);
/// Max pooling without padding over [C x H x W].
Tensor maxpool2d(const Tensor& input, std::size_t kernel, std::size_t stride);
/// [C x H x W] -> [C].
Tensor global_avg_pool(const Tensor& input);

}  // namespace asv::nn
