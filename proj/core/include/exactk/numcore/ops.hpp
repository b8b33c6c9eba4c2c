#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "exactk/numcore/tensor.hpp"

// Differentiable primitives. Each op validates shapes, computes its value
// eagerly and, when a tape is active and an input requires gradients, records
// the matching backward rule. All matrices are read through the rows x cols
// view of Tensor.
namespace exactk::numcore {

inline constexpr double kLayerNormEpsilon = 1e-6;
inline constexpr double kMaskedLogit = -1e9;

Tensor matmul(const Tensor& a, const Tensor& b);
// b either matches a's shape or is a single row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
// axis 0 stacks rows, axis 1 joins columns.
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon = kLayerNormEpsilon);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor log(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Scalar element at flat index.
Tensor pick(const Tensor& x, std::size_t index);
// Positions with mask[j] == true (per column, repeated for every row) take
// `value` and receive no gradient.
Tensor masked_fill(const Tensor& x, const std::vector<bool>& mask, double value);
// Numerically stable -[y log sigmoid(z) + (1-y) log(1 - sigmoid(z))] for a
// scalar logit.
Tensor binary_cross_entropy_with_logits(const Tensor& logit, double target);

enum class OpKind {
  matmul,
  add,
  concat,
  relu,
  tanh,
  sigmoid,
  softmax_lastdim,
  layer_norm,
  elementwise_mul,
  sum,
  mean,
  log,
  scale,
};

const char* op_name(OpKind kind);

// Uniform entry point over the primitive set. concat joins along the last
// axis; layer_norm expects (x, gain, bias); scale takes its factor from the
// scalar second input, which is treated as a constant.
Tensor forward_op(OpKind kind, std::span<const Tensor> inputs);

}  // namespace exactk::numcore
