#pragma once

#include <cstddef>
#include <vector>

#include "abanet/tape.hpp"
#include "abanet/tensor.hpp"

// Differentiable operations. Each records one node on the tape of its first
// input and returns the result; none mutates its inputs.
namespace abanet {

// Elementwise, operands of identical shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

// x[..., d] + b[d]
Var add_bias(Var x, Var b);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var one_minus(Var x);

Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
// Requires strictly positive input.
Var log(Var x);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var x, Shape shape);

// Concatenation / slicing of 1-D or 2-D tensors along `axis`.
Var concat(const std::vector<Var>& xs, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);

Var sum(Var x);
// Element at a flat index, as a scalar.
Var pick(Var x, std::size_t flat_index);
// s[index] * x, where s is 1-D; gradient flows into both.
Var mul_scalar_at(Var x, Var s, std::size_t index);

// Softmax along `axis`. `mask` (same shape as x, nonzero = keep) may be null.
// Masked entries are exactly zero. A slice with no unmasked entry throws.
Var masked_softmax(Var x, const Tensor* mask, std::size_t axis);

// -log softmax(logits)[target] over the unmasked entries of a 1-D tensor.
Var masked_cross_entropy(Var logits, const Tensor* mask, std::size_t target);

// Row-wise layer normalization of x[n x d] with affine gain/bias of width d.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6);

// Per-channel convolution of x[n x d] with dw[k x d], zero "same" padding.
Var depthwise_conv1d(Var x, Var dw);
// Depthwise convolution followed by the pointwise map pw[d x f].
Var depthwise_separable_conv1d(Var x, Var dw, Var pw);

// x[n x c x e] convolved (valid) with w[k x e x f] plus b[f], then max over
// the c-k+1 window positions: [n x f].
Var char_conv_maxpool(Var x, Var w, Var b);

// Rows of table[V x e] selected by ids. Rows whose id equals pad_id are zero
// and receive no gradient. Out-of-range ids throw DataError.
Var gather_rows(Var table, const std::vector<int>& ids, int pad_id = -1);

// Inverted dropout; identity unless ctx.training and rate > 0.
Var dropout(Var x, double rate, const Context& ctx);

// H[i, j] = w . [p_i; q_j; p_i * q_j] for P[n x h], Q[m x h], w[3h].
Var trilinear(Var p, Var q, Var w);

// Capsule nonlinearity over the last axis: (|v|^2 / (1 + |v|^2)) v / |v|.
Var squash(Var v);
// uhat[t, i, j] = W[i, j] u[t, i] for u[n x P x p], W[P x D x q x p].
Var capsule_predict(Var u, Var w);
// s[t, j] = sum_i c[t, i, j] uhat[t, i, j].
Var capsule_weighted_sum(Var c, Var uhat);
// a[t, i, j] = uhat[t, i, j] . v[t, j].
Var capsule_agreement(Var uhat, Var v);

// Forward-only helpers on plain tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

}  // namespace abanet
