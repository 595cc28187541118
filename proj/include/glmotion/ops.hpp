#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "glmotion/tensor.hpp"

namespace glmotion {

/// Validity flags: nonzero = valid/visible, zero = masked.
using Mask = std::vector<std::uint8_t>;

/// Logit assigned to masked positions before normalization.
inline constexpr double kMaskedLogit = -1e30;

enum class ElementwiseOp { add, sub, mul, div };

// Broadcasting is limited to `b` being a single value or having a shape
// equal to the trailing axes of `a`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

/// a[..., k] x b[k, n] -> [..., n]; with transpose_b, b is [n, k].
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

/// x[..., in] W[out, in]^T + bias[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// a[B, m, k] x b[B, k, n] -> [B, m, n]; with transpose_b, b is [B, n, k].
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
/// Rows [begin, end) of the leading axis.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Softmax over the last axis. `mask` is empty (no masking) or covers the
/// trailing axes of `logits` (its size is a multiple of the last axis and
/// divides numel); it repeats over the leading axes. Masked entries come out
/// as exactly 0. Throws MaskError when a row has no valid entry.
Tensor softmax_masked(const Tensor& logits, std::span<const std::uint8_t> mask = {});

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// weight * mean_b(-log softmax(logits[b])[target[b]]).
Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets, double weight = 1.0);

/// sum_r row_weights[r] * CE(logits[r], targets[r]). Rows with zero weight
/// are skipped entirely, so their logits and targets are never read.
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> targets,
                              std::span<const double> row_weights);

/// Mean of x[B, T, E] over the frames flagged in valid[B*T] -> [B, E].
Tensor masked_time_mean(const Tensor& x, std::span<const std::uint8_t> valid);

}  // namespace glmotion
