#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spotlight/diff/tensor.hpp"

// Differentiable primitives. Broadcasting is limited to scalar-with-tensor;
// bias addition and row gathers are explicit operations.
namespace spotlight::diff {

enum class Conv1dMode { kPointwise, kDepthwise7 };

inline constexpr std::size_t kDepthwiseKernel = 7;
inline constexpr double kLayerNormEps = 1e-5;
// tanh-approximation GELU: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715x^3))).
inline constexpr double kGeluCubic = 0.044715;

template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> scale(const Tensor<S>& a, double factor);
template <typename S> Tensor<S> neg(const Tensor<S>& a);
template <typename S> Tensor<S> square(const Tensor<S>& a);
template <typename S> Tensor<S> abs(const Tensor<S>& a);
template <typename S> Tensor<S> gelu(const Tensor<S>& a);

/// Sum of all elements, accumulated in double; rank-0 result.
template <typename S> Tensor<S> sum(const Tensor<S>& a);
template <typename S> Tensor<S> mean(const Tensor<S>& a);

template <typename S> Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> transpose(const Tensor<S>& a);
template <typename S> Tensor<S> reshape(const Tensor<S>& a, Shape shape);

/// x[T x D] + bias[D] added to every row.
template <typename S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& bias);

/// Softmax over the last axis with max subtraction.
template <typename S> Tensor<S> softmax_lastdim(const Tensor<S>& x);

/// Row-wise normalization of x[T x D] followed by gain/bias.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& bias);

/// Length-preserving 1-D convolution over time on x[T x C_in].
/// kPointwise: kernel [C_in x C_out]. kDepthwise7: kernel [7 x C], centred,
/// zero padded.
template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& kernel, Conv1dMode mode);

/// out[i] = table[indices[i]]; gradient scatter-adds back into the table.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, std::span<const std::size_t> indices);

/// Places rows[v] at position positions[v] of a [length x D] result and
/// `fill[D]` everywhere else. Gradient reaches both rows and fill.
template <typename S>
Tensor<S> scatter_rows(const Tensor<S>& rows, std::span<const std::size_t> positions,
                       std::size_t length, const Tensor<S>& fill);

/// Column-mean over rows: x[T x D] -> [1 x D].
template <typename S> Tensor<S> mean_rows(const Tensor<S>& x);

/// Columns [begin, begin + count) of x[T x D].
template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, std::size_t begin, std::size_t count);
template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts);

/// Per-row cosine similarity (a_i . b_i) / (|a_i| |b_i| + eps) -> [T].
template <typename S>
Tensor<S> row_cosine(const Tensor<S>& a, const Tensor<S>& b, double eps = 1e-8);

/// Identity forward; backward scales the incoming gradient. Used by the
/// gradient-check harness to verify that it detects a broken backward.
template <typename S>
Tensor<S> corrupt_backward(const Tensor<S>& x, double factor);

}  // namespace spotlight::diff
