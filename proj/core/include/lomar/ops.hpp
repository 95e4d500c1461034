#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lomar/tensor.hpp"

/// Differentiable tensor operations. Every op validates shapes, throws
/// DimensionError on mismatch, and records a backward closure when any
/// input requires a gradient. Matrices are rank-2 row-major.
namespace lomar::ops {

/// A[p×q] · B[q×r].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// A[p×q] · B[r×q]ᵀ, without materializing the transpose.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// X[t×d] + b[d] broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// Row-wise softmax with max subtraction. NaN input raises NumericError.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

/// Row-wise (x - mean) / sqrt(var + eps) * gamma + beta, biased variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

/// GELU, tanh form: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Columns [start, start + count) of a matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);

/// Horizontal concatenation of matrices with equal row counts.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

/// out[i] = x[index[i]] (rows). Indices may repeat; gradients sum.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> index);

/// out[i] = replace[i] ? row : x[i], where `row` is a length-cols vector.
template <typename T>
Tensor<T> replace_rows(const Tensor<T>& x, const std::vector<bool>& replace, const Tensor<T>& row);

/// out[i][j] = m[i][index[i·out_cols + j]] for a matrix m[rows×c].
template <typename T>
Tensor<T> gather_in_rows(const Tensor<T>& m, std::span<const std::size_t> index, std::size_t out_cols);

/// Sum of all elements as a single-element tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Mean of squared differences over all elements.
template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

/// Mean cross-entropy of row-wise softmax(logits) against integer labels.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace lomar::ops
