#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "svt/autograd.hpp"

namespace svt {

using Int3 = std::array<int, 3>;

// Differentiable operations. Every op records a backward rule on the tape of
// its first operand; all operands must live on the same tape.

// a[..., k] x b[k, n] -> [..., n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// Batched product: a[B, m, k] x b[B, k, n], or b[B, n, k] when transpose_b.
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool transpose_b = false);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

// x + y where y's shape equals the trailing axes of x (bias rows, shared masks).
template <typename T>
Var<T> add_broadcast(Var<T> x, Var<T> y);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T factor);

template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis);

// Softmax over the last axis.
template <typename T>
Var<T> softmax(Var<T> x);

inline constexpr double kLayerNormEpsilon = 1e-6;

// Normalises over the last axis, then applies gain and bias (both [features]).
template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gain, Var<T> bias);

struct Conv3dGeometry {
  Int3 stride{1, 1, 1};
  // Signed: input coordinate of tap j for output o is o*stride - pad + j.
  Int3 pad{0, 0, 0};
  Int3 out_shape{0, 0, 0};
};

// input[T, H, W, Cin] * kernel[kt, kh, kw, Cin, Cout] (+ bias[Cout]).
// Out-of-bounds taps contribute zero.
template <typename T>
Var<T> conv3d(Var<T> input, Var<T> kernel, const Conv3dGeometry& geom);
template <typename T>
Var<T> conv3d(Var<T> input, Var<T> kernel, Var<T> bias, const Conv3dGeometry& geom);

// Mask over kt*kh*kw taps: 1 for taps strictly before the centre in raster
// (t, h, w) order, 0 at and after it. Throws ConfigError on even extents.
std::vector<std::uint8_t> causal_kernel_mask(const Int3& kernel);

// Centre-excluded raster-causal convolution with stride 1 and same-size
// output. The kernel is [k, k, k, Cin, Cout] with odd extents.
template <typename T>
Var<T> masked_conv3d(Var<T> input, Var<T> kernel, Var<T> bias);

// Concatenation along the last axis; leading shapes must match.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts);

// Columns [begin, end) of the last axis.
template <typename T>
Var<T> slice_last(Var<T> x, std::size_t begin, std::size_t end);

// Rows of x (first axis) selected by index; duplicates allowed. Serves as
// embedding lookup and as the permutation behind block partitioning.
template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index);

template <typename T>
Var<T> embedding(Var<T> table, std::span<const std::size_t> index) {
  return gather_rows(table, index);
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

// 2-D transpose.
template <typename T>
Var<T> transpose(Var<T> x);

template <typename T>
Var<T> sum(Var<T> x);

// sum(x * weights) with constant weights of x's shape.
template <typename T>
Var<T> weighted_sum(Var<T> x, const NdArray<T>& weights);

// -sum_i w_i * ln softmax(logits_i)[target_i] over rows of logits[N, V].
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets, std::span<const T> weights);

inline constexpr double kProbabilityClamp = 1e-7;

// sum_i w_i * H(z_i, y_i) with y = clamp(sigmoid(logit), 1e-7, 1-1e-7) and
// H(z, y) = -(z ln y + (1-z) ln(1-y)). The gradient is the unclamped
// sigmoid cross-entropy gradient w_i * (sigmoid(logit_i) - z_i).
template <typename T>
Var<T> binary_cross_entropy_with_logits(Var<T> logits, std::span<const T> targets,
                                        std::span<const T> weights);

// One-hot rows [values.size(), num_values]; a negative value encodes an
// invisible entry and yields an all-zero row.
template <typename T>
NdArray<T> one_hot(std::span<const int> values, std::size_t num_values);

}  // namespace svt
