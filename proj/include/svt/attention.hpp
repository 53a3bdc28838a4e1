#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "svt/ops.hpp"
#include "svt/params.hpp"
#include "svt/video.hpp"

namespace svt {

struct BlockShape {
  int t = 1;
  int h = 1;
  int w = 1;

  int positions() const { return t * h * w; }
  std::string str() const;
  bool operator==(const BlockShape&) const = default;
};

// One block-local self-attention layer of a stack.
struct LayerSpec {
  BlockShape block;
  int heads = 1;
  int head_dim = 1;
  // Width of the ReLU layer between T1 and T2; equals the model width unless
  // a preset widens it.
  int ffn_dim = 0;

  bool operator==(const LayerSpec&) const = default;
};

using LayerSchedule = std::vector<LayerSpec>;

// Throws ConfigError unless every block divides `volume`.
void check_schedule(const VideoShape& volume, const LayerSchedule& schedule);

// Regrouping of a raster-flattened volume into non-overlapping blocks.
struct BlockPartition {
  VideoShape volume;
  BlockShape block;
  std::size_t num_blocks = 0;
  std::size_t block_positions = 0;
  // order[b * block_positions + i] is the volume raster index of element i
  // (in-block raster order) of block b; inverse maps back.
  std::vector<std::size_t> order;
  std::vector<std::size_t> inverse;

  // Global (t, h, w) of a block element.
  std::array<int, 3> coordinate(std::size_t block_index, std::size_t element) const;
  // Global coordinate of the first element of a block.
  std::array<int, 3> block_offset(std::size_t block_index) const;
};

BlockPartition block_partition(const VideoShape& volume, const BlockShape& block);

// x[N, d] in volume raster order -> [num_blocks, n_p, d].
template <typename T>
Var<T> partition_blocks(Var<T> x, const BlockPartition& partition);

// Inverse of partition_blocks: [num_blocks, n_p, d] -> [N, d].
template <typename T>
Var<T> merge_blocks(Var<T> blocks, const BlockPartition& partition);

// B[i, j] = b_t[dt + t - 1] + b_h[dh + h - 1] + b_w[dw + w - 1] with
// d = coord(j) - coord(i) inside the block. Tables hold 2t-1, 2h-1, 2w-1 entries.
template <typename T>
Var<T> relative_bias(Var<T> table_t, Var<T> table_h, Var<T> table_w, const BlockShape& block);

// Scalar form of relative_bias for in-block element indices i, j.
template <typename T>
T relative_bias_entry(const BlockShape& block, std::span<const T> table_t, std::span<const T> table_h,
                      std::span<const T> table_w, std::size_t i, std::size_t j);

// n_p x n_p mask, 1 where element j may be attended from element i: the
// raster index of j's global position is at most that of i.
std::vector<std::uint8_t> causal_mask(const BlockShape& block, const std::array<int, 3>& block_offset,
                                      const VideoShape& volume);

inline constexpr double kMaskValue = -1e9;

template <typename T>
struct LayerWeights {
  Var<T> ln1_gain, ln1_bias;
  Var<T> wqkv;  // [d, heads * 3 * head_dim], per head [q | k | v]
  Var<T> wp;    // [heads * head_dim, d]
  Var<T> bias_t, bias_h, bias_w;  // [heads, 2t-1] etc.
  Var<T> ln2_gain, ln2_bias;
  Var<T> t1;  // [d, ffn]
  Var<T> t2;  // [ffn, d]
};

template <typename T>
LayerWeights<T> bind_layer(ParamBinder<T>& bind, const std::string& prefix);

struct LayerInit {
  double stddev = 0.02;
  // Random relative-bias tables instead of zeros (used by sensitivity tests).
  bool random_bias = false;
};

void init_layer(ParamStore<float>& store, const std::string& prefix, int width, const LayerSpec& spec,
                Initializer& init, const LayerInit& options = {});

// Multi-head attention of one layer for already-partitioned, layer-normed
// blocks zn[num_blocks, n_p, d]. Returns the concatenated heads
// [num_blocks, n_p, heads * head_dim]. `mask` is an optional n_p x n_p
// attendability mask shared by every block.
template <typename T>
Var<T> block_attention(Var<T> zn_blocks, const LayerWeights<T>& w, const LayerSpec& spec,
                       const std::vector<std::uint8_t>* mask);

// z' = relu(layernorm(z~) T1) T2 + z~, z~ = [heads] W_p + z, for z[N, d] in
// raster order over `volume`.
template <typename T>
Var<T> attention_layer(Var<T> z, const VideoShape& volume, const LayerSpec& spec, const LayerWeights<T>& w,
                       bool causal);

}  // namespace svt
