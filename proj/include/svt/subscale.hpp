#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "svt/ops.hpp"
#include "svt/video.hpp"

namespace svt {

struct SubscaleFactor {
  int t = 1;
  int h = 1;
  int w = 1;

  int count() const { return t * h * w; }
  Int3 as_int3() const { return {t, h, w}; }
  bool operator==(const SubscaleFactor&) const = default;
};

// Offset (a, b, c) of a slice; ordering is lexicographic, which is the
// generation order of slices.
struct SliceIndex {
  int a = 0;
  int b = 0;
  int c = 0;

  auto operator<=>(const SliceIndex&) const = default;
  std::string str() const;
};

void validate(const SubscaleFactor& s);
void validate(const SubscaleFactor& s, const SliceIndex& idx);

// Throws ConfigError unless s divides every extent of `shape`.
void check_divisible(const VideoShape& shape, const SubscaleFactor& s);

VideoShape slice_shape(const VideoShape& shape, const SubscaleFactor& s);

// Slices in generation order: raster order over (a, b, c).
std::vector<SliceIndex> slice_order(const SubscaleFactor& s);

// Position of idx within slice_order(s).
int slice_rank(const SubscaleFactor& s, const SliceIndex& idx);

// Slice that global position (t, h, w) belongs to.
inline SliceIndex slice_of(const SubscaleFactor& s, int t, int h, int w) { return {t % s.t, h % s.h, w % s.w}; }

// Global frame of slice-local frame `t_local` in slice `idx`.
inline int global_frame(const SubscaleFactor& s, const SliceIndex& idx, int t_local) { return t_local * s.t + idx.a; }

// slice(t', h', w') = video(t' s_t + a, h' s_h + b, w' s_w + c).
Video extract_slice(const Video& video, const SubscaleFactor& s, const SliceIndex& idx);

// Inverse scatter of extract_slice; positions of other slices are untouched.
void merge_slice(Video& video, const SubscaleFactor& s, const SliceIndex& idx, const Video& slice);

struct MaskedVideo {
  Video video;
  // Per position (raster order): 1 if it belongs to a slice before idx.
  std::vector<std::uint8_t> visible;
};

// Keeps positions of slices strictly preceding idx; zeroes all others.
MaskedVideo mask_preceding(const Video& video, const SubscaleFactor& s, const SliceIndex& idx);

// Signed padding (floor(k_t/2) - a, floor(k_h/2) - b, floor(k_w/2) - c) that
// centres a stride-s context convolution on the pixels of slice idx.
Int3 context_padding(const Int3& kernel, const SliceIndex& idx);

}  // namespace svt
