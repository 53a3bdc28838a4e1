#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svt/config.hpp"
#include "svt/params.hpp"

namespace svt {

// Per-frame auxiliary conditioning values, [frames, aux_width].
using AuxTrack = NdArray<float>;

struct InitOptions {
  double stddev = 0.02;
  // Zero output projection P: training starts at the uniform distribution.
  bool zero_head = true;
  bool random_relative_bias = false;
};

template <typename T>
struct SliceForward {
  // One-hot of the masked split video [T, H, W, N_c * N_v]; invisible
  // positions are all-zero rows. Invalid when the slice has no encoder.
  std::optional<Var<T>> encoder_input;
  // One-hot of the slice's split pixels [n, N_c * N_v], feeding both the
  // decoder embedding and the channel heads.
  Var<T> slice_input;
  std::optional<Var<T>> encoded;  // z^L [n, d]
  Var<T> decoded;                 // y^L [n, d]
  // Categorical: one [n, N_v] per split channel. Deterministic: one [n, 1].
  std::vector<Var<T>> logits;
};

template <typename T>
struct SliceLoss {
  Var<T> loss;            // nats, summed over counted pixels and channels
  double nats = 0.0;
  std::size_t pixels = 0;  // counted (non-primed) pixels
};

// Subscale video transformer: slice encoder, slice decoder and channel heads.
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }

  ParamStore<float> init_params(std::uint64_t seed, const InitOptions& options = {}) const;

  // True when slice idx is decoded by the separate first-slice decoder.
  bool uses_first_decoder(const SliceIndex& idx) const;

  // Encoder input for slice idx: one-hot of mask_preceding(split, s, idx).
  template <typename T>
  NdArray<T> encoder_onehot(const Video& split, const SliceIndex& idx) const;

  // One-hot rows [n, N_c * N_v] of a split slice.
  template <typename T>
  NdArray<T> slice_onehot(const Video& slice) const;

  // z^L for slice idx from the one-hot encoder input.
  template <typename T>
  Var<T> encode(ParamBinder<T>& bind, Var<T> onehot, const SliceIndex& idx, const AuxTrack* aux) const;

  // y^L from the slice one-hot and (unless first-slice decoding) z^L.
  template <typename T>
  Var<T> decode(ParamBinder<T>& bind, Var<T> slice_onehot, const std::optional<Var<T>>& encoded,
                bool first_slice) const;

  // Channel logits for rows of y^L; `slice_onehot` holds the same rows.
  template <typename T>
  std::vector<Var<T>> predict(ParamBinder<T>& bind, Var<T> decoded, Var<T> slice_onehot) const;

  // Full teacher-forced forward pass for one slice of a split video.
  template <typename T>
  SliceForward<T> forward(ParamBinder<T>& bind, const Video& split, const SliceIndex& idx, const AuxTrack* aux,
                          bool inputs_require_grad = false) const;

  // Negative log-likelihood of one slice; frames before `prime_frames` are
  // excluded from the loss.
  template <typename T>
  SliceLoss<T> slice_loss(ParamBinder<T>& bind, const Video& split, const SliceIndex& idx, int prime_frames,
                          const AuxTrack* aux) const;

  // Loss weights for the slice positions: 0 for primed frames.
  std::vector<double> loss_mask(const SliceIndex& idx, int prime_frames) const;

 private:
  ModelConfig config_;
};

// -sum over counted pixels and channels of ln p; `mask` is 1 for counted rows.
template <typename T>
Var<T> nll_loss(const std::vector<Var<T>>& logits, const Video& slice_split, std::span<const T> mask);

// Deterministic cross-entropy H(z, y) summed over pixels, y clamped to
// [1e-7, 1 - 1e-7].
double deterministic_loss(std::span<const double> predicted, std::span<const double> target);

}  // namespace svt
