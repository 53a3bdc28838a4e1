#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "svt/params.hpp"
#include "svt/subscale.hpp"

namespace svt {

struct RmsPropConfig {
  double learning_rate = 2e-5;
  double decay = 0.95;
  double momentum = 0.9;
  double epsilon = 1e-8;
};

// Non-centred RMSProp with momentum on the preconditioned gradient:
//   acc <- decay acc + (1 - decay) g^2
//   mom <- momentum mom + lr g / sqrt(acc + eps)
//   p   <- p - mom
template <typename T>
class RmsProp {
 public:
  explicit RmsProp(RmsPropConfig config = {}) : config_(config) {}

  const RmsPropConfig& config() const noexcept { return config_; }

  // Parameters missing from `grads` are updated with a zero gradient.
  // Throws DimensionError when a gradient's shape differs from its parameter.
  void step(ParamStore<T>& params, const ParamStore<T>& grads);

  ParamStore<T>& accumulators() noexcept { return acc_; }
  ParamStore<T>& momentum() noexcept { return mom_; }
  const ParamStore<T>& accumulators() const noexcept { return acc_; }
  const ParamStore<T>& momentum() const noexcept { return mom_; }
  std::uint64_t steps() const noexcept { return steps_; }
  void set_steps(std::uint64_t steps) noexcept { steps_ = steps; }

 private:
  RmsPropConfig config_;
  ParamStore<T> acc_;
  ParamStore<T> mom_;
  std::uint64_t steps_ = 0;
};

struct SliceRef {
  std::size_t video = 0;
  SliceIndex slice;
  bool operator==(const SliceRef&) const = default;
};

// Endless stream of batches over the (video x slice) product. Each epoch is
// an independent seeded shuffle, so slices of one video are spread across
// batches; a batch may straddle two epochs.
class BatchStream {
 public:
  BatchStream(std::size_t num_videos, const SubscaleFactor& s, std::size_t batch_size, std::uint64_t seed);

  std::vector<SliceRef> next();
  void skip(std::size_t batches);
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle();

  std::vector<SliceRef> all_;
  std::vector<SliceRef> epoch_order_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
};

// First `count` batches of a BatchStream.
std::vector<std::vector<SliceRef>> make_batches(std::size_t num_videos, const SubscaleFactor& s,
                                                std::size_t batch_size, std::uint64_t seed, std::size_t count);

// Contiguous `frames` frames starting at a uniform offset in [0, T - frames].
Video random_temporal_crop(const Video& video, int frames, std::mt19937_64& rng);

}  // namespace svt
