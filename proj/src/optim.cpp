#include "svt/optim.hpp"

#include <algorithm>
#include <cmath>

namespace svt {

template <typename T>
void RmsProp<T>::step(ParamStore<T>& params, const ParamStore<T>& grads) {
  const T decay = static_cast<T>(config_.decay);
  const T momentum = static_cast<T>(config_.momentum);
  const T lr = static_cast<T>(config_.learning_rate);
  const T eps = static_cast<T>(config_.epsilon);
  for (auto& [name, p] : params) {
    const NdArray<T>* g = grads.contains(name) ? &grads.at(name) : nullptr;
    if (g && g->shape() != p.shape()) {
      throw DimensionError("gradient for '" + name + "' has shape " + shape_str(g->shape()) + ", parameter " +
                           shape_str(p.shape()));
    }
    if (!acc_.contains(name)) {
      acc_.set(name, NdArray<T>(p.shape()));
      mom_.set(name, NdArray<T>(p.shape()));
    }
    auto& acc = acc_.at(name);
    auto& mom = mom_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T gi = g ? (*g)[i] : T{0};
      acc[i] = decay * acc[i] + (T{1} - decay) * gi * gi;
      mom[i] = momentum * mom[i] + lr * gi / std::sqrt(acc[i] + eps);
      p[i] -= mom[i];
    }
  }
  ++steps_;
}

template class RmsProp<float>;
template class RmsProp<double>;

BatchStream::BatchStream(std::size_t num_videos, const SubscaleFactor& s, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
  if (num_videos == 0) throw ConfigError("cannot batch an empty dataset");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  for (std::size_t v = 0; v < num_videos; ++v) {
    for (const auto& idx : slice_order(s)) all_.push_back({v, idx});
  }
  reshuffle();
}

void BatchStream::reshuffle() {
  epoch_order_ = all_;
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch_)};
  std::mt19937_64 rng(seq);
  std::shuffle(epoch_order_.begin(), epoch_order_.end(), rng);
  cursor_ = 0;
}

std::vector<SliceRef> BatchStream::next() {
  std::vector<SliceRef> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == epoch_order_.size()) {
      ++epoch_;
      reshuffle();
    }
    batch.push_back(epoch_order_[cursor_++]);
  }
  return batch;
}

void BatchStream::skip(std::size_t batches) {
  for (std::size_t i = 0; i < batches; ++i) next();
}

std::vector<std::vector<SliceRef>> make_batches(std::size_t num_videos, const SubscaleFactor& s,
                                                std::size_t batch_size, std::uint64_t seed, std::size_t count) {
  BatchStream stream(num_videos, s, batch_size, seed);
  std::vector<std::vector<SliceRef>> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(stream.next());
  return out;
}

Video random_temporal_crop(const Video& video, int frames, std::mt19937_64& rng) {
  if (frames < 1 || video.frames() < frames) {
    throw ConfigError("video with " + std::to_string(video.frames()) + " frames is too short to crop to " +
                      std::to_string(frames));
  }
  std::uniform_int_distribution<int> offset(0, video.frames() - frames);
  const int start = offset(rng);
  return video.frames_range(start, start + frames);
}

}  // namespace svt
