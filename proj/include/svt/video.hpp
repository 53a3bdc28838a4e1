#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "svt/error.hpp"

namespace svt {

struct VideoShape {
  int t = 0;
  int h = 0;
  int w = 0;

  int positions() const { return t * h * w; }
  bool operator==(const VideoShape&) const = default;
};

// (T, H, W, C) volume of discrete channel values, row-major.
class Video {
 public:
  Video() = default;
  Video(int t, int h, int w, int c, std::uint8_t fill = 0)
      : t_(t), h_(h), w_(w), c_(c), data_(static_cast<std::size_t>(t) * h * w * c, fill) {
    if (t < 0 || h < 0 || w < 0 || c < 0) throw ConfigError("negative video extent");
  }
  Video(VideoShape shape, int c, std::uint8_t fill = 0) : Video(shape.t, shape.h, shape.w, c, fill) {}

  int frames() const noexcept { return t_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int channels() const noexcept { return c_; }
  VideoShape shape() const noexcept { return {t_, h_, w_}; }
  std::size_t positions() const noexcept { return static_cast<std::size_t>(t_) * h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t position_index(int t, int h, int w) const noexcept {
    return (static_cast<std::size_t>(t) * h_ + h) * w_ + w;
  }
  std::uint8_t& at(int t, int h, int w, int c) { return data_[position_index(t, h, w) * c_ + c]; }
  std::uint8_t at(int t, int h, int w, int c) const { return data_[position_index(t, h, w) * c_ + c]; }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }
  // Channel values of one position.
  std::span<const std::uint8_t> pixel(std::size_t position) const {
    return std::span<const std::uint8_t>(data_).subspan(position * c_, c_);
  }
  std::span<std::uint8_t> pixel(std::size_t position) {
    return std::span<std::uint8_t>(data_).subspan(position * c_, c_);
  }

  // Frames [begin, end) as a new video.
  Video frames_range(int begin, int end) const {
    if (begin < 0 || end > t_ || begin > end) throw ConfigError("frame range out of bounds");
    Video out(end - begin, h_, w_, c_);
    const std::size_t frame = static_cast<std::size_t>(h_) * w_ * c_;
    std::copy(data_.begin() + begin * frame, data_.begin() + end * frame, out.data_.begin());
    return out;
  }

  bool operator==(const Video&) const = default;

 private:
  int t_ = 0, h_ = 0, w_ = 0, c_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace svt
