#include "svt/subscale.hpp"

#include <sstream>

namespace svt {

std::string SliceIndex::str() const {
  std::ostringstream os;
  os << '(' << a << ',' << b << ',' << c << ')';
  return os.str();
}

void validate(const SubscaleFactor& s) {
  if (s.t < 1 || s.h < 1 || s.w < 1) throw ConfigError("subscale factors must be positive");
}

void validate(const SubscaleFactor& s, const SliceIndex& idx) {
  validate(s);
  if (idx.a < 0 || idx.a >= s.t || idx.b < 0 || idx.b >= s.h || idx.c < 0 || idx.c >= s.w) {
    throw ConfigError("slice index " + idx.str() + " outside subscale factor");
  }
}

void check_divisible(const VideoShape& shape, const SubscaleFactor& s) {
  validate(s);
  if (shape.t % s.t || shape.h % s.h || shape.w % s.w) {
    std::ostringstream os;
    os << "video " << shape.t << 'x' << shape.h << 'x' << shape.w << " is not divisible by subscale factor ("
       << s.t << ',' << s.h << ',' << s.w << ')';
    throw ConfigError(os.str());
  }
}

VideoShape slice_shape(const VideoShape& shape, const SubscaleFactor& s) {
  check_divisible(shape, s);
  return {shape.t / s.t, shape.h / s.h, shape.w / s.w};
}

std::vector<SliceIndex> slice_order(const SubscaleFactor& s) {
  validate(s);
  std::vector<SliceIndex> order;
  order.reserve(static_cast<std::size_t>(s.count()));
  for (int a = 0; a < s.t; ++a) {
    for (int b = 0; b < s.h; ++b) {
      for (int c = 0; c < s.w; ++c) order.push_back({a, b, c});
    }
  }
  return order;
}

int slice_rank(const SubscaleFactor& s, const SliceIndex& idx) {
  validate(s, idx);
  return (idx.a * s.h + idx.b) * s.w + idx.c;
}

Video extract_slice(const Video& video, const SubscaleFactor& s, const SliceIndex& idx) {
  validate(s, idx);
  const VideoShape ss = slice_shape(video.shape(), s);
  Video out(ss, video.channels());
  for (int t = 0; t < ss.t; ++t) {
    for (int h = 0; h < ss.h; ++h) {
      for (int w = 0; w < ss.w; ++w) {
        for (int c = 0; c < video.channels(); ++c) {
          out.at(t, h, w, c) = video.at(t * s.t + idx.a, h * s.h + idx.b, w * s.w + idx.c, c);
        }
      }
    }
  }
  return out;
}

void merge_slice(Video& video, const SubscaleFactor& s, const SliceIndex& idx, const Video& slice) {
  validate(s, idx);
  const VideoShape ss = slice_shape(video.shape(), s);
  if (slice.shape() != ss || slice.channels() != video.channels()) {
    throw DimensionError("merge_slice: slice shape does not match video / subscale factor");
  }
  for (int t = 0; t < ss.t; ++t) {
    for (int h = 0; h < ss.h; ++h) {
      for (int w = 0; w < ss.w; ++w) {
        for (int c = 0; c < video.channels(); ++c) {
          video.at(t * s.t + idx.a, h * s.h + idx.b, w * s.w + idx.c, c) = slice.at(t, h, w, c);
        }
      }
    }
  }
}

MaskedVideo mask_preceding(const Video& video, const SubscaleFactor& s, const SliceIndex& idx) {
  validate(s, idx);
  check_divisible(video.shape(), s);
  MaskedVideo out{Video(video.shape(), video.channels()), std::vector<std::uint8_t>(video.positions(), 0)};
  for (int t = 0; t < video.frames(); ++t) {
    for (int h = 0; h < video.height(); ++h) {
      for (int w = 0; w < video.width(); ++w) {
        if (!(slice_of(s, t, h, w) < idx)) continue;
        const std::size_t p = video.position_index(t, h, w);
        out.visible[p] = 1;
        for (int c = 0; c < video.channels(); ++c) out.video.at(t, h, w, c) = video.at(t, h, w, c);
      }
    }
  }
  return out;
}

Int3 context_padding(const Int3& kernel, const SliceIndex& idx) {
  return {kernel[0] / 2 - idx.a, kernel[1] / 2 - idx.b, kernel[2] / 2 - idx.c};
}

}  // namespace svt
