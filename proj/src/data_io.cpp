#include "svt/data_io.hpp"

#include <algorithm>
#include <cstring>
#include <random>

#include "binary_io.hpp"

namespace svt {

namespace {
constexpr char kMagic[4] = {'S', 'V', 'T', '1'};
}

void write_container(const std::string& path, std::span<const Video> videos) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(videos.size()));
  for (const auto& v : videos) {
    if (v.channels() != 1 && v.channels() != 3) {
      throw ConfigError("container videos need 1 or 3 channels, got " + std::to_string(v.channels()));
    }
    w.u32(static_cast<std::uint32_t>(v.frames()));
    w.u32(static_cast<std::uint32_t>(v.height()));
    w.u32(static_cast<std::uint32_t>(v.width()));
    w.u32(static_cast<std::uint32_t>(v.channels()));
    w.u8(kDtypeU8);
    w.bytes(v.data().data(), v.size());
  }
  detail::write_file(path, w.buffer());
}

std::vector<Video> read_container(const std::string& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(IoErrorKind::kBadMagic, "'" + path + "' is not a video container");
  }
  if (const auto version = r.u32(); version != kContainerVersion) {
    throw IoError(IoErrorKind::kBadVersion, "unsupported container version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<Video> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t t = r.u32(), h = r.u32(), w = r.u32(), c = r.u32();
    const std::uint8_t dtype = r.u8();
    if (dtype != kDtypeU8) throw IoError(IoErrorKind::kBadVersion, "unsupported dtype tag " + std::to_string(dtype));
    if (c != 1 && c != 3) throw IoError(IoErrorKind::kSizeMismatch, "video " + std::to_string(i) + " has C=" +
                                                                          std::to_string(c) + ", expected 1 or 3");
    if (t == 0 || h == 0 || w == 0) throw IoError(IoErrorKind::kSizeMismatch, "video " + std::to_string(i) + " is empty");
    const std::size_t n = static_cast<std::size_t>(t) * h * w * c;
    if (!r.has(n)) {
      throw IoError(IoErrorKind::kSizeMismatch, "video " + std::to_string(i) + " declares " + std::to_string(n) +
                                                    " bytes, " + std::to_string(r.remaining()) + " remain");
    }
    Video v(static_cast<int>(t), static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    r.bytes(v.data().data(), n);
    out.push_back(std::move(v));
  }
  if (r.remaining() != 0) {
    throw IoError(IoErrorKind::kSizeMismatch, std::to_string(r.remaining()) + " trailing bytes after the last video");
  }
  return out;
}

std::vector<Video> import_raw(const std::string& path, int t, int h, int w, int c) {
  if (t < 1 || h < 1 || w < 1 || (c != 1 && c != 3)) throw ConfigError("invalid raw video geometry");
  const auto bytes = detail::read_file(path);
  const std::size_t per_video = static_cast<std::size_t>(t) * h * w * c;
  if (bytes.empty() || bytes.size() % per_video != 0) {
    throw IoError(IoErrorKind::kSizeMismatch, "raw file of " + std::to_string(bytes.size()) +
                                                  " bytes is not a multiple of " + std::to_string(per_video));
  }
  std::vector<Video> out;
  for (std::size_t off = 0; off < bytes.size(); off += per_video) {
    Video v(t, h, w, c);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(off), per_video, v.data().begin());
    out.push_back(std::move(v));
  }
  return out;
}

int bounce(int start, int velocity, int t, int range) {
  if (range <= 0) return 0;
  const long long period = 2LL * range;
  long long q = (static_cast<long long>(start) + static_cast<long long>(velocity) * t) % period;
  if (q < 0) q += period;
  return static_cast<int>(q > range ? period - q : q);
}

Video render_sprites(const VideoShape& canvas, int channels, std::span<const Sprite> sprites) {
  if (channels != 1 && channels != 3) throw ConfigError("sprite videos need 1 or 3 channels");
  Video out(canvas, channels);
  for (const auto& s : sprites) {
    if (s.size < 1 || s.size > canvas.h || s.size > canvas.w) {
      throw ConfigError("sprite of size " + std::to_string(s.size) + " does not fit the canvas");
    }
    const int range_y = canvas.h - s.size;
    const int range_x = canvas.w - s.size;
    if (s.y < 0 || s.y > range_y || s.x < 0 || s.x > range_x) throw ConfigError("sprite starts outside the canvas");
    for (int t = 0; t < canvas.t; ++t) {
      const int y0 = bounce(s.y, s.vy, t, range_y);
      const int x0 = bounce(s.x, s.vx, t, range_x);
      for (int y = y0; y < y0 + s.size; ++y) {
        for (int x = x0; x < x0 + s.size; ++x) {
          for (int c = 0; c < channels; ++c) {
            auto& v = out.at(t, y, x, c);
            v = std::max(v, s.color[static_cast<std::size_t>(c)]);
          }
        }
      }
    }
  }
  return out;
}

std::vector<Video> gen_sprites(const SpriteConfig& config, std::uint64_t seed) {
  const auto& cv = config.canvas;
  if (cv.t < 1 || cv.h < 1 || cv.w < 1) throw ConfigError("sprite canvas extents must be positive");
  if (config.sprite_size < 1 || config.sprite_size > cv.h || config.sprite_size > cv.w) {
    throw ConfigError("sprite size " + std::to_string(config.sprite_size) + " does not fit the canvas");
  }
  if (config.sprites < 0 || config.max_speed < 0 || config.videos < 0) {
    throw ConfigError("sprite count, speed and video count must be non-negative");
  }
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::vector<Video> out;
  for (int v = 0; v < config.videos; ++v) {
    std::vector<Sprite> sprites;
    for (int k = 0; k < config.sprites; ++k) {
      Sprite s;
      s.size = config.sprite_size;
      s.y = uniform(0, cv.h - s.size);
      s.x = uniform(0, cv.w - s.size);
      s.vy = uniform(-config.max_speed, config.max_speed);
      s.vx = uniform(-config.max_speed, config.max_speed);
      if (config.channels == 3) {
        for (auto& c : s.color) c = static_cast<std::uint8_t>(uniform(64, 255));
      }
      sprites.push_back(s);
    }
    out.push_back(render_sprites(cv, config.channels, sprites));
  }
  return out;
}

}  // namespace svt
