#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svt/video.hpp"

namespace svt {

// Container file: "SVT1", version u32, count u32, then per video T, H, W, C
// as u32, a dtype tag u8 and T*H*W*C bytes in (t, h, w, c) order; all
// integers little-endian.
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint8_t kDtypeU8 = 0;

void write_container(const std::string& path, std::span<const Video> videos);
std::vector<Video> read_container(const std::string& path);

// Wraps a headerless file of N videos of T x H x W x C bytes each.
std::vector<Video> import_raw(const std::string& path, int t, int h, int w, int c);

struct Sprite {
  int y = 0, x = 0;    // top-left corner at t = 0
  int vy = 0, vx = 0;  // pixels per frame
  int size = 1;
  std::array<std::uint8_t, 3> color{255, 255, 255};
};

struct SpriteConfig {
  VideoShape canvas{4, 16, 16};
  int channels = 3;  // 3 = RGB, 1 = grayscale
  int sprites = 2;
  int sprite_size = 4;
  int max_speed = 2;  // per-axis velocity drawn uniformly from [-max, max]
  int videos = 4;
  bool operator==(const SpriteConfig&) const = default;
};

// Coordinate after `t` frames of motion in [0, range] with mirror reflection
// at both ends.
int bounce(int start, int velocity, int t, int range);

// Square sprites on a zero background, combined by per-channel max.
Video render_sprites(const VideoShape& canvas, int channels, std::span<const Sprite> sprites);

// Random sprites (position, velocity and colour drawn from `seed`).
std::vector<Video> gen_sprites(const SpriteConfig& config, std::uint64_t seed);

}  // namespace svt
