#include "svt/config.hpp"

#include <algorithm>
#include <cmath>

namespace svt {

ChannelConfig rgb_categorical() { return ChannelConfig{HeadKind::kCategorical, 3, 6, 16}; }
ChannelConfig gray_deterministic() { return ChannelConfig{HeadKind::kDeterministic, 1, 2, 16}; }

std::array<std::uint8_t, 6> split_channels(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return {static_cast<std::uint8_t>(r >> 4),   static_cast<std::uint8_t>(g >> 4),
          static_cast<std::uint8_t>(b >> 4),   static_cast<std::uint8_t>(r & 0x0F),
          static_cast<std::uint8_t>(g & 0x0F), static_cast<std::uint8_t>(b & 0x0F)};
}

std::array<std::uint8_t, 3> join_channels(std::span<const std::uint8_t, 6> s) {
  return {static_cast<std::uint8_t>((s[0] << 4) | s[3]), static_cast<std::uint8_t>((s[1] << 4) | s[4]),
          static_cast<std::uint8_t>((s[2] << 4) | s[5])};
}

Video split_video(const Video& raw) {
  const int c = raw.channels();
  if (c != 1 && c != 3) throw ConfigError("split_video expects 1 or 3 channels, got " + std::to_string(c));
  Video out(raw.shape(), 2 * c);
  for (std::size_t p = 0; p < raw.positions(); ++p) {
    const auto in = raw.pixel(p);
    auto dst = out.pixel(p);
    for (int k = 0; k < c; ++k) {
      dst[k] = static_cast<std::uint8_t>(in[k] >> 4);
      dst[c + k] = static_cast<std::uint8_t>(in[k] & 0x0F);
    }
  }
  return out;
}

Video join_video(const Video& split) {
  const int c2 = split.channels();
  if (c2 != 2 && c2 != 6) throw ConfigError("join_video expects 2 or 6 channels, got " + std::to_string(c2));
  const int c = c2 / 2;
  Video out(split.shape(), c);
  for (std::size_t p = 0; p < split.positions(); ++p) {
    const auto in = split.pixel(p);
    auto dst = out.pixel(p);
    for (int k = 0; k < c; ++k) {
      if (in[k] > 15 || in[c + k] > 15) throw ConfigError("split channel value outside 0..15");
      dst[k] = static_cast<std::uint8_t>((in[k] << 4) | in[c + k]);
    }
  }
  return out;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSpatiotemporal: return "spatiotemporal";
    case Variant::kSpatial: return "spatial";
    case Variant::kSingleFrame: return "single_frame";
  }
  return "?";
}

std::string to_string(Preset p) {
  switch (p) {
    case Preset::kDesk: return "desk";
    case Preset::kBase: return "base";
    case Preset::kLarge: return "large";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "spatiotemporal") return Variant::kSpatiotemporal;
  if (s == "spatial") return Variant::kSpatial;
  if (s == "single_frame") return Variant::kSingleFrame;
  throw ConfigError("unknown variant '" + s + "' (expected spatiotemporal|spatial|single_frame)");
}

Preset parse_preset(const std::string& s) {
  if (s == "desk") return Preset::kDesk;
  if (s == "base") return Preset::kBase;
  if (s == "large") return Preset::kLarge;
  throw ConfigError("unknown preset '" + s + "' (expected desk|base|large)");
}

namespace {

LayerSchedule mirrored(const std::array<BlockShape, 4>& blocks, int heads, int head_dim, int ffn_dim) {
  LayerSchedule out;
  for (const auto& b : blocks) out.push_back({b, heads, head_dim, ffn_dim});
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) out.push_back({*it, heads, head_dim, ffn_dim});
  return out;
}

int nearest_divisor(int target, int want) {
  want = std::clamp(want, 1, target);
  for (int d = want; d >= 1; --d) {
    if (target % d == 0) return d;
  }
  return 1;
}

int rescale_extent(int extent, int reference, int target) {
  const int want = static_cast<int>(std::lround(static_cast<double>(extent) * target / reference));
  return nearest_divisor(target, want);
}

}  // namespace

LayerSchedule subscale_schedule(int heads, int head_dim, int ffn_dim) {
  return mirrored({BlockShape{4, 8, 4}, BlockShape{4, 4, 8}, BlockShape{1, 32, 4}, BlockShape{1, 4, 32}}, heads,
                  head_dim, ffn_dim);
}

LayerSchedule single_frame_schedule(int heads, int head_dim, int ffn_dim) {
  return mirrored({BlockShape{1, 8, 16}, BlockShape{1, 16, 8}, BlockShape{1, 2, 64}, BlockShape{1, 64, 2}}, heads,
                  head_dim, ffn_dim);
}

LayerSchedule rescale_schedule(const LayerSchedule& schedule, const VideoShape& reference, const VideoShape& target) {
  LayerSchedule out = schedule;
  for (auto& l : out) {
    l.block.t = rescale_extent(l.block.t, reference.t, target.t);
    l.block.h = rescale_extent(l.block.h, reference.h, target.h);
    l.block.w = rescale_extent(l.block.w, reference.w, target.w);
  }
  return out;
}

void ModelConfig::validate() const {
  if (video.t < 1 || video.h < 1 || video.w < 1) throw ConfigError("video extents must be positive");
  const VideoShape s = slice();
  for (int k : kernel) {
    if (k < 1) throw ConfigError("context kernel extents must be positive");
  }
  if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("embed_dim and hidden_dim must be positive");
  if (encoder.empty() && !(first_slice_decoder && subscale.count() == 1)) {
    throw ConfigError("encoder schedule is empty");
  }
  if (decoder.empty()) throw ConfigError("decoder schedule is empty");
  check_schedule(s, encoder);
  check_schedule(s, decoder);
  if (first_slice_decoder) {
    if (first_decoder.empty()) throw ConfigError("first-slice decoder enabled with an empty schedule");
    check_schedule(s, first_decoder);
  }
  if (masked_kernel < 1 || masked_kernel % 2 == 0) {
    throw ConfigError("masked convolution kernel must be odd, got " + std::to_string(masked_kernel));
  }
  if (aux_width < 0) throw ConfigError("aux_width must be non-negative");
  if (channels.split_channels != 2 * channels.raw_channels || channels.num_values != 16) {
    throw ConfigError("channel configuration must split each raw channel into two 4-bit channels");
  }
  if (variant == Variant::kSingleFrame) {
    if (!(subscale == SubscaleFactor{video.t, 1, 1}) || kernel != Int3{6, 1, 1}) {
      throw ConfigError("single_frame requires subscale (T,1,1) and context kernel (6,1,1)");
    }
  }
}

ModelConfig build_variant(Variant variant, const VideoShape& video, Preset preset,
                          std::optional<SubscaleFactor> subscale) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.video = video;
  cfg.channels = rgb_categorical();

  const bool desk = preset == Preset::kDesk;
  switch (variant) {
    case Variant::kSpatiotemporal: cfg.subscale = desk ? SubscaleFactor{2, 2, 2} : SubscaleFactor{4, 2, 2}; break;
    case Variant::kSpatial: cfg.subscale = SubscaleFactor{1, 2, 2}; break;
    case Variant::kSingleFrame: cfg.subscale = SubscaleFactor{video.t, 1, 1}; break;
  }
  if (subscale) cfg.subscale = *subscale;
  cfg.kernel = variant == Variant::kSingleFrame ? Int3{6, 1, 1} : cfg.subscale.as_int3();

  int heads = 8, head_dim = 128;
  if (desk) {
    cfg.embed_dim = 32;
    cfg.hidden_dim = 64;
    heads = 2;
    head_dim = 32;
  } else {
    cfg.embed_dim = 128;
    cfg.hidden_dim = 512;
  }

  const VideoShape slice = slice_shape(video, cfg.subscale);
  LayerSchedule schedule;
  if (variant == Variant::kSingleFrame) {
    schedule = rescale_schedule(single_frame_schedule(heads, head_dim, cfg.hidden_dim), {1, 64, 64}, slice);
  } else {
    schedule = rescale_schedule(subscale_schedule(heads, head_dim, cfg.hidden_dim), {4, 32, 32}, slice);
  }
  if (preset == Preset::kLarge) {
    for (std::size_t l = schedule.size() - 4; l < schedule.size(); ++l) {
      schedule[l].heads = 16;
      schedule[l].ffn_dim = 2048;
    }
  }
  cfg.encoder = schedule;
  cfg.decoder = schedule;
  cfg.first_decoder = schedule;
  cfg.first_decoder.insert(cfg.first_decoder.end(), schedule.begin(), schedule.end());
  cfg.validate();
  return cfg;
}

}  // namespace svt
