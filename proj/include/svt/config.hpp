#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "svt/attention.hpp"
#include "svt/subscale.hpp"

namespace svt {

enum class HeadKind { kCategorical, kDeterministic };

// How raw pixels are split into discrete input channels and predicted.
struct ChannelConfig {
  HeadKind head = HeadKind::kCategorical;
  // Raw channels per pixel in stored videos (3 for RGB, 1 for grayscale).
  int raw_channels = 3;
  // Discrete 4-bit channels per pixel: coarse nibbles of every raw channel,
  // then the fine nibbles.
  int split_channels = 6;
  int num_values = 16;

  int predicted_channels() const { return head == HeadKind::kCategorical ? split_channels : 1; }
  int onehot_width() const { return split_channels * num_values; }
  bool operator==(const ChannelConfig&) const = default;
};

ChannelConfig rgb_categorical();
ChannelConfig gray_deterministic();

// [R_coarse, G_coarse, B_coarse, R_fine, G_fine, B_fine]; coarse = high nibble.
std::array<std::uint8_t, 6> split_channels(std::uint8_t r, std::uint8_t g, std::uint8_t b);
std::array<std::uint8_t, 3> join_channels(std::span<const std::uint8_t, 6> split);

// Raw video (C = 3 or 1) to split channels (C = 6 or 2) and back.
Video split_video(const Video& raw);
Video join_video(const Video& split);

enum class Variant { kSpatiotemporal, kSpatial, kSingleFrame };
enum class Preset { kDesk, kBase, kLarge };

std::string to_string(Variant v);
std::string to_string(Preset p);
Variant parse_variant(const std::string& s);
Preset parse_preset(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::kSpatiotemporal;
  VideoShape video{4, 16, 16};
  SubscaleFactor subscale{2, 2, 2};
  Int3 kernel{2, 2, 2};
  int embed_dim = 32;
  int hidden_dim = 64;
  LayerSchedule encoder;
  LayerSchedule decoder;
  ChannelConfig channels;
  int aux_width = 0;
  bool first_slice_decoder = false;
  LayerSchedule first_decoder;
  int masked_kernel = 3;

  VideoShape slice() const { return slice_shape(video, subscale); }
  // Runs every geometry check; throws ConfigError on the first violation.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Block schedules for a 4x32x32 slice and a 1x64x64 frame: four layers and
// then the same four in reverse order.
LayerSchedule subscale_schedule(int heads, int head_dim, int ffn_dim);
LayerSchedule single_frame_schedule(int heads, int head_dim, int ffn_dim);

// Rescales block extents from `reference` to `target` slice extents, keeping
// each extent a divisor of the target.
LayerSchedule rescale_schedule(const LayerSchedule& schedule, const VideoShape& reference, const VideoShape& target);

// Default geometry and schedules for a variant; `subscale` replaces the
// variant's factor (the context kernel and schedules follow it).
ModelConfig build_variant(Variant variant, const VideoShape& video, Preset preset,
                          std::optional<SubscaleFactor> subscale = std::nullopt);

}  // namespace svt
