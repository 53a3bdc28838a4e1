#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svt/model.hpp"

namespace svt {

struct SampleConfig {
  int prime_frames = 1;
  double temperature = 0.9;
  std::uint64_t seed = 0;
  int num_samples = 1;
  bool operator==(const SampleConfig&) const = default;
};

// Throws ConfigError unless 0 < tau <= 2.
void check_temperature(double tau);

// logits / tau. Throws ConfigError when tau <= 0.
std::vector<double> apply_temperature(std::span<const double> logits, double tau);

// Inverse-CDF draw from softmax(logits / tau) with u in [0, 1).
int sample_categorical(std::span<const double> logits, double tau, double u);

// Uniform [0, 1) value of the stream owned by one (position, channel) pair.
double stream_uniform(std::uint64_t seed, std::uint64_t position, std::uint64_t channel);

// Split-channel video under construction and which positions hold final
// values (primed or already generated).
struct Canvas {
  Video split;
  std::vector<std::uint8_t> known;

  // Frames before `prime_frames` are copied from `prime` (raw, C = 1 or 3,
  // at least `prime_frames` frames) and marked known.
  static Canvas primed(const ModelConfig& config, const Video& prime, int prime_frames);
};

// Generates slice idx in raster order, channel by channel, and writes it into
// the canvas. Known positions are copied, never sampled. Throws ConfigError
// if any position of an earlier slice is not yet known.
Video sample_slice(const Model& model, const ParamStore<float>& params, Canvas& canvas, const SliceIndex& idx,
                   const SampleConfig& config, const AuxTrack* aux = nullptr);

struct SampledVideo {
  Video split;
  Video raw;
};

// All slices in generation order, starting from the first `prime_frames`
// frames of `prime`.
SampledVideo sample_video(const Model& model, const ParamStore<float>& params, const Video& prime,
                          const SampleConfig& config, const AuxTrack* aux = nullptr);

// Writes each frame as `<prefix><t>.ppm` (P6 for RGB, P5 for grayscale).
void write_ppm_frames(const std::string& prefix, const Video& raw);

}  // namespace svt
