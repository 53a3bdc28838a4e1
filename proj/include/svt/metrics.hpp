#pragma once

#include <span>
#include <string>
#include <vector>

#include "svt/model.hpp"

namespace svt {

// nats / (ln 2 * 3 * pixels): three RGB dims per evaluated pixel.
double bits_per_dim(double total_nats, std::size_t pixels);

double nats_per_frame(double total_nats, std::size_t frames);

struct EvalResult {
  HeadKind head = HeadKind::kCategorical;
  double nats = 0.0;
  std::size_t pixels = 0;  // non-primed pixels
  std::size_t frames = 0;  // non-primed frames
  double bits_per_dim = 0.0;
  double nats_per_frame = 0.0;
};

// Teacher-forced likelihood of every slice of every video (first T frames),
// excluding frames before `prime_frames`. Computed in double precision; the
// per-video totals are summed in video order.
EvalResult evaluate(const Model& model, const ParamStore<float>& params, std::span<const Video> videos,
                    int prime_frames, int threads = 1, const std::vector<AuxTrack>* aux = nullptr);

// Deterministic cross-entropy of predicting every non-primed grayscale frame
// by the frame before it.
EvalResult copy_last_frame_baseline(std::span<const Video> videos, int frames, int prime_frames);

// "metric,value" lines.
std::string format_eval(const EvalResult& r);

}  // namespace svt
