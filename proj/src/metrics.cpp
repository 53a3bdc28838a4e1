#include "svt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

namespace svt {

double bits_per_dim(double total_nats, std::size_t pixels) {
  if (pixels == 0) throw ConfigError("bits/dim over zero dims");
  return total_nats / (std::log(2.0) * 3.0 * static_cast<double>(pixels));
}

double nats_per_frame(double total_nats, std::size_t frames) {
  if (frames == 0) throw ConfigError("nats/frame over zero frames");
  return total_nats / static_cast<double>(frames);
}

namespace {

EvalResult finish(HeadKind head, double nats, std::size_t pixels, std::size_t frames) {
  EvalResult r;
  r.head = head;
  r.nats = nats;
  r.pixels = pixels;
  r.frames = frames;
  if (head == HeadKind::kCategorical) {
    r.bits_per_dim = bits_per_dim(nats, pixels);
  } else {
    r.nats_per_frame = nats_per_frame(nats, frames);
  }
  return r;
}

}  // namespace

EvalResult evaluate(const Model& model, const ParamStore<float>& params, std::span<const Video> videos,
                    int prime_frames, int threads, const std::vector<AuxTrack>* aux) {
  const ModelConfig& mc = model.config();
  if (prime_frames < 0 || prime_frames >= mc.video.t) throw ConfigError("prime frame count must lie in [0, T)");
  if (threads < 1) throw ConfigError("thread count must be at least 1");
  if (aux && aux->size() != videos.size()) throw ConfigError("one aux track per video required");
  const ParamStore<double> p64 = params.cast<double>();
  std::vector<double> nats(videos.size());
  std::vector<std::size_t> pixels(videos.size());

  auto run_video = [&](std::size_t v) {
    const Video& raw = videos[v];
    if (raw.channels() != mc.channels.raw_channels || raw.height() != mc.video.h || raw.width() != mc.video.w ||
        raw.frames() < mc.video.t) {
      throw DimensionError("evaluation video does not fit the model geometry");
    }
    const Video split = split_video(raw.frames_range(0, mc.video.t));
    for (const auto& idx : slice_order(mc.subscale)) {
      Tape<double> tape;
      ParamBinder<double> bind(tape, p64, false);
      const auto loss = model.slice_loss(bind, split, idx, prime_frames, aux ? &(*aux)[v] : nullptr);
      nats[v] += loss.nats;
      pixels[v] += loss.pixels;
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), videos.size());
  if (workers <= 1) {
    for (std::size_t v = 0; v < videos.size(); ++v) run_video(v);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t v = w; v < videos.size(); v += workers) run_video(v);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    if (!std::isfinite(nats[v])) throw NumericError("non-finite evaluation loss on video " + std::to_string(v));
    total += nats[v];
    count += pixels[v];
  }
  const std::size_t frames = videos.size() * static_cast<std::size_t>(mc.video.t - prime_frames);
  return finish(mc.channels.head, total, count, frames);
}

EvalResult copy_last_frame_baseline(std::span<const Video> videos, int frames, int prime_frames) {
  if (prime_frames < 1 || prime_frames >= frames) throw ConfigError("copy-last-frame needs 1 <= prime < frames");
  double total = 0.0;
  std::size_t pixels = 0;
  for (const auto& v : videos) {
    if (v.channels() != 1) throw ConfigError("copy-last-frame baseline expects grayscale videos");
    if (v.frames() < frames) throw DimensionError("baseline video shorter than the evaluated length");
    for (int t = prime_frames; t < frames; ++t) {
      for (int h = 0; h < v.height(); ++h) {
        for (int w = 0; w < v.width(); ++w) {
          const double y = std::clamp(v.at(t - 1, h, w, 0) / 255.0, kProbabilityClamp, 1.0 - kProbabilityClamp);
          const double z = v.at(t, h, w, 0) / 255.0;
          total -= z * std::log(y) + (1.0 - z) * std::log(1.0 - y);
          ++pixels;
        }
      }
    }
  }
  return finish(HeadKind::kDeterministic, total, pixels, videos.size() * static_cast<std::size_t>(frames - prime_frames));
}

std::string format_eval(const EvalResult& r) {
  char buf[256];
  if (r.head == HeadKind::kCategorical) {
    std::snprintf(buf, sizeof buf, "nats,%.17g\npixels,%zu\ndims,%zu\nbits_per_dim,%.17g\n", r.nats, r.pixels,
                  3 * r.pixels, r.bits_per_dim);
  } else {
    std::snprintf(buf, sizeof buf, "nats,%.17g\npixels,%zu\nframes,%zu\nnats_per_frame,%.17g\n", r.nats, r.pixels,
                  r.frames, r.nats_per_frame);
  }
  return buf;
}

}  // namespace svt
