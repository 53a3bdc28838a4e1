#include "svt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace svt {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Global position of slice-local position p.
std::size_t global_position(const Video& canvas, const SubscaleFactor& s, const SliceIndex& idx,
                            const VideoShape& slice, std::size_t p) {
  const std::size_t hw = static_cast<std::size_t>(slice.h) * slice.w;
  const int t = static_cast<int>(p / hw);
  const int h = static_cast<int>((p % hw) / slice.w);
  const int w = static_cast<int>(p % slice.w);
  return canvas.position_index(t * s.t + idx.a, h * s.h + idx.b, w * s.w + idx.c);
}

}  // namespace

void check_temperature(double tau) {
  if (!(tau > 0.0) || tau > 2.0) throw ConfigError("temperature must lie in (0, 2], got " + std::to_string(tau));
}

std::vector<double> apply_temperature(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive, got " + std::to_string(tau));
  std::vector<double> out(logits.begin(), logits.end());
  for (auto& v : out) v /= tau;
  return out;
}

int sample_categorical(std::span<const double> logits, double tau, double u) {
  const std::vector<double> scaled = apply_temperature(logits, tau);
  const double top = *std::max_element(scaled.begin(), scaled.end());
  std::vector<double> cdf(scaled.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    total += std::exp(scaled[i] - top);
    cdf[i] = total;
  }
  const double target = u * total;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    if (target < cdf[i]) return static_cast<int>(i);
  }
  return static_cast<int>(cdf.size() - 1);
}

double stream_uniform(std::uint64_t seed, std::uint64_t position, std::uint64_t channel) {
  const std::uint64_t x = splitmix64(seed ^ splitmix64(position * 8 + channel));
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

Canvas Canvas::primed(const ModelConfig& config, const Video& prime, int prime_frames) {
  if (prime_frames < 0 || prime_frames > config.video.t) {
    throw ConfigError("prime frame count must lie in [0, T]");
  }
  Canvas c{Video(config.video, config.channels.split_channels), std::vector<std::uint8_t>(config.video.positions())};
  if (prime_frames == 0) return c;
  if (prime.channels() != config.channels.raw_channels || prime.height() != config.video.h ||
      prime.width() != config.video.w || prime.frames() < prime_frames) {
    throw DimensionError("prime video does not fit the model geometry");
  }
  const Video split = split_video(prime.frames_range(0, prime_frames));
  const std::size_t n = split.size();
  std::copy(split.data().begin(), split.data().begin() + static_cast<std::ptrdiff_t>(n), c.split.data().begin());
  std::fill(c.known.begin(), c.known.begin() + static_cast<std::ptrdiff_t>(split.positions()), 1);
  return c;
}

Video sample_slice(const Model& model, const ParamStore<float>& params, Canvas& canvas, const SliceIndex& idx,
                   const SampleConfig& config, const AuxTrack* aux) {
  const ModelConfig& mc = model.config();
  const SubscaleFactor& s = mc.subscale;
  validate(s, idx);
  check_temperature(config.temperature);
  if (canvas.split.shape() != mc.video || canvas.split.channels() != mc.channels.split_channels) {
    throw DimensionError("canvas does not match the model geometry");
  }
  const int rank = slice_rank(s, idx);
  for (int t = 0; t < mc.video.t; ++t) {
    for (int h = 0; h < mc.video.h; ++h) {
      for (int w = 0; w < mc.video.w; ++w) {
        if (!canvas.known[canvas.split.position_index(t, h, w)] && slice_rank(s, slice_of(s, t, h, w)) < rank) {
          throw ConfigError("slice " + slice_of(s, t, h, w).str() + " must be generated before slice " + idx.str());
        }
      }
    }
  }

  const VideoShape shape = mc.slice();
  Video slice = extract_slice(canvas.split, s, idx);
  const bool first = model.uses_first_decoder(idx);

  std::optional<NdArray<float>> encoded;
  if (!first) {
    Tape<float> tape;
    ParamBinder<float> bind(tape, params, false);
    auto onehot = tape.leaf(model.encoder_onehot<float>(canvas.split, idx), false);
    encoded = model.encode(bind, onehot, idx, aux).value();
  }

  const int channels = mc.channels.split_channels;
  const std::size_t nv = static_cast<std::size_t>(mc.channels.num_values);
  for (std::size_t p = 0; p < slice.positions(); ++p) {
    const std::size_t g = global_position(canvas.split, s, idx, shape, p);
    if (canvas.known[g]) continue;
    Tape<float> tape;
    ParamBinder<float> bind(tape, params, false);
    std::optional<Var<float>> enc;
    if (encoded) enc = tape.leaf(*encoded, false);
    auto decoded = model.decode(bind, tape.leaf(model.slice_onehot<float>(slice), false), enc, first);
    const std::size_t row[] = {p};
    auto decoded_row = gather_rows(decoded, std::span<const std::size_t>(row));
    auto px = slice.pixel(p);

    if (mc.channels.head == HeadKind::kDeterministic) {
      auto pixel_onehot = tape.leaf(NdArray<float>({1, static_cast<std::size_t>(channels) * nv}), false);
      const double logit = model.predict(bind, decoded_row, pixel_onehot)[0].value()[0];
      const double y = 1.0 / (1.0 + std::exp(-logit));
      const auto value = static_cast<std::uint8_t>(std::lround(std::clamp(y, 0.0, 1.0) * 255.0));
      px[0] = static_cast<std::uint8_t>(value >> 4);
      px[1] = static_cast<std::uint8_t>(value & 0x0F);
      continue;
    }
    for (int k = 0; k < channels; ++k) {
      NdArray<float> pixel_onehot({1, static_cast<std::size_t>(channels) * nv});
      for (int j = 0; j < k; ++j) pixel_onehot[static_cast<std::size_t>(j) * nv + px[j]] = 1.0f;
      const auto logits = model.predict(bind, decoded_row, tape.leaf(std::move(pixel_onehot), false));
      const auto& values = logits[static_cast<std::size_t>(k)].value();
      std::vector<double> row_logits(values.data().begin(), values.data().end());
      const double u = stream_uniform(config.seed, g, static_cast<std::uint64_t>(k));
      px[k] = static_cast<std::uint8_t>(sample_categorical(row_logits, config.temperature, u));
    }
  }

  merge_slice(canvas.split, s, idx, slice);
  for (std::size_t p = 0; p < slice.positions(); ++p) canvas.known[global_position(canvas.split, s, idx, shape, p)] = 1;
  return slice;
}

SampledVideo sample_video(const Model& model, const ParamStore<float>& params, const Video& prime,
                          const SampleConfig& config, const AuxTrack* aux) {
  Canvas canvas = Canvas::primed(model.config(), prime, config.prime_frames);
  for (const auto& idx : slice_order(model.config().subscale)) sample_slice(model, params, canvas, idx, config, aux);
  return {canvas.split, join_video(canvas.split)};
}

void write_ppm_frames(const std::string& prefix, const Video& raw) {
  if (raw.channels() != 1 && raw.channels() != 3) throw ConfigError("PPM output needs 1 or 3 channels");
  const std::size_t frame_bytes = static_cast<std::size_t>(raw.height()) * raw.width() * raw.channels();
  for (int t = 0; t < raw.frames(); ++t) {
    const std::string path = prefix + std::to_string(t) + ".ppm";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(IoErrorKind::kOpen, "cannot open '" + path + "' for writing");
    out << (raw.channels() == 3 ? "P6" : "P5") << '\n' << raw.width() << ' ' << raw.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(raw.data().data()) + t * frame_bytes,
              static_cast<std::streamsize>(frame_bytes));
    if (!out) throw IoError(IoErrorKind::kWrite, "failed writing '" + path + "'");
  }
}

}  // namespace svt
