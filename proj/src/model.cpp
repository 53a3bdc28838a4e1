#include "svt/model.hpp"

#include <algorithm>
#include <cmath>

namespace svt {
namespace {

struct SliceAxes {
  std::vector<std::size_t> t, h, w;
};

SliceAxes slice_axes(const VideoShape& s) {
  SliceAxes out;
  for (int t = 0; t < s.t; ++t) {
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) {
        out.t.push_back(static_cast<std::size_t>(t));
        out.h.push_back(static_cast<std::size_t>(h));
        out.w.push_back(static_cast<std::size_t>(w));
      }
    }
  }
  return out;
}

std::string layer_prefix(const std::string& stack, std::size_t i) { return stack + "layer" + std::to_string(i) + "/"; }

// One-hot rows for every position of a split video; rows of positions with
// visible[p] == 0 stay zero.
template <typename T>
NdArray<T> split_onehot(const Video& split, int num_values, const std::vector<std::uint8_t>* visible) {
  const std::size_t c = static_cast<std::size_t>(split.channels());
  const std::size_t v = static_cast<std::size_t>(num_values);
  NdArray<T> out({split.positions(), c * v});
  for (std::size_t p = 0; p < split.positions(); ++p) {
    if (visible && !(*visible)[p]) continue;
    const auto px = split.pixel(p);
    for (std::size_t k = 0; k < c; ++k) {
      if (px[k] >= v) throw ConfigError("split channel value " + std::to_string(px[k]) + " out of range");
      out[p * c * v + k * v + px[k]] = T{1};
    }
  }
  return out;
}

template <typename T>
Var<T> add_axis_embeddings(ParamBinder<T>& bind, Var<T> z, const std::string& prefix, const SliceAxes& axes) {
  z = add(z, gather_rows(bind(prefix + "pos_t"), std::span<const std::size_t>(axes.t)));
  z = add(z, gather_rows(bind(prefix + "pos_h"), std::span<const std::size_t>(axes.h)));
  return add(z, gather_rows(bind(prefix + "pos_w"), std::span<const std::size_t>(axes.w)));
}

template <typename T>
Var<T> run_stack(ParamBinder<T>& bind, Var<T> z, const std::string& prefix, const LayerSchedule& schedule,
                 const VideoShape& volume, bool causal) {
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    z = attention_layer(z, volume, schedule[i], bind_layer(bind, layer_prefix(prefix, i)), causal);
  }
  return z;
}

}  // namespace

Model::Model(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

bool Model::uses_first_decoder(const SliceIndex& idx) const {
  return config_.first_slice_decoder && idx == SliceIndex{0, 0, 0};
}

ParamStore<float> Model::init_params(std::uint64_t seed, const InitOptions& options) const {
  const auto& c = config_;
  const VideoShape s = c.slice();
  const auto de = static_cast<std::size_t>(c.embed_dim);
  const auto d = static_cast<std::size_t>(c.hidden_dim);
  const auto nv = static_cast<std::size_t>(c.channels.num_values);
  const auto in_width = static_cast<std::size_t>(c.channels.onehot_width());
  const double sd = options.stddev;
  Initializer init(seed);
  ParamStore<float> p;
  LayerInit layer_init{sd, options.random_relative_bias};

  const auto axis_tables = [&](const std::string& prefix, std::size_t width) {
    p.set(prefix + "pos_t", init.truncated_normal({static_cast<std::size_t>(s.t), width}, sd));
    p.set(prefix + "pos_h", init.truncated_normal({static_cast<std::size_t>(s.h), width}, sd));
    p.set(prefix + "pos_w", init.truncated_normal({static_cast<std::size_t>(s.w), width}, sd));
  };

  if (!c.encoder.empty()) {
    p.set("enc/conv_kernel",
          init.truncated_normal({static_cast<std::size_t>(c.kernel[0]), static_cast<std::size_t>(c.kernel[1]),
                                 static_cast<std::size_t>(c.kernel[2]), in_width, de},
                                sd));
    p.set("enc/conv_bias", Initializer::constant({de}, 0.0f));
    axis_tables("enc/", de);
    p.set("enc/slice_t", init.truncated_normal({static_cast<std::size_t>(c.subscale.t), de}, sd));
    p.set("enc/slice_h", init.truncated_normal({static_cast<std::size_t>(c.subscale.h), de}, sd));
    p.set("enc/slice_w", init.truncated_normal({static_cast<std::size_t>(c.subscale.w), de}, sd));
    p.set("enc/proj_w", init.truncated_normal({de + static_cast<std::size_t>(c.aux_width), d}, sd));
    p.set("enc/proj_b", Initializer::constant({d}, 0.0f));
    for (std::size_t i = 0; i < c.encoder.size(); ++i) {
      init_layer(p, layer_prefix("enc/", i), c.hidden_dim, c.encoder[i], init, layer_init);
    }
  }

  const auto mk = static_cast<std::size_t>(c.masked_kernel);
  const auto decoder_stack = [&](const std::string& prefix, const LayerSchedule& schedule) {
    p.set(prefix + "embed", init.truncated_normal({in_width, de}, sd));
    p.set(prefix + "conv_kernel", init.truncated_normal({mk, mk, mk, de, d}, sd));
    p.set(prefix + "conv_bias", Initializer::constant({d}, 0.0f));
    axis_tables(prefix, d);
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      init_layer(p, layer_prefix(prefix, i), c.hidden_dim, schedule[i], init, layer_init);
    }
  };
  decoder_stack("dec/", c.decoder);
  p.set("dec/enc_proj", init.truncated_normal({d, d}, sd));
  if (c.first_slice_decoder) decoder_stack("first/", c.first_decoder);

  p.set("head/ln_gain", Initializer::constant({d}, 1.0f));
  p.set("head/ln_bias", Initializer::constant({d}, 0.0f));
  const int predicted = c.channels.predicted_channels();
  for (int k = 0; k < predicted; ++k) {
    const std::size_t rows = c.channels.head == HeadKind::kCategorical ? d + static_cast<std::size_t>(k) * nv : d;
    p.set("head/u" + std::to_string(k), init.truncated_normal({rows, d}, sd));
  }
  const std::size_t out_values = c.channels.head == HeadKind::kCategorical ? nv : 1;
  p.set("head/p", options.zero_head ? Initializer::constant({d, out_values}, 0.0f)
                                    : init.truncated_normal({d, out_values}, sd));
  if (c.channels.head == HeadKind::kDeterministic) p.set("head/p_bias", Initializer::constant({1}, 0.0f));
  return p;
}

template <typename T>
NdArray<T> Model::encoder_onehot(const Video& split, const SliceIndex& idx) const {
  if (split.shape() != config_.video || split.channels() != config_.channels.split_channels) {
    throw DimensionError("video does not match the model geometry");
  }
  const MaskedVideo masked = mask_preceding(split, config_.subscale, idx);
  const auto& v = config_.video;
  return split_onehot<T>(masked.video, config_.channels.num_values, &masked.visible)
      .reshaped({static_cast<std::size_t>(v.t), static_cast<std::size_t>(v.h), static_cast<std::size_t>(v.w),
                 static_cast<std::size_t>(config_.channels.onehot_width())});
}

template <typename T>
NdArray<T> Model::slice_onehot(const Video& slice) const {
  if (slice.shape() != config_.slice() || slice.channels() != config_.channels.split_channels) {
    throw DimensionError("slice does not match the model geometry");
  }
  return split_onehot<T>(slice, config_.channels.num_values, nullptr);
}

template <typename T>
Var<T> Model::encode(ParamBinder<T>& bind, Var<T> onehot, const SliceIndex& idx, const AuxTrack* aux) const {
  const auto& c = config_;
  validate(c.subscale, idx);
  const VideoShape s = c.slice();
  const std::size_t n = static_cast<std::size_t>(s.positions());
  const auto de = static_cast<std::size_t>(c.embed_dim);

  Conv3dGeometry geom;
  geom.stride = c.subscale.as_int3();
  geom.pad = context_padding(c.kernel, idx);
  geom.out_shape = {s.t, s.h, s.w};
  auto z = reshape(conv3d(onehot, bind("enc/conv_kernel"), bind("enc/conv_bias"), geom), {n, de});

  const SliceAxes axes = slice_axes(s);
  z = add_axis_embeddings(bind, z, "enc/", axes);
  const std::size_t a[] = {static_cast<std::size_t>(idx.a)};
  const std::size_t b[] = {static_cast<std::size_t>(idx.b)};
  const std::size_t cc[] = {static_cast<std::size_t>(idx.c)};
  z = add_broadcast(z, reshape(gather_rows(bind("enc/slice_t"), a), {de}));
  z = add_broadcast(z, reshape(gather_rows(bind("enc/slice_h"), b), {de}));
  z = add_broadcast(z, reshape(gather_rows(bind("enc/slice_w"), cc), {de}));

  if (c.aux_width > 0) {
    const auto aw = static_cast<std::size_t>(c.aux_width);
    NdArray<T> track({static_cast<std::size_t>(c.video.t), aw});
    if (aux) {
      if (aux->shape() != track.shape()) throw DimensionError("aux track must be [frames, aux_width]");
      track = aux->template cast<T>();
    }
    std::vector<std::size_t> frame(n);
    for (std::size_t p = 0; p < n; ++p) {
      frame[p] = static_cast<std::size_t>(global_frame(c.subscale, idx, static_cast<int>(axes.t[p])));
    }
    auto per_position = gather_rows(bind.tape().leaf(std::move(track)), std::span<const std::size_t>(frame));
    z = concat(std::vector<Var<T>>{z, per_position});
  }
  z = add_broadcast(matmul(z, bind("enc/proj_w")), bind("enc/proj_b"));
  return run_stack(bind, z, "enc/", c.encoder, s, false);
}

template <typename T>
Var<T> Model::decode(ParamBinder<T>& bind, Var<T> slice_onehot, const std::optional<Var<T>>& encoded,
                     bool first_slice) const {
  const auto& c = config_;
  const VideoShape s = c.slice();
  const std::size_t n = static_cast<std::size_t>(s.positions());
  const std::string prefix = first_slice ? "first/" : "dec/";
  auto e = matmul(slice_onehot, bind(prefix + "embed"));
  e = reshape(e, {static_cast<std::size_t>(s.t), static_cast<std::size_t>(s.h), static_cast<std::size_t>(s.w),
                  static_cast<std::size_t>(c.embed_dim)});
  auto y = reshape(masked_conv3d(e, bind(prefix + "conv_kernel"), bind(prefix + "conv_bias")),
                   {n, static_cast<std::size_t>(c.hidden_dim)});
  y = add_axis_embeddings(bind, y, prefix, slice_axes(s));
  if (encoded) y = add(y, matmul(*encoded, bind("dec/enc_proj")));
  return run_stack(bind, y, prefix, first_slice ? c.first_decoder : c.decoder, s, true);
}

template <typename T>
std::vector<Var<T>> Model::predict(ParamBinder<T>& bind, Var<T> decoded, Var<T> slice_onehot) const {
  const auto& ch = config_.channels;
  auto ln = layernorm(decoded, bind("head/ln_gain"), bind("head/ln_bias"));
  auto p = bind("head/p");
  std::vector<Var<T>> logits;
  if (ch.head == HeadKind::kDeterministic) {
    auto hidden = relu(matmul(ln, bind("head/u0")));
    logits.push_back(add_broadcast(matmul(hidden, p), bind("head/p_bias")));
    return logits;
  }
  for (int k = 0; k < ch.split_channels; ++k) {
    Var<T> in = ln;
    if (k > 0) {
      auto previous = slice_last(slice_onehot, 0, static_cast<std::size_t>(k * ch.num_values));
      in = concat(std::vector<Var<T>>{ln, previous});
    }
    auto u = matmul(in, bind("head/u" + std::to_string(k)));
    logits.push_back(matmul(relu(u), p));
  }
  return logits;
}

template <typename T>
SliceForward<T> Model::forward(ParamBinder<T>& bind, const Video& split, const SliceIndex& idx, const AuxTrack* aux,
                               bool inputs_require_grad) const {
  Tape<T>& tape = bind.tape();
  const Video slice = extract_slice(split, config_.subscale, idx);
  SliceForward<T> f;
  f.slice_input = tape.leaf(split_onehot<T>(slice, config_.channels.num_values, nullptr), inputs_require_grad);
  const bool first = uses_first_decoder(idx);
  if (!first) {
    f.encoder_input = tape.leaf(encoder_onehot<T>(split, idx), inputs_require_grad);
    f.encoded = encode(bind, *f.encoder_input, idx, aux);
  }
  f.decoded = decode(bind, f.slice_input, f.encoded, first);
  f.logits = predict(bind, f.decoded, f.slice_input);
  return f;
}

std::vector<double> Model::loss_mask(const SliceIndex& idx, int prime_frames) const {
  const VideoShape s = config_.slice();
  std::vector<double> mask(static_cast<std::size_t>(s.positions()));
  const std::size_t frame = static_cast<std::size_t>(s.h) * s.w;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    const int t = global_frame(config_.subscale, idx, static_cast<int>(p / frame));
    mask[p] = t >= prime_frames ? 1.0 : 0.0;
  }
  return mask;
}

template <typename T>
Var<T> nll_loss(const std::vector<Var<T>>& logits, const Video& slice_split, std::span<const T> mask) {
  if (logits.size() != static_cast<std::size_t>(slice_split.channels())) {
    throw DimensionError("nll_loss: one logit block per split channel required");
  }
  std::optional<Var<T>> total;
  std::vector<int> targets(slice_split.positions());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    for (std::size_t p = 0; p < targets.size(); ++p) targets[p] = slice_split.pixel(p)[k];
    auto term = cross_entropy(logits[k], std::span<const int>(targets), mask);
    total = total ? add(*total, term) : term;
  }
  return *total;
}

template <typename T>
SliceLoss<T> Model::slice_loss(ParamBinder<T>& bind, const Video& split, const SliceIndex& idx, int prime_frames,
                               const AuxTrack* aux) const {
  const SliceForward<T> f = forward(bind, split, idx, aux, false);
  const Video slice = extract_slice(split, config_.subscale, idx);
  const auto mask_d = loss_mask(idx, prime_frames);
  const std::vector<T> mask(mask_d.begin(), mask_d.end());
  SliceLoss<T> out;
  if (config_.channels.head == HeadKind::kDeterministic) {
    std::vector<T> target(slice.positions());
    for (std::size_t p = 0; p < target.size(); ++p) {
      const auto px = slice.pixel(p);
      target[p] = static_cast<T>((px[0] << 4) | px[1]) / T{255};
    }
    out.loss = binary_cross_entropy_with_logits(f.logits[0], std::span<const T>(target), std::span<const T>(mask));
  } else {
    out.loss = nll_loss(f.logits, slice, std::span<const T>(mask));
  }
  out.nats = static_cast<double>(out.loss.value()[0]);
  out.pixels = static_cast<std::size_t>(std::count(mask_d.begin(), mask_d.end(), 1.0));
  return out;
}

double deterministic_loss(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) throw DimensionError("deterministic_loss size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double y = std::clamp(predicted[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double z = target[i];
    total -= z * std::log(y) + (1.0 - z) * std::log(1.0 - y);
  }
  return total;
}

#define SVT_INSTANTIATE_MODEL(T)                                                                                 \
  template NdArray<T> Model::encoder_onehot<T>(const Video&, const SliceIndex&) const;                          \
  template NdArray<T> Model::slice_onehot<T>(const Video&) const;                                                \
  template Var<T> Model::encode<T>(ParamBinder<T>&, Var<T>, const SliceIndex&, const AuxTrack*) const;          \
  template Var<T> Model::decode<T>(ParamBinder<T>&, Var<T>, const std::optional<Var<T>>&, bool) const;          \
  template std::vector<Var<T>> Model::predict<T>(ParamBinder<T>&, Var<T>, Var<T>) const;                        \
  template SliceForward<T> Model::forward<T>(ParamBinder<T>&, const Video&, const SliceIndex&, const AuxTrack*, \
                                             bool) const;                                                        \
  template SliceLoss<T> Model::slice_loss<T>(ParamBinder<T>&, const Video&, const SliceIndex&, int,             \
                                             const AuxTrack*) const;                                             \
  template Var<T> nll_loss(const std::vector<Var<T>>&, const Video&, std::span<const T>);

SVT_INSTANTIATE_MODEL(float)
SVT_INSTANTIATE_MODEL(double)

#undef SVT_INSTANTIATE_MODEL

}  // namespace svt
