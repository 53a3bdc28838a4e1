#include "support.hpp"

#include <cmath>

#include "svt/attention.hpp"
#include "svt/subscale.hpp"

namespace svt::test {

NdArray<double> random_array(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  NdArray<double> out(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : out.data()) v = u(rng);
  return out;
}

NdArray<double> signed_array(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  NdArray<double> out(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : out.data()) v = sign(rng) ? u(rng) : -u(rng);
  return out;
}

NdArray<double> reference_conv3d(const NdArray<double>& input, const NdArray<double>& kernel,
                                 const NdArray<double>* bias, const Int3& stride, const Int3& pad,
                                 const Int3& out_shape) {
  const int T = static_cast<int>(input.dim(0)), H = static_cast<int>(input.dim(1)), W = static_cast<int>(input.dim(2));
  const std::size_t cin = input.dim(3), cout = kernel.dim(4);
  const int kt = static_cast<int>(kernel.dim(0)), kh = static_cast<int>(kernel.dim(1)),
            kw = static_cast<int>(kernel.dim(2));
  NdArray<double> out({static_cast<std::size_t>(out_shape[0]), static_cast<std::size_t>(out_shape[1]),
                       static_cast<std::size_t>(out_shape[2]), cout});
  for (int ot = 0; ot < out_shape[0]; ++ot) {
    for (int oh = 0; oh < out_shape[1]; ++oh) {
      for (int ow = 0; ow < out_shape[2]; ++ow) {
        for (std::size_t co = 0; co < cout; ++co) {
          double acc = bias ? (*bias)[co] : 0.0;
          for (int a = 0; a < kt; ++a) {
            for (int b = 0; b < kh; ++b) {
              for (int c = 0; c < kw; ++c) {
                const int t = ot * stride[0] - pad[0] + a;
                const int h = oh * stride[1] - pad[1] + b;
                const int w = ow * stride[2] - pad[2] + c;
                if (t < 0 || t >= T || h < 0 || h >= H || w < 0 || w >= W) continue;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  acc += input.at({static_cast<std::size_t>(t), static_cast<std::size_t>(h),
                                   static_cast<std::size_t>(w), ci}) *
                         kernel.at({static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                    static_cast<std::size_t>(c), ci, co});
                }
              }
            }
          }
          out.at({static_cast<std::size_t>(ot), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), co}) =
              acc;
        }
      }
    }
  }
  return out;
}

Video random_split_video(const VideoShape& shape, int channels, std::mt19937_64& rng) {
  Video v(shape, channels);
  std::uniform_int_distribution<int> u(0, 15);
  for (auto& b : v.data()) b = static_cast<std::uint8_t>(u(rng));
  return v;
}

ParamStore<double> random_params(const Model& model, std::uint64_t seed, double stddev) {
  InitOptions opts;
  opts.stddev = stddev;
  opts.zero_head = false;
  opts.random_relative_bias = true;
  ParamStore<double> p = model.init_params(seed, opts).cast<double>();
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (auto& [name, v] : p) {
    for (auto& x : v.data()) x += jitter(rng);
  }
  return p;
}

LayerSchedule blocks(std::initializer_list<BlockShape> shapes, int heads, int head_dim, int ffn) {
  LayerSchedule out;
  for (const auto& b : shapes) out.push_back({b, heads, head_dim, ffn});
  return out;
}

ModelConfig causality_config(HeadKind head, bool first_slice_decoder) {
  ModelConfig c;
  c.variant = Variant::kSpatiotemporal;
  c.video = {4, 8, 8};
  c.subscale = {2, 2, 2};
  c.kernel = {2, 2, 2};
  c.embed_dim = 8;
  c.hidden_dim = 16;
  c.encoder = blocks({{2, 2, 2}, {1, 4, 4}}, 2, 8, 16);
  c.decoder = blocks({{1, 4, 4}, {2, 2, 4}}, 2, 8, 16);
  c.channels = head == HeadKind::kCategorical ? rgb_categorical() : gray_deterministic();
  c.first_slice_decoder = first_slice_decoder;
  c.first_decoder = blocks({{2, 4, 2}, {1, 4, 4}, {2, 2, 2}}, 2, 8, 16);
  c.validate();
  return c;
}

CausalityReport check_slice_causality(const Model& model, const ParamStore<double>& params, const Video& split,
                                      const SliceIndex& idx, std::uint64_t seed) {
  const ModelConfig& mc = model.config();
  const SubscaleFactor& s = mc.subscale;
  const std::size_t nc = static_cast<std::size_t>(mc.channels.split_channels);
  const std::size_t nv = static_cast<std::size_t>(mc.channels.num_values);
  const std::size_t width = nc * nv;
  const std::size_t n_video = split.positions();

  NdArray<double> onehot({n_video, width});
  for (std::size_t q = 0; q < n_video; ++q) {
    for (std::size_t c = 0; c < nc; ++c) onehot[q * width + c * nv + split.pixel(q)[c]] = 1.0;
  }
  const MaskedVideo masked = mask_preceding(split, s, idx);
  NdArray<double> visible({n_video, width});
  for (std::size_t q = 0; q < n_video; ++q) {
    if (masked.visible[q]) std::fill_n(visible.ptr() + q * width, width, 1.0);
  }

  const VideoShape shape = mc.slice();
  std::vector<std::size_t> slice_rows;
  for (int t = 0; t < shape.t; ++t) {
    for (int h = 0; h < shape.h; ++h) {
      for (int w = 0; w < shape.w; ++w) {
        slice_rows.push_back(split.position_index(t * s.t + idx.a, h * s.h + idx.b, w * s.w + idx.c));
      }
    }
  }

  Tape<double> tape;
  ParamBinder<double> bind(tape, params, false);
  auto video = tape.leaf(onehot, true);
  const auto& v = mc.video;
  auto encoder_in = reshape(mul(video, tape.leaf(visible)),
                            {static_cast<std::size_t>(v.t), static_cast<std::size_t>(v.h),
                             static_cast<std::size_t>(v.w), width});
  auto slice_in = gather_rows(video, std::span<const std::size_t>(slice_rows));
  const bool first = model.uses_first_decoder(idx);
  std::optional<Var<double>> encoded;
  if (!first) encoded = model.encode(bind, encoder_in, idx, nullptr);
  auto decoded = model.decode(bind, slice_in, encoded, first);
  const auto logits = model.predict(bind, decoded, slice_in);

  const int rank = slice_rank(s, idx);
  std::vector<int> position_rank(n_video);
  std::vector<std::ptrdiff_t> local(n_video, -1);
  for (int t = 0; t < v.t; ++t) {
    for (int h = 0; h < v.h; ++h) {
      for (int w = 0; w < v.w; ++w) position_rank[split.position_index(t, h, w)] = slice_rank(s, slice_of(s, t, h, w));
    }
  }
  for (std::size_t p = 0; p < slice_rows.size(); ++p) local[slice_rows[p]] = static_cast<std::ptrdiff_t>(p);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> weight(0.5, 1.5);
  CausalityReport report;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const std::size_t cols = logits[k].value().cols();
    for (std::size_t p = 0; p < slice_rows.size(); ++p) {
      NdArray<double> seed_grad(logits[k].shape());
      for (std::size_t j = 0; j < cols; ++j) seed_grad[p * cols + j] = weight(rng);
      tape.backward(logits[k], seed_grad);
      const NdArray<double>& g = video.grad();
      ++report.logits;
      for (std::size_t q = 0; q < n_video; ++q) {
        for (std::size_t c = 0; c < nc; ++c) {
          bool nonzero = false;
          for (std::size_t j = 0; j < nv; ++j) nonzero = nonzero || g[q * width + c * nv + j] != 0.0;
          bool allowed = position_rank[q] < rank;
          if (position_rank[q] == rank) {
            const auto lq = static_cast<std::size_t>(local[q]);
            allowed = lq < p || (lq == p && c < k);
          }
          if (allowed) {
            ++report.allowed;
            if (nonzero) ++report.allowed_nonzero;
          } else {
            ++report.forbidden;
            if (nonzero) {
              if (report.violations++ == 0) {
                report.first_violation = "slice " + idx.str() + " logit (" + std::to_string(p) + ", ch " +
                                         std::to_string(k) + ") depends on position " + std::to_string(q) +
                                         " channel " + std::to_string(c);
              }
            }
          }
        }
      }
    }
  }
  return report;
}

Reachability decoder_sensitivity(const VideoShape& slice, const LayerSchedule& schedule, int masked_kernel,
                                 std::uint64_t seed) {
  ModelConfig c;
  c.video = slice;
  c.subscale = {1, 1, 1};
  c.kernel = {1, 1, 1};
  c.embed_dim = 4;
  c.hidden_dim = 8;
  c.encoder = schedule;
  c.decoder = schedule;
  c.masked_kernel = masked_kernel;
  const Model model(c);
  const ParamStore<double> params = random_params(model, seed);

  const std::size_t n = static_cast<std::size_t>(slice.positions());
  std::mt19937_64 rng(seed + 17);
  Tape<double> tape;
  ParamBinder<double> bind(tape, params, false);
  auto input = tape.leaf(random_array({n, static_cast<std::size_t>(c.channels.onehot_width())}, rng), true);
  auto y = model.decode(bind, input, std::optional<Var<double>>{}, false);
  const std::size_t d = y.value().cols();
  std::uniform_real_distribution<double> weight(0.5, 1.5);
  Reachability reach(n);
  for (std::size_t p = 0; p < n; ++p) {
    NdArray<double> seed_grad(y.shape());
    for (std::size_t j = 0; j < d; ++j) seed_grad[p * d + j] = weight(rng);
    tape.backward(y, seed_grad);
    const NdArray<double>& g = input.grad();
    const std::size_t cols = g.cols();
    for (std::size_t q = 0; q < n; ++q) {
      for (std::size_t j = 0; j < cols; ++j) {
        if (g[q * cols + j] != 0.0) {
          reach.set(p, q);
          break;
        }
      }
    }
  }
  return reach;
}

std::vector<ScheduleCase> analyzer_catalog() {
  return {
      {"2x4x4 single 1x2x2", {2, 4, 4}, blocks({{1, 2, 2}}), 3},
      {"2x4x4 columns then rows", {2, 4, 4}, blocks({{2, 2, 1}, {1, 1, 4}}), 3},
      {"2x4x4 three thin axes", {2, 4, 4}, blocks({{1, 4, 1}, {1, 1, 4}, {2, 1, 1}}), 3},
      {"4x4x4 cube then time", {4, 4, 4}, blocks({{2, 2, 2}, {4, 1, 1}}), 3},
      {"4x4x4 full frames", {4, 4, 4}, blocks({{1, 4, 4}}), 3},
      {"4x4x4 full volume", {4, 4, 4}, blocks({{4, 4, 4}}), 3},
      {"4x4x4 mixed", {4, 4, 4}, blocks({{2, 4, 2}, {2, 2, 4}, {1, 4, 1}}), 3},
      {"1x4x4 half frames", {1, 4, 4}, blocks({{1, 2, 4}, {1, 4, 2}}), 3},
      {"3x3x3 axis lines", {3, 3, 3}, blocks({{3, 1, 1}, {1, 3, 1}, {1, 1, 3}}), 3},
      {"4x2x4 staggered", {4, 2, 4}, blocks({{1, 2, 2}, {2, 1, 4}, {4, 2, 1}}), 3},
      {"2x4x4 kernel 5", {2, 4, 4}, blocks({{1, 2, 2}}), 5},
      {"4x4x4 kernel 1", {4, 4, 4}, blocks({{2, 2, 2}, {1, 4, 4}}), 1},
      {"4x4x4 default rescaled", {4, 4, 4},
       rescale_schedule(subscale_schedule(2, 4, 8), {4, 32, 32}, {4, 4, 4}), 3},
  };
}

namespace {

GradCase op_case(std::string name, GraphFn graph, std::vector<NdArray<double>> inputs) {
  return {std::move(name), std::move(graph), std::move(inputs), {}};
}

// Binds `names` to the graph inputs following the leading `skip` inputs.
ParamStore<double> named(const std::vector<std::string>& names, const std::vector<NdArray<double>>& values,
                         std::size_t skip) {
  ParamStore<double> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.set(names[i], values[skip + i]);
  return out;
}

GradCase model_case(std::string name, ModelConfig config, std::uint64_t seed, SliceIndex idx, int prime) {
  const Model model(config);
  const ParamStore<double> params = random_params(model, seed, 0.2);
  std::mt19937_64 rng(seed);
  const Video split = random_split_video(config.video, config.channels.split_channels, rng);
  std::vector<std::string> names;
  std::vector<NdArray<double>> inputs;
  for (const auto& [n, v] : params) {
    names.push_back(n);
    inputs.push_back(v);
  }
  GraphFn graph = [model, names, split, idx, prime](Tape<double>& tape, std::span<const Var<double>> in) {
    ParamStore<double> store;
    ParamBinder<double> bind(tape, store, true);
    for (std::size_t i = 0; i < names.size(); ++i) bind.preset(names[i], in[i]);
    const auto loss = model.slice_loss(bind, split, idx, prime, nullptr);
    const double dims = static_cast<double>(std::max<std::size_t>(loss.pixels, 1)) *
                        model.config().channels.split_channels;
    return scale(loss.loss, 1.0 / dims);
  };
  GradCase c{std::move(name), std::move(graph), std::move(inputs), {}};
  c.options.max_probes_per_input = 6;
  return c;
}

}  // namespace

std::vector<GradCase> grad_cases() {
  std::mt19937_64 rng(2024);
  auto r = [&rng](Shape s) { return random_array(std::move(s), rng); };
  std::vector<GradCase> cases;

  cases.push_back(op_case("matmul", [](Tape<double>&, std::span<const Var<double>> x) { return matmul(x[0], x[1]); },
                          {r({3, 4}), r({4, 5})}));
  cases.push_back(op_case("matmul batched lhs",
                          [](Tape<double>&, std::span<const Var<double>> x) { return matmul(x[0], x[1]); },
                          {r({2, 3, 4}), r({4, 2})}));
  cases.push_back(op_case("bmm", [](Tape<double>&, std::span<const Var<double>> x) { return bmm(x[0], x[1]); },
                          {r({2, 3, 4}), r({2, 4, 5})}));
  cases.push_back(op_case("bmm transposed",
                          [](Tape<double>&, std::span<const Var<double>> x) { return bmm(x[0], x[1], true); },
                          {r({2, 3, 4}), r({2, 5, 4})}));
  cases.push_back(op_case("add", [](Tape<double>&, std::span<const Var<double>> x) { return add(x[0], x[1]); },
                          {r({3, 4}), r({3, 4})}));
  cases.push_back(op_case("add_broadcast",
                          [](Tape<double>&, std::span<const Var<double>> x) { return add_broadcast(x[0], x[1]); },
                          {r({2, 3, 4}), r({3, 4})}));
  cases.push_back(op_case("mul", [](Tape<double>&, std::span<const Var<double>> x) { return mul(x[0], x[1]); },
                          {r({3, 4}), r({3, 4})}));
  cases.push_back(op_case("scale", [](Tape<double>&, std::span<const Var<double>> x) { return scale(x[0], -1.7); },
                          {r({5})}));
  cases.push_back(op_case("relu", [](Tape<double>&, std::span<const Var<double>> x) { return relu(x[0]); },
                          {signed_array({4, 5}, rng, 0.1, 1.0)}));
  for (std::size_t axis = 0; axis < 3; ++axis) {
    cases.push_back(op_case("softmax axis " + std::to_string(axis),
                            [axis](Tape<double>&, std::span<const Var<double>> x) { return softmax(x[0], axis); },
                            {random_array({3, 4, 5}, rng, -2.0, 2.0)}));
  }
  cases.push_back(op_case(
      "layernorm",
      [](Tape<double>&, std::span<const Var<double>> x) { return layernorm(x[0], x[1], x[2]); },
      {random_array({4, 6}, rng, -2.0, 2.0), random_array({6}, rng, 0.5, 1.5), r({6})}));

  {
    Conv3dGeometry g;
    g.stride = {2, 2, 2};
    g.pad = {1, 0, 1};
    g.out_shape = {2, 2, 3};
    cases.push_back(op_case(
        "conv3d strided padded",
        [g](Tape<double>&, std::span<const Var<double>> x) { return conv3d(x[0], x[1], x[2], g); },
        {r({4, 4, 5, 3}), r({2, 2, 3, 3, 2}), r({2})}));
    Conv3dGeometry neg;
    neg.stride = {2, 1, 2};
    neg.pad = {-1, 0, -1};
    neg.out_shape = {2, 3, 2};
    cases.push_back(op_case("conv3d negative padding",
                            [neg](Tape<double>&, std::span<const Var<double>> x) { return conv3d(x[0], x[1], neg); },
                            {r({4, 3, 4, 2}), r({2, 1, 2, 2, 3})}));
  }
  cases.push_back(op_case(
      "masked_conv3d k3",
      [](Tape<double>&, std::span<const Var<double>> x) { return masked_conv3d(x[0], x[1], x[2]); },
      {r({2, 3, 3, 2}), r({3, 3, 3, 2, 3}), r({3})}));
  cases.push_back(op_case(
      "masked_conv3d k5",
      [](Tape<double>&, std::span<const Var<double>> x) { return masked_conv3d(x[0], x[1], x[2]); },
      {r({2, 3, 4, 1}), r({5, 5, 5, 1, 2}), r({2})}));
  cases.push_back(op_case(
      "concat",
      [](Tape<double>&, std::span<const Var<double>> x) { return concat(std::vector<Var<double>>{x[0], x[1], x[2]}); },
      {r({2, 3, 1}), r({2, 3, 4}), r({2, 3, 2})}));
  cases.push_back(op_case("slice_last",
                          [](Tape<double>&, std::span<const Var<double>> x) { return slice_last(x[0], 1, 4); },
                          {r({3, 5})}));
  cases.push_back(op_case("gather_rows with repeats",
                          [](Tape<double>&, std::span<const Var<double>> x) {
                            const std::size_t idx[] = {2, 0, 2, 3, 2};
                            return gather_rows(x[0], std::span<const std::size_t>(idx));
                          },
                          {r({4, 3})}));
  cases.push_back(op_case("embedding",
                          [](Tape<double>&, std::span<const Var<double>> x) {
                            const std::size_t idx[] = {1, 1, 0};
                            return embedding(x[0], std::span<const std::size_t>(idx));
                          },
                          {r({2, 5})}));
  cases.push_back(op_case("reshape",
                          [](Tape<double>&, std::span<const Var<double>> x) { return reshape(x[0], {4, 3, 1}); },
                          {r({2, 6})}));
  cases.push_back(op_case("transpose", [](Tape<double>&, std::span<const Var<double>> x) { return transpose(x[0]); },
                          {r({3, 5})}));
  cases.push_back(op_case("sum", [](Tape<double>&, std::span<const Var<double>> x) { return sum(x[0]); },
                          {r({3, 4})}));
  {
    NdArray<double> w = r({3, 4});
    cases.push_back(op_case("weighted_sum",
                            [w](Tape<double>&, std::span<const Var<double>> x) { return weighted_sum(x[0], w); },
                            {r({3, 4})}));
  }
  cases.push_back(op_case("cross_entropy",
                          [](Tape<double>&, std::span<const Var<double>> x) {
                            const int targets[] = {3, 0, 5, 1};
                            const double weights[] = {1.0, 0.0, 0.7, 1.3};
                            return cross_entropy(x[0], std::span<const int>(targets),
                                                 std::span<const double>(weights));
                          },
                          {random_array({4, 6}, rng, -3.0, 3.0)}));
  cases.push_back(op_case("binary_cross_entropy_with_logits",
                          [](Tape<double>&, std::span<const Var<double>> x) {
                            const double targets[] = {0.0, 1.0, 0.25, 0.9, 0.5};
                            const double weights[] = {1.0, 1.0, 0.5, 0.0, 2.0};
                            return binary_cross_entropy_with_logits(x[0], std::span<const double>(targets),
                                                                    std::span<const double>(weights));
                          },
                          {random_array({5, 1}, rng, -3.0, 3.0)}));

  {
    const VideoShape volume{2, 4, 4};
    const BlockShape block{1, 2, 4};
    cases.push_back(op_case("partition_blocks",
                            [volume, block](Tape<double>&, std::span<const Var<double>> x) {
                              return partition_blocks(x[0], block_partition(volume, block));
                            },
                            {r({32, 3})}));
    cases.push_back(op_case("merge_blocks",
                            [volume, block](Tape<double>&, std::span<const Var<double>> x) {
                              return merge_blocks(x[0], block_partition(volume, block));
                            },
                            {r({4, 8, 3})}));
    const BlockShape b3{2, 3, 2};
    cases.push_back(op_case("relative_bias",
                            [b3](Tape<double>&, std::span<const Var<double>> x) {
                              return relative_bias(x[0], x[1], x[2], b3);
                            },
                            {r({1, 3}), r({1, 5}), r({1, 3})}));
  }

  for (const bool causal : {false, true}) {
    const VideoShape volume{2, 4, 4};
    const LayerSpec spec{{2, 2, 2}, 2, 3, 5};
    ParamStore<float> store;
    Initializer init(11);
    init_layer(store, "l/", 6, spec, init, {0.4, true});
    const ParamStore<double> p = store.cast<double>();
    std::vector<std::string> names;
    std::vector<NdArray<double>> inputs{random_array({32, 6}, rng, -1.0, 1.0)};
    for (const auto& [n, v] : p) {
      names.push_back(n);
      NdArray<double> jittered = v;
      for (auto& e : jittered.data()) e += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
      inputs.push_back(jittered);
    }
    GraphFn graph = [names, volume, spec, causal](Tape<double>& tape, std::span<const Var<double>> x) {
      ParamStore<double> store;
      ParamBinder<double> bind(tape, store, true);
      for (std::size_t i = 0; i < names.size(); ++i) bind.preset(names[i], x[i + 1]);
      return attention_layer(x[0], volume, spec, bind_layer(bind, "l/"), causal);
    };
    cases.push_back(op_case(causal ? "attention_layer causal" : "attention_layer", graph, inputs));
  }

  ModelConfig composite = causality_config();
  cases.push_back(model_case("encoder/decoder composite", composite, 5, {1, 0, 1}, 1));
  cases.push_back(model_case("encoder/decoder composite, deterministic head",
                             causality_config(HeadKind::kDeterministic), 6, {1, 1, 0}, 1));
  cases.push_back(model_case("first-slice decoder composite",
                             causality_config(HeadKind::kCategorical, true), 7, {0, 0, 0}, 0));
  return cases;
}

}  // namespace svt::test
