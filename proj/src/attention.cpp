#include "svt/attention.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace svt {

std::string BlockShape::str() const {
  std::ostringstream os;
  os << '(' << t << ',' << h << ',' << w << ')';
  return os.str();
}

void check_schedule(const VideoShape& volume, const LayerSchedule& schedule) {
  for (std::size_t l = 0; l < schedule.size(); ++l) {
    const auto& s = schedule[l];
    const auto& b = s.block;
    if (b.t < 1 || b.h < 1 || b.w < 1 || volume.t % b.t || volume.h % b.h || volume.w % b.w) {
      std::ostringstream os;
      os << "layer " << l << " block " << b.str() << " does not divide volume " << volume.t << 'x' << volume.h
         << 'x' << volume.w;
      throw ConfigError(os.str());
    }
    if (s.heads < 1 || s.head_dim < 1) throw ConfigError("layer " + std::to_string(l) + " needs heads, head_dim >= 1");
  }
}

std::array<int, 3> BlockPartition::block_offset(std::size_t block_index) const {
  const int nbh = volume.h / block.h, nbw = volume.w / block.w;
  const int b = static_cast<int>(block_index);
  return {(b / (nbh * nbw)) * block.t, ((b / nbw) % nbh) * block.h, (b % nbw) * block.w};
}

std::array<int, 3> BlockPartition::coordinate(std::size_t block_index, std::size_t element) const {
  const auto off = block_offset(block_index);
  const int e = static_cast<int>(element);
  return {off[0] + e / (block.h * block.w), off[1] + (e / block.w) % block.h, off[2] + e % block.w};
}

BlockPartition block_partition(const VideoShape& volume, const BlockShape& block) {
  check_schedule(volume, {LayerSpec{block, 1, 1, 0}});
  BlockPartition p;
  p.volume = volume;
  p.block = block;
  p.block_positions = static_cast<std::size_t>(block.positions());
  p.num_blocks = static_cast<std::size_t>(volume.positions()) / p.block_positions;
  p.order.resize(static_cast<std::size_t>(volume.positions()));
  p.inverse.resize(p.order.size());
  for (std::size_t b = 0; b < p.num_blocks; ++b) {
    for (std::size_t i = 0; i < p.block_positions; ++i) {
      const auto c = p.coordinate(b, i);
      const std::size_t raster = (static_cast<std::size_t>(c[0]) * volume.h + c[1]) * volume.w + c[2];
      p.order[b * p.block_positions + i] = raster;
      p.inverse[raster] = b * p.block_positions + i;
    }
  }
  return p;
}

template <typename T>
Var<T> partition_blocks(Var<T> x, const BlockPartition& partition) {
  if (x.value().rank() != 2 || x.value().dim(0) != partition.order.size()) {
    throw DimensionError("partition_blocks expects [" + std::to_string(partition.order.size()) + ", d], got " +
                         shape_str(x.shape()));
  }
  const std::size_t d = x.value().dim(1);
  return reshape(gather_rows(x, std::span<const std::size_t>(partition.order)),
                 {partition.num_blocks, partition.block_positions, d});
}

template <typename T>
Var<T> merge_blocks(Var<T> blocks, const BlockPartition& partition) {
  const std::size_t d = blocks.value().cols();
  auto flat = reshape(blocks, {partition.order.size(), d});
  return gather_rows(flat, std::span<const std::size_t>(partition.inverse));
}

namespace {

struct BiasIndex {
  std::size_t t, h, w;
};

std::vector<BiasIndex> bias_indices(const BlockShape& b) {
  const std::size_t np = static_cast<std::size_t>(b.positions());
  std::vector<BiasIndex> out(np * np);
  for (std::size_t i = 0; i < np; ++i) {
    const int ti = static_cast<int>(i) / (b.h * b.w), hi = (static_cast<int>(i) / b.w) % b.h, wi = static_cast<int>(i) % b.w;
    for (std::size_t j = 0; j < np; ++j) {
      const int tj = static_cast<int>(j) / (b.h * b.w), hj = (static_cast<int>(j) / b.w) % b.h,
                wj = static_cast<int>(j) % b.w;
      out[i * np + j] = {static_cast<std::size_t>(tj - ti + b.t - 1), static_cast<std::size_t>(hj - hi + b.h - 1),
                         static_cast<std::size_t>(wj - wi + b.w - 1)};
    }
  }
  return out;
}

}  // namespace

template <typename T>
T relative_bias_entry(const BlockShape& b, std::span<const T> table_t, std::span<const T> table_h,
                      std::span<const T> table_w, std::size_t i, std::size_t j) {
  const int ti = static_cast<int>(i) / (b.h * b.w), hi = (static_cast<int>(i) / b.w) % b.h, wi = static_cast<int>(i) % b.w;
  const int tj = static_cast<int>(j) / (b.h * b.w), hj = (static_cast<int>(j) / b.w) % b.h, wj = static_cast<int>(j) % b.w;
  return table_t[tj - ti + b.t - 1] + table_h[hj - hi + b.h - 1] + table_w[wj - wi + b.w - 1];
}

template <typename T>
Var<T> relative_bias(Var<T> table_t, Var<T> table_h, Var<T> table_w, const BlockShape& block) {
  if (table_t.value().size() != static_cast<std::size_t>(2 * block.t - 1) ||
      table_h.value().size() != static_cast<std::size_t>(2 * block.h - 1) ||
      table_w.value().size() != static_cast<std::size_t>(2 * block.w - 1)) {
    throw DimensionError("relative bias tables do not match block " + block.str());
  }
  const std::size_t np = static_cast<std::size_t>(block.positions());
  auto idx = std::make_shared<std::vector<BiasIndex>>(bias_indices(block));
  NdArray<T> out({np, np});
  const auto& bt = table_t.value();
  const auto& bh = table_h.value();
  const auto& bw = table_w.value();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& e = (*idx)[k];
    out[k] = bt[e.t] + bh[e.h] + bw[e.w];
  }
  const std::size_t it = table_t.id, ih = table_h.id, iw = table_w.id;
  return table_t.tape->record(std::move(out), {table_t, table_h, table_w}, [=](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    NdArray<T>* gt = tape.requires_grad(it) ? &tape.grad(it) : nullptr;
    NdArray<T>* gh = tape.requires_grad(ih) ? &tape.grad(ih) : nullptr;
    NdArray<T>* gw = tape.requires_grad(iw) ? &tape.grad(iw) : nullptr;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const auto& e = (*idx)[k];
      if (gt) (*gt)[e.t] += g[k];
      if (gh) (*gh)[e.h] += g[k];
      if (gw) (*gw)[e.w] += g[k];
    }
  });
}

std::vector<std::uint8_t> causal_mask(const BlockShape& block, const std::array<int, 3>& block_offset,
                                      const VideoShape& volume) {
  const std::size_t np = static_cast<std::size_t>(block.positions());
  std::vector<long> raster(np);
  for (std::size_t i = 0; i < np; ++i) {
    const int e = static_cast<int>(i);
    const long t = block_offset[0] + e / (block.h * block.w);
    const long h = block_offset[1] + (e / block.w) % block.h;
    const long w = block_offset[2] + e % block.w;
    raster[i] = (t * volume.h + h) * volume.w + w;
  }
  std::vector<std::uint8_t> mask(np * np, 0);
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < np; ++j) mask[i * np + j] = raster[j] <= raster[i] ? 1 : 0;
  }
  return mask;
}

template <typename T>
LayerWeights<T> bind_layer(ParamBinder<T>& bind, const std::string& prefix) {
  return LayerWeights<T>{bind(prefix + "ln1_gain"), bind(prefix + "ln1_bias"), bind(prefix + "wqkv"),
                         bind(prefix + "wp"),       bind(prefix + "bias_t"),   bind(prefix + "bias_h"),
                         bind(prefix + "bias_w"),   bind(prefix + "ln2_gain"), bind(prefix + "ln2_bias"),
                         bind(prefix + "t1"),       bind(prefix + "t2")};
}

void init_layer(ParamStore<float>& store, const std::string& prefix, int width, const LayerSpec& spec,
                Initializer& init, const LayerInit& options) {
  const std::size_t d = static_cast<std::size_t>(width);
  const std::size_t heads = static_cast<std::size_t>(spec.heads);
  const std::size_t da = static_cast<std::size_t>(spec.head_dim);
  const std::size_t ffn = static_cast<std::size_t>(spec.ffn_dim > 0 ? spec.ffn_dim : width);
  const double sd = options.stddev;
  store.set(prefix + "ln1_gain", Initializer::constant({d}, 1.0f));
  store.set(prefix + "ln1_bias", Initializer::constant({d}, 0.0f));
  store.set(prefix + "wqkv", init.truncated_normal({d, heads * 3 * da}, sd));
  store.set(prefix + "wp", init.truncated_normal({heads * da, d}, sd));
  const auto table = [&](int extent) {
    Shape shape{heads, static_cast<std::size_t>(2 * extent - 1)};
    return options.random_bias ? init.truncated_normal(shape, sd) : Initializer::constant(shape, 0.0f);
  };
  store.set(prefix + "bias_t", table(spec.block.t));
  store.set(prefix + "bias_h", table(spec.block.h));
  store.set(prefix + "bias_w", table(spec.block.w));
  store.set(prefix + "ln2_gain", Initializer::constant({d}, 1.0f));
  store.set(prefix + "ln2_bias", Initializer::constant({d}, 0.0f));
  store.set(prefix + "t1", init.truncated_normal({d, ffn}, sd));
  store.set(prefix + "t2", init.truncated_normal({ffn, d}, sd));
}

template <typename T>
Var<T> block_attention(Var<T> zn_blocks, const LayerWeights<T>& w, const LayerSpec& spec,
                       const std::vector<std::uint8_t>* mask) {
  Tape<T>& tape = *zn_blocks.tape;
  const std::size_t np = static_cast<std::size_t>(spec.block.positions());
  const std::size_t da = static_cast<std::size_t>(spec.head_dim);
  if (zn_blocks.value().rank() != 3 || zn_blocks.value().dim(1) != np) {
    throw DimensionError("block_attention expects [blocks, " + std::to_string(np) + ", d], got " +
                         shape_str(zn_blocks.shape()));
  }
  if (mask && mask->size() != np * np) throw DimensionError("attention mask size mismatch");
  auto qkv = matmul(zn_blocks, w.wqkv);
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(da));
  std::vector<Var<T>> outputs;
  for (std::size_t h = 0; h < static_cast<std::size_t>(spec.heads); ++h) {
    const std::size_t base = h * 3 * da;
    auto q = slice_last(qkv, base, base + da);
    auto k = slice_last(qkv, base + da, base + 2 * da);
    auto v = slice_last(qkv, base + 2 * da, base + 3 * da);
    const std::size_t row[] = {h};
    auto bias = relative_bias(gather_rows(w.bias_t, row), gather_rows(w.bias_h, row), gather_rows(w.bias_w, row),
                              spec.block);
    if (mask) {
      NdArray<T> additive({np, np});
      for (std::size_t i = 0; i < additive.size(); ++i) additive[i] = (*mask)[i] ? T{0} : static_cast<T>(kMaskValue);
      bias = add(bias, tape.leaf(std::move(additive)));
    }
    auto scores = add_broadcast(scale(bmm(q, k, true), inv_sqrt), bias);
    outputs.push_back(bmm(softmax(scores), v));
  }
  return outputs.size() == 1 ? outputs[0] : concat(outputs);
}

template <typename T>
Var<T> attention_layer(Var<T> z, const VideoShape& volume, const LayerSpec& spec, const LayerWeights<T>& w,
                       bool causal) {
  const BlockPartition partition = block_partition(volume, spec.block);
  std::vector<std::uint8_t> mask;
  if (causal) {
    // In-block raster order agrees with slice raster order for every block,
    // so the first block's mask serves all of them.
    mask = causal_mask(spec.block, partition.block_offset(0), volume);
  }
  auto zn = partition_blocks(layernorm(z, w.ln1_gain, w.ln1_bias), partition);
  auto heads = merge_blocks(block_attention(zn, w, spec, causal ? &mask : nullptr), partition);
  auto mixed = add(matmul(heads, w.wp), z);
  auto hidden = relu(matmul(layernorm(mixed, w.ln2_gain, w.ln2_bias), w.t1));
  return add(matmul(hidden, w.t2), mixed);
}

#define SVT_INSTANTIATE_ATTENTION(T)                                                                        \
  template Var<T> partition_blocks(Var<T>, const BlockPartition&);                                          \
  template Var<T> merge_blocks(Var<T>, const BlockPartition&);                                              \
  template Var<T> relative_bias(Var<T>, Var<T>, Var<T>, const BlockShape&);                                 \
  template T relative_bias_entry(const BlockShape&, std::span<const T>, std::span<const T>,                 \
                                 std::span<const T>, std::size_t, std::size_t);                              \
  template LayerWeights<T> bind_layer(ParamBinder<T>&, const std::string&);                                 \
  template Var<T> block_attention(Var<T>, const LayerWeights<T>&, const LayerSpec&,                          \
                                  const std::vector<std::uint8_t>*);                                        \
  template Var<T> attention_layer(Var<T>, const VideoShape&, const LayerSpec&, const LayerWeights<T>&, bool);

SVT_INSTANTIATE_ATTENTION(float)
SVT_INSTANTIATE_ATTENTION(double)

#undef SVT_INSTANTIATE_ATTENTION

}  // namespace svt
