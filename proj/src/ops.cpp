#include "svt/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace svt {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
MatMap<T> as_mat(NdArray<T>& a, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap<T>(a.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
ConstMatMap<T> as_mat(const NdArray<T>& a, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap<T>(a.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Accumulator for an input's gradient, or null when it needs none.
template <typename T>
NdArray<T>* grad_of(Tape<T>& tape, std::size_t id) {
  return tape.requires_grad(id) ? &tape.grad(id) : nullptr;
}

template <typename T>
void check_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw DimensionError("operands recorded on different tapes");
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() < 1 || bv.rank() != 2 || av.cols() != bv.dim(0)) {
    throw DimensionError("matmul " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.dim(1);
  Shape out_shape = av.shape();
  out_shape.back() = n;
  NdArray<T> out(out_shape);
  as_mat(out, m, n).noalias() = as_mat(av, m, k) * as_mat(bv, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (auto* ga = grad_of(t, ia)) as_mat(*ga, m, k).noalias() += as_mat(g, m, n) * as_mat(t.value(ib), k, n).transpose();
    if (auto* gb = grad_of(t, ib)) as_mat(*gb, k, n).noalias() += as_mat(t.value(ia), m, k).transpose() * as_mat(g, m, n);
  });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool transpose_b) {
  check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) ||
      av.dim(2) != (transpose_b ? bv.dim(2) : bv.dim(1))) {
    throw DimensionError("bmm " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2);
  const std::size_t n = transpose_b ? bv.dim(1) : bv.dim(2);
  NdArray<T> out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    auto o = as_mat(out, m, n, i * m * n);
    auto x = as_mat(av, m, k, i * m * k);
    if (transpose_b) {
      o.noalias() = x * as_mat(bv, n, k, i * n * k).transpose();
    } else {
      o.noalias() = x * as_mat(bv, k, n, i * k * n);
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia);
    const auto& y = t.value(ib);
    auto* ga = grad_of(t, ia);
    auto* gb = grad_of(t, ib);
    for (std::size_t i = 0; i < batch; ++i) {
      auto gi = as_mat(g, m, n, i * m * n);
      if (transpose_b) {
        if (ga) as_mat(*ga, m, k, i * m * k).noalias() += gi * as_mat(y, n, k, i * n * k);
        if (gb) as_mat(*gb, n, k, i * n * k).noalias() += gi.transpose() * as_mat(x, m, k, i * m * k);
      } else {
        if (ga) as_mat(*ga, m, k, i * m * k).noalias() += gi * as_mat(y, k, n, i * k * n).transpose();
        if (gb) as_mat(*gb, k, n, i * k * n).noalias() += as_mat(x, m, k, i * m * k).transpose() * gi;
      }
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  if (a.shape() != b.shape()) throw DimensionError("add " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  NdArray<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t id : {ia, ib}) {
      if (auto* gx = grad_of(t, id)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
      }
    }
  });
}

template <typename T>
Var<T> add_broadcast(Var<T> x, Var<T> y) {
  check_same_tape(x, y);
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw DimensionError("add_broadcast " + shape_str(xs) + " + " + shape_str(ys));
  }
  const std::size_t inner = shape_size(ys);
  NdArray<T> out = x.value();
  const auto& yv = y.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yv[i % inner];
  const std::size_t ix = x.id, iy = y.id;
  return x.tape->record(std::move(out), {x, y}, [ix, iy, inner](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (auto* gx = grad_of(t, ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    }
    if (auto* gy = grad_of(t, iy)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gy)[i % inner] += g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  if (a.shape() != b.shape()) throw DimensionError("mul " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  NdArray<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (auto* ga = grad_of(t, ia)) {
      const auto& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (auto* gb = grad_of(t, ib)) {
      const auto& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  NdArray<T> out = x.value();
  for (auto& v : out.data()) v *= factor;
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, factor](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (auto* gx = grad_of(t, ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * factor;
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  NdArray<T> out = x.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (auto* gx = grad_of(t, ix)) {
      const auto& xv = t.value(ix);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > T{0}) (*gx)[i] += g[i];
      }
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax axis " + std::to_string(axis) + " out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  NdArray<T> out(s);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    auto* gx = grad_of(t, ix);
    if (!gx) return;
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = base + j * inner;
          (*gx)[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> x) {
  if (x.shape().empty()) throw DimensionError("softmax of a scalar");
  return softmax(x, x.shape().size() - 1);
}

template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gain, Var<T> bias) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  const std::size_t n = x.value().cols();
  const std::size_t rows = x.value().rows();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layernorm features " + std::to_string(n) + " vs gain " +
                         shape_str(gain.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  NdArray<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const T eps = static_cast<T>(kLayerNormEpsilon);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.ptr() + r * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(n);
    const T rs = T{1} / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mean) * rs;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->record(std::move(out), {x, gain, bias}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& gv = t.value(ig);
    auto* gx = grad_of(t, ix);
    auto* gg = grad_of(t, ig);
    auto* gb = grad_of(t, ib);
    std::vector<T> dh(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* h = xhat->data() + r * n;
      const T* gr = g.ptr() + r * n;
      T mean_dh = 0, mean_dh_h = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (gg) (*gg)[j] += gr[j] * h[j];
        if (gb) (*gb)[j] += gr[j];
        dh[j] = gr[j] * gv[j];
        mean_dh += dh[j];
        mean_dh_h += dh[j] * h[j];
      }
      if (!gx) continue;
      mean_dh /= static_cast<T>(n);
      mean_dh_h /= static_cast<T>(n);
      for (std::size_t j = 0; j < n; ++j) {
        (*gx)[r * n + j] += (*rstd)[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
      }
    }
  });
}

namespace {

struct ConvPlan {
  std::size_t in_t, in_h, in_w, cin, cout;
  std::size_t kt, kh, kw;
  std::size_t out_t, out_h, out_w;
  std::size_t taps() const { return kt * kh * kw; }
  std::size_t patch() const { return taps() * cin; }
  std::size_t positions() const { return out_t * out_h * out_w; }
};

template <typename T>
ConvPlan make_conv_plan(const NdArray<T>& input, const NdArray<T>& kernel, const Conv3dGeometry& geom) {
  if (input.rank() != 4) throw DimensionError("conv3d input must be [T,H,W,C], got " + shape_str(input.shape()));
  if (kernel.rank() != 5) throw DimensionError("conv3d kernel must be 5-D, got " + shape_str(kernel.shape()));
  if (kernel.dim(3) != input.dim(3)) {
    throw DimensionError("conv3d channel mismatch: input " + std::to_string(input.dim(3)) + ", kernel " +
                         std::to_string(kernel.dim(3)));
  }
  for (int i = 0; i < 3; ++i) {
    if (geom.stride[i] < 1 || geom.out_shape[i] < 1) throw DimensionError("conv3d stride/out_shape must be positive");
  }
  return ConvPlan{input.dim(0),
                  input.dim(1),
                  input.dim(2),
                  input.dim(3),
                  kernel.dim(4),
                  kernel.dim(0),
                  kernel.dim(1),
                  kernel.dim(2),
                  static_cast<std::size_t>(geom.out_shape[0]),
                  static_cast<std::size_t>(geom.out_shape[1]),
                  static_cast<std::size_t>(geom.out_shape[2])};
}

// Visits (output row, patch column offset, input offset) for every in-bounds tap.
template <typename F>
void for_each_tap(const ConvPlan& p, const Conv3dGeometry& g, F&& f) {
  std::size_t row = 0;
  for (std::size_t ot = 0; ot < p.out_t; ++ot) {
    for (std::size_t oh = 0; oh < p.out_h; ++oh) {
      for (std::size_t ow = 0; ow < p.out_w; ++ow, ++row) {
        std::size_t tap = 0;
        for (std::size_t jt = 0; jt < p.kt; ++jt) {
          const long it = static_cast<long>(ot) * g.stride[0] - g.pad[0] + static_cast<long>(jt);
          for (std::size_t jh = 0; jh < p.kh; ++jh) {
            const long ih = static_cast<long>(oh) * g.stride[1] - g.pad[1] + static_cast<long>(jh);
            for (std::size_t jw = 0; jw < p.kw; ++jw, ++tap) {
              const long iw = static_cast<long>(ow) * g.stride[2] - g.pad[2] + static_cast<long>(jw);
              if (it < 0 || ih < 0 || iw < 0 || it >= static_cast<long>(p.in_t) ||
                  ih >= static_cast<long>(p.in_h) || iw >= static_cast<long>(p.in_w)) {
                continue;
              }
              const std::size_t in_off =
                  ((static_cast<std::size_t>(it) * p.in_h + static_cast<std::size_t>(ih)) * p.in_w +
                   static_cast<std::size_t>(iw)) *
                  p.cin;
              f(row, tap * p.cin, in_off);
            }
          }
        }
      }
    }
  }
}

template <typename T>
Var<T> conv3d_impl(Var<T> input, Var<T> kernel, const Var<T>* bias, const Conv3dGeometry& geom) {
  check_same_tape(input, kernel);
  const ConvPlan p = make_conv_plan(input.value(), kernel.value(), geom);
  if (bias && bias->value().size() != p.cout) throw DimensionError("conv3d bias size mismatch");
  const auto& xv = input.value();
  auto cols = std::make_shared<NdArray<T>>(Shape{p.positions(), p.patch()});
  for_each_tap(p, geom, [&](std::size_t row, std::size_t col, std::size_t in_off) {
    std::copy_n(xv.ptr() + in_off, p.cin, cols->ptr() + row * p.patch() + col);
  });
  NdArray<T> out({p.out_t, p.out_h, p.out_w, p.cout});
  as_mat(out, p.positions(), p.cout).noalias() =
      as_mat(*cols, p.positions(), p.patch()) * as_mat(kernel.value(), p.patch(), p.cout);
  if (bias) {
    const auto& bv = bias->value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % p.cout];
  }
  const std::size_t ix = input.id, ik = kernel.id;
  const std::size_t ib = bias ? bias->id : 0;
  const bool has_bias = bias != nullptr;
  auto backward = [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto gm = as_mat(g, p.positions(), p.cout);
    if (auto* gk = grad_of(t, ik)) {
      as_mat(*gk, p.patch(), p.cout).noalias() += as_mat(*cols, p.positions(), p.patch()).transpose() * gm;
    }
    if (has_bias) {
      if (auto* gb = grad_of(t, ib)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % p.cout] += g[i];
      }
    }
    if (auto* gx = grad_of(t, ix)) {
      NdArray<T> dcols({p.positions(), p.patch()});
      as_mat(dcols, p.positions(), p.patch()).noalias() = gm * as_mat(t.value(ik), p.patch(), p.cout).transpose();
      for_each_tap(p, geom, [&](std::size_t row, std::size_t col, std::size_t in_off) {
        const T* src = dcols.ptr() + row * p.patch() + col;
        T* dst = gx->ptr() + in_off;
        for (std::size_t c = 0; c < p.cin; ++c) dst[c] += src[c];
      });
    }
  };
  if (bias) return input.tape->record(std::move(out), {input, kernel, *bias}, backward);
  return input.tape->record(std::move(out), {input, kernel}, backward);
}

}  // namespace

template <typename T>
Var<T> conv3d(Var<T> input, Var<T> kernel, const Conv3dGeometry& geom) {
  return conv3d_impl<T>(input, kernel, nullptr, geom);
}

template <typename T>
Var<T> conv3d(Var<T> input, Var<T> kernel, Var<T> bias, const Conv3dGeometry& geom) {
  check_same_tape(input, bias);
  return conv3d_impl<T>(input, kernel, &bias, geom);
}

std::vector<std::uint8_t> causal_kernel_mask(const Int3& kernel) {
  for (int k : kernel) {
    if (k < 1 || k % 2 == 0) throw ConfigError("masked convolution kernel extents must be odd, got " + std::to_string(k));
  }
  const std::size_t taps = static_cast<std::size_t>(kernel[0]) * kernel[1] * kernel[2];
  const std::size_t centre = taps / 2;  // raster index of (kt/2, kh/2, kw/2) for odd extents
  std::vector<std::uint8_t> mask(taps, 0);
  for (std::size_t i = 0; i < centre; ++i) mask[i] = 1;
  return mask;
}

template <typename T>
Var<T> masked_conv3d(Var<T> input, Var<T> kernel, Var<T> bias) {
  const auto& kv = kernel.value();
  if (kv.rank() != 5) throw DimensionError("masked_conv3d kernel must be 5-D");
  const Int3 extent{static_cast<int>(kv.dim(0)), static_cast<int>(kv.dim(1)), static_cast<int>(kv.dim(2))};
  const auto tap_mask = causal_kernel_mask(extent);
  const std::size_t per_tap = kv.dim(3) * kv.dim(4);
  NdArray<T> mask(kv.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = tap_mask[i / per_tap] ? T{1} : T{0};
  auto masked = mul(kernel, input.tape->leaf(std::move(mask)));
  const auto& xs = input.shape();
  if (xs.size() != 4) throw DimensionError("masked_conv3d input must be [T,H,W,C]");
  Conv3dGeometry geom;
  geom.pad = {extent[0] / 2, extent[1] / 2, extent[2] / 2};
  geom.out_shape = {static_cast<int>(xs[0]), static_cast<int>(xs[1]), static_cast<int>(xs[2])};
  return conv3d(input, masked, bias, geom);
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  const std::size_t rows = parts[0].value().rows();
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_same_tape(parts[0], p);
    Shape pl = p.shape();
    pl.pop_back();
    if (pl != lead) throw DimensionError("concat leading shape mismatch " + shape_str(p.shape()));
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  NdArray<T> out(out_shape);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.ptr() + r * widths[k], widths[k], out.ptr() + r * total + col);
    col += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  return parts[0].tape->record(std::move(out), parts, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::size_t c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (auto* gp = grad_of(t, ids[k])) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < widths[k]; ++j) (*gp)[r * widths[k] + j] += g[r * total + c + j];
        }
      }
      c += widths[k];
    }
  });
}

template <typename T>
Var<T> slice_last(Var<T> x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.value().cols();
  if (begin > end || end > n) throw DimensionError("slice_last range out of bounds");
  const std::size_t rows = x.value().rows();
  const std::size_t w = end - begin;
  Shape out_shape = x.shape();
  out_shape.back() = w;
  NdArray<T> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.ptr() + r * n + begin, w, out.ptr() + r * w);
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    if (auto* gx = grad_of(t, ix)) {
      const auto& g = t.grad(self);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) (*gx)[r * n + begin + j] += g[r * w + j];
      }
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index) {
  const auto& xv = x.value();
  if (xv.rank() < 1) throw DimensionError("gather_rows of a scalar");
  const std::size_t nrows = xv.dim(0);
  const std::size_t width = nrows ? xv.size() / nrows : 0;
  Shape out_shape = xv.shape();
  out_shape[0] = index.size();
  NdArray<T> out(out_shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= nrows) throw DimensionError("gather_rows index " + std::to_string(index[i]) + " out of range");
    std::copy_n(xv.ptr() + index[i] * width, width, out.ptr() + i * width);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, width, idx = std::move(idx)](Tape<T>& t, std::size_t self) {
    if (auto* gx = grad_of(t, ix)) {
      const auto& g = t.grad(self);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        T* dst = gx->ptr() + idx[i] * width;
        const T* src = g.ptr() + i * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  NdArray<T> out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
    if (auto* gx = grad_of(t, ix)) {
      const auto& g = t.grad(self);
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> x) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("transpose expects a matrix");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  NdArray<T> out({n, m});
  as_mat(out, n, m) = as_mat(xv, m, n).transpose();
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    if (auto* gx = grad_of(t, ix)) as_mat(*gx, m, n) += as_mat(t.grad(self), n, m).transpose();
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total = 0;
  for (T v : x.value().data()) total += v;
  const std::size_t ix = x.id;
  return x.tape->record(NdArray<T>(Shape{}, total), {x}, [ix](Tape<T>& t, std::size_t self) {
    if (auto* gx = grad_of(t, ix)) {
      const T g = t.grad(self)[0];
      for (auto& v : gx->data()) v += g;
    }
  });
}

template <typename T>
Var<T> weighted_sum(Var<T> x, const NdArray<T>& weights) {
  if (weights.shape() != x.shape()) throw DimensionError("weighted_sum weight shape mismatch");
  T total = 0;
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * weights[i];
  const std::size_t ix = x.id;
  return x.tape->record(NdArray<T>(Shape{}, total), {x}, [ix, weights](Tape<T>& t, std::size_t self) {
    if (auto* gx = grad_of(t, ix)) {
      const T g = t.grad(self)[0];
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g * weights[i];
    }
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets, std::span<const T> weights) {
  const auto& lv = logits.value();
  const std::size_t rows = lv.rows(), v = lv.cols();
  if (targets.size() != rows || weights.size() != rows) throw DimensionError("cross_entropy target/weight count");
  auto probs = std::make_shared<std::vector<T>>(lv.size());
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = lv.ptr() + r * v;
    const int target = targets[r];
    if (target < 0 || static_cast<std::size_t>(target) >= v) throw DimensionError("cross_entropy target out of range");
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (std::size_t j = 0; j < v; ++j) {
      const T e = std::exp(row[j] - mx);
      (*probs)[r * v + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < v; ++j) (*probs)[r * v + j] /= z;
    if (weights[r] != T{0}) total += weights[r] * (mx + std::log(z) - row[target]);
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<T> w(weights.begin(), weights.end());
  const std::size_t il = logits.id;
  return logits.tape->record(NdArray<T>(Shape{}, total), {logits},
                             [=, tg = std::move(tg), w = std::move(w)](Tape<T>& t, std::size_t self) {
                               auto* gl = grad_of(t, il);
                               if (!gl) return;
                               const T g = t.grad(self)[0];
                               for (std::size_t r = 0; r < rows; ++r) {
                                 if (w[r] == T{0}) continue;
                                 const T s = g * w[r];
                                 for (std::size_t j = 0; j < v; ++j) (*gl)[r * v + j] += s * (*probs)[r * v + j];
                                 (*gl)[r * v + tg[r]] -= s;
                               }
                             });
}

template <typename T>
Var<T> binary_cross_entropy_with_logits(Var<T> logits, std::span<const T> targets, std::span<const T> weights) {
  const auto& lv = logits.value();
  if (targets.size() != lv.size() || weights.size() != lv.size()) throw DimensionError("bce target/weight count");
  const T lo = static_cast<T>(kProbabilityClamp);
  const T hi = T{1} - lo;
  T total = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    if (weights[i] == T{0}) continue;
    const T y = std::clamp(stable_sigmoid(lv[i]), lo, hi);
    const T z = targets[i];
    total -= weights[i] * (z * std::log(y) + (T{1} - z) * std::log(T{1} - y));
  }
  std::vector<T> z(targets.begin(), targets.end());
  std::vector<T> w(weights.begin(), weights.end());
  const std::size_t il = logits.id;
  return logits.tape->record(NdArray<T>(Shape{}, total), {logits},
                             [il, z = std::move(z), w = std::move(w)](Tape<T>& t, std::size_t self) {
                               auto* gl = grad_of(t, il);
                               if (!gl) return;
                               const T g = t.grad(self)[0];
                               const auto& lv = t.value(il);
                               for (std::size_t i = 0; i < lv.size(); ++i) {
                                 (*gl)[i] += g * w[i] * (stable_sigmoid(lv[i]) - z[i]);
                               }
                             });
}

template <typename T>
NdArray<T> one_hot(std::span<const int> values, std::size_t num_values) {
  NdArray<T> out({values.size(), num_values});
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int v = values[i];
    if (v < 0) continue;
    if (static_cast<std::size_t>(v) >= num_values) {
      throw DimensionError("one_hot value " + std::to_string(v) + " >= " + std::to_string(num_values));
    }
    out[i * num_values + static_cast<std::size_t>(v)] = T{1};
  }
  return out;
}

#define SVT_INSTANTIATE_OPS(T)                                                                         \
  template Var<T> matmul(Var<T>, Var<T>);                                                              \
  template Var<T> bmm(Var<T>, Var<T>, bool);                                                           \
  template Var<T> add(Var<T>, Var<T>);                                                                 \
  template Var<T> add_broadcast(Var<T>, Var<T>);                                                       \
  template Var<T> mul(Var<T>, Var<T>);                                                                 \
  template Var<T> scale(Var<T>, T);                                                                    \
  template Var<T> relu(Var<T>);                                                                        \
  template Var<T> softmax(Var<T>, std::size_t);                                                        \
  template Var<T> softmax(Var<T>);                                                                     \
  template Var<T> layernorm(Var<T>, Var<T>, Var<T>);                                                   \
  template Var<T> conv3d(Var<T>, Var<T>, const Conv3dGeometry&);                                       \
  template Var<T> conv3d(Var<T>, Var<T>, Var<T>, const Conv3dGeometry&);                               \
  template Var<T> masked_conv3d(Var<T>, Var<T>, Var<T>);                                               \
  template Var<T> concat(const std::vector<Var<T>>&);                                                  \
  template Var<T> slice_last(Var<T>, std::size_t, std::size_t);                                        \
  template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                                   \
  template Var<T> reshape(Var<T>, Shape);                                                              \
  template Var<T> transpose(Var<T>);                                                                   \
  template Var<T> sum(Var<T>);                                                                         \
  template Var<T> weighted_sum(Var<T>, const NdArray<T>&);                                             \
  template Var<T> cross_entropy(Var<T>, std::span<const int>, std::span<const T>);                     \
  template Var<T> binary_cross_entropy_with_logits(Var<T>, std::span<const T>, std::span<const T>);    \
  template NdArray<T> one_hot(std::span<const int>, std::size_t);

SVT_INSTANTIATE_OPS(float)
SVT_INSTANTIATE_OPS(double)

#undef SVT_INSTANTIATE_OPS

}  // namespace svt
