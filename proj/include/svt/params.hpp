#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "svt/autograd.hpp"

namespace svt {

// Named dense arrays: model parameters, their gradients, or optimizer state.
// Iteration is in lexicographic name order.
template <typename T>
class ParamStore {
 public:
  using Map = std::map<std::string, NdArray<T>>;

  void set(const std::string& name, NdArray<T> value) { entries_[name] = std::move(value); }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const NdArray<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  NdArray<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += v.size();
    return n;
  }

  typename Map::const_iterator begin() const { return entries_.begin(); }
  typename Map::const_iterator end() const { return entries_.end(); }
  typename Map::iterator begin() { return entries_.begin(); }
  typename Map::iterator end() { return entries_.end(); }

  // Same names and shapes, all zeros.
  ParamStore zeros_like() const {
    ParamStore out;
    for (const auto& [name, v] : entries_) out.set(name, NdArray<T>(v.shape()));
    return out;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, v] : entries_) out.set(name, v.template cast<U>());
    return out;
  }

  bool operator==(const ParamStore&) const = default;

 private:
  Map entries_;
};

// Binds store entries as tape leaves on first use and routes their gradients
// back by name.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, const ParamStore<T>& store, bool requires_grad = true)
      : tape_(tape), store_(store), requires_grad_(requires_grad) {}

  Var<T> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return {&tape_, it->second};
    Var<T> v = tape_.leaf(store_.at(name), requires_grad_);
    bound_.emplace(name, v.id);
    return v;
  }

  // Routes `name` to an existing variable instead of a new leaf.
  void preset(const std::string& name, Var<T> v) { bound_[name] = v.id; }

  Tape<T>& tape() { return tape_; }

  // Adds the gradient of every bound parameter into `grads` (created on demand).
  void accumulate_grads(ParamStore<T>& grads) const {
    for (const auto& [name, id] : bound_) {
      if (!tape_.has_grad(id)) continue;
      const NdArray<T>& g = tape_.grad(id);
      if (!grads.contains(name)) grads.set(name, NdArray<T>(g.shape()));
      NdArray<T>& dst = grads.at(name);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  }

 private:
  Tape<T>& tape_;
  const ParamStore<T>& store_;
  bool requires_grad_;
  std::map<std::string, std::size_t> bound_;
};

// Parameter initialisers.
struct Initializer {
  std::mt19937_64 rng;
  explicit Initializer(std::uint64_t seed) : rng(seed) {}

  // Normal(0, std) truncated to two standard deviations.
  NdArray<float> truncated_normal(Shape shape, double stddev) {
    NdArray<float> out(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : out.data()) {
      double x = dist(rng);
      while (x < -2.0 || x > 2.0) x = dist(rng);
      v = static_cast<float>(x * stddev);
    }
    return out;
  }
  static NdArray<float> constant(Shape shape, float value) { return NdArray<float>(std::move(shape), value); }
};

// Checkpoint file: "SVTC", version u32, count u32, then per entry the path
// (u32 length + UTF-8 bytes), rank u32, extents u64[rank] and float32 data,
// all little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const ParamStore<float>& params);
ParamStore<float> read_checkpoint(const std::string& path);

}  // namespace svt
