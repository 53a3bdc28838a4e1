#include <doctest.h>

#include <cmath>
#include <set>

#include "svt/optim.hpp"

using namespace svt;

TEST_CASE("RMSProp follows the recurrence on a scalar") {
  RmsPropConfig cfg{0.01, 0.9, 0.5, 1e-8};
  RmsProp<double> opt(cfg);
  ParamStore<double> p, g;
  p.set("x", NdArray<double>({1}, 1.0));
  const double grads[] = {0.5, -2.0, 0.25, 0.0};
  double x = 1.0, acc = 0.0, mom = 0.0;
  for (double gi : grads) {
    g.set("x", NdArray<double>({1}, gi));
    opt.step(p, g);
    acc = 0.9 * acc + 0.1 * gi * gi;
    mom = 0.5 * mom + 0.01 * gi / std::sqrt(acc + 1e-8);
    x -= mom;
    CHECK(p.at("x")[0] == doctest::Approx(x).epsilon(1e-14));
    CHECK(opt.accumulators().at("x")[0] == doctest::Approx(acc).epsilon(1e-14));
  }
  CHECK(opt.steps() == 4);
}

TEST_CASE("a missing gradient is a zero gradient; momentum keeps moving the parameter") {
  RmsProp<double> opt({0.1, 0.5, 0.9, 1e-8});
  ParamStore<double> p, g;
  p.set("a", NdArray<double>({2}, 0.0));
  p.set("b", NdArray<double>({1}, 3.0));
  g.set("a", NdArray<double>({2}, 1.0));
  opt.step(p, g);
  CHECK(p.at("b")[0] == 3.0);
  const double after_one = p.at("a")[0];
  opt.step(p, ParamStore<double>{});
  CHECK(p.at("a")[0] < after_one);
}

TEST_CASE("gradient shape mismatch is rejected") {
  RmsProp<float> opt;
  ParamStore<float> p, g;
  p.set("w", NdArray<float>({2, 2}));
  g.set("w", NdArray<float>({4}));
  CHECK_THROWS_AS(opt.step(p, g), DimensionError);
}

TEST_CASE("each epoch of the batch stream visits every (video, slice) pair once") {
  const SubscaleFactor s{2, 2, 2};
  BatchStream stream(3, s, 4, 11);
  std::vector<SliceRef> seen;
  for (int i = 0; i < 12; ++i) {
    const auto batch = stream.next();
    CHECK(batch.size() == 4);
    seen.insert(seen.end(), batch.begin(), batch.end());
  }
  for (std::size_t epoch = 0; epoch < 2; ++epoch) {
    std::set<std::tuple<std::size_t, int, int, int>> unique;
    for (std::size_t i = epoch * 24; i < (epoch + 1) * 24; ++i) {
      unique.insert({seen[i].video, seen[i].slice.a, seen[i].slice.b, seen[i].slice.c});
    }
    CHECK(unique.size() == 24);
  }
  CHECK(stream.epoch() == 1);
  // Consecutive epochs are shuffled independently.
  CHECK_FALSE(std::equal(seen.begin(), seen.begin() + 24, seen.begin() + 24));
}

TEST_CASE("batch streams are deterministic in the seed and skip matches next") {
  const SubscaleFactor s{1, 2, 2};
  CHECK(make_batches(5, s, 3, 1, 10) == make_batches(5, s, 3, 1, 10));
  CHECK_FALSE(make_batches(5, s, 3, 1, 10) == make_batches(5, s, 3, 2, 10));
  BatchStream a(5, s, 3, 4), b(5, s, 3, 4);
  for (int i = 0; i < 9; ++i) a.next();
  b.skip(9);
  CHECK(a.next() == b.next());
  CHECK_THROWS_AS(BatchStream(0, s, 3, 0), ConfigError);
  CHECK_THROWS_AS(BatchStream(1, s, 0, 0), ConfigError);
}

TEST_CASE("temporal crops are contiguous and cover every offset") {
  Video v(6, 1, 1, 1);
  for (int t = 0; t < 6; ++t) v.at(t, 0, 0, 0) = static_cast<std::uint8_t>(t);
  std::mt19937_64 rng(3);
  std::set<int> starts;
  for (int i = 0; i < 200; ++i) {
    const Video c = random_temporal_crop(v, 4, rng);
    REQUIRE(c.frames() == 4);
    for (int t = 1; t < 4; ++t) CHECK(c.at(t, 0, 0, 0) == c.at(0, 0, 0, 0) + t);
    starts.insert(c.at(0, 0, 0, 0));
  }
  CHECK(starts == std::set<int>{0, 1, 2});
  CHECK_THROWS_AS(random_temporal_crop(v, 7, rng), ConfigError);
}
