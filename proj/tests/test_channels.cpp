#include <doctest.h>

#include <random>

#include "svt/config.hpp"

using namespace svt;

TEST_CASE("split and join are inverse for every byte in every colour slot") {
  for (int v = 0; v < 256; ++v) {
    const auto b = static_cast<std::uint8_t>(v);
    for (int slot = 0; slot < 3; ++slot) {
      const std::uint8_t r = slot == 0 ? b : 0, g = slot == 1 ? b : 0, bl = slot == 2 ? b : 0;
      const auto s = split_channels(r, g, bl);
      for (auto x : s) CHECK(x < 16);
      const auto j = join_channels(std::span<const std::uint8_t, 6>(s));
      CHECK(j == std::array<std::uint8_t, 3>{r, g, bl});
    }
  }
}

TEST_CASE("split and join are inverse over sampled RGB triples") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> byte(0, 255);
  std::size_t mismatches = 0;
  for (int i = 0; i < 100000; ++i) {
    const std::array<std::uint8_t, 3> rgb{static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                                          static_cast<std::uint8_t>(byte(rng))};
    const auto s = split_channels(rgb[0], rgb[1], rgb[2]);
    if (join_channels(std::span<const std::uint8_t, 6>(s)) != rgb) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("split order is the three coarse nibbles, then the three fine nibbles") {
  const auto s = split_channels(0xA1, 0xB2, 0xC3);
  CHECK(s == std::array<std::uint8_t, 6>{0xA, 0xB, 0xC, 0x1, 0x2, 0x3});
}

TEST_CASE("video split and join round trip for RGB and grayscale") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int c : {1, 3}) {
    Video raw(2, 3, 5, c);
    for (auto& v : raw.data()) v = static_cast<std::uint8_t>(byte(rng));
    const Video split = split_video(raw);
    CHECK(split.channels() == 2 * c);
    for (std::size_t p = 0; p < raw.positions(); ++p) {
      for (int k = 0; k < c; ++k) {
        CHECK(split.pixel(p)[k] == raw.pixel(p)[k] >> 4);
        CHECK(split.pixel(p)[c + k] == (raw.pixel(p)[k] & 0x0F));
      }
    }
    CHECK(join_video(split) == raw);
  }
}

TEST_CASE("malformed channel data is rejected") {
  CHECK_THROWS_AS(split_video(Video(1, 1, 1, 2)), ConfigError);
  Video bad(1, 1, 1, 6);
  bad.data()[0] = 16;
  CHECK_THROWS_AS(join_video(bad), ConfigError);
}
