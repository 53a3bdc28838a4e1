#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "svt/data_io.hpp"
#include "svt/metrics.hpp"

using namespace svt;

TEST_CASE("bits per dim counts three dims per pixel") {
  CHECK(bits_per_dim(3.0 * 10 * 8 * std::log(2.0), 10) == doctest::Approx(8.0).epsilon(1e-15));
  CHECK(nats_per_frame(12.0, 4) == 3.0);
  CHECK_THROWS_AS(bits_per_dim(1.0, 0), ConfigError);
  CHECK_THROWS_AS(nats_per_frame(1.0, 0), ConfigError);
}

TEST_CASE("a zero head evaluates to 8 bits per dim over the non-primed pixels") {
  const Model model(test::causality_config());
  SpriteConfig sc;
  sc.canvas = {5, 8, 8};
  sc.videos = 3;
  const auto videos = gen_sprites(sc, 2);
  const auto r = evaluate(model, model.init_params(1), videos, 1);
  CHECK(r.pixels == 3 * 3 * 64);
  CHECK(r.frames == 9);
  CHECK(r.bits_per_dim == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(format_eval(r).find("bits_per_dim,") != std::string::npos);
}

TEST_CASE("evaluation does not depend on the thread count") {
  const Model model(test::causality_config());
  const auto params = model.init_params(3, {0.2, false, true});
  SpriteConfig sc;
  sc.canvas = {4, 8, 8};
  sc.videos = 5;
  const auto videos = gen_sprites(sc, 7);
  const auto one = evaluate(model, params, videos, 1, 1);
  const auto many = evaluate(model, params, videos, 1, 3);
  CHECK(one.nats == many.nats);
  CHECK(one.bits_per_dim == many.bits_per_dim);
}

TEST_CASE("evaluation rejects mismatched videos") {
  const Model model(test::causality_config());
  const std::vector<Video> wrong{Video(4, 8, 8, 1)};
  CHECK_THROWS_AS(evaluate(model, model.init_params(1), wrong, 1), DimensionError);
  CHECK_THROWS_AS(evaluate(model, model.init_params(1), wrong, 4), ConfigError);
}

TEST_CASE("copy-last-frame baseline matches a direct cross-entropy sum") {
  Video v(3, 2, 2, 1);
  const std::uint8_t frames[3][4] = {{0, 255, 128, 64}, {255, 255, 0, 64}, {10, 200, 30, 40}};
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 4; ++p) v.data()[static_cast<std::size_t>(t * 4 + p)] = frames[t][p];
  }
  double expected = 0.0;
  for (int t = 1; t < 3; ++t) {
    for (int p = 0; p < 4; ++p) {
      const double y = std::clamp(frames[t - 1][p] / 255.0, 1e-7, 1.0 - 1e-7);
      const double z = frames[t][p] / 255.0;
      expected -= z * std::log(y) + (1 - z) * std::log(1 - y);
    }
  }
  const std::vector<Video> videos{v};
  const auto r = copy_last_frame_baseline(videos, 3, 1);
  CHECK(r.nats == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.frames == 2);
  CHECK(r.nats_per_frame == doctest::Approx(expected / 2).epsilon(1e-12));
  CHECK_THROWS_AS(copy_last_frame_baseline(videos, 3, 0), ConfigError);
}

TEST_CASE("a deterministic head at y = 0.5 costs 4096 ln 2 nats per 64x64 frame") {
  ModelConfig c = build_variant(Variant::kSpatial, {2, 64, 64}, Preset::kDesk);
  c.channels = gray_deterministic();
  c.embed_dim = 4;
  c.hidden_dim = 8;
  for (auto* s : {&c.encoder, &c.decoder}) {
    for (auto& l : *s) {
      l.heads = 1;
      l.head_dim = 4;
      l.ffn_dim = 8;
    }
  }
  c.encoder.resize(1);
  c.decoder.resize(1);
  const Model model(c);
  SpriteConfig sc;
  sc.canvas = c.video;
  sc.channels = 1;
  sc.videos = 1;
  const auto r = evaluate(model, model.init_params(1), gen_sprites(sc, 1), 1);
  // BCE(z, 0.5) = ln 2 for every target z.
  CHECK(r.nats_per_frame == doctest::Approx(4096.0 * std::log(2.0)).epsilon(1e-9));
}
