#include <doctest.h>

#include "svt/run_config.hpp"

using namespace svt;

TEST_CASE("defaults resolve to the desk spatiotemporal model") {
  const RunConfig c = parse_run_config("");
  CHECK(c.preset == Preset::kDesk);
  CHECK(c.model.video == VideoShape{4, 16, 16});
  CHECK(c.model.subscale == SubscaleFactor{2, 2, 2});
  CHECK(c.model.kernel == Int3{2, 2, 2});
  CHECK(c.train.prime_frames == 1);
  CHECK(c.sample.temperature == 0.9);
}

TEST_CASE("dumped configurations parse back to the same value") {
  const char* docs[] = {
      "",
      "variant = spatial\nframes = 2\nheight = 8\nwidth = 8\nlayers = 3\nheads = 1\nhead_dim = 8\n",
      "channels = gray\nfirst_slice_decoder = true\nlearning_rate = 0.00123\nsample_seed = 77\ndata = d.svt\n",
      "variant = single_frame\nframes = 4\nheight = 8\nwidth = 8\nembed_dim = 8\nhidden_dim = 16\n",
      "preset = large\nframes = 8\nheight = 32\nwidth = 32\n",
      "decoder = 1x2x2:2:4:8, 2x4x4:1:3:5\nmasked_kernel = 5\ntemperature = 0.3\n",
  };
  for (const char* doc : docs) {
    CAPTURE(doc);
    const RunConfig c = parse_run_config(doc);
    CHECK(parse_run_config(dump_run_config(c)) == c);
  }
}

TEST_CASE("schedules round-trip through their text form") {
  const LayerSchedule s{{{4, 8, 4}, 2, 32, 64}, {{1, 32, 4}, 16, 8, 2048}};
  CHECK(format_schedule(s) == "4x8x4:2:32:64, 1x32x4:16:8:2048");
  CHECK(parse_schedule(format_schedule(s)) == s);
  CHECK_THROWS_AS(parse_schedule("4x8:2:32:64"), ConfigError);
  CHECK_THROWS_AS(parse_schedule("4x8x4:0:32:64"), ConfigError);
}

TEST_CASE("malformed documents are rejected") {
  CHECK_THROWS_AS(parse_run_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("steps = 1\nsteps = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("steps = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("subscale = 3,2,2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("temperature = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("prime_frames = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("channels = cmyk\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("decoder = 1x3x3:1:1:1\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/svt.cfg"), IoError);
}

TEST_CASE("convenience keys reshape the default schedules") {
  const RunConfig c = parse_run_config("layers = 3\nheads = 4\nhead_dim = 8\nffn_dim = 40\n");
  REQUIRE(c.model.encoder.size() == 3);
  REQUIRE(c.model.first_decoder.size() == 6);
  for (const auto& l : c.model.decoder) {
    CHECK(l.heads == 4);
    CHECK(l.head_dim == 8);
    CHECK(l.ffn_dim == 40);
  }
  const RunConfig h = parse_run_config("hidden_dim = 48\n");
  for (const auto& l : h.model.encoder) CHECK(l.ffn_dim == 48);
}

TEST_CASE("variant geometry") {
  const ModelConfig st = build_variant(Variant::kSpatiotemporal, {16, 64, 64}, Preset::kBase);
  CHECK(st.subscale == SubscaleFactor{4, 2, 2});
  CHECK(slice_order(st.subscale).size() == 16);
  CHECK(st.slice() == VideoShape{4, 32, 32});
  CHECK(st.encoder == subscale_schedule(8, 128, 512));

  const ModelConfig sp = build_variant(Variant::kSpatial, {16, 64, 64}, Preset::kBase);
  CHECK(slice_order(sp.subscale).size() == 4);
  CHECK(sp.slice() == VideoShape{16, 32, 32});

  const ModelConfig sf = build_variant(Variant::kSingleFrame, {16, 64, 64}, Preset::kBase);
  CHECK(sf.slice() == VideoShape{1, 64, 64});
  CHECK(sf.encoder == single_frame_schedule(8, 128, 512));
  for (int a = 0; a < 16; ++a) CHECK(context_padding(sf.kernel, {a, 0, 0}) == Int3{3 - a, 0, 0});

  const ModelConfig large = build_variant(Variant::kSpatiotemporal, {16, 64, 64}, Preset::kLarge);
  CHECK(large.encoder[3].heads == 8);
  CHECK(large.encoder[4].heads == 16);
  CHECK(large.decoder[7].ffn_dim == 2048);
}
