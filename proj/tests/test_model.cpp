#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "svt/model.hpp"

using namespace svt;

TEST_CASE("forward shapes follow the configuration") {
  const Model model(test::causality_config());
  const auto params = test::random_params(model, 1);
  std::mt19937_64 rng(1);
  const Video split = test::random_split_video({4, 8, 8}, 6, rng);
  Tape<double> tape;
  ParamBinder<double> bind(tape, params, false);
  const auto f = model.forward(bind, split, {1, 0, 1}, nullptr);
  REQUIRE(f.encoder_input.has_value());
  CHECK(f.encoder_input->shape() == Shape{4, 8, 8, 96});
  CHECK(f.encoded->shape() == Shape{32, 16});
  CHECK(f.decoded.shape() == Shape{32, 16});
  REQUIRE(f.logits.size() == 6);
  for (const auto& l : f.logits) CHECK(l.shape() == Shape{32, 16});
}

TEST_CASE("encoder one-hot has zero rows exactly at invisible positions") {
  const Model model(test::causality_config());
  std::mt19937_64 rng(2);
  const Video split = test::random_split_video({4, 8, 8}, 6, rng);
  const SliceIndex idx{1, 0, 1};
  const auto onehot = model.encoder_onehot<double>(split, idx);
  const auto masked = mask_preceding(split, {2, 2, 2}, idx);
  for (std::size_t p = 0; p < split.positions(); ++p) {
    double row = 0.0;
    for (std::size_t j = 0; j < 96; ++j) row += onehot[p * 96 + j];
    CHECK(row == (masked.visible[p] ? 6.0 : 0.0));
    if (masked.visible[p]) {
      for (std::size_t c = 0; c < 6; ++c) CHECK(onehot[p * 96 + c * 16 + split.pixel(p)[c]] == 1.0);
    }
  }
}

TEST_CASE("a zero-initialised head predicts the uniform distribution") {
  ModelConfig c = test::causality_config();
  const Model model(c);
  const auto params = model.init_params(3).cast<double>();
  std::mt19937_64 rng(3);
  const Video split = test::random_split_video(c.video, 6, rng);
  for (const auto& idx : slice_order(c.subscale)) {
    Tape<double> tape;
    ParamBinder<double> bind(tape, params, false);
    const auto loss = model.slice_loss(bind, split, idx, 0, nullptr);
    CHECK(loss.pixels == 32);
    CHECK(loss.nats == doctest::Approx(32.0 * 6.0 * std::log(16.0)).epsilon(1e-12));
  }
}

TEST_CASE("loss mask drops primed frames in global time") {
  const Model model(test::causality_config());
  for (int prime = 0; prime <= 4; ++prime) {
    for (const SliceIndex idx : {SliceIndex{0, 0, 0}, SliceIndex{1, 1, 0}}) {
      const auto mask = model.loss_mask(idx, prime);
      for (std::size_t p = 0; p < mask.size(); ++p) {
        const int t = static_cast<int>(p / 16) * 2 + idx.a;
        CHECK(mask[p] == (t >= prime ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("primed frames are excluded from the loss count") {
  const Model model(test::causality_config());
  const auto params = test::random_params(model, 4);
  std::mt19937_64 rng(4);
  const Video split = test::random_split_video({4, 8, 8}, 6, rng);
  Tape<double> tape;
  ParamBinder<double> bind(tape, params, false);
  const auto all_primed = model.slice_loss(bind, split, {0, 1, 1}, 4, nullptr);
  CHECK(all_primed.pixels == 0);
  CHECK(all_primed.nats == 0.0);
  CHECK(model.slice_loss(bind, split, {0, 1, 1}, 1, nullptr).pixels == 16);
  CHECK(model.slice_loss(bind, split, {1, 1, 1}, 1, nullptr).pixels == 32);
}

TEST_CASE("deterministic cross-entropy at y = 0.5 is ln 2 per pixel") {
  std::vector<double> y(64 * 64, 0.5), z(64 * 64);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : z) v = u(rng);
  CHECK(deterministic_loss(y, z) == doctest::Approx(4096.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("logits are causal on a small model") {
  for (const HeadKind head : {HeadKind::kCategorical, HeadKind::kDeterministic}) {
    const Model model(test::causality_config(head));
    const auto params = test::random_params(model, 6);
    std::mt19937_64 rng(6);
    const Video split = test::random_split_video({4, 8, 8}, model.config().channels.split_channels, rng);
    for (const SliceIndex idx : {SliceIndex{0, 0, 0}, SliceIndex{1, 1, 1}}) {
      const auto r = test::check_slice_causality(model, params, split, idx, 6);
      CAPTURE(r.first_violation);
      CHECK(r.violations == 0);
      CHECK(r.forbidden > 0);
      CHECK(r.allowed_nonzero > 0);
    }
  }
}

TEST_CASE("the first-slice decoder is used only for slice (0,0,0)") {
  const Model model(test::causality_config(HeadKind::kCategorical, true));
  CHECK(model.uses_first_decoder({0, 0, 0}));
  CHECK_FALSE(model.uses_first_decoder({0, 0, 1}));
  const auto params = model.init_params(7);
  bool has_first = false;
  for (const auto& [name, v] : params) has_first = has_first || name.rfind("first/", 0) == 0;
  CHECK(has_first);
  CHECK_FALSE(params.contains("first/enc_proj"));
}

TEST_CASE("initialisation is deterministic in the seed") {
  const Model model(test::causality_config());
  CHECK(model.init_params(9) == model.init_params(9));
  CHECK_FALSE(model.init_params(9) == model.init_params(10));
}

TEST_CASE("float and double forward passes agree") {
  const Model model(test::causality_config());
  const auto pf = model.init_params(11, {0.1, false, true});
  const auto pd = pf.cast<double>();
  std::mt19937_64 rng(11);
  const Video split = test::random_split_video({4, 8, 8}, 6, rng);
  Tape<double> td;
  Tape<float> tf;
  ParamBinder<double> bd(td, pd, false);
  ParamBinder<float> bf(tf, pf, false);
  const double ld = model.slice_loss(bd, split, {1, 1, 0}, 1, nullptr).nats;
  const double lf = model.slice_loss(bf, split, {1, 1, 0}, 1, nullptr).nats;
  CHECK(lf == doctest::Approx(ld).epsilon(1e-5));
}

TEST_CASE("invalid configurations are rejected") {
  ModelConfig c = test::causality_config();
  c.subscale = {3, 2, 2};
  CHECK_THROWS_AS(Model{c}, ConfigError);
  c = test::causality_config();
  c.decoder = test::blocks({{1, 3, 4}}, 2, 8, 16);
  CHECK_THROWS_AS(Model{c}, ConfigError);
  c = test::causality_config();
  c.masked_kernel = 2;
  CHECK_THROWS_AS(Model{c}, ConfigError);
}
