#include <random>

#include "doctest.h"
#include "rgbtvg/oracles.hpp"
#include "rgbtvg/vgnet.hpp"

using namespace rgbtvg;

namespace {

Image pattern(int channels, int salt) {
  Image img(channels, 64, 64);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) img.at(c, y, x) = ((x * 5 + y * 11 + c * 17 + salt) % 53) / 52.0;
  return img;
}

ModelConfig mode_config(ModalityMode mode, bool ama, bool lavs) {
  ModelConfig cfg;
  cfg.mode = mode;
  cfg.use_ama = ama;
  cfg.use_lavs = lavs;
  return cfg;
}

void randomize_adapters(VgNet& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto* p : net.trainable_parameters())
    if (p->name().ends_with(".B"))
      for (std::size_t i = 0; i < p->size(); ++i) p->value()[i] = u(rng);
}

}  // namespace

TEST_CASE("forward shapes for every mode") {
  const Image rgb = pattern(3, 0), tir = pattern(1, 1);
  struct Case {
    ModalityMode mode;
    bool ama, lavs;
    std::size_t seq;
  };
  // 17 visual tokens per stream, 8 text tokens (6 words and two markers), one regression token.
  for (const Case c : {Case{ModalityMode::RGBT, true, true, 43}, Case{ModalityMode::RGBT, true, false, 43},
                       Case{ModalityMode::RGBT, false, false, 43}, Case{ModalityMode::RGB, true, false, 26},
                       Case{ModalityMode::TIR, false, false, 26}}) {
    VgNet net(mode_config(c.mode, c.ama, c.lavs));
    ag::Tape t(false);
    const auto r = net.forward(t, &rgb, &tir, "the red square near the post");
    CAPTURE(modality_mode_name(c.mode));
    CHECK(r.sequence_length == c.seq);
    CHECK(r.box.rows() == 1);
    CHECK(r.box.cols() == 4);
    CHECK(r.reg.cols() == 32);
    CHECK(r.lavs_attention.size() == (c.lavs ? 4u : 0u));
    for (double v : r.box.value().values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("unused streams are never read") {
  const Image rgb = pattern(3, 0), tir = pattern(1, 1);
  VgNet rgb_net(mode_config(ModalityMode::RGB, true, false));
  CHECK_NOTHROW(rgb_net.predict(&rgb, nullptr, "the car"));
  CHECK(rgb_net.predict(&rgb, nullptr, "the car").box == rgb_net.predict(&rgb, &tir, "the car").box);
  CHECK_THROWS_WITH_AS(rgb_net.predict(nullptr, &tir, "the car"), doctest::Contains("needs an RGB image"),
                       std::invalid_argument);
  VgNet tir_net(mode_config(ModalityMode::TIR, true, false));
  CHECK_NOTHROW(tir_net.predict(nullptr, &tir, "the car"));
  CHECK(tir_net.adapters(Modality::rgb) == nullptr);
  REQUIRE(tir_net.adapters(Modality::tir) != nullptr);
  // A thermal-only model adapts with the thermal rank.
  CHECK(tir_net.adapters(Modality::tir)->find(1, Projection::query)->rank == 32);
  VgNet rgbt(mode_config(ModalityMode::RGBT, true, true));
  CHECK_THROWS_WITH_AS(rgbt.predict(&rgb, nullptr, "the car"), doctest::Contains("needs a TIR image"),
                       std::invalid_argument);
}

TEST_CASE("model config validation") {
  auto cfg = mode_config(ModalityMode::RGBT, false, true);
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("use_lavs requires use_ama"), ConfigError);
  cfg = mode_config(ModalityMode::RGB, true, true);
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("use_lavs requires modality mode RGBT"), ConfigError);
  cfg = mode_config(ModalityMode::RGBT, true, true);
  cfg.ama.r_v = 64;
  CHECK_THROWS_WITH_AS(VgNet{cfg}, doctest::Contains("r_v"), ConfigError);
  cfg = {};
  cfg.vl.heads = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.loss = {0.0, 0.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.head_hidden = {0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(modality_mode_from_name("TIR") == ModalityMode::TIR);
  CHECK_THROWS_WITH_AS(modality_mode_from_name("rgbd"), doctest::Contains("unknown modality mode"), ConfigError);
}

TEST_CASE("zero-initialized adapters do not change predictions") {
  const Image rgb = pattern(3, 2), tir = pattern(1, 3);
  VgNet with(mode_config(ModalityMode::RGBT, true, false));
  VgNet without(mode_config(ModalityMode::RGBT, false, false));
  CHECK(with.predict(&rgb, &tir, "the slab").box == without.predict(&rgb, &tir, "the slab").box);
  randomize_adapters(with, 1);
  CHECK_FALSE(with.predict(&rgb, &tir, "the slab").box == without.predict(&rgb, &tir, "the slab").box);
}

TEST_CASE("trainable parameter bookkeeping") {
  VgNet full(mode_config(ModalityMode::RGBT, true, true));
  VgNet plain(mode_config(ModalityMode::RGBT, false, false));
  std::size_t adapter_params = 0;
  for (const auto* p : full.trainable_parameters()) {
    CHECK(p->trainable());
    if (p->name().starts_with("ama.")) adapter_params += p->size();
  }
  CHECK(adapter_params == oracle::adapter_parameters(32, 2, 2, 8, 32, true, true));
  CHECK(full.trainable_parameter_count() > plain.trainable_parameter_count() + adapter_params);
  std::set<std::string> names;
  for (const auto* p : full.trainable_parameters()) CHECK(names.insert(p->name()).second);
}

TEST_CASE("state save and strict load") {
  const Image rgb = pattern(3, 4), tir = pattern(1, 5);
  VgNet a(mode_config(ModalityMode::RGBT, true, true));
  randomize_adapters(a, 2);
  auto cfg = a.config();
  cfg.seed = 99;
  VgNet b(cfg);
  CHECK(a.state_checksum() != b.state_checksum());
  b.load_state(decode_snapshot(encode_snapshot(a.state())));
  CHECK(a.state_checksum() == b.state_checksum());
  CHECK(a.predict(&rgb, &tir, "the pillar").box == b.predict(&rgb, &tir, "the pillar").box);

  WeightMap missing = a.state();
  missing.erase(missing.begin());
  CHECK_THROWS_WITH_AS(b.load_state(missing), doctest::Contains("tensors"), std::invalid_argument);
  WeightMap renamed = a.state();
  auto node = renamed.extract(renamed.begin());
  node.key() = "zzz.unknown";
  renamed.insert(std::move(node));
  CHECK_THROWS_WITH_AS(b.load_state(renamed), doctest::Contains("lacks"), std::invalid_argument);
  WeightMap reshaped = a.state();
  reshaped.begin()->second = Matrix(1, 1);
  CHECK_THROWS_WITH_AS(b.load_state(reshaped), doctest::Contains("has shape"), std::invalid_argument);
  VgNet other(mode_config(ModalityMode::RGB, true, false));
  CHECK_THROWS_AS(other.load_state(a.state()), std::invalid_argument);
}

TEST_CASE("loss values") {
  const LossWeights w;
  const NormBox gt(0.6, 0.5, 0.2, 0.2);
  CHECK(grounding_loss(gt, gt, w) == doctest::Approx(0.0).epsilon(1e-12));
  // Shifted by half a width: L1 0.1, IoU = GIoU = 1/3.
  CHECK(grounding_loss(NormBox(0.5, 0.5, 0.2, 0.2), gt, w) == doctest::Approx(0.5 + 2.0 * (2.0 / 3.0)).epsilon(1e-12));
  // Disjoint boxes: GIoU goes negative.
  const NormBox far(0.1, 0.1, 0.1, 0.1);
  ag::Tape t(false);
  const double g = giou_var(t.constant(Matrix{{far.cx, far.cy, far.w, far.h}}), gt).value()[0];
  const ImageDims dims(1000, 1000);
  CHECK(g == doctest::Approx(giou(to_pixel(far, dims), to_pixel(gt, dims))).epsilon(1e-9));
  CHECK(g < 0);
  CHECK_THROWS_AS(to_norm_box(Matrix(1, 3)), std::invalid_argument);
}

TEST_CASE("loss gradient matches finite differences") {
  ag::Parameter pred("pred", Matrix{{0.46, 0.52, 0.3, 0.25}});
  const NormBox gt(0.5, 0.5, 0.2, 0.3);
  const auto rep = oracle::check_gradients({&pred}, [&](ag::Tape& t) { return grounding_loss(t.param(pred), gt, LossWeights{}); });
  CHECK(rep.worst.rel_error < 1e-6);
}

TEST_CASE("model gradient matches finite differences") {
  ModelConfig cfg = mode_config(ModalityMode::RGBT, true, true);
  cfg.encoder.num_layers = 1;
  cfg.vl.layers = 1;
  VgNet net(cfg);
  randomize_adapters(net, 3);
  const Image rgb = pattern(3, 6), tir = pattern(1, 7);
  const Matrix text = net.encoder().encode_text_features("the blue square");
  const NormBox gt(0.4, 0.6, 0.3, 0.2);
  oracle::GradCheckOptions opt;
  opt.samples_per_param = 3;
  const auto rep = oracle::check_gradients(net.trainable_parameters(), [&](ag::Tape& t) {
    return grounding_loss(net.forward(t, &rgb, &tir, text).box, gt, cfg.loss);
  }, opt);
  INFO("worst " << rep.worst.name << "[" << rep.worst.index << "] " << rep.worst.analytic << " vs " << rep.worst.numeric);
  CHECK(rep.worst.rel_error < 1e-4);
  CHECK(rep.checked > 20);
}
