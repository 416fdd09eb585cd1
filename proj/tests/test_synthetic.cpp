#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rgbtvg/oracles.hpp"
#include "rgbtvg/pipeline.hpp"
#include "rgbtvg/synthetic.hpp"

using namespace rgbtvg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rgbtvg-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("weight validation") {
  SyntheticCorpusSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.size_weights = {0.5, 0.6};
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("sum to"), std::invalid_argument);
  spec = {};
  spec.weather_weights = {1.0, 0.0, 0.0};
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("4 entries"), std::invalid_argument);
  spec = {};
  spec.illumination_weights = {1.5, -0.5, 0.0, 0.0};
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains(">= 0"), std::invalid_argument);
  spec = {};
  spec.num_records = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = {};
  spec.image_size = 16;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("planned scenes satisfy their construction rules") {
  SyntheticCorpusSpec spec;
  spec.seed = 13;
  for (std::size_t i = 0; i < 300; ++i) {
    const SyntheticScene sc = plan_scene(spec, i);
    const auto& r = sc.record;
    CAPTURE(r.id);
    CHECK_NOTHROW(r.validate());
    CHECK(relation_holds(sc.relation, r.box, sc.landmark_box));
    CHECK((sc.color != sc.distractor_color || sc.shape != sc.distractor_shape));
    CHECK(r.expression == "the " + kSyntheticColors[sc.color] + " " + kSyntheticShapes[sc.shape] + " " +
                              kSyntheticRelations[sc.relation] + " the " + kSyntheticLandmarks[sc.landmark]);
    CHECK(r.category == kSyntheticShapes[sc.shape]);
    CHECK(r.size == classify_size(r.box, r.dims));
    CHECK(r.box.x() >= 0);
    CHECK(r.box.x2() <= 64);
    CHECK(r.box.y2() <= 64);
    CHECK(sc.occluder.has_value() == (r.occlusion.raw() > 0));
  }
  CHECK(plan_scene(spec, 5).record.box == plan_scene(spec, 5).record.box);
}

TEST_CASE("relation predicate") {
  const PixelBox lm(20, 20, 10, 10);
  CHECK(relation_holds(0, PixelBox(5, 20, 15, 5), lm));
  CHECK_FALSE(relation_holds(0, PixelBox(5, 20, 16, 5), lm));
  CHECK(relation_holds(1, PixelBox(30, 0, 5, 5), lm));
  CHECK(relation_holds(2, PixelBox(0, 0, 5, 20), lm));
  CHECK(relation_holds(3, PixelBox(0, 30, 5, 5), lm));
  CHECK_FALSE(relation_holds(3, PixelBox(0, 29, 5, 5), lm));
}

TEST_CASE("attribute frequencies follow the weights") {
  SyntheticCorpusSpec spec;
  spec.seed = 99;
  spec.illumination_weights = {0.1, 0.2, 0.3, 0.4};
  std::array<std::size_t, 4> counts{};
  std::size_t ss = 0;
  const std::size_t n = 1000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto sc = plan_scene(spec, i);
    ++counts[static_cast<std::size_t>(sc.record.illumination)];
    ss += sc.record.size == SizeClass::SS;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    CAPTURE(k);
    CHECK(oracle::within_3_sigma(counts[k], n, spec.illumination_weights[k]));
  }
  CHECK(oracle::within_3_sigma(ss, n, spec.size_weights[1]));
}

TEST_CASE("all-small corpus") {
  SyntheticCorpusSpec spec;
  spec.num_records = 40;
  spec.size_weights = {0.0, 1.0};
  for (std::size_t i = 0; i < spec.num_records; ++i) CHECK(plan_scene(spec, i).record.size == SizeClass::SS);
}

TEST_CASE("rendering") {
  SyntheticCorpusSpec spec;
  spec.seed = 3;
  const auto sc = plan_scene(spec, 0);
  const auto [rgb, tir] = render_scene(sc, spec.seed);
  CHECK(rgb.channels() == 3);
  CHECK(tir.channels() == 1);
  CHECK(rgb.height() == 64);
  CHECK(tir.width() == 64);
  for (double v : rgb.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto again = render_scene(sc, spec.seed);
  CHECK(again.first == rgb);
  CHECK(again.second == tir);
  // The target is the hottest region unless an occluder covers its centre.
  if (!sc.occluder) {
    const int cx = static_cast<int>(sc.record.box.x() + sc.record.box.w() / 2);
    const int cy = static_cast<int>(sc.record.box.y() + sc.record.box.h() / 2);
    const int lx = static_cast<int>(sc.landmark_box.x() + sc.landmark_box.w() / 2);
    const int ly = static_cast<int>(sc.landmark_box.y() + sc.landmark_box.h() / 2);
    CHECK(tir.at(0, cy, cx) > tir.at(0, ly, lx));
  }
}

TEST_CASE("corpus generation is byte-reproducible") {
  SyntheticCorpusSpec spec;
  spec.num_records = 12;
  spec.seed = 7;
  const auto a = scratch_dir("syn-a"), b = scratch_dir("syn-b");
  const auto ma = generate_synthetic_corpus(spec, a);
  generate_synthetic_corpus(spec, b);
  CHECK(ma.size() == 12);
  CHECK(ma.base_dir() == a);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(entry.path(), a);
    CAPTURE(rel.string());
    CHECK(slurp(entry.path()) == slurp(b / rel));
  }
  CHECK(files == 12 * 2 + 4);
  const auto loaded = load_manifest(a / "manifest.jsonl");
  CHECK(manifest_to_jsonl(loaded) == manifest_to_jsonl(ma));
  CHECK(loaded.provenance().generator == "gen-synthetic");
  for (const auto& r : loaded.records()) {
    const Image rgb = read_pnm(loaded.resolve(r.rgb_path));
    const Image tir = read_pnm(loaded.resolve(r.tir_path));
    CHECK(rgb.width() == r.dims.width);
    CHECK(tir.height() == r.dims.height);
  }

  spec.seed = 8;
  const auto c = scratch_dir("syn-c");
  generate_synthetic_corpus(spec, c);
  CHECK(slurp(a / "manifest.jsonl") != slurp(c / "manifest.jsonl"));
}

TEST_CASE("raw output rebuilds the same manifest through the pipeline") {
  SyntheticCorpusSpec spec;
  spec.num_records = 60;
  spec.seed = 17;
  const auto dir = scratch_dir("syn-pipeline");
  const auto generated = generate_synthetic_corpus(spec, dir);

  const auto raw = load_raw_corpus(dir);
  REQUIRE(raw.size() == 60);
  auto stub = StubAnnotationClient::from_file(dir / "stub_annotations.json");
  BuildConfig cfg;
  // Small-object boxes are a few pixels wide, below the default side limit.
  cfg.filter.min_side_px = 2;
  cfg.workers = 3;
  const auto built = build_manifest(raw, cfg, stub);
  CHECK(built.stats.dropped == 0);
  CHECK(built.stats.retries == 0);
  REQUIRE(built.manifest.size() == generated.size());
  for (const auto& g : generated.records()) {
    const auto& b = built.manifest.at(g.id);
    CAPTURE(g.id);
    CHECK(b.box == g.box);
    CHECK(b.category == g.category);
    CHECK(b.expression == g.expression);
    CHECK(b.scene == g.scene);
    CHECK(b.weather == g.weather);
    CHECK(b.illumination == g.illumination);
    CHECK(b.occlusion == g.occlusion);
    CHECK(b.size == g.size);
    CHECK(b.source == g.source);
    CHECK(b.split == g.split);
    CHECK(fs::path(b.rgb_path) == (dir / g.rgb_path).lexically_normal());
  }

  BuildConfig strict;
  const auto filtered = build_manifest(raw, strict, stub);
  std::size_t small = 0;
  for (const auto& g : generated.records()) small += g.size == SizeClass::SS;
  CHECK(filtered.stats.rejected.at(FilterRule::visibility) >= small);
}

TEST_CASE("rasterized IoU reference") {
  const PixelBox a(0, 0, 2, 2), b(1, 1, 2, 2);
  CHECK(oracle::iou_rasterized(a, b, 1) == doctest::Approx(1.0 / 7.0));
  CHECK(oracle::iou_rasterized(a, a, 4) == 1.0);
  CHECK(oracle::iou_rasterized(a, PixelBox(2, 0, 2, 2), 8) == 0.0);
  const auto counts = oracle::raster_counts(a, b, 10);
  CHECK(counts.inter == 100);
  CHECK(counts.uni == 700);
}

TEST_CASE("timestamps come from the environment") {
  ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
  CHECK(reproducible_timestamp() == "1970-01-02T00:00:00Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  CHECK(reproducible_timestamp() == "1970-01-01T00:00:00Z");
}
