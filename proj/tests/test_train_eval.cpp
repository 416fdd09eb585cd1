#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "rgbtvg/eval.hpp"
#include "rgbtvg/oracles.hpp"
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

// Small corpora are generated once per process and shared between cases.
const DatasetManifest& corpus() {
  static const DatasetManifest m = [] {
    SyntheticCorpusSpec spec;
    spec.num_records = 30;
    spec.seed = 21;
    return generate_synthetic_corpus(spec, scratch_dir("train-eval-corpus"));
  }();
  return m;
}

RunConfig quick_config(int steps) {
  RunConfig cfg = toy_run_config();
  cfg.train.steps = steps;
  cfg.train.batch_size = 4;
  return cfg;
}

NormBox gt_norm(const GroundingRecord& r) { return to_norm(r.box, r.dims); }

}  // namespace

TEST_CASE("seeded permutation") {
  const auto p = seeded_permutation(50, 3);
  CHECK(p == seeded_permutation(50, 3));
  CHECK(p != seeded_permutation(50, 4));
  std::set<std::size_t> seen(p.begin(), p.end());
  CHECK(seen.size() == 50);
  CHECK(*seen.rbegin() == 49);
  CHECK(seeded_permutation(0, 1).empty());
  CHECK(seeded_permutation(1, 1) == std::vector<std::size_t>{0});
}

TEST_CASE("mirrored expressions") {
  CHECK(mirror_expression("the red square left of the post") == "the red square right of the post");
  CHECK(mirror_expression("Right side, left-most") == "Left side, right-most");
  CHECK(mirror_expression("leftover bright") == "leftover bright");
  CHECK(mirror_expression("") == "");
}

TEST_CASE("augmentation is deterministic and consistent") {
  const auto& m = corpus();
  const auto train_recs = m.split(Split::train);
  const auto samples = load_samples(m, train_recs, toy_run_config().model.encoder, ModalityMode::RGBT);
  REQUIRE_FALSE(samples.empty());
  AugmentConfig cfg;
  cfg.flip_prob = 1.0;
  const auto a = augment_sample(samples[0], cfg, 5, ModalityMode::RGBT);
  const auto b = augment_sample(samples[0], cfg, 5, ModalityMode::RGBT);
  CHECK(a.rgb == b.rgb);
  CHECK(a.tir == b.tir);
  CHECK(a.flipped);
  CHECK(a.target.cx == doctest::Approx(1.0 - samples[0].target.cx));
  CHECK(a.tir == flip_horizontal(*samples[0].tir));
  CHECK(a.expression == mirror_expression(samples[0].record->expression));

  cfg.flip = false;
  cfg.color_jitter = false;
  const auto plain = augment_sample(samples[0], cfg, 5, ModalityMode::RGBT);
  CHECK(plain.rgb == *samples[0].rgb);
  CHECK_FALSE(plain.flipped);
  // Thermal images are never colour-jittered.
  cfg.color_jitter = true;
  cfg.jitter_strength = 0.5;
  const auto jittered = augment_sample(samples[0], cfg, 6, ModalityMode::RGBT);
  CHECK(jittered.tir == *samples[0].tir);
}

TEST_CASE("training is reproducible and leaves the towers untouched") {
  const auto& m = corpus();
  const RunConfig cfg = quick_config(6);
  VgNet a(cfg.model), b(cfg.model);
  const auto ra = train(a, cfg.train, m);
  const auto rb = train(b, cfg.train, m);
  REQUIRE(ra.curve.size() == 6);
  for (std::size_t i = 0; i < ra.curve.size(); ++i) CHECK(ra.curve[i].loss == rb.curve[i].loss);
  CHECK(a.state_checksum() == b.state_checksum());
  CHECK(ra.frozen_before == ra.frozen_after);
  CHECK(ra.frozen_after == FrozenEncoder(cfg.model.encoder).checksum());
  CHECK(loss_curve_csv(ra) == loss_curve_csv(rb));
  CHECK(loss_curve_csv(ra).starts_with("step,epoch,loss\n1,0,"));
  CHECK(ra.best_val.has_value());
}

TEST_CASE("training errors") {
  const auto& m = corpus();
  RunConfig cfg = quick_config(2);

  SUBCASE("empty train split") {
    std::vector<GroundingRecord> recs;
    for (const auto& r : m.records())
      if (r.split != Split::train) recs.push_back(r);
    DatasetManifest no_train(recs);
    no_train.set_base_dir(m.base_dir());
    VgNet net(cfg.model);
    CHECK_THROWS_WITH_AS(train(net, cfg.train, no_train), doctest::Contains("no train records"), TrainingError);
  }
  SUBCASE("non-finite loss aborts with context") {
    VgNet net(cfg.model);
    WeightMap s = net.state();
    for (auto& [name, w] : s)
      if (name.starts_with("head.")) w.fill(std::nan(""));
    net.load_state(s);
    CHECK_THROWS_WITH_AS(train(net, cfg.train, m), doctest::Contains("non-finite loss at step 0"), TrainingError);
  }
  SUBCASE("invalid hyperparameters") {
    cfg.train.learning_rate = -1;
    VgNet net(cfg.model);
    CHECK_THROWS_AS(train(net, cfg.train, m), ConfigError);
  }
}

TEST_CASE("AdamW update") {
  ag::Parameter p("p", Matrix{{1.0, -2.0}});
  AdamW opt({&p}, {0.1, 0.9, 0.999, 1e-8, 0.01});
  p.grad() = Matrix{{0.5, -0.25}};
  opt.step();
  // First step: the bias-corrected ratio is sign(g) up to eps.
  CHECK(p.value()(0, 0) == doctest::Approx(1.0 - 0.1 * (1.0 + 0.01 * 1.0)).epsilon(1e-7));
  CHECK(p.value()(0, 1) == doctest::Approx(-2.0 - 0.1 * (-1.0 + 0.01 * -2.0)).epsilon(1e-7));
  opt.zero_grad();
  CHECK(p.grad() == Matrix(1, 2));
  CHECK(opt.steps() == 1);
}

TEST_CASE("scoring from predictors") {
  const auto& m = corpus();
  SUBCASE("a perfect predictor scores 1 everywhere") {
    const auto rep = score_predictions(m, predict_records(m, gt_norm));
    for (const auto& [name, c] : rep.splits)
      if (c.count > 0) CHECK(*c.accuracy() == 1.0);
  }
  SUBCASE("a constant predictor matches the brute-force rescoring") {
    const auto rows = predict_records(m, [](const GroundingRecord&) { return NormBox(0.5, 0.5, 0.6, 0.6); });
    const auto rep = score_predictions(m, rows);
    const auto oracle_scores = oracle::score_dump(m.records(), prediction_dump(rows));
    for (const auto& [name, c] : rep.splits) {
      CAPTURE(name);
      CHECK(c.count == oracle_scores.splits.at(name).count);
      CHECK(c.hits == oracle_scores.splits.at(name).hits);
    }
    for (const auto& axis : rep.axes)
      for (const auto& [value, c] : axis.cells) {
        const auto& t = oracle_scores.cells.at({std::string(axis_name(axis.axis)), value});
        CHECK(c.count == t.count);
        CHECK(c.hits == t.hits);
      }
  }
  SUBCASE("cells recompose the test accuracy") {
    std::size_t i = 0;
    const auto rows = predict_records(m, [&](const GroundingRecord& r) {
      return ++i % 3 ? gt_norm(r) : NormBox(0.1, 0.1, 0.1, 0.1);
    });
    const auto rep = score_predictions(m, rows);
    const Cell& test = rep.split("test");
    for (const auto& axis : rep.axes) {
      std::size_t count = 0, hits = 0;
      for (const auto& [v, c] : axis.cells) {
        count += c.count;
        hits += c.hits;
      }
      CHECK(count == test.count);
      CHECK(std::abs(static_cast<double>(hits) / static_cast<double>(count) - *test.accuracy()) < 1e-12);
    }
  }
  SUBCASE("missing or duplicate predictions are errors") {
    auto rows = predict_records(m, gt_norm);
    auto dup = rows;
    dup.push_back(rows.front());
    CHECK_THROWS_WITH_AS(score_predictions(m, dup), doctest::Contains("duplicate"), std::invalid_argument);
    rows.pop_back();
    CHECK_THROWS_WITH_AS(score_predictions(m, rows), doctest::Contains("no prediction"), std::invalid_argument);
  }
  SUBCASE("predictions crossing the border are clipped to the frame") {
    const auto rows = predict_records(m, [](const GroundingRecord&) { return NormBox(1.0, 0.5, 0.4, 0.2); });
    for (const auto& r : rows) {
      REQUIRE(r.pred.has_value());
      CHECK(r.pred->x2() == doctest::Approx(64.0));
      CHECK(r.pred->w() == doctest::Approx(0.2 * 64.0));
    }
    CHECK(parse_prediction_dump(prediction_dump(rows)).size() == rows.size());
  }
}

TEST_CASE("empty subsets are undefined, not zero") {
  SyntheticCorpusSpec spec;
  spec.num_records = 20;
  spec.seed = 4;
  spec.illumination_weights = {0, 0, 1, 0};
  const auto m = generate_synthetic_corpus(spec, scratch_dir("normal-light"));
  const auto rep = score_predictions(m, predict_records(m, gt_norm));
  CHECK(rep.split("testB").count == 0);
  CHECK_FALSE(rep.split("testB").accuracy().has_value());
  CHECK_FALSE(rep.cell(Axis::illumination, "VL").accuracy().has_value());
  const auto j = nlohmann::json::parse(emit_report(rep, ReportFormat::json));
  bool found_null = false;
  for (const auto& s : j.at("splits").items())
    if (s.value().at("accuracy").is_null()) found_null = true;
  CHECK(found_null);
  CHECK(emit_report(rep, ReportFormat::markdown).find("| / |") != std::string::npos);
}

TEST_CASE("report emission") {
  const auto& m = corpus();
  std::size_t i = 0;
  const auto rows = predict_records(m, [&](const GroundingRecord& r) { return ++i % 2 ? gt_norm(r) : NormBox(0.5, 0.5, 0.3, 0.3); });
  const auto rep = score_predictions(m, rows, {{"mode", "RGBT"}, {"seed", "0"}});
  for (auto fmt : {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown})
    CHECK(emit_report(rep, fmt) == emit_report(score_predictions(m, rows, {{"mode", "RGBT"}, {"seed", "0"}}), fmt));

  const std::string csv = emit_report(rep, ReportFormat::csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);
  CHECK(csv.starts_with("section,key,count,hits,accuracy\nsplit,val,"));

  const std::string json = emit_report(rep, ReportFormat::json);
  const EvalReport back = report_from_json(json);
  CHECK(back == rep);
  CHECK(emit_report(back, ReportFormat::json) == json);
  CHECK(report_format_from_name("markdown") == ReportFormat::markdown);
  CHECK_THROWS_AS(report_format_from_name("xml"), std::invalid_argument);

  const auto parsed = parse_prediction_dump(prediction_dump(rows));
  REQUIRE(parsed.size() == rows.size());
  CHECK(score_predictions(m, parsed) == score_predictions(m, rows));
}

TEST_CASE("checkpoints") {
  const auto& m = corpus();
  RunConfig cfg = quick_config(3);
  VgNet net(cfg.model);
  const auto tr = train(net, cfg.train, m);
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(dir, cfg, net, tr);
  for (const char* f : {"model.bin", "run.toml", "meta.json", "loss_curve.csv"}) CHECK(fs::exists(dir / f));
  const Checkpoint ck = load_checkpoint(dir);
  CHECK(ck.model->state_checksum() == net.state_checksum());
  CHECK(ck.meta.steps == 3);
  CHECK(evaluate(*ck.model, m).report == evaluate(net, m).report);
  CHECK(evaluate(net, m, 3).report == evaluate(net, m, 1).report);

  SUBCASE("config drift is detected") {
    RunConfig other = cfg;
    other.model.encoder.seed = 77;
    std::ofstream(dir / "run.toml") << run_config_to_toml(other);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("checkpoint/config mismatch"), std::runtime_error);
  }
  SUBCASE("architecture drift is detected") {
    RunConfig other = cfg;
    other.model.ama.r_t = 16;
    std::ofstream(dir / "run.toml") << run_config_to_toml(other);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("checkpoint/config mismatch"), std::runtime_error);
  }
}

TEST_CASE("ablation rows") {
  const auto rows = ablation_rows({{ModalityMode::RGBT, ModalityMode::RGB}});
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].label == "RGBT-baseline");
  CHECK(rows[1].label == "RGBT+AMA");
  CHECK(rows[2].label == "RGBT+AMA+LAVS");
  CHECK(rows[2].use_lavs);
  CHECK(rows[3].label == "RGB-baseline");
  CHECK(rows[4].label == "RGB+AMA");
  for (const auto& r : rows) {
    ModelConfig mc;
    mc.mode = r.mode;
    mc.use_ama = r.use_ama;
    mc.use_lavs = r.use_lavs;
    CHECK_NOTHROW(mc.validate());
  }
}

TEST_CASE("ablation run and table round trip") {
  const auto& m = corpus();
  RunConfig cfg = quick_config(2);
  const auto table = run_ablation({{ModalityMode::TIR}}, cfg, m);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].spec.label == "TIR-baseline");
  const std::string json = emit_ablation(table, ReportFormat::json);
  CHECK(emit_ablation(ablation_from_json(json), ReportFormat::json) == json);
  CHECK(emit_ablation(table, ReportFormat::markdown).find("| TIR | ✓ |") != std::string::npos);
}
