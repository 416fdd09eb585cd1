#include "rgbtvg/checks.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "rgbtvg/config.hpp"
#include "rgbtvg/eval.hpp"
#include "rgbtvg/lavs.hpp"
#include "rgbtvg/oracles.hpp"
#include "rgbtvg/prompts.hpp"
#include "rgbtvg/synthetic.hpp"
#include "rgbtvg/train.hpp"
#include "rgbtvg/vgnet.hpp"

#ifndef RGBTVG_GOLDEN_DIR
#define RGBTVG_GOLDEN_DIR "tests/golden/prompts"
#endif

namespace rgbtvg {

namespace {

using Clock = std::chrono::steady_clock;

CheckResult named(std::string id, std::string title) {
  CheckResult r;
  r.id = std::move(id);
  r.title = std::move(title);
  return r;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Image random_image(int channels, int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Image img(channels, size, size);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

std::string random_expression(std::mt19937_64& rng) {
  auto pick = [&](const auto& arr) { return arr[rng() % arr.size()]; };
  return "the " + pick(kSyntheticColors) + " " + pick(kSyntheticShapes) + " " + pick(kSyntheticRelations) + " the " +
         pick(kSyntheticLandmarks);
}

double box_rel_diff(const NormBox& a, const NormBox& b) {
  const double av[4] = {a.cx, a.cy, a.w, a.h}, bv[4] = {b.cx, b.cy, b.w, b.h};
  double worst = 0;
  for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(av[i] - bv[i]) / std::max(std::abs(bv[i]), 1e-12));
  return worst;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::filesystem::path fresh_dir(const CheckOptions& opt, const std::string& name) {
  const auto dir = opt.work_dir / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// 16 records, all in the train split: the overfit and freezing corpus.
DatasetManifest tiny_train_corpus(const CheckOptions& opt, const std::string& name) {
  SyntheticCorpusSpec spec;
  spec.num_records = 16;
  spec.split_weights = {1.0, 0.0, 0.0};
  return generate_synthetic_corpus(spec, fresh_dir(opt, name));
}

struct Detail {
  std::ostringstream os;
  template <class T>
  Detail& operator<<(const T& v) {
    os << v;
    return *this;
  }
};

// ---- A1 -------------------------------------------------------------------------

CheckResult check_identity(const CheckOptions& opt) {
  CheckResult r = named("A1", "identity at init");
  const auto t0 = Clock::now();
  ModelConfig base = toy_run_config().model;
  base.use_lavs = false;
  ModelConfig with = base, without = base;
  with.use_ama = true;
  without.use_ama = false;
  const VgNet adapted(with), plain(without);

  const int inputs = opt.fast ? 10 : 50;
  const FrozenEncoder& enc = adapted.encoder();
  std::mt19937_64 rng(20240611);
  double worst_box = 0, worst_feat = 0;
  for (int i = 0; i < inputs; ++i) {
    const Image rgb = random_image(3, base.encoder.image_size, rng);
    const Image tir = random_image(1, base.encoder.image_size, rng);
    const std::string expr = random_expression(rng);
    worst_box = std::max(worst_box, box_rel_diff(adapted.predict(&rgb, &tir, expr).box, plain.predict(&rgb, &tir, expr).box));
    for (Modality m : {Modality::rgb, Modality::tir}) {
      const Image img = m == Modality::rgb ? rgb : to_three_channels(tir);
      ag::Tape t(false);
      ag::Var x = enc.embed_image(t, img), y = x;
      for (int l = 1; l <= base.encoder.num_layers; ++l) {
        x = enc.vision_layer(t, l, x, adapted.adapters(m)->layer(l));
        y = enc.vision_layer(t, l, y, nullptr);
      }
      worst_feat = std::max(worst_feat, max_rel_diff(x.value(), y.value(), 1e-12));
    }
  }
  r.seconds = seconds_since(t0);
  r.passed = worst_box < 1e-6 && worst_feat < 1e-6 && r.seconds < 30;
  r.detail = (Detail() << inputs << " inputs, max rel err box " << worst_box << ", features " << worst_feat).os.str();
  return r;
}

// ---- A2 -------------------------------------------------------------------------

CheckResult check_gradients(const CheckOptions& opt) {
  CheckResult r = named("A2", "gradient correctness");
  const auto t0 = Clock::now();
  ModelConfig cfg = toy_run_config().model;
  VgNet net(cfg);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  // With B = 0 every gradient reaching A vanishes; move off that point.
  for (auto* p : net.trainable_parameters())
    if (p->name().ends_with(".B"))
      for (std::size_t i = 0; i < p->size(); ++i) p->value()[i] = u(rng);
  const Image rgb = random_image(3, cfg.encoder.image_size, rng);
  const Image tir = random_image(1, cfg.encoder.image_size, rng);
  const Matrix text = net.encoder().encode_text_features("the blue pillar right of the wall");
  const NormBox gt(0.42, 0.57, 0.3, 0.22);
  auto loss = [&](ag::Tape& t) { return grounding_loss(net.forward(t, &rgb, &tir, text).box, gt, cfg.loss); };

  oracle::GradCheckOptions gopt;
  gopt.samples_per_param = opt.fast ? 6 : 24;
  const auto rep = oracle::check_gradients(net.trainable_parameters(), loss, gopt);

  const std::vector<std::string> groups = {"ama.rgb.", "ama.tir.", "lavs.",  "synergy.", "proj.s.",
                                           "proj.v.",  "proj.t.",  "vl.",    "reg_token", "head."};
  std::string missing;
  for (const auto& g : groups) {
    bool seen = false;
    for (const auto& [name, worst] : rep.worst_by_param) seen |= name.rfind(g, 0) == 0;
    if (!seen) missing += " " + g;
  }
  r.seconds = seconds_since(t0);
  r.passed = missing.empty() && rep.worst.rel_error < 1e-4 && r.seconds < 300;
  Detail d;
  d << rep.checked << " entries over " << rep.worst_by_param.size() << " tensors, worst rel err " << rep.worst.rel_error
    << " at " << rep.worst.name << "[" << rep.worst.index << "]";
  if (!missing.empty()) d << ", missing groups:" << missing;
  r.detail = d.os.str();
  return r;
}

// ---- A3 -------------------------------------------------------------------------

CheckResult check_freezing(const CheckOptions& opt) {
  CheckResult r = named("A3", "frozen towers untouched");
  const auto t0 = Clock::now();
  const DatasetManifest m = tiny_train_corpus(opt, "a3");
  RunConfig rc = toy_run_config();
  rc.train.steps = 100;
  VgNet net(rc.model);
  const std::uint64_t reference = FrozenEncoder(rc.model.encoder).checksum();
  const std::uint64_t state_before = net.state_checksum();
  const TrainResult res = train(net, rc.train, m);
  const std::uint64_t after = net.frozen_checksum();
  r.seconds = seconds_since(t0);
  const bool moved = net.state_checksum() != state_before;
  r.passed = res.steps == 100 && res.frozen_before == reference && res.frozen_after == reference && after == reference &&
             moved && r.seconds < 60;
  r.detail = (Detail() << res.steps << " steps, frozen checksum " << hex64(reference) << " -> " << hex64(after)
                       << (moved ? ", trainable state changed" : ", trainable state did NOT change"))
                 .os.str();
  return r;
}

// ---- A4 -------------------------------------------------------------------------

CheckResult check_shapes(const CheckOptions& opt) {
  CheckResult r = named("A4", "shape and normalization");
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  std::size_t cases = 0;
  double worst_row = 0;
  std::string bad;
  for (std::size_t T : {1, 4, 16})
    for (std::size_t N : {1, 17, 50})
      for (std::size_t d : {8, 32, 64}) {
        const Matrix f = Matrix::randn(N, d, 1.0, rng), text = Matrix::randn(T, d, 1.0, rng);
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        const Matrix wq = Matrix::randn(d, d, s, rng), wk = Matrix::randn(d, d, s, rng), wv = Matrix::randn(d, d, s, rng);
        Matrix attn;
        const Matrix out = text_queried_enhance(f, text, wq, wk, wv, &attn);
        ++cases;
        if (out.rows() != N || out.cols() != d || attn.rows() != T || attn.cols() != N)
          bad += (Detail() << " (T=" << T << ",N=" << N << ",d=" << d << ")").os.str();
        for (std::size_t i = 0; i < attn.rows(); ++i) {
          double sum = 0;
          for (std::size_t j = 0; j < attn.cols(); ++j) sum += attn(i, j);
          worst_row = std::max(worst_row, std::abs(sum - 1.0));
        }
      }

  const VgNet net(toy_run_config().model);
  const int inputs = opt.fast ? 5 : 20;
  std::size_t outside = 0;
  for (int i = 0; i < inputs; ++i) {
    const Image rgb = random_image(3, 64, rng), tir = random_image(1, 64, rng);
    const Prediction p = net.predict(&rgb, &tir, random_expression(rng), true);
    for (double v : {p.box.cx, p.box.cy, p.box.w, p.box.h}) outside += !(v > 0.0 && v < 1.0);
    for (const Matrix& a : p.attention)
      for (std::size_t row = 0; row < a.rows(); ++row) {
        double sum = 0;
        for (std::size_t j = 0; j < a.cols(); ++j) sum += a(row, j);
        worst_row = std::max(worst_row, std::abs(sum - 1.0));
      }
  }
  r.seconds = seconds_since(t0);
  r.passed = bad.empty() && worst_row < 1e-6 && outside == 0;
  r.detail = (Detail() << cases << " (T,N,d) cases" << (bad.empty() ? "" : ", bad shapes:" + bad)
                       << ", max |row sum - 1| " << worst_row << ", " << outside << " box components outside (0,1) over "
                       << inputs << " predictions")
                 .os.str();
  return r;
}

// ---- A5 -------------------------------------------------------------------------

PixelBox random_int_box(std::mt19937_64& rng, int frame) {
  const int x = static_cast<int>(rng() % (frame - 1)), y = static_cast<int>(rng() % (frame - 1));
  const int w = 1 + static_cast<int>(rng() % (frame - x)), h = 1 + static_cast<int>(rng() % (frame - y));
  return PixelBox(x, y, w, h);
}

bool scores_match(const EvalReport& rep, const oracle::DumpScores& o, std::string& why) {
  for (const auto& [name, cell] : rep.splits) {
    const auto& t = o.splits.at(name);
    if (t.count != cell.count || t.hits != cell.hits) {
      why = "split " + name;
      return false;
    }
  }
  for (const auto& ax : rep.axes)
    for (const auto& [value, cell] : ax.cells) {
      const auto& t = o.cells.at({std::string(axis_name(ax.axis)), value});
      if (t.count != cell.count || t.hits != cell.hits) {
        why = "cell " + std::string(axis_name(ax.axis)) + "/" + value;
        return false;
      }
    }
  return true;
}

CheckResult check_oracles(const CheckOptions& opt) {
  CheckResult r = named("A5", "oracle equivalence");
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);
  std::size_t iou_fail = 0;
  double worst_slack = 0;  // |diff| / tolerance
  for (int i = 0; i < 1000; ++i) {
    const PixelBox a = random_int_box(rng, 64), b = random_int_box(rng, 64);
    const auto c = oracle::raster_counts(a, b, 1);
    const double diff = std::abs(iou(a, b) - static_cast<double>(c.inter) / static_cast<double>(c.uni));
    const double tol = 2.0 / static_cast<double>(c.uni);
    worst_slack = std::max(worst_slack, diff / tol);
    iou_fail += diff > tol;
  }
  // Fractional boxes on a 0.1 px lattice, rasterized at 10 cells per pixel.
  for (int i = 0; i < 1000; ++i) {
    auto frac = [&] {
      const PixelBox q = random_int_box(rng, 640);
      return PixelBox(q.x() / 10.0, q.y() / 10.0, q.w() / 10.0, q.h() / 10.0);
    };
    const PixelBox a = frac(), b = frac();
    const auto c = oracle::raster_counts(a, b, 10);
    const double diff = std::abs(iou(a, b) - static_cast<double>(c.inter) / static_cast<double>(c.uni));
    const double tol = 2.0 / static_cast<double>(c.uni);
    worst_slack = std::max(worst_slack, diff / tol);
    iou_fail += diff > tol;
  }
  const double seventh = oracle::iou_rasterized(PixelBox(0, 0, 2, 2), PixelBox(1, 1, 2, 2), 100);
  const bool seventh_ok = std::abs(seventh - 1.0 / 7.0) < 1e-3;

  SyntheticCorpusSpec spec;
  spec.num_records = opt.fast ? 40 : 120;
  spec.seed = 55;
  const DatasetManifest m = generate_synthetic_corpus(spec, fresh_dir(opt, "a5"));
  std::vector<std::pair<std::string, std::vector<PredictionRow>>> runs;
  runs.emplace_back("constant-center", predict_records(m, [](const GroundingRecord&) { return NormBox(0.5, 0.5, 0.5, 0.5); }));
  std::mt19937_64 jrng(6);
  runs.emplace_back("jittered-gt", predict_records(m, [&](const GroundingRecord& rec) {
    const NormBox g = to_norm(rec.box, rec.dims);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    const double cx = std::clamp(g.cx + u(jrng) * g.w, 0.0, 1.0), cy = std::clamp(g.cy + u(jrng) * g.h, 0.0, 1.0);
    return NormBox(cx, cy, g.w, g.h);
  }));
  const VgNet net(toy_run_config().model);
  runs.emplace_back("untrained-model", predict_records(net, m, 2));

  std::string acc_fail;
  std::size_t rows = 0;
  for (const auto& [name, preds] : runs) {
    const EvalReport rep = score_predictions(m, preds);
    const std::string dump = prediction_dump(preds);
    const auto o = oracle::score_dump(m.records(), dump);
    std::string why;
    if (!scores_match(rep, o, why)) acc_fail += " " + name + ":" + why;
    rows += preds.size();
  }
  r.seconds = seconds_since(t0);
  r.passed = iou_fail == 0 && seventh_ok && acc_fail.empty() && r.seconds < 60;
  r.detail = (Detail() << "2000 box pairs, " << iou_fail << " outside 2/union (worst " << worst_slack
                       << " of tolerance), scale-100 1/7 case " << seventh << "; " << runs.size()
                       << " predictors over " << rows << " dump rows" << (acc_fail.empty() ? ", all cells exact" : ", mismatch:" + acc_fail))
                 .os.str();
  return r;
}

// ---- A6 -------------------------------------------------------------------------

CheckResult check_overfit(const CheckOptions& opt) {
  CheckResult r = named("A6", "overfit sanity");
  const auto t0 = Clock::now();
  const DatasetManifest m = tiny_train_corpus(opt, "a6");
  std::vector<const GroundingRecord*> recs;
  for (const auto& rec : m.records()) recs.push_back(&rec);
  Detail d;
  bool ok = true;
  for (ModalityMode mode : {ModalityMode::RGBT, ModalityMode::RGB, ModalityMode::TIR}) {
    RunConfig rc = toy_run_config();
    rc.model.mode = mode;
    rc.model.use_lavs = mode == ModalityMode::RGBT;
    rc.train.steps = 500;
    rc.train.augment.flip = false;
    rc.train.augment.color_jitter = false;
    VgNet net(rc.model);
    train(net, rc.train, m);
    const auto samples = load_samples(m, recs, rc.model.encoder, mode);
    TextFeatureCache cache(net.encoder());
    const auto hits = static_cast<int>(std::lround(sample_accuracy(net, samples, cache) * 16));
    ok &= hits >= 15;
    d << modality_mode_name(mode) << (mode == ModalityMode::RGBT ? "+AMA+LAVS" : "+AMA") << " " << hits << "/16  ";
  }
  r.seconds = seconds_since(t0);
  r.passed = ok && r.seconds < 600;
  d << "(500 steps each)";
  r.detail = d.os.str();
  return r;
}

// ---- A7 -------------------------------------------------------------------------

template <class F>
std::string rejection(F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

CheckResult check_asymmetry(const CheckOptions&) {
  CheckResult r = named("A7", "asymmetry audit");
  const auto t0 = Clock::now();
  Detail d;
  bool ok = true;
  ModelConfig plain_cfg = toy_run_config().model;
  plain_cfg.use_ama = false;
  plain_cfg.use_lavs = false;
  const VgNet plain(plain_cfg);
  for (auto [rv, rt] : std::vector<std::pair<int, int>>{{4, 4}, {4, 8}, {8, 32}}) {
    ModelConfig cfg = plain_cfg;
    cfg.use_ama = true;
    cfg.ama.r_v = rv;
    cfg.ama.r_t = rt;
    const VgNet net(cfg);
    const std::size_t expected = oracle::adapter_parameters(static_cast<std::size_t>(cfg.encoder.dim),
                                                            static_cast<std::size_t>(cfg.encoder.num_layers),
                                                            cfg.ama.targets.size(), rv, rt, true, true);
    const std::size_t counted = net.adapters(Modality::rgb)->parameter_count() + net.adapters(Modality::tir)->parameter_count();
    const std::size_t delta = net.trainable_parameter_count() - plain.trainable_parameter_count();
    ok &= counted == expected && delta == expected;
    d << "(" << rv << "," << rt << "): " << counted << "/" << delta << " vs " << expected << "  ";
  }
  auto rule = [&](const std::string& msg, const std::string& needle) {
    const bool hit = msg.find(needle) != std::string::npos;
    ok &= hit;
    return hit;
  };
  const bool rank_rule = rule(rejection([&] {
                                ModelConfig c = toy_run_config().model;
                                c.ama.r_v = 16;
                                c.ama.r_t = 8;
                                c.validate();
                              }),
                              "r_v");
  const bool lavs_ama = rule(rejection([&] {
                               ModelConfig c = toy_run_config().model;
                               c.use_ama = false;
                               c.validate();
                             }),
                             "use_lavs requires use_ama");
  const bool lavs_mode = rule(rejection([&] {
                                ModelConfig c = toy_run_config().model;
                                c.mode = ModalityMode::RGB;
                                c.validate();
                              }),
                              "use_lavs requires modality mode RGBT");
  const auto rows = ablation_rows(AblationSpec{{ModalityMode::RGBT}});
  const bool three = rows.size() == 3 && !rows[0].use_ama && !rows[0].use_lavs && rows[1].use_ama && !rows[1].use_lavs &&
                     rows[2].use_ama && rows[2].use_lavs;
  ok &= three;
  r.seconds = seconds_since(t0);
  r.passed = ok;
  d << "rejections: r_v>r_t " << (rank_rule ? "yes" : "NO") << ", LAVS without AMA " << (lavs_ama ? "yes" : "NO")
    << ", LAVS outside RGBT " << (lavs_mode ? "yes" : "NO") << "; RGBT ablation rows " << rows.size();
  r.detail = d.os.str();
  return r;
}

// ---- A8 -------------------------------------------------------------------------

struct Table3Cell {
  Illumination light;
  Weather weather;
  std::size_t count;
  double printed;
};

// Counts and printed percentages for the lighting x weather statistics table.
const std::vector<Table3Cell>& table3() {
  using I = Illumination;
  using W = Weather;
  static const std::vector<Table3Cell> cells = {
      {I::VL, W::FY, 71, 0.33},    {I::VL, W::RY, 29, 0.13},    {I::VL, W::SY, 0, 0.00},     {I::VL, W::CY, 101, 0.47},
      {I::WL, W::FY, 2754, 12.79}, {I::WL, W::RY, 1298, 6.03},  {I::WL, W::SY, 14, 0.07},    {I::WL, W::CY, 4704, 21.84},
      {I::NL, W::FY, 521, 2.42},   {I::NL, W::RY, 150, 0.70},   {I::NL, W::SY, 2191, 10.19}, {I::NL, W::CY, 6157, 28.59},
      {I::SL, W::FY, 4, 0.02},     {I::SL, W::RY, 0, 0.00},     {I::SL, W::SY, 3152, 14.64}, {I::SL, W::CY, 389, 1.81}};
  return cells;
}

CheckResult check_pipeline(const CheckOptions& opt) {
  CheckResult r = named("A8", "pipeline fidelity");
  const auto t0 = Clock::now();
  Detail d;
  bool ok = true;

  const bool size_ok = classify_size(PixelBox(0, 0, 10, 10), ImageDims(100, 100)) == SizeClass::NS &&
                       classify_size(PixelBox(0, 0, 10, 9.99), ImageDims(100, 100)) == SizeClass::SS &&
                       classify_size(PixelBox(5, 5, 10, 10), ImageDims(200, 50)) == SizeClass::NS &&
                       classify_size(PixelBox(5, 5, 10, 9.5), ImageDims(200, 50)) == SizeClass::SS;
  ok &= size_ok;
  d << "size boundary " << (size_ok ? "exact" : "WRONG");

  const auto golden = opt.golden_dir.empty() ? default_golden_dir() : opt.golden_dir;
  std::size_t golden_ok = 0;
  for (PromptKind k : kAllPromptKinds) {
    const auto path = golden / (std::string(prompt_kind_name(k)) + ".txt");
    if (std::filesystem::exists(path) && read_text(path) == prompt_template(k)) ++golden_ok;
  }
  ok &= golden_ok == 4;
  d << "; templates " << golden_ok << "/4 byte-equal";

  struct Case {
    PromptKind kind;
    const char* text;
    bool accept;
  };
  const std::vector<Case> cases = {
      {PromptKind::scene_weather, "3 2", true},   {PromptKind::scene_weather, " 12 0\n", true},
      {PromptKind::scene_weather, "13 0", false}, {PromptKind::scene_weather, "3", false},
      {PromptKind::scene_weather, "3 2 1", false}, {PromptKind::scene_weather, "a b", false},
      {PromptKind::lighting, "0", true},          {PromptKind::lighting, "3\n", true},
      {PromptKind::lighting, "4", false},         {PromptKind::lighting, "-1", false},
      {PromptKind::lighting, "1.5", false},       {PromptKind::occlusion, "2", true},
      {PromptKind::occlusion, "3", false},        {PromptKind::occlusion, "", false},
      {PromptKind::object_expression, "the red car on the left", true},
      {PromptKind::object_expression, "", false}, {PromptKind::object_expression, "two\nlines", false}};
  std::size_t parse_ok = 0;
  for (const auto& c : cases) {
    bool accepted = true;
    try {
      parse_response(c.kind, c.text);
    } catch (const ParseError&) {
      accepted = false;
    }
    parse_ok += accepted == c.accept;
  }
  const bool decoded = std::get<SceneWeather>(parse_response(PromptKind::scene_weather, "3 2")) ==
                           SceneWeather{SceneType::HW, Weather::SY} &&
                       std::get<Illumination>(parse_response(PromptKind::lighting, "0")) == Illumination::VL &&
                       std::get<OcclusionLevel>(parse_response(PromptKind::occlusion, "2")).binary() == OcclusionBinary::HO;
  ok &= parse_ok == cases.size() && decoded;
  d << "; parse table " << parse_ok << "/" << cases.size() << (decoded ? "" : " (decoded values WRONG)");

  // Rebuild the corpus behind the statistics table and cross-tabulate it.
  std::vector<GroundingRecord> records;
  std::size_t total = 0;
  for (const auto& c : table3()) total += c.count;
  records.reserve(total);
  for (const auto& c : table3())
    for (std::size_t i = 0; i < c.count; ++i) {
      GroundingRecord g;
      g.id = "t3_" + std::to_string(records.size());
      g.rgb_path = g.tir_path = "unused";
      g.dims = ImageDims(640, 512);
      g.category = "car";
      g.box = PixelBox(10, 10, 100, 80);
      g.expression = "the car";
      g.illumination = c.light;
      g.weather = c.weather;
      g.size = classify_size(g.box, g.dims);
      records.push_back(std::move(g));
    }
  const DatasetManifest tm(std::move(records));
  const CrossTab ct = cross_tab(tm, Axis::illumination, Axis::weather);
  std::size_t matches = 0;
  std::string off;
  bool library_agrees = true;
  for (const auto& c : table3()) {
    const double mine = ct.percent(static_cast<std::size_t>(c.light), static_cast<std::size_t>(c.weather));
    library_agrees &= mine == oracle::percent_2dp(c.count, total);
    if (std::abs(mine - c.printed) < 0.005) {
      ++matches;
    } else {
      off += (Detail() << " " << code(c.light) << "/" << code(c.weather) << " " << c.count << "/" << total << "="
                       << mine << " vs printed " << c.printed)
                 .os.str();
    }
  }
  // One printed cell (2,191 of 21,535 = 10.174%) reads 10.19; all others must match.
  ok &= library_agrees && total == 21535 && matches >= table3().size() - 1;
  d << "; table percentages " << matches << "/" << table3().size() << " match over " << total << " pairs";
  if (!off.empty()) d << " (misprinted:" << off << ")";
  r.seconds = seconds_since(t0);
  r.passed = ok;
  r.detail = d.os.str();
  return r;
}

// ---- A9 -------------------------------------------------------------------------

CheckResult check_splits(const CheckOptions& opt) {
  CheckResult r = named("A9", "split predicates");
  const auto t0 = Clock::now();
  std::mt19937_64 rng(9);
  const std::size_t n = opt.fast ? 300 : 2000;
  std::vector<GroundingRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    GroundingRecord g;
    g.id = "a9_" + std::to_string(i);
    g.rgb_path = g.tir_path = "unused";
    g.dims = ImageDims(640, 512);
    g.category = "car";
    const double side = (rng() % 2) ? 20.0 + static_cast<double>(rng() % 40) : 100.0 + static_cast<double>(rng() % 200);
    g.box = PixelBox(static_cast<double>(rng() % 300), static_cast<double>(rng() % 200), side, side * 0.8);
    g.expression = "the car";
    g.scene = scene_from_int(static_cast<int>(rng() % kSceneCount));
    g.weather = weather_from_int(static_cast<int>(rng() % kWeatherCount));
    g.illumination = illumination_from_int(static_cast<int>(rng() % kIlluminationCount));
    g.occlusion = OcclusionLevel(static_cast<int>(rng() % 3));
    g.size = classify_size(g.box, g.dims);
    g.split = static_cast<Split>(rng() % 3);
    records.push_back(std::move(g));
  }
  const DatasetManifest m(records);
  const auto lib = assign_eval_subsets(m);
  const auto brute = oracle::eval_subsets(records);
  bool ok = true;
  for (const char* s : {"test", "testA", "testB", "testC"}) ok &= lib.at(s) == brute.at(s);
  auto intersect = [](const IdSet& a, const IdSet& b) {
    std::size_t k = 0;
    for (const auto& id : a) k += b.contains(id);
    return k;
  };
  const std::size_t ab = intersect(lib.at("testA"), lib.at("testB"));
  const std::size_t ac = intersect(lib.at("testA"), lib.at("testC"));
  ok &= ab == 0 && ac == 0;
  bool groups_ok = true;
  for (Axis a : kAllAxes) {
    const auto g = group_by_attribute(m, a);
    const auto o = oracle::group_by(records, a);
    groups_ok &= std::map<std::string, IdSet>(g.begin(), g.end()) == o;
  }
  ok &= groups_ok;

  // A single small weak-light test record lands in both testB and testC.
  GroundingRecord both = records.front();
  both.id = "overlap";
  both.box = PixelBox(0, 0, 20, 16);
  both.size = classify_size(both.box, both.dims);
  both.illumination = Illumination::WL;
  both.split = Split::test;
  const auto ov = assign_eval_subsets(DatasetManifest({both}));
  const bool overlap = ov.at("testB").contains("overlap") && ov.at("testC").contains("overlap") &&
                       !ov.at("testA").contains("overlap");
  ok &= overlap;
  r.seconds = seconds_since(t0);
  r.passed = ok;
  r.detail = (Detail() << n << " records: test " << lib.at("test").size() << ", A " << lib.at("testA").size() << ", B "
                       << lib.at("testB").size() << ", C " << lib.at("testC").size() << "; |A∩B|=" << ab << " |A∩C|=" << ac
                       << "; |B∩C|=" << intersect(lib.at("testB"), lib.at("testC")) << "; grouping "
                       << (groups_ok ? "matches" : "DIFFERS") << "; SS+WL record in B and C: " << (overlap ? "yes" : "NO"))
                 .os.str();
  return r;
}

// ---- A10 ------------------------------------------------------------------------

std::map<std::string, std::string> end_to_end(const std::filesystem::path& dir, int eval_workers) {
  SyntheticCorpusSpec spec;
  spec.num_records = 40;
  spec.seed = 7;
  generate_synthetic_corpus(spec, dir / "corpus");
  const DatasetManifest m = load_manifest(dir / "corpus" / "manifest.jsonl");
  RunConfig rc = toy_run_config();
  rc.train.steps = 50;
  rc.eval.workers = eval_workers;
  {
    VgNet net(rc.model);
    const TrainResult res = train(net, rc.train, m);
    save_checkpoint(dir / "ckpt", rc, net, res);
  }
  const Checkpoint ck = load_checkpoint(dir / "ckpt");
  const EvalResult ev = evaluate(*ck.model, m, ck.config.eval.workers, report_metadata(ck.config, *ck.model));
  write_text(dir / "report.json", emit_report(ev.report, ReportFormat::json));
  write_text(dir / "report.md", emit_report(ev.report, ReportFormat::markdown));
  write_text(dir / "predictions.jsonl", prediction_dump(ev.predictions));
  const EvalReport reread = report_from_json(read_text(dir / "report.json"));
  write_text(dir / "report.csv", emit_report(reread, ReportFormat::csv));
  std::map<std::string, std::string> out;
  for (const char* f : {"corpus/manifest.jsonl", "ckpt/loss_curve.csv", "ckpt/model.bin", "report.json", "report.md",
                        "report.csv", "predictions.jsonl"})
    out[f] = read_text(dir / f);
  return out;
}

CheckResult check_determinism(const CheckOptions& opt) {
  CheckResult r = named("A10", "determinism");
  const auto t0 = Clock::now();
  const auto a = end_to_end(fresh_dir(opt, "a10_run1"), 1);
  const auto b = end_to_end(fresh_dir(opt, "a10_run2"), 3);
  std::string differ;
  for (const auto& [name, bytes] : a)
    if (b.at(name) != bytes) differ += " " + name;
  r.seconds = seconds_since(t0);
  r.passed = differ.empty() && r.seconds < 600;
  r.detail = differ.empty() ? "two runs (eval workers 1 and 3): " + std::to_string(a.size()) + " artifacts byte-identical"
                            : "differing artifacts:" + differ;
  return r;
}

using CheckFn = CheckResult (*)(const CheckOptions&);

const std::vector<std::pair<std::string, CheckFn>>& registry() {
  static const std::vector<std::pair<std::string, CheckFn>> r = {
      {"A1", check_identity}, {"A2", check_gradients},  {"A3", check_freezing}, {"A4", check_shapes},
      {"A5", check_oracles},  {"A6", check_overfit},    {"A7", check_asymmetry}, {"A8", check_pipeline},
      {"A9", check_splits},   {"A10", check_determinism}};
  return r;
}

}  // namespace

std::filesystem::path default_golden_dir() { return RGBTVG_GOLDEN_DIR; }

const std::vector<std::string>& check_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& [id, fn] : registry()) v.push_back(id);
    return v;
  }();
  return ids;
}

CheckResult run_check(const std::string& id, const CheckOptions& opt) {
  for (const auto& [name, fn] : registry()) {
    if (name != id) continue;
    const auto t0 = Clock::now();
    try {
      return fn(opt);
    } catch (const std::exception& e) {
      CheckResult r = named(id, "error");
      r.detail = std::string("threw: ") + e.what();
      r.seconds = seconds_since(t0);
      return r;
    }
  }
  throw std::invalid_argument("unknown check '" + id + "'");
}

std::vector<CheckResult> run_checks(const CheckOptions& opt, const std::function<void(const CheckResult&)>& on_result) {
  for (const auto& id : opt.only)
    if (std::find(check_ids().begin(), check_ids().end(), id) == check_ids().end())
      throw std::invalid_argument("unknown check '" + id + "'");
  std::vector<CheckResult> out;
  for (const auto& id : check_ids()) {
    if (!opt.only.empty() && !opt.only.contains(id)) continue;
    out.push_back(run_check(id, opt));
    if (on_result) on_result(out.back());
  }
  return out;
}

std::string format_check(const CheckResult& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << (r.passed ? "PASS " : "FAIL ") << r.id << " " << r.title << " (" << r.seconds << "s): " << r.detail;
  return os.str();
}

}  // namespace rgbtvg
