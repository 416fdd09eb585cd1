#include "rgbtvg/synthetic.hpp"

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "rgbtvg/matrix.hpp"

namespace rgbtvg {

namespace {

void check_axis(const std::vector<double>& w, std::size_t arity, const char* name) {
  if (w.size() != arity)
    throw std::invalid_argument(std::string("synthetic ") + name + " weights need " + std::to_string(arity) + " entries");
  for (double x : w)
    if (!(x >= 0) || !std::isfinite(x)) throw std::invalid_argument(std::string("synthetic ") + name + " weights must be >= 0");
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  if (std::abs(s - 1.0) > 1e-6)
    throw std::invalid_argument(std::string("synthetic ") + name + " weights sum to " + std::to_string(s) + ", not 1");
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

int categorical(std::mt19937_64& rng, const std::vector<double>& w) {
  const double u = uniform01(rng);
  double acc = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return static_cast<int>(i);
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0) return static_cast<int>(i);
  return 0;
}

bool overlaps(const PixelBox& a, const PixelBox& b, double margin) {
  return a.x() < b.x2() + margin && b.x() < a.x2() + margin && a.y() < b.y2() + margin && b.y() < a.y2() + margin;
}

std::pair<int, int> shape_extent(int shape, int base) {
  const int longer = static_cast<int>(std::lround(1.5 * base));
  const int shorter = std::max(2, static_cast<int>(std::lround(0.75 * base)));
  switch (shape) {
    case 0: return {base, base};       // square
    case 1: return {longer, shorter};  // slab
    default: return {shorter, longer}; // pillar
  }
}

std::pair<int, int> landmark_extent(int kind, int s) {
  switch (kind) {
    case 0: return {std::max(2, s / 20), std::max(4, s / 4)};       // post
    case 1: return {std::max(3, s / 8), std::max(3, s / 10)};       // sign
    default: return {std::max(6, s / 3), std::max(2, s / 12)};      // wall
  }
}

constexpr double kColors[6][3] = {{0.85, 0.15, 0.15}, {0.15, 0.75, 0.2}, {0.15, 0.3, 0.9},
                                  {0.9, 0.85, 0.15},  {0.95, 0.55, 0.1}, {0.6, 0.2, 0.75}};

}  // namespace

void SyntheticCorpusSpec::validate() const {
  if (num_records < 1) throw std::invalid_argument("synthetic num_records must be >= 1");
  if (image_size < 32) throw std::invalid_argument("synthetic image_size must be >= 32");
  check_axis(scene_weights, kSceneCount, "scene");
  check_axis(weather_weights, kWeatherCount, "weather");
  check_axis(illumination_weights, kIlluminationCount, "illumination");
  check_axis(occlusion_weights, 3, "occlusion");
  check_axis(size_weights, 2, "size");
  check_axis(source_weights, 3, "source");
  check_axis(split_weights, 3, "split");
}

bool relation_holds(int relation, const PixelBox& t, const PixelBox& l) {
  switch (relation) {
    case 0: return t.x2() <= l.x();
    case 1: return t.x() >= l.x2();
    case 2: return t.y2() <= l.y();
    case 3: return t.y() >= l.y2();
  }
  return false;
}

SyntheticScene plan_scene(const SyntheticCorpusSpec& spec, std::size_t index) {
  std::mt19937_64 rng(mix_seed(spec.seed, "scene:" + std::to_string(index)));
  const int s = spec.image_size;
  const ImageDims dims(s, s);
  SyntheticScene sc;
  GroundingRecord& r = sc.record;
  r.scene = scene_from_int(categorical(rng, spec.scene_weights));
  r.weather = weather_from_int(categorical(rng, spec.weather_weights));
  r.illumination = illumination_from_int(categorical(rng, spec.illumination_weights));
  r.occlusion = OcclusionLevel(categorical(rng, spec.occlusion_weights));
  const auto size = static_cast<SizeClass>(categorical(rng, spec.size_weights));
  r.source = static_cast<Source>(categorical(rng, spec.source_weights));
  r.split = static_cast<Split>(categorical(rng, spec.split_weights));

  sc.color = uniform_int(rng, 0, 5);
  sc.shape = uniform_int(rng, 0, 2);
  do {
    sc.distractor_color = uniform_int(rng, 0, 5);
    sc.distractor_shape = uniform_int(rng, 0, 2);
  } while (sc.distractor_color == sc.color && sc.distractor_shape == sc.shape);
  sc.landmark = uniform_int(rng, 0, 2);
  sc.relation = uniform_int(rng, 0, 3);

  int base = 0;
  if (size == SizeClass::SS) {
    base = std::max(2, static_cast<int>(0.7 * std::sqrt(kSmallSizeRatio * s * s)));
    while (base > 2) {
      auto [w, h] = shape_extent(sc.shape, base);
      if (static_cast<double>(w) * h < kSmallSizeRatio * s * s) break;
      --base;
    }
  } else {
    base = uniform_int(rng, static_cast<int>(std::ceil(0.18 * s)), static_cast<int>(0.32 * s));
  }
  const auto [tw, th] = shape_extent(sc.shape, base);
  const auto [dw, dh] = shape_extent(sc.distractor_shape, std::max(3, static_cast<int>(0.22 * s)));
  const auto [lw, lh] = landmark_extent(sc.landmark, s);

  for (int attempt = 0;; ++attempt) {
    if (attempt > 10000) throw std::logic_error("synthetic scene placement failed");
    const PixelBox lm(uniform_int(rng, 0, s - lw), uniform_int(rng, 0, s - lh), lw, lh);
    int x_lo = 0, x_hi = s - tw, y_lo = 0, y_hi = s - th;
    switch (sc.relation) {
      case 0: x_hi = static_cast<int>(lm.x()) - 1 - tw; break;
      case 1: x_lo = static_cast<int>(lm.x2()) + 1; break;
      case 2: y_hi = static_cast<int>(lm.y()) - 1 - th; break;
      case 3: y_lo = static_cast<int>(lm.y2()) + 1; break;
    }
    if (x_lo > x_hi || y_lo > y_hi) continue;
    const PixelBox target(uniform_int(rng, x_lo, x_hi), uniform_int(rng, y_lo, y_hi), tw, th);
    if (overlaps(target, lm, 1) || !relation_holds(sc.relation, target, lm)) continue;
    bool placed = false;
    for (int k = 0; k < 200 && !placed; ++k) {
      const PixelBox d(uniform_int(rng, 0, s - dw), uniform_int(rng, 0, s - dh), dw, dh);
      if (overlaps(d, target, 1) || overlaps(d, lm, 1)) continue;
      sc.distractor = d;
      placed = true;
    }
    if (!placed) continue;
    sc.landmark_box = lm;
    r.box = target;
    break;
  }

  if (r.occlusion.raw() > 0) {
    const double frac = r.occlusion.raw() == 1 ? 0.3 : 0.6;
    const int bw = std::max(1, static_cast<int>(std::lround(frac * r.box.w())));
    const int bx = static_cast<int>(r.box.x()) + uniform_int(rng, 0, static_cast<int>(r.box.w()) - bw);
    sc.occluder = PixelBox(bx, r.box.y(), bw, r.box.h());
  }

  char pair_id[32];
  std::snprintf(pair_id, sizeof(pair_id), "syn%05zu", index);
  r.category = kSyntheticShapes[static_cast<std::size_t>(sc.shape)];
  r.id = std::string(pair_id) + "_" + r.category;
  r.rgb_path = "images/" + std::string(pair_id) + "_rgb.ppm";
  r.tir_path = "images/" + std::string(pair_id) + "_tir.pgm";
  r.dims = dims;
  r.expression = "the " + kSyntheticColors[static_cast<std::size_t>(sc.color)] + " " + r.category + " " +
                 kSyntheticRelations[static_cast<std::size_t>(sc.relation)] + " the " +
                 kSyntheticLandmarks[static_cast<std::size_t>(sc.landmark)];
  r.size = classify_size(r.box, dims);
  if (r.size != size) throw std::logic_error("synthetic size class disagrees with classify_size");
  r.validate();
  return sc;
}

std::pair<Image, Image> render_scene(const SyntheticScene& sc, std::uint64_t seed) {
  const GroundingRecord& r = sc.record;
  const int s = r.dims.width;
  Image rgb(3, s, s), tir(1, s, s);
  const int scene = static_cast<int>(r.scene);
  const double base[3] = {0.3 + 0.04 * (scene % 5), 0.35 + 0.03 * ((scene * 3) % 7), 0.3 + 0.05 * ((scene * 5) % 4)};
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double shade = y < s / 2 ? 0.1 : -0.08;
      for (int c = 0; c < 3; ++c) rgb.at(c, y, x) = base[c] + shade;
      tir.at(0, y, x) = 0.12 + 0.08 * y / s;
    }
  auto fill = [&](const PixelBox& b, const double* color, double heat) {
    for (int y = static_cast<int>(b.y()); y < static_cast<int>(b.y2()); ++y)
      for (int x = static_cast<int>(b.x()); x < static_cast<int>(b.x2()); ++x) {
        for (int c = 0; c < 3; ++c) rgb.at(c, y, x) = color[c];
        tir.at(0, y, x) = heat;
      }
  };
  const double gray[3] = {0.55, 0.55, 0.55};
  const double dark[3] = {0.22, 0.22, 0.24};
  fill(sc.landmark_box, gray, 0.3);
  fill(sc.distractor, kColors[sc.distractor_color], 0.55);
  fill(r.box, kColors[sc.color], 0.92);
  if (sc.occluder) fill(*sc.occluder, dark, 0.18);

  std::mt19937_64 rng(mix_seed(seed, r.id + ":pixels"));
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = rgb.at(c, y, x);
        switch (r.weather) {
          case Weather::FY: v = 0.6 * v + 0.4 * 0.75; break;
          case Weather::RY: if ((x + 2 * y) % 9 == 0) v = std::min(1.0, v + 0.25); break;
          case Weather::CY: v = 0.85 * v + 0.15 * 0.6; break;
          case Weather::SY: break;
        }
        switch (r.illumination) {
          case Illumination::VL: v *= 0.15; break;
          case Illumination::WL: v *= 0.4; break;
          case Illumination::NL: break;
          case Illumination::SL: v = std::min(1.0, 1.35 * v + 0.05); break;
        }
        rgb.at(c, y, x) = std::clamp(v + 0.06 * (uniform01(rng) - 0.5), 0.0, 1.0);
      }
      double t = tir.at(0, y, x);
      if (r.weather == Weather::FY) t = 0.85 * t + 0.15 * 0.3;
      tir.at(0, y, x) = std::clamp(t + 0.06 * (uniform01(rng) - 0.5), 0.0, 1.0);
    }
  return {std::move(rgb), std::move(tir)};
}

std::string reproducible_timestamp() {
  std::time_t t = 0;
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) {
    char* end = nullptr;
    const long long v = std::strtoll(e, &end, 10);
    if (*end == '\0' && v >= 0) t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

DatasetManifest generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw std::runtime_error("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  std::vector<GroundingRecord> records;
  nlohmann::ordered_json stub = nlohmann::ordered_json::object();
  std::string raw;
  for (std::size_t i = 0; i < spec.num_records; ++i) {
    const SyntheticScene sc = plan_scene(spec, i);
    const auto& r = sc.record;
    auto [rgb, tir] = render_scene(sc, spec.seed);
    write_pnm(rgb, out_dir / r.rgb_path);
    write_pnm(tir, out_dir / r.tir_path);

    nlohmann::ordered_json j;
    j["id"] = r.id.substr(0, r.id.find('_'));
    j["rgb_path"] = r.rgb_path;
    j["tir_path"] = r.tir_path;
    j["width"] = r.dims.width;
    j["height"] = r.dims.height;
    j["category"] = r.category;
    j["boxes"] = {{r.box.x(), r.box.y(), r.box.w(), r.box.h()}};
    j["alignment_offset"] = 0.0;
    j["source"] = std::string(code(r.source));
    j["split"] = std::string(code(r.split));
    raw += j.dump() + "\n";

    stub[r.id] = {{"scene_weather", std::to_string(static_cast<int>(r.scene)) + " " +
                                        std::to_string(static_cast<int>(r.weather))},
                  {"lighting", std::to_string(static_cast<int>(r.illumination))},
                  {"object_expression", r.expression},
                  {"occlusion", std::to_string(r.occlusion.raw())}};
    records.push_back(r);
  }
  ManifestProvenance prov;
  prov.generator = "gen-synthetic";
  prov.generated_at = reproducible_timestamp();
  DatasetManifest m(std::move(records), std::move(prov));
  save_manifest(m, out_dir / "manifest.jsonl");
  std::ofstream(out_dir / "raw.jsonl", std::ios::binary | std::ios::trunc) << raw;
  std::ofstream(out_dir / "stub_annotations.json", std::ios::binary | std::ios::trunc) << stub.dump(2) << "\n";
  m.set_base_dir(out_dir);
  return m;
}

}  // namespace rgbtvg
