#include "rgbtvg/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rgbtvg::oracle {

namespace {

// First and one-past-last cell index whose center (i + 0.5) / s lies in [lo, hi).
std::pair<long long, long long> cell_span(double lo, double hi, int s) {
  const long long first = static_cast<long long>(std::ceil(lo * s - 0.5));
  const long long last = static_cast<long long>(std::ceil(hi * s - 0.5));
  return {first, std::max(first, last)};
}

}  // namespace

RasterCounts raster_counts(const PixelBox& a, const PixelBox& b, int grid_scale) {
  if (grid_scale < 1) throw std::invalid_argument("grid_scale must be >= 1");
  const auto [ax0, ax1] = cell_span(a.x(), a.x2(), grid_scale);
  const auto [ay0, ay1] = cell_span(a.y(), a.y2(), grid_scale);
  const auto [bx0, bx1] = cell_span(b.x(), b.x2(), grid_scale);
  const auto [by0, by1] = cell_span(b.y(), b.y2(), grid_scale);
  RasterCounts c;
  const long long x0 = std::min(ax0, bx0), x1 = std::max(ax1, bx1);
  const long long y0 = std::min(ay0, by0), y1 = std::max(ay1, by1);
  for (long long y = y0; y < y1; ++y) {
    const bool in_ay = y >= ay0 && y < ay1, in_by = y >= by0 && y < by1;
    if (!in_ay && !in_by) continue;
    for (long long x = x0; x < x1; ++x) {
      const bool in_a = in_ay && x >= ax0 && x < ax1;
      const bool in_b = in_by && x >= bx0 && x < bx1;
      c.inter += in_a && in_b;
      c.uni += in_a || in_b;
    }
  }
  return c;
}

double iou_rasterized(const PixelBox& a, const PixelBox& b, int grid_scale) {
  const RasterCounts c = raster_counts(a, b, grid_scale);
  return c.uni == 0 ? 0.0 : static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("oracle matmul: shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

std::map<std::string, std::set<std::string>> eval_subsets(const std::vector<GroundingRecord>& records) {
  std::map<std::string, std::set<std::string>> out{{"test", {}}, {"testA", {}}, {"testB", {}}, {"testC", {}}};
  for (const auto& r : records) {
    if (r.split != Split::test) continue;
    out["test"].insert(r.id);
    const bool normal = r.size == SizeClass::NS;
    const bool good_light = r.illumination == Illumination::NL || r.illumination == Illumination::SL;
    const bool weak_light = r.illumination == Illumination::WL || r.illumination == Illumination::VL;
    if (normal && good_light) out["testA"].insert(r.id);
    if (weak_light) out["testB"].insert(r.id);
    if (!normal) out["testC"].insert(r.id);
  }
  return out;
}

namespace {

std::string value_of(const GroundingRecord& r, Axis axis) {
  switch (axis) {
    case Axis::scene: return std::string(kSceneCodes[static_cast<int>(r.scene)]);
    case Axis::weather: return std::string(kWeatherCodes[static_cast<int>(r.weather)]);
    case Axis::illumination: return std::string(kIlluminationCodes[static_cast<int>(r.illumination)]);
    case Axis::size: return std::string(kSizeCodes[static_cast<int>(r.size)]);
    case Axis::occlusion: return r.occlusion.raw() == 2 ? "HO" : "PO";
  }
  return {};
}

std::vector<std::string> values_of(Axis axis) {
  switch (axis) {
    case Axis::scene: return {kSceneCodes.begin(), kSceneCodes.end()};
    case Axis::weather: return {kWeatherCodes.begin(), kWeatherCodes.end()};
    case Axis::illumination: return {kIlluminationCodes.begin(), kIlluminationCodes.end()};
    case Axis::size: return {kSizeCodes.begin(), kSizeCodes.end()};
    case Axis::occlusion: return {kOcclusionCodes.begin(), kOcclusionCodes.end()};
  }
  return {};
}

double corner_iou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2, double by2) {
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace

std::map<std::string, std::set<std::string>> group_by(const std::vector<GroundingRecord>& records, Axis axis) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& v : values_of(axis)) {
    auto& ids = out[v];
    for (const auto& r : records)
      if (value_of(r, axis) == v) ids.insert(r.id);
  }
  return out;
}

DumpScores score_dump(const std::vector<GroundingRecord>& records, const std::string& dump_text) {
  std::map<std::string, const GroundingRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  const auto subsets = eval_subsets(records);

  DumpScores s;
  for (const char* name : {"val", "test", "testA", "testB", "testC"}) s.splits[name] = {};
  for (Axis a : kAllAxes)
    for (const auto& v : values_of(a)) s.cells[{std::string(axis_name(a)), v}] = {};

  std::istringstream in(dump_text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const std::string id = j.at("id").get<std::string>();
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("dump id not in manifest: " + id);
    const GroundingRecord& r = *it->second;
    const auto& g = j.at("gt_bbox");
    if (g[0].get<double>() != r.box.x() || g[1].get<double>() != r.box.y() || g[2].get<double>() != r.box.x2() ||
        g[3].get<double>() != r.box.y2())
      throw std::runtime_error("dump gt disagrees with manifest for " + id);
    bool hit = false;
    if (const auto& p = j.at("pred_bbox"); !p.is_null()) {
      const double v = corner_iou(p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>(),
                                  r.box.x(), r.box.y(), r.box.x2(), r.box.y2());
      hit = v > 0.5;
    }
    auto bump = [&](Tally& t) {
      ++t.count;
      t.hits += hit ? 1 : 0;
    };
    if (r.split == Split::val) bump(s.splits["val"]);
    for (const char* name : {"test", "testA", "testB", "testC"})
      if (subsets.at(name).contains(id)) bump(s.splits[name]);
    if (r.split == Split::test)
      for (Axis a : kAllAxes) bump(s.cells[{std::string(axis_name(a)), value_of(r, a)}]);
  }
  return s;
}

double percent_2dp(std::uint64_t count, std::uint64_t total) {
  if (total == 0) throw std::invalid_argument("percent of an empty total");
  // hundredths of a percent, half-up: floor(count * 10000 / total + 1/2)
  const std::uint64_t hundredths = (2 * count * 10000 + total) / (2 * total);
  return static_cast<double>(hundredths) / 100.0;
}

std::size_t adapter_parameters(std::size_t dim, std::size_t layers, std::size_t targets, std::size_t rank_v,
                               std::size_t rank_t, bool rgb, bool tir) {
  std::size_t n = 0;
  if (rgb) n += layers * targets * 2 * dim * rank_v;
  if (tir) n += layers * targets * 2 * dim * rank_t;
  return n;
}

bool within_3_sigma(std::size_t hits, std::size_t n, double p) {
  const double mean = static_cast<double>(n) * p;
  const double sigma = std::sqrt(static_cast<double>(n) * p * (1 - p));
  return std::abs(static_cast<double>(hits) - mean) <= 3 * sigma;
}

GradCheckReport check_gradients(const std::vector<ag::Parameter*>& params,
                                const std::function<ag::Var(ag::Tape&)>& loss, const GradCheckOptions& opt) {
  for (auto* p : params) p->zero_grad();
  {
    ag::Tape t;
    t.backward(loss(t));
  }
  auto eval = [&] {
    ag::Tape t(false);
    return loss(t).value()[0];
  };
  GradCheckReport rep;
  for (auto* p : params) {
    const std::size_t n = p->size();
    const std::size_t k_max = std::min(n, opt.samples_per_param);
    double worst = 0;
    for (std::size_t k = 0; k < k_max; ++k) {
      // Spread the samples over the tensor; 7919 is prime so the stride visits distinct entries.
      const std::size_t i = k_max == n ? k : (k * 7919) % n;
      const double orig = p->value()[i];
      auto at = [&](double dx) {
        p->value()[i] = orig + dx;
        const double v = eval();
        p->value()[i] = orig;
        return v;
      };
      const double h = opt.step;
      const double num = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
      const double a = p->grad()[i];
      const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), opt.floor});
      ++rep.checked;
      worst = std::max(worst, rel);
      if (rel >= rep.worst.rel_error) rep.worst = {p->name(), i, a, num, rel};
    }
    rep.worst_by_param[p->name()] = worst;
  }
  return rep;
}

}  // namespace rgbtvg::oracle
