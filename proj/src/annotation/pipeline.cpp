#include "rgbtvg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace rgbtvg {

void FilterConfig::validate() const {
  if (!(min_area_ratio > 0.0)) throw std::invalid_argument("filter.min_area_ratio must be positive");
  if (!(min_side_px > 0.0)) throw std::invalid_argument("filter.min_side_px must be positive");
  if (!(max_alignment_offset_px > 0.0)) throw std::invalid_argument("filter.max_alignment_offset_px must be positive");
  if (!(min_category_share > 0.0 && min_category_share < 1.0))
    throw std::invalid_argument("filter.min_category_share must lie in (0, 1)");
}

std::string_view filter_rule_name(FilterRule r) {
  switch (r) {
    case FilterRule::excluded_category: return "excluded_category";
    case FilterRule::alignment: return "alignment";
    case FilterRule::visibility: return "visibility";
    case FilterRule::category_share: return "category_share";
  }
  return "?";
}

PixelBox select_largest_instance(const RawDetectionRecord& record) {
  if (record.boxes.empty()) throw std::invalid_argument("select_largest_instance: record '" + record.id + "' has no boxes");
  const PixelBox* best = &record.boxes.front();
  for (const PixelBox& b : record.boxes) {
    if (b.area() > best->area() ||
        (b.area() == best->area() && (b.y() < best->y() || (b.y() == best->y() && b.x() < best->x()))))
      best = &b;
  }
  return *best;
}

FilterResult filter_records(std::span<const RawDetectionRecord> raw, const FilterConfig& cfg) {
  cfg.validate();
  FilterResult result;
  for (FilterRule r : {FilterRule::excluded_category, FilterRule::alignment, FilterRule::visibility,
                       FilterRule::category_share})
    result.rejected[r] = 0;

  std::vector<const RawDetectionRecord*> survivors;
  for (const auto& rec : raw) {
    if (cfg.excluded_categories.contains(rec.category)) {
      ++result.rejected[FilterRule::excluded_category];
      continue;
    }
    if (rec.alignment_offset && *rec.alignment_offset > cfg.max_alignment_offset_px) {
      ++result.rejected[FilterRule::alignment];
      continue;
    }
    if (rec.boxes.empty()) {
      ++result.rejected[FilterRule::visibility];
      continue;
    }
    const PixelBox largest = select_largest_instance(rec);
    if (largest.area() / rec.dims.area() < cfg.min_area_ratio || std::min(largest.w(), largest.h()) < cfg.min_side_px) {
      ++result.rejected[FilterRule::visibility];
      continue;
    }
    survivors.push_back(&rec);
  }

  std::map<std::string, std::size_t> per_category;
  for (const auto* rec : survivors) ++per_category[rec->category];
  for (const auto* rec : survivors) {
    const double share = static_cast<double>(per_category[rec->category]) / static_cast<double>(survivors.size());
    if (share < cfg.min_category_share) {
      ++result.rejected[FilterRule::category_share];
      continue;
    }
    result.kept.push_back(*rec);
  }
  return result;
}

namespace {

struct InstanceOutcome {
  std::optional<GroundingRecord> record;
  std::size_t retries = 0;
  std::size_t calls = 0;
  std::optional<PromptKind> failed_kind;
};

InstanceOutcome annotate_instance(const RawDetectionRecord& rec, const BuildConfig& cfg, AnnotationClient& client) {
  InstanceOutcome out;
  const PixelBox box = select_largest_instance(rec);
  const PromptBindings bindings{rec.category, box};
  std::map<PromptKind, Annotation> parsed;
  for (PromptKind kind : kAllPromptKinds) {
    AnnotationRequest req{rec.instance_id(), kind, rec.rgb_path, render_prompt(kind, bindings)};
    bool ok = false;
    for (int attempt = 0; attempt <= cfg.max_retries && !ok; ++attempt) {
      if (attempt > 0) ++out.retries;
      ++out.calls;
      try {
        parsed.emplace(kind, parse_response(kind, client.send(req)));
        ok = true;
      } catch (const ParseError&) {
      } catch (const AnnotationError&) {
      }
    }
    if (!ok) {
      out.failed_kind = kind;
      return out;
    }
  }
  GroundingRecord r;
  r.id = rec.instance_id();
  r.rgb_path = rec.rgb_path;
  r.tir_path = rec.tir_path;
  r.dims = rec.dims;
  r.category = rec.category;
  r.box = box;
  const auto& sw = std::get<SceneWeather>(parsed.at(PromptKind::scene_weather));
  r.scene = sw.scene;
  r.weather = sw.weather;
  r.illumination = std::get<Illumination>(parsed.at(PromptKind::lighting));
  r.expression = std::get<std::string>(parsed.at(PromptKind::object_expression));
  r.occlusion = std::get<OcclusionLevel>(parsed.at(PromptKind::occlusion));
  r.size = classify_size(box, rec.dims);
  r.source = rec.source;
  r.split = rec.split;
  r.validate();
  out.record = std::move(r);
  return out;
}

}  // namespace

BuildResult build_manifest(std::span<const RawDetectionRecord> raw, const BuildConfig& cfg, AnnotationClient& client) {
  if (cfg.max_retries < 0) throw std::invalid_argument("annotation.max_retries must be >= 0");
  if (cfg.workers < 1) throw std::invalid_argument("annotation.workers must be >= 1");
  BuildStats stats;
  stats.input = raw.size();
  FilterResult filtered = filter_records(raw, cfg.filter);
  stats.kept_after_filter = filtered.kept.size();
  stats.rejected = filtered.rejected;

  const auto& kept = filtered.kept;
  std::vector<InstanceOutcome> outcomes(kept.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < kept.size(); i = next++) outcomes[i] = annotate_instance(kept[i], cfg, client);
  };
  const std::size_t nworkers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), std::max<std::size_t>(1, kept.size()));
  if (nworkers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < nworkers; ++w) pool.emplace_back(worker);
  }

  std::vector<GroundingRecord> records;
  for (auto& o : outcomes) {
    stats.retries += o.retries;
    stats.calls += o.calls;
    if (o.record) {
      records.push_back(std::move(*o.record));
    } else {
      ++stats.dropped;
      ++stats.failures_by_kind[std::string(prompt_kind_name(*o.failed_kind))];
    }
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  stats.annotated = records.size();
  ManifestProvenance prov;
  prov.generator = "build-dataset";
  prov.generated_at = cfg.generated_at;
  return {DatasetManifest(std::move(records), std::move(prov)), stats};
}

RawDetectionRecord raw_record_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    RawDetectionRecord r;
    r.rgb_path = j.at("rgb_path").get<std::string>();
    r.tir_path = j.at("tir_path").get<std::string>();
    r.id = j.contains("id") ? j.at("id").get<std::string>() : std::filesystem::path(r.rgb_path).stem().string();
    r.dims = ImageDims(j.at("width").get<int>(), j.at("height").get<int>());
    r.category = j.at("category").get<std::string>();
    for (const auto& b : j.at("boxes")) {
      if (!b.is_array() || b.size() != 4) throw std::invalid_argument("each box must be [x, y, w, h]");
      r.boxes.emplace_back(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>());
    }
    if (r.boxes.empty()) throw std::invalid_argument("record '" + r.id + "' has no boxes");
    if (j.contains("alignment_offset") && !j.at("alignment_offset").is_null())
      r.alignment_offset = j.at("alignment_offset").get<double>();
    if (j.contains("source")) r.source = source_from_code(j.at("source").get<std::string>());
    if (j.contains("split")) r.split = split_from_code(j.at("split").get<std::string>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed raw record: ") + e.what());
  }
}

std::vector<RawDetectionRecord> load_raw_corpus(const std::filesystem::path& dir) {
  const auto path = dir / "raw.jsonl";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<RawDetectionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      RawDetectionRecord r = raw_record_from_json_line(line);
      for (std::string* p : {&r.rgb_path, &r.tir_path})
        if (std::filesystem::path(*p).is_relative()) *p = (dir / *p).lexically_normal().string();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace rgbtvg
