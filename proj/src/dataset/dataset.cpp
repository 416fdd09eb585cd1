#include "rgbtvg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace rgbtvg {

using ojson = nlohmann::ordered_json;

void GroundingRecord::validate() const {
  auto fail = [this](const std::string& why) { throw ManifestError("record '" + id + "': " + why); };
  if (id.empty()) throw ManifestError("record with empty id");
  if (expression.empty()) fail("expression is empty");
  if (dims.width <= 0 || dims.height <= 0) fail("image dims must be positive");
  if (!box.fits(dims)) fail("box " + box.to_string() + " exceeds image " + std::to_string(dims.width) + "x" +
                            std::to_string(dims.height));
  if (classify_size(box, dims) != size)
    fail("size attribute " + std::string(code(size)) + " disagrees with box area rule (" +
         std::string(code(classify_size(box, dims))) + ")");
}

DatasetManifest::DatasetManifest(std::vector<GroundingRecord> records, ManifestProvenance provenance)
    : records_(std::move(records)), provenance_(std::move(provenance)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    records_[i].validate();
    if (!index_.emplace(records_[i].id, i).second) throw ManifestError("duplicate record id '" + records_[i].id + "'");
  }
  if (provenance_.source_counts.empty())
    for (const auto& r : records_) ++provenance_.source_counts[std::string(code(r.source))];
}

const GroundingRecord& DatasetManifest::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ManifestError("no record with id '" + id + "'");
  return records_[it->second];
}

std::filesystem::path DatasetManifest::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir_ / p;
}

std::vector<const GroundingRecord*> DatasetManifest::split(Split s) const {
  std::vector<const GroundingRecord*> out;
  for (const auto& r : records_)
    if (r.split == s) out.push_back(&r);
  return out;
}

std::string record_to_json_line(const GroundingRecord& r) {
  ojson j;
  j["id"] = r.id;
  j["rgb_path"] = r.rgb_path;
  j["tir_path"] = r.tir_path;
  j["width"] = r.dims.width;
  j["height"] = r.dims.height;
  j["category"] = r.category;
  j["bbox"] = {r.box.x(), r.box.y(), r.box.w(), r.box.h()};
  j["expression"] = r.expression;
  j["scene"] = code(r.scene);
  j["weather"] = code(r.weather);
  j["illumination"] = code(r.illumination);
  j["occlusion_raw"] = r.occlusion.raw();
  j["size"] = code(r.size);
  j["source"] = code(r.source);
  j["split"] = code(r.split);
  return j.dump();
}

GroundingRecord record_from_json_line(const std::string& line) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw ManifestError(std::string("malformed manifest line: ") + e.what());
  }
  auto field = [&j](const char* name) -> const ojson& {
    if (!j.contains(name)) throw ManifestError(std::string("manifest record missing field '") + name + "'");
    return j.at(name);
  };
  try {
    GroundingRecord r;
    r.id = field("id").get<std::string>();
    r.rgb_path = field("rgb_path").get<std::string>();
    r.tir_path = field("tir_path").get<std::string>();
    r.dims = ImageDims(field("width").get<int>(), field("height").get<int>());
    r.category = field("category").get<std::string>();
    const auto& bb = field("bbox");
    if (!bb.is_array() || bb.size() != 4) throw ManifestError("bbox must be [x, y, w, h]");
    r.box = PixelBox(bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>());
    r.expression = field("expression").get<std::string>();
    r.scene = scene_from_code(field("scene").get<std::string>());
    r.weather = weather_from_code(field("weather").get<std::string>());
    r.illumination = illumination_from_code(field("illumination").get<std::string>());
    r.occlusion = OcclusionLevel(field("occlusion_raw").get<int>());
    r.size = size_from_code(field("size").get<std::string>());
    r.source = source_from_code(field("source").get<std::string>());
    r.split = split_from_code(field("split").get<std::string>());
    r.validate();
    return r;
  } catch (const ojson::exception& e) {
    throw ManifestError(std::string("manifest field has wrong type: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ManifestError(std::string("manifest record invalid: ") + e.what());
  }
}

std::string manifest_to_jsonl(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.records()) {
    out += record_to_json_line(r);
    out += '\n';
  }
  return out;
}

DatasetManifest manifest_from_jsonl(const std::string& text) {
  std::vector<GroundingRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json_line(line));
    } catch (const ManifestError& e) {
      throw ManifestError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return DatasetManifest(std::move(records));
}

namespace {

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ManifestError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ManifestError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta.json";
  return p;
}

}  // namespace

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ojson meta;
  meta["generator"] = m.provenance().generator;
  meta["generated_at"] = m.provenance().generated_at;
  meta["record_count"] = m.size();
  meta["source_counts"] = ojson::object();
  for (const auto& [k, v] : m.provenance().source_counts) meta["source_counts"][k] = v;
  write_atomic(path, manifest_to_jsonl(m));
  write_atomic(sidecar(path), meta.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest m = manifest_from_jsonl(read_file(path));
  ManifestProvenance prov = m.provenance();
  if (std::filesystem::exists(sidecar(path))) {
    const auto meta = ojson::parse(read_file(sidecar(path)));
    prov.generator = meta.value("generator", "");
    prov.generated_at = meta.value("generated_at", "");
  }
  std::vector<GroundingRecord> records = m.records();
  DatasetManifest out(std::move(records), std::move(prov));
  out.set_base_dir(path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
  return out;
}

std::map<std::string, IdSet> assign_eval_subsets(const DatasetManifest& m) {
  std::map<std::string, IdSet> out;
  for (const auto& name : kEvalSubsets) out[name];
  for (const auto& r : m.records()) {
    if (r.split != Split::test) continue;
    out["test"].insert(r.id);
    const bool good_light = r.illumination == Illumination::NL || r.illumination == Illumination::SL;
    const bool low_light = r.illumination == Illumination::WL || r.illumination == Illumination::VL;
    if (r.size == SizeClass::NS && good_light) out["testA"].insert(r.id);
    if (low_light) out["testB"].insert(r.id);
    if (r.size == SizeClass::SS) out["testC"].insert(r.id);
  }
  return out;
}

Axis axis_from_string(std::string_view s) {
  for (Axis a : kAllAxes)
    if (axis_name(a) == s) return a;
  throw AttributeError("unknown attribute axis '" + std::string(s) + "'");
}

std::string_view axis_name(Axis a) {
  switch (a) {
    case Axis::scene: return "scene";
    case Axis::weather: return "weather";
    case Axis::illumination: return "illumination";
    case Axis::size: return "size";
    case Axis::occlusion: return "occlusion";
  }
  return "?";
}

std::vector<std::string> axis_values(Axis a) {
  auto conv = [](const auto& arr) { return std::vector<std::string>(arr.begin(), arr.end()); };
  switch (a) {
    case Axis::scene: return conv(kSceneCodes);
    case Axis::weather: return conv(kWeatherCodes);
    case Axis::illumination: return conv(kIlluminationCodes);
    case Axis::size: return conv(kSizeCodes);
    case Axis::occlusion: return conv(kOcclusionCodes);
  }
  return {};
}

std::string axis_value(const GroundingRecord& r, Axis a) {
  switch (a) {
    case Axis::scene: return std::string(code(r.scene));
    case Axis::weather: return std::string(code(r.weather));
    case Axis::illumination: return std::string(code(r.illumination));
    case Axis::size: return std::string(code(r.size));
    case Axis::occlusion: return std::string(code(r.occlusion.binary()));
  }
  return {};
}

std::map<std::string, IdSet> group_by_attribute(std::span<const GroundingRecord* const> records, Axis axis) {
  std::map<std::string, IdSet> out;
  for (const auto& v : axis_values(axis)) out[v];
  for (const GroundingRecord* r : records) out[axis_value(*r, axis)].insert(r->id);
  return out;
}

std::map<std::string, IdSet> group_by_attribute(const DatasetManifest& m, Axis axis) {
  std::vector<const GroundingRecord*> ptrs;
  for (const auto& r : m.records()) ptrs.push_back(&r);
  return group_by_attribute(ptrs, axis);
}

double CrossTab::percent(std::size_t r, std::size_t c) const { return percent_2dp(counts.at(r).at(c), total); }

std::vector<std::size_t> CrossTab::row_marginals() const {
  std::vector<std::size_t> out(row_labels.size(), 0);
  for (std::size_t r = 0; r < counts.size(); ++r)
    for (std::size_t v : counts[r]) out[r] += v;
  return out;
}

std::vector<std::size_t> CrossTab::col_marginals() const {
  std::vector<std::size_t> out(col_labels.size(), 0);
  for (const auto& row : counts)
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  return out;
}

CrossTab cross_tab(const DatasetManifest& m, Axis rows, Axis cols) {
  if (rows == cols) throw AttributeError("cross_tab: axes must differ, got '" + std::string(axis_name(rows)) + "' twice");
  CrossTab t{rows, cols, axis_values(rows), axis_values(cols), {}, m.size()};
  t.counts.assign(t.row_labels.size(), std::vector<std::size_t>(t.col_labels.size(), 0));
  for (const auto& r : m.records()) {
    const auto ri = std::find(t.row_labels.begin(), t.row_labels.end(), axis_value(r, rows)) - t.row_labels.begin();
    const auto ci = std::find(t.col_labels.begin(), t.col_labels.end(), axis_value(r, cols)) - t.col_labels.begin();
    ++t.counts[ri][ci];
  }
  return t;
}

double percent_2dp(std::size_t count, std::size_t total) {
  if (total == 0) throw AttributeError("percent_2dp: empty total");
  // Integer arithmetic on basis points avoids binary rounding at the .xx5 boundary.
  const unsigned long long scaled = static_cast<unsigned long long>(count) * 100000ULL / total;  // 1e-3 percent
  const unsigned long long bp = (scaled + 5) / 10;
  return static_cast<double>(bp) / 100.0;
}

std::vector<std::string> stratified_review_sample(const DatasetManifest& m, std::size_t per_stratum,
                                                  std::uint64_t seed) {
  std::map<std::pair<int, int>, std::vector<std::string>> strata;
  for (const auto& r : m.records())
    strata[{static_cast<int>(r.source), static_cast<int>(r.illumination)}].push_back(r.id);
  std::vector<std::string> out;
  std::mt19937_64 rng(seed);
  for (auto& [key, ids] : strata) {
    // Portable Fisher-Yates: std::shuffle's draw sequence differs between standard libraries.
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng() % i]);
    ids.resize(std::min(per_stratum, ids.size()));
    out.insert(out.end(), ids.begin(), ids.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace rgbtvg
