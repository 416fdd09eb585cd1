#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rgbtvg/attributes.hpp"
#include "rgbtvg/geometry.hpp"

namespace rgbtvg {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GroundingRecord {
  std::string id;
  std::string rgb_path;
  std::string tir_path;
  ImageDims dims;
  std::string category;
  PixelBox box{0, 0, 1, 1};
  std::string expression;
  SceneType scene = SceneType::UB;
  Weather weather = Weather::SY;
  Illumination illumination = Illumination::NL;
  OcclusionLevel occlusion{0};
  SizeClass size = SizeClass::NS;
  Source source = Source::RefFLIR;
  Split split = Split::train;

  // Throws ManifestError naming the violated invariant.
  void validate() const;
};

struct ManifestProvenance {
  std::map<std::string, std::size_t> source_counts;
  std::string generated_at;
  std::string generator;
};

/// Ordered, immutable-after-load set of records. Ids are unique.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  explicit DatasetManifest(std::vector<GroundingRecord> records, ManifestProvenance provenance = {});

  const std::vector<GroundingRecord>& records() const { return records_; }
  const ManifestProvenance& provenance() const { return provenance_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const GroundingRecord& at(const std::string& id) const;
  // Directory against which relative image paths resolve.
  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }
  std::filesystem::path resolve(const std::string& path) const;

  std::vector<const GroundingRecord*> split(Split s) const;

 private:
  std::vector<GroundingRecord> records_;
  std::map<std::string, std::size_t> index_;
  ManifestProvenance provenance_;
  std::filesystem::path base_dir_;
};

// One record per line. Field order is fixed so re-serialization is byte-stable.
std::string record_to_json_line(const GroundingRecord& r);
GroundingRecord record_from_json_line(const std::string& line);
std::string manifest_to_jsonl(const DatasetManifest& m);
DatasetManifest manifest_from_jsonl(const std::string& text);

// Writes <path> and the provenance sidecar <path>.meta.json through a temporary
// file and rename, so a failed write never leaves a partial manifest.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

using IdSet = std::set<std::string>;

/// test, testA, testB, testC over records whose split is test.
std::map<std::string, IdSet> assign_eval_subsets(const DatasetManifest& m);
inline const std::vector<std::string> kEvalSubsets = {"test", "testA", "testB", "testC"};

enum class Axis { scene, weather, illumination, size, occlusion };
Axis axis_from_string(std::string_view s);
std::string_view axis_name(Axis a);
inline constexpr std::array<Axis, 5> kAllAxes = {Axis::scene, Axis::weather, Axis::illumination, Axis::size,
                                                 Axis::occlusion};
/// Every value code of an axis, in code order.
std::vector<std::string> axis_values(Axis a);
std::string axis_value(const GroundingRecord& r, Axis a);

/// Disjoint, exhaustive grouping; every value of the axis is present, possibly empty.
std::map<std::string, IdSet> group_by_attribute(const DatasetManifest& m, Axis axis);
std::map<std::string, IdSet> group_by_attribute(std::span<const GroundingRecord* const> records, Axis axis);

struct CrossTab {
  Axis row_axis, col_axis;
  std::vector<std::string> row_labels, col_labels;
  std::vector<std::vector<std::size_t>> counts;
  std::size_t total = 0;

  double percent(std::size_t r, std::size_t c) const;
  std::vector<std::size_t> row_marginals() const;
  std::vector<std::size_t> col_marginals() const;
};

CrossTab cross_tab(const DatasetManifest& m, Axis rows, Axis cols);
/// count / total as a percentage rounded half-away-from-zero to two decimals.
double percent_2dp(std::size_t count, std::size_t total);

/// Stratified sample (by source x illumination) exported for human review.
std::vector<std::string> stratified_review_sample(const DatasetManifest& m, std::size_t per_stratum,
                                                  std::uint64_t seed);

}  // namespace rgbtvg
