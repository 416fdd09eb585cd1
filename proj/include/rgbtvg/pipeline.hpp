#pragma once

// Benchmark construction: filter raw detection records, keep the largest
// instance per (image pair, category), annotate it through the four prompts
// and assemble a validated manifest.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rgbtvg/annotation_client.hpp"
#include "rgbtvg/dataset.hpp"

namespace rgbtvg {

struct RawDetectionRecord {
  std::string id;  // image-pair id; instance id is "<id>_<category>"
  std::string rgb_path;
  std::string tir_path;
  ImageDims dims;
  std::string category;
  std::vector<PixelBox> boxes;
  std::optional<double> alignment_offset;
  Source source = Source::RefFLIR;
  Split split = Split::train;

  std::string instance_id() const { return id + "_" + category; }
};

struct FilterConfig {
  double min_area_ratio = 0.0005;
  double min_side_px = 8;
  double max_alignment_offset_px = 10;
  double min_category_share = 0.01;
  std::set<std::string> excluded_categories = {"dog", "lamp"};

  void validate() const;
};

enum class FilterRule { excluded_category, alignment, visibility, category_share };
std::string_view filter_rule_name(FilterRule r);

struct FilterResult {
  std::vector<RawDetectionRecord> kept;
  std::map<FilterRule, std::size_t> rejected;
};

/// Per-record rules run first (exclusion, alignment, visibility of the largest
/// box); category shares are then measured over the survivors. A rejected
/// record is counted under the first rule it fails.
FilterResult filter_records(std::span<const RawDetectionRecord> raw, const FilterConfig& cfg);

/// Largest w*h; ties go to the smaller y, then the smaller x.
PixelBox select_largest_instance(const RawDetectionRecord& record);

struct BuildConfig {
  FilterConfig filter;
  int max_retries = 2;
  int workers = 1;
  std::string generated_at;
};

struct BuildStats {
  std::size_t input = 0;
  std::size_t kept_after_filter = 0;
  std::map<FilterRule, std::size_t> rejected;
  std::size_t annotated = 0;
  std::size_t dropped = 0;
  std::size_t retries = 0;
  std::size_t calls = 0;
  std::map<std::string, std::size_t> failures_by_kind;
};

struct BuildResult {
  DatasetManifest manifest;
  BuildStats stats;
};

BuildResult build_manifest(std::span<const RawDetectionRecord> raw, const BuildConfig& cfg, AnnotationClient& client);

/// Reads <dir>/raw.jsonl; relative image paths resolve against <dir>.
std::vector<RawDetectionRecord> load_raw_corpus(const std::filesystem::path& dir);
RawDetectionRecord raw_record_from_json_line(const std::string& line);

}  // namespace rgbtvg
