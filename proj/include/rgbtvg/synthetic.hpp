#pragma once

// Synthetic paired RGB/TIR grounding corpus. Every scene holds one target,
// one distractor of a different colour and shape, and one gray landmark; the
// expression "the <colour> <shape> <relation> the <landmark>" names exactly
// one object. Boxes are exact by construction and identical in both
// modalities.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgbtvg/dataset.hpp"
#include "rgbtvg/image.hpp"

namespace rgbtvg {

struct SyntheticCorpusSpec {
  std::size_t num_records = 64;
  int image_size = 64;
  std::uint64_t seed = 7;
  std::vector<double> scene_weights = std::vector<double>(kSceneCount, 1.0 / kSceneCount);
  std::vector<double> weather_weights = {0.25, 0.25, 0.25, 0.25};
  std::vector<double> illumination_weights = {0.25, 0.25, 0.25, 0.25};
  std::vector<double> occlusion_weights = {0.5, 0.3, 0.2};  // raw levels 0, 1, 2
  std::vector<double> size_weights = {0.75, 0.25};          // NS, SS
  std::vector<double> source_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::vector<double> split_weights = {0.6, 0.2, 0.2};      // train, val, test

  // Each axis must have the right arity, non-negative weights summing to 1.
  void validate() const;
};

inline const std::array<std::string, 6> kSyntheticColors = {"red", "green", "blue", "yellow", "orange", "purple"};
inline const std::array<std::string, 3> kSyntheticShapes = {"square", "slab", "pillar"};
inline const std::array<std::string, 3> kSyntheticLandmarks = {"post", "sign", "wall"};
inline const std::array<std::string, 4> kSyntheticRelations = {"left of", "right of", "above", "below"};

/// Everything about one record except its pixels.
struct SyntheticScene {
  GroundingRecord record;
  int color = 0, shape = 0;
  int distractor_color = 0, distractor_shape = 0;
  int landmark = 0, relation = 0;
  PixelBox distractor{0, 0, 1, 1};
  PixelBox landmark_box{0, 0, 1, 1};
  std::optional<PixelBox> occluder;
};

/// Deterministic in (spec.seed, index).
SyntheticScene plan_scene(const SyntheticCorpusSpec& spec, std::size_t index);
std::pair<Image, Image> render_scene(const SyntheticScene& scene, std::uint64_t seed);

/// True when `scene`'s relation holds between target and landmark boxes.
bool relation_holds(int relation, const PixelBox& target, const PixelBox& landmark);

/// Writes images/, manifest.jsonl (+ .meta.json), raw.jsonl and
/// stub_annotations.json under `out_dir` and returns the manifest.
DatasetManifest generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::filesystem::path& out_dir);

/// "YYYY-MM-DDTHH:MM:SSZ" from SOURCE_DATE_EPOCH, or the Unix epoch when unset.
std::string reproducible_timestamp();

}  // namespace rgbtvg
