#pragma once

// Attribute vocabularies shared by the dataset model, the annotation
// pipeline and evaluation. Integer values equal the codes the annotation
// prompts ask the model to return.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rgbtvg/geometry.hpp"

namespace rgbtvg {

class AttributeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class SceneType : std::uint8_t { UB = 0, SU, RR, HW, RS, ID, PL, IT, TN, BG, CP, MK, WF };
enum class Weather : std::uint8_t { FY = 0, RY, SY, CY };
enum class Illumination : std::uint8_t { VL = 0, WL, NL, SL };
enum class OcclusionBinary : std::uint8_t { PO = 0, HO };
enum class SizeClass : std::uint8_t { NS = 0, SS };
enum class Source : std::uint8_t { RefFLIR = 0, RefM3FD, RefMFAD };
enum class Split : std::uint8_t { train = 0, val, test };

inline constexpr int kSceneCount = 13;
inline constexpr int kWeatherCount = 4;
inline constexpr int kIlluminationCount = 4;

inline constexpr std::array<std::string_view, kSceneCount> kSceneCodes = {"UB", "SU", "RR", "HW", "RS", "ID", "PL",
                                                                          "IT", "TN", "BG", "CP", "MK", "WF"};
inline constexpr std::array<std::string_view, kSceneCount> kSceneNames = {
    "Urban",   "Suburban", "Rural",  "Highway", "Residential", "Industrial", "Parking",
    "Intersection", "Tunnel", "Bridge", "Campus", "Market", "Waterfront"};
inline constexpr std::array<std::string_view, kWeatherCount> kWeatherCodes = {"FY", "RY", "SY", "CY"};
inline constexpr std::array<std::string_view, kIlluminationCount> kIlluminationCodes = {"VL", "WL", "NL", "SL"};
inline constexpr std::array<std::string_view, 2> kOcclusionCodes = {"PO", "HO"};
inline constexpr std::array<std::string_view, 2> kSizeCodes = {"NS", "SS"};
inline constexpr std::array<std::string_view, 3> kSourceCodes = {"RefFLIR", "RefM3FD", "RefMFAD"};
inline constexpr std::array<std::string_view, 3> kSplitCodes = {"train", "val", "test"};

/// Raw occlusion level 0 (none), 1 (partial), 2 (heavy). Levels 0 and 1 fold into PO.
class OcclusionLevel {
 public:
  explicit OcclusionLevel(int raw);
  int raw() const { return raw_; }
  OcclusionBinary binary() const { return raw_ == 2 ? OcclusionBinary::HO : OcclusionBinary::PO; }
  bool operator==(const OcclusionLevel&) const = default;

 private:
  int raw_;
};

std::string_view code(SceneType v);
std::string_view code(Weather v);
std::string_view code(Illumination v);
std::string_view code(OcclusionBinary v);
std::string_view code(SizeClass v);
std::string_view code(Source v);
std::string_view code(Split v);

SceneType scene_from_code(std::string_view s);
Weather weather_from_code(std::string_view s);
// Accepts "VWL" as an alias of "VL".
Illumination illumination_from_code(std::string_view s);
SizeClass size_from_code(std::string_view s);
Source source_from_code(std::string_view s);
Split split_from_code(std::string_view s);

SceneType scene_from_int(int v);
Weather weather_from_int(int v);
Illumination illumination_from_int(int v);

/// SS when the box covers strictly less than 1% of the image area.
SizeClass classify_size(const PixelBox& box, const ImageDims& dims);
inline constexpr double kSmallSizeRatio = 0.01;

}  // namespace rgbtvg
