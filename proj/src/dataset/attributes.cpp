#include "rgbtvg/attributes.hpp"

#include <algorithm>

namespace rgbtvg {

OcclusionLevel::OcclusionLevel(int raw) : raw_(raw) {
  if (raw < 0 || raw > 2) throw AttributeError("occlusion level must be 0, 1 or 2, got " + std::to_string(raw));
}

namespace {

template <typename E, std::size_t N>
E lookup(const std::array<std::string_view, N>& table, std::string_view s, const char* what) {
  const auto it = std::find(table.begin(), table.end(), s);
  if (it == table.end()) throw AttributeError(std::string("unknown ") + what + " code '" + std::string(s) + "'");
  return static_cast<E>(it - table.begin());
}

template <typename E>
E from_int(int v, int count, const char* what) {
  if (v < 0 || v >= count)
    throw AttributeError(std::string(what) + " code out of range: " + std::to_string(v));
  return static_cast<E>(v);
}

}  // namespace

std::string_view code(SceneType v) { return kSceneCodes.at(static_cast<std::size_t>(v)); }
std::string_view code(Weather v) { return kWeatherCodes.at(static_cast<std::size_t>(v)); }
std::string_view code(Illumination v) { return kIlluminationCodes.at(static_cast<std::size_t>(v)); }
std::string_view code(OcclusionBinary v) { return kOcclusionCodes.at(static_cast<std::size_t>(v)); }
std::string_view code(SizeClass v) { return kSizeCodes.at(static_cast<std::size_t>(v)); }
std::string_view code(Source v) { return kSourceCodes.at(static_cast<std::size_t>(v)); }
std::string_view code(Split v) { return kSplitCodes.at(static_cast<std::size_t>(v)); }

SceneType scene_from_code(std::string_view s) { return lookup<SceneType>(kSceneCodes, s, "scene"); }
Weather weather_from_code(std::string_view s) { return lookup<Weather>(kWeatherCodes, s, "weather"); }
Illumination illumination_from_code(std::string_view s) {
  if (s == "VWL") return Illumination::VL;
  return lookup<Illumination>(kIlluminationCodes, s, "illumination");
}
SizeClass size_from_code(std::string_view s) { return lookup<SizeClass>(kSizeCodes, s, "size"); }
Source source_from_code(std::string_view s) { return lookup<Source>(kSourceCodes, s, "source"); }
Split split_from_code(std::string_view s) { return lookup<Split>(kSplitCodes, s, "split"); }

SceneType scene_from_int(int v) { return from_int<SceneType>(v, kSceneCount, "scene"); }
Weather weather_from_int(int v) { return from_int<Weather>(v, kWeatherCount, "weather"); }
Illumination illumination_from_int(int v) { return from_int<Illumination>(v, kIlluminationCount, "illumination"); }

SizeClass classify_size(const PixelBox& box, const ImageDims& dims) {
  const double image_area = dims.area();
  if (!(image_area > 0.0)) throw AttributeError("classify_size: zero image area");
  return box.area() / image_area < kSmallSizeRatio ? SizeClass::SS : SizeClass::NS;
}

}  // namespace rgbtvg
