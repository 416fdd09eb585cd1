#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "rgbtvg/attributes.hpp"
#include "rgbtvg/geometry.hpp"

namespace rgbtvg {

enum class PromptKind { scene_weather, lighting, object_expression, occlusion };
inline constexpr std::array<PromptKind, 4> kAllPromptKinds = {PromptKind::scene_weather, PromptKind::lighting,
                                                               PromptKind::object_expression, PromptKind::occlusion};

std::string_view prompt_kind_name(PromptKind k);
PromptKind prompt_kind_from_name(std::string_view s);

class PromptError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PromptBindings {
  std::optional<std::string> category;
  std::optional<PixelBox> bbox;
};

/// The unbound template exactly as the annotator model receives it.
std::string_view prompt_template(PromptKind kind);

/// object_expression needs category and bbox ([x, y, w, h]); occlusion needs
/// bbox (rendered as corners). The image-level prompts take no bindings.
std::string render_prompt(PromptKind kind, const PromptBindings& bindings = {});

struct SceneWeather {
  SceneType scene;
  Weather weather;
  bool operator==(const SceneWeather&) const = default;
};

using Annotation = std::variant<SceneWeather, Illumination, std::string, OcclusionLevel>;

/// Strict parse: surrounding whitespace is tolerated, anything else that does
/// not match the code table throws ParseError.
Annotation parse_response(PromptKind kind, std::string_view raw);

/// Shortest round-trip formatting used for bbox substitution ("12", "3.5").
std::string format_coord(double v);

}  // namespace rgbtvg
