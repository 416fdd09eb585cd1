#include "rgbtvg/prompts.hpp"

#include <charconv>
#include <vector>

#include "prompt_templates.inc"

namespace rgbtvg {

std::string_view prompt_kind_name(PromptKind k) {
  switch (k) {
    case PromptKind::scene_weather: return "scene_weather";
    case PromptKind::lighting: return "lighting";
    case PromptKind::object_expression: return "object_expression";
    case PromptKind::occlusion: return "occlusion";
  }
  return "?";
}

PromptKind prompt_kind_from_name(std::string_view s) {
  for (PromptKind k : kAllPromptKinds)
    if (prompt_kind_name(k) == s) return k;
  throw PromptError("unknown prompt kind '" + std::string(s) + "'");
}

std::string_view prompt_template(PromptKind kind) {
  switch (kind) {
    case PromptKind::scene_weather: return prompts_detail::k_scene_weather;
    case PromptKind::lighting: return prompts_detail::k_lighting;
    case PromptKind::object_expression: return prompts_detail::k_object_expression;
    case PromptKind::occlusion: return prompts_detail::k_occlusion;
  }
  throw PromptError("bad prompt kind");
}

std::string format_coord(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

int parse_code(std::string_view tok, int lo, int hi, PromptKind kind) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(std::string(prompt_kind_name(kind)) + ": not an integer code: '" + std::string(tok) + "'");
  if (v < lo || v > hi)
    throw ParseError(std::string(prompt_kind_name(kind)) + ": code " + std::to_string(v) + " outside [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return v;
}

}  // namespace

std::string render_prompt(PromptKind kind, const PromptBindings& bindings) {
  std::string text(prompt_template(kind));
  switch (kind) {
    case PromptKind::scene_weather:
    case PromptKind::lighting:
      return text;
    case PromptKind::object_expression: {
      if (!bindings.category || bindings.category->empty())
        throw PromptError("object_expression prompt requires a category binding");
      if (!bindings.bbox) throw PromptError("object_expression prompt requires a bbox binding");
      const PixelBox& b = *bindings.bbox;
      const std::string box = format_coord(b.x()) + ", " + format_coord(b.y()) + ", " + format_coord(b.w()) + ", " +
                              format_coord(b.h());
      replace_all(text, "{category_name}", *bindings.category);
      replace_all(text, "{bbox}", box);
      return text;
    }
    case PromptKind::occlusion: {
      if (!bindings.bbox) throw PromptError("occlusion prompt requires a bbox binding");
      const PixelBox& b = *bindings.bbox;
      const std::string box = "[" + format_coord(b.x()) + ", " + format_coord(b.y()) + ", " + format_coord(b.x2()) +
                              ", " + format_coord(b.y2()) + "]";
      replace_all(text, "[x1, y1, x2, y2]", box);
      return text;
    }
  }
  throw PromptError("bad prompt kind");
}

Annotation parse_response(PromptKind kind, std::string_view raw) {
  const std::string_view body = trim(raw);
  const std::string name(prompt_kind_name(kind));
  if (body.empty()) throw ParseError(name + ": empty response");
  if (kind == PromptKind::object_expression) {
    if (body.find('\n') != std::string_view::npos) throw ParseError(name + ": expected a single sentence");
    return std::string(body);
  }
  const auto toks = tokens(body);
  switch (kind) {
    case PromptKind::scene_weather:
      // The template asks for "four numbers" but names two attributes; exactly two codes are accepted.
      if (toks.size() != 2) throw ParseError(name + ": expected 2 codes, got " + std::to_string(toks.size()));
      return SceneWeather{scene_from_int(parse_code(toks[0], 0, kSceneCount - 1, kind)),
                          weather_from_int(parse_code(toks[1], 0, kWeatherCount - 1, kind))};
    case PromptKind::lighting:
      if (toks.size() != 1) throw ParseError(name + ": expected 1 code, got " + std::to_string(toks.size()));
      return illumination_from_int(parse_code(toks[0], 0, kIlluminationCount - 1, kind));
    case PromptKind::occlusion:
      if (toks.size() != 1) throw ParseError(name + ": expected 1 code, got " + std::to_string(toks.size()));
      return OcclusionLevel(parse_code(toks[0], 0, 2, kind));
    default:
      break;
  }
  throw ParseError("bad prompt kind");
}

}  // namespace rgbtvg
