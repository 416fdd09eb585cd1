#include "rgbtvg/toml.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

namespace rgbtvg {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw TomlError("line " + std::to_string(line) + ": " + msg);
}

std::string type_name(const TomlValue& v) {
  switch (v.v.index()) {
    case 0: return "boolean";
    case 1: return "integer";
    case 2: return "float";
    case 3: return "string";
    default: return "array";
  }
}

[[noreturn]] void wrong_type(const TomlValue& v, const std::string& key, const char* want) {
  fail(v.line, "'" + key + "' must be " + want + ", got " + type_name(v));
}

bool is_bare(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  void run(std::map<std::string, TomlValue>& values, std::set<std::string>& tables) {
    std::string table;
    while (true) {
      skip_ws_comments_newlines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        skip_inline_ws();
        table = dotted_key();
        skip_inline_ws();
        expect(']');
        if (!tables.insert(table).second) fail(line_, "table [" + table + "] defined twice");
      } else {
        const int key_line = line_;
        std::string key = dotted_key();
        skip_inline_ws();
        expect('=');
        skip_inline_ws();
        TomlValue v = value();
        v.line = key_line;
        const std::string full = table.empty() ? key : table + "." + key;
        if (!values.emplace(full, std::move(v)).second) fail(key_line, "key '" + full + "' defined twice");
      }
      end_of_line();
    }
  }

 private:
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  void expect(char c) {
    if (peek() != c) fail(line_, std::string("expected '") + c + "'");
    ++pos_;
  }
  void skip_inline_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }
  void skip_ws_comments_newlines() {
    while (!eof()) {
      skip_inline_ws();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        ++pos_;
        ++line_;
      } else {
        break;
      }
    }
  }
  void end_of_line() {
    skip_inline_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (!eof() && peek() != '\n') fail(line_, "unexpected trailing characters");
  }
  std::string bare_key() {
    const std::size_t start = pos_;
    while (!eof() && is_bare(peek())) ++pos_;
    if (pos_ == start) fail(line_, "expected a key");
    return s_.substr(start, pos_ - start);
  }
  std::string dotted_key() {
    std::string key = bare_key();
    while (true) {
      skip_inline_ws();
      if (peek() != '.') break;
      ++pos_;
      skip_inline_ws();
      key += "." + bare_key();
    }
    return key;
  }
  TomlValue value() {
    const char c = peek();
    if (c == '"') return {string_value(), line_};
    if (c == '[') return {array_value(), line_};
    if (s_.compare(pos_, 4, "true") == 0 && (pos_ + 4 >= s_.size() || !is_bare(s_[pos_ + 4]))) {
      pos_ += 4;
      return {true, line_};
    }
    if (s_.compare(pos_, 5, "false") == 0 && (pos_ + 5 >= s_.size() || !is_bare(s_[pos_ + 5]))) {
      pos_ += 5;
      return {false, line_};
    }
    return number();
  }
  std::string string_value() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail(line_, "unterminated string");
      char c = s_[pos_++];
      if (c == '"') break;
      if (c == '\\') {
        if (eof()) fail(line_, "unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          default: fail(line_, std::string("unsupported escape \\") + e);
        }
      } else {
        out += c;
      }
    }
    return out;
  }
  std::vector<TomlValue> array_value() {
    expect('[');
    std::vector<TomlValue> out;
    while (true) {
      skip_ws_comments_newlines();
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      const int l = line_;
      TomlValue v = value();
      v.line = l;
      out.push_back(std::move(v));
      skip_ws_comments_newlines();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws_comments_newlines();
      expect(']');
      return out;
    }
  }
  TomlValue number() {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_'))
      ++pos_;
    std::string tok;
    for (char c : s_.substr(start, pos_ - start))
      if (c != '_') tok += c;
    if (tok.empty()) fail(line_, "expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok.find("inf") != std::string::npos || tok.find("nan") != std::string::npos;
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* e = tok.data() + tok.size();
    if (is_float) {
      double d = 0;
      auto [p, ec] = std::from_chars(b, e, d);
      if (ec != std::errc() || p != e) fail(line_, "invalid number '" + tok + "'");
      return {d, line_};
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(b, e, i);
    if (ec != std::errc() || p != e) fail(line_, "invalid value '" + tok + "'");
    return {i, line_};
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

}  // namespace

bool TomlValue::as_bool(const std::string& key) const {
  if (auto* b = std::get_if<bool>(&v)) return *b;
  wrong_type(*this, key, "a boolean");
}

std::int64_t TomlValue::as_int(const std::string& key) const {
  if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
  wrong_type(*this, key, "an integer");
}

double TomlValue::as_double(const std::string& key) const {
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  wrong_type(*this, key, "a number");
}

const std::string& TomlValue::as_string(const std::string& key) const {
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  wrong_type(*this, key, "a string");
}

const std::vector<TomlValue>& TomlValue::as_array(const std::string& key) const {
  if (auto* a = std::get_if<std::vector<TomlValue>>(&v)) return *a;
  wrong_type(*this, key, "an array");
}

TomlDocument TomlDocument::parse(const std::string& text) {
  TomlDocument doc;
  Parser(text).run(doc.values_, doc.tables_);
  return doc;
}

const TomlValue* TomlDocument::find(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string toml_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string toml_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, p);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

}  // namespace rgbtvg
