#include "rgbtvg/annotation_client.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

namespace rgbtvg {

StubAnnotationClient::StubAnnotationClient(
    std::map<std::string, std::map<std::string, std::vector<std::string>>> responses)
    : responses_(std::move(responses)) {}

StubAnnotationClient StubAnnotationClient::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw AnnotationError(std::string("fixture is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw AnnotationError("fixture must be an object keyed by instance id");
  std::map<std::string, std::map<std::string, std::vector<std::string>>> out;
  for (const auto& [id, kinds] : j.items()) {
    if (!kinds.is_object()) throw AnnotationError("fixture entry '" + id + "' must be an object");
    for (const auto& [kind, value] : kinds.items()) {
      prompt_kind_from_name(kind);
      auto& seq = out[id][kind];
      if (value.is_string()) {
        seq.push_back(value.get<std::string>());
      } else if (value.is_array() && !value.empty()) {
        for (const auto& v : value) seq.push_back(v.get<std::string>());
      } else {
        throw AnnotationError("fixture '" + id + "/" + kind + "' must be a string or non-empty list of strings");
      }
    }
  }
  return StubAnnotationClient(std::move(out));
}

StubAnnotationClient StubAnnotationClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AnnotationError("cannot open fixture " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string StubAnnotationClient::send(const AnnotationRequest& request) {
  const std::string kind(prompt_kind_name(request.kind));
  std::lock_guard lock(mu_);
  ++calls_;
  auto it = responses_.find(request.instance_id);
  if (it == responses_.end()) throw AnnotationError("no canned responses for instance '" + request.instance_id + "'");
  auto kt = it->second.find(kind);
  if (kt == it->second.end())
    throw AnnotationError("no canned '" + kind + "' response for instance '" + request.instance_id + "'");
  std::size_t& pos = cursor_[{request.instance_id, kind}];
  const auto& seq = kt->second;
  const std::string& out = seq[std::min(pos, seq.size() - 1)];
  ++pos;
  return out;
}

std::size_t StubAnnotationClient::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

HttpClientConfig HttpClientConfig::from_env() {
  HttpClientConfig cfg;
  const char* url = std::getenv("RGBTVG_ANNOT_URL");
  if (!url || !*url) throw AnnotationError("RGBTVG_ANNOT_URL is not set");
  cfg.url = url;
  if (const char* tok = std::getenv("RGBTVG_ANNOT_TOKEN")) cfg.token = tok;
  if (const char* t = std::getenv("RGBTVG_ANNOT_TIMEOUT_S"); t && *t) {
    char* end = nullptr;
    const long v = std::strtol(t, &end, 10);
    if (*end != '\0' || v <= 0) throw AnnotationError("RGBTVG_ANNOT_TIMEOUT_S must be a positive integer");
    cfg.timeout = std::chrono::seconds(v);
  }
  return cfg;
}

HttpAnnotationClient::HttpAnnotationClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {
  const auto scheme_end = cfg_.url.find("://");
  if (scheme_end == std::string::npos) throw AnnotationError("annotation URL needs a scheme: " + cfg_.url);
  const auto path_start = cfg_.url.find('/', scheme_end + 3);
  scheme_host_port_ = cfg_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (cfg_.url.rfind("https://", 0) == 0) throw AnnotationError("built without TLS support; use an http:// endpoint");
#endif
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string HttpAnnotationClient::request_body(const AnnotationRequest& request) {
  nlohmann::ordered_json body;
  const bool is_url = request.image_path.rfind("http://", 0) == 0 || request.image_path.rfind("https://", 0) == 0;
  if (is_url) {
    body["image"] = request.image_path;
  } else {
    std::ifstream in(request.image_path, std::ios::binary);
    if (!in) throw AnnotationError("cannot read image " + request.image_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    body["image"] = base64_encode(ss.str());
  }
  body["prompt"] = request.prompt;
  return body.dump();
}

std::string HttpAnnotationClient::send(const AnnotationRequest& request) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  client.set_write_timeout(cfg_.timeout);
  httplib::Headers headers;
  if (!cfg_.token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.token);
  auto res = client.Post(path_, headers, request_body(request), "application/json");
  if (!res) throw AnnotationError("annotation request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw AnnotationError("annotation service returned HTTP " + std::to_string(res->status));
  return res->body;
}

}  // namespace rgbtvg
