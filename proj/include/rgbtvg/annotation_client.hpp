#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgbtvg/prompts.hpp"

namespace rgbtvg {

class AnnotationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AnnotationRequest {
  std::string instance_id;
  PromptKind kind = PromptKind::lighting;
  std::string image_path;  // local file, or an http(s) URL passed through as-is
  std::string prompt;
};

/// Sends one rendered prompt with its image and returns the raw response text.
/// Implementations must be safe to call from several workers at once.
class AnnotationClient {
 public:
  virtual ~AnnotationClient() = default;
  virtual std::string send(const AnnotationRequest& request) = 0;
};

/// Replays canned responses from a fixture of the form
///   { "<instance id>": { "<prompt kind>": "text" | ["first", "second", ...] } }
/// A list is replayed call by call; its last entry repeats once exhausted.
class StubAnnotationClient final : public AnnotationClient {
 public:
  explicit StubAnnotationClient(std::map<std::string, std::map<std::string, std::vector<std::string>>> responses);
  static StubAnnotationClient from_json(const std::string& text);
  static StubAnnotationClient from_file(const std::filesystem::path& path);

  std::string send(const AnnotationRequest& request) override;
  std::size_t calls() const;

 private:
  std::map<std::string, std::map<std::string, std::vector<std::string>>> responses_;
  std::map<std::pair<std::string, std::string>, std::size_t> cursor_;
  std::size_t calls_ = 0;
  mutable std::mutex mu_;
};

struct HttpClientConfig {
  std::string url;  // scheme://host[:port]/path
  std::string token;
  std::chrono::seconds timeout{60};

  /// RGBTVG_ANNOT_URL (required), RGBTVG_ANNOT_TOKEN, RGBTVG_ANNOT_TIMEOUT_S.
  static HttpClientConfig from_env();
};

/// POSTs {"image": <base64 or URL>, "prompt": <text>} as JSON; the response
/// body is returned untouched. Non-2xx statuses and transport failures throw.
class HttpAnnotationClient final : public AnnotationClient {
 public:
  explicit HttpAnnotationClient(HttpClientConfig cfg);
  std::string send(const AnnotationRequest& request) override;
  static std::string request_body(const AnnotationRequest& request);

 private:
  HttpClientConfig cfg_;
  std::string scheme_host_port_;
  std::string path_;
};

std::string base64_encode(std::string_view bytes);

}  // namespace rgbtvg
