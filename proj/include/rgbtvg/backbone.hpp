#pragma once

// Frozen dual-tower encoder: one vision tower shared by both visual
// modalities and one text tower. Weights are drawn from a seeded generator at
// construction and never change afterwards.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rgbtvg/autograd.hpp"
#include "rgbtvg/image.hpp"
#include "rgbtvg/nn.hpp"

namespace rgbtvg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EncoderConfig {
  int num_layers = 2;
  int dim = 32;
  int num_heads = 4;
  int patch_size = 16;
  int image_size = 64;
  int text_max_len = 16;
  int mlp_ratio = 4;
  std::uint64_t seed = 0;

  void validate() const;
  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  // Patches plus the class token.
  int num_visual_tokens() const { return num_patches() + 1; }
  int patch_dim() const { return 3 * patch_size * patch_size; }
};

enum class TokenRole { visual_rgb, visual_tir, text };

struct TokenSequence {
  Matrix data;  // [num_tokens x dim]
  TokenRole role = TokenRole::text;

  std::size_t num_tokens() const { return data.rows(); }
  std::size_t dim() const { return data.cols(); }
};

struct Tokenized {
  std::vector<int> ids;
  bool truncated = false;
};

/// Lowercasing whitespace tokenizer over a fixed vocabulary; unknown words
/// fall into hashed buckets. Sequences are wrapped in begin/end markers.
class Tokenizer {
 public:
  static constexpr int kBegin = 0;
  static constexpr int kEnd = 1;
  static constexpr int kOovBuckets = 64;

  explicit Tokenizer(int max_len);
  Tokenized encode(std::string_view text) const;
  int vocab_size() const;
  int max_len() const { return max_len_; }
  static const std::vector<std::string>& vocabulary();

 private:
  int word_id(std::string_view word) const;
  int max_len_;
};

class FrozenEncoder {
 public:
  explicit FrozenEncoder(EncoderConfig cfg);
  FrozenEncoder(const FrozenEncoder&) = delete;
  FrozenEncoder& operator=(const FrozenEncoder&) = delete;

  const EncoderConfig& config() const { return cfg_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  /// Image (1 or 3 channels, image_size square) to [num_patches x patch_dim].
  Matrix patchify(const Image& img) const;
  /// Patch embedding, class token, positions and the input norm.
  ag::Var embed_image(ag::Tape& t, const Image& img) const;
  TokenSequence embed_image(const Image& img, TokenRole role) const;

  /// One pre-norm block of the vision tower; `layer` counts from 1.
  ag::Var vision_layer(ag::Tape& t, int layer, ag::Var x, const LayerAdapters* adapters = nullptr) const;
  TokenSequence vision_layer(int layer, const TokenSequence& in, const LayerAdapters* adapters = nullptr) const;

  /// Final-layer text features [tokens x dim]. Over-long input is truncated.
  Matrix encode_text_features(std::string_view expression, bool* truncated = nullptr) const;

  const ag::Parameter& attention_weight(int layer, Projection p) const;
  WeightMap weights() const { return store_.snapshot(); }
  std::uint64_t checksum() const { return weights_checksum(weights()); }

 private:
  void check_layer(int layer) const;

  EncoderConfig cfg_;
  Tokenizer tokenizer_;
  ParamStore store_;
  std::vector<BlockParams> vision_blocks_;
  std::vector<BlockParams> text_blocks_;
};

std::unique_ptr<FrozenEncoder> build_toy_encoder(const EncoderConfig& cfg);

struct TextProjection {
  Matrix weight;  // [d_text x d_ground]
  Matrix bias;    // [1 x d_ground]
};

/// Returns (F_s, T_s): final text features and their token-wise projection.
std::pair<TokenSequence, TokenSequence> encode_text(std::string_view expression, const FrozenEncoder& encoder,
                                                    const TextProjection& projection);

}  // namespace rgbtvg
