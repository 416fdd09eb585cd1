#include "rgbtvg/backbone.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <iostream>

namespace rgbtvg {

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("encoder.num_layers must be >= 1");
  if (dim < 2) throw ConfigError("encoder.dim must be >= 2");
  if (num_heads < 1 || dim % num_heads != 0) throw ConfigError("encoder.dim must be divisible by encoder.num_heads");
  if (patch_size < 1) throw ConfigError("encoder.patch_size must be >= 1");
  if (image_size < patch_size || image_size % patch_size != 0)
    throw ConfigError("encoder.image_size must be a positive multiple of encoder.patch_size");
  if (text_max_len < 3) throw ConfigError("encoder.text_max_len must be >= 3");
  if (mlp_ratio < 1) throw ConfigError("encoder.mlp_ratio must be >= 1");
}

// ---- tokenizer --------------------------------------------------------------

Tokenizer::Tokenizer(int max_len) : max_len_(max_len) {}

const std::vector<std::string>& Tokenizer::vocabulary() {
  static const std::vector<std::string> words = {
      "the",    "a",        "an",     "of",      "to",      "on",     "in",      "at",      "near",   "next",
      "left",   "right",    "above",  "below",   "behind",  "front",  "top",     "bottom",  "middle", "center",
      "side",   "red",      "green",  "blue",    "yellow",  "white",  "black",   "gray",    "orange", "purple",
      "cyan",   "magenta",  "square", "slab",    "pillar",  "post",   "sign",    "wall",    "car",    "person",
      "people", "bus",      "truck",  "bike",    "bicycle", "motorcycle", "pedestrian", "man", "woman", "small",
      "large",  "big",      "tall",   "short",   "far",     "close",  "road",    "street",  "building", "tree",
      "light",  "with",     "and",    "is",      "who",     "that",   "walking", "standing", "parked", "crossing"};
  return words;
}

int Tokenizer::vocab_size() const { return 2 + static_cast<int>(vocabulary().size()) + kOovBuckets; }

int Tokenizer::word_id(std::string_view word) const {
  const auto& vocab = vocabulary();
  if (auto it = std::find(vocab.begin(), vocab.end(), word); it != vocab.end())
    return 2 + static_cast<int>(it - vocab.begin());
  return 2 + static_cast<int>(vocab.size()) + static_cast<int>(fnv1a(word) % kOovBuckets);
}

Tokenized Tokenizer::encode(std::string_view text) const {
  Tokenized out;
  out.ids.push_back(kBegin);
  std::string word;
  auto flush = [&] {
    // Strip surrounding punctuation; inner characters are kept.
    auto b = word.find_first_not_of(".,;:!?\"'()");
    auto e = word.find_last_not_of(".,;:!?\"'()");
    if (b != std::string::npos) {
      if (static_cast<int>(out.ids.size()) < max_len_ - 1) out.ids.push_back(word_id(word.substr(b, e - b + 1)));
      else out.truncated = true;
    }
    word.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) flush();
    else word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  flush();
  out.ids.push_back(kEnd);
  return out;
}

// ---- encoder ----------------------------------------------------------------

FrozenEncoder::FrozenEncoder(EncoderConfig cfg) : cfg_(cfg), tokenizer_(cfg.text_max_len) {
  cfg_.validate();
  const auto d = static_cast<std::size_t>(cfg_.dim);
  const int hidden = cfg_.dim * cfg_.mlp_ratio;
  const std::uint64_t seed = cfg_.seed;
  const double wstd = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));
  // Residual branches are damped so the untrained tower keeps most of its input signal.
  const BlockInit init{wstd, 0.5 * wstd, wstd};

  store_.add_normal("vision.patch.w", static_cast<std::size_t>(cfg_.patch_dim()), d,
                    1.0 / std::sqrt(static_cast<double>(cfg_.patch_dim())), seed, false);
  store_.add_constant("vision.patch.b", 1, d, 0.0, false);
  store_.add_normal("vision.cls", 1, d, 0.5, seed, false);
  store_.add_normal("vision.pos", static_cast<std::size_t>(cfg_.num_visual_tokens()), d, 0.1, seed, false);
  store_.add_constant("vision.ln_pre.g", 1, d, 1.0, false);
  store_.add_constant("vision.ln_pre.b", 1, d, 0.0, false);
  for (int l = 1; l <= cfg_.num_layers; ++l)
    vision_blocks_.push_back(make_block(store_, "vision.l" + std::to_string(l), cfg_.dim, hidden, init, seed, false));

  store_.add_normal("text.tok_emb", static_cast<std::size_t>(tokenizer_.vocab_size()), d, 1.0, seed, false);
  store_.add_normal("text.pos", static_cast<std::size_t>(cfg_.text_max_len), d, 0.1, seed, false);
  for (int l = 1; l <= cfg_.num_layers; ++l)
    text_blocks_.push_back(make_block(store_, "text.l" + std::to_string(l), cfg_.dim, hidden, init, seed, false));
  store_.add_constant("text.ln_final.g", 1, d, 1.0, false);
  store_.add_constant("text.ln_final.b", 1, d, 0.0, false);
}

std::unique_ptr<FrozenEncoder> build_toy_encoder(const EncoderConfig& cfg) {
  return std::make_unique<FrozenEncoder>(cfg);
}

Matrix FrozenEncoder::patchify(const Image& img) const {
  const int s = cfg_.image_size;
  if (img.height() != s || img.width() != s)
    throw std::invalid_argument("image is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                                ", encoder expects " + std::to_string(s) + "x" + std::to_string(s));
  if (img.channels() != 1 && img.channels() != 3) throw std::invalid_argument("image must have 1 or 3 channels");
  const int p = cfg_.patch_size;
  const int g = cfg_.grid();
  Matrix out(static_cast<std::size_t>(cfg_.num_patches()), static_cast<std::size_t>(cfg_.patch_dim()));
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      auto row = out.row(static_cast<std::size_t>(gy * g + gx));
      std::size_t k = 0;
      for (int c = 0; c < 3; ++c) {
        const int src_c = img.channels() == 1 ? 0 : c;
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x) row[k++] = 2.0 * (img.at(src_c, gy * p + y, gx * p + x) - 0.5);
      }
    }
  return out;
}

ag::Var FrozenEncoder::embed_image(ag::Tape& t, const Image& img) const {
  // Every input here is frozen, so the stem is evaluated eagerly.
  ag::Tape scratch(false);
  ag::Var patches = ag::linear(scratch.constant(patchify(img)), scratch.param(std::as_const(store_).at("vision.patch.w")),
                               scratch.param(std::as_const(store_).at("vision.patch.b")));
  ag::Var cls = scratch.param(std::as_const(store_).at("vision.cls"));
  std::array<ag::Var, 2> parts{cls, patches};
  ag::Var tokens = ag::add(ag::concat_rows(parts), scratch.param(std::as_const(store_).at("vision.pos")));
  ag::Var normed = ag::layer_norm_rows(tokens, scratch.param(std::as_const(store_).at("vision.ln_pre.g")),
                                       scratch.param(std::as_const(store_).at("vision.ln_pre.b")));
  return t.constant(normed.value());
}

TokenSequence FrozenEncoder::embed_image(const Image& img, TokenRole role) const {
  ag::Tape t(false);
  return {embed_image(t, img).value(), role};
}

void FrozenEncoder::check_layer(int layer) const {
  if (layer < 1 || layer > cfg_.num_layers)
    throw std::out_of_range("layer index " + std::to_string(layer) + " outside 1.." + std::to_string(cfg_.num_layers));
}

ag::Var FrozenEncoder::vision_layer(ag::Tape& t, int layer, ag::Var x, const LayerAdapters* adapters) const {
  check_layer(layer);
  if (x.cols() != static_cast<std::size_t>(cfg_.dim))
    throw std::invalid_argument("vision_layer: token width " + std::to_string(x.cols()) + " != encoder dim " +
                                std::to_string(cfg_.dim));
  return block_forward(t, x, vision_blocks_[static_cast<std::size_t>(layer - 1)], cfg_.num_heads, adapters);
}

TokenSequence FrozenEncoder::vision_layer(int layer, const TokenSequence& in, const LayerAdapters* adapters) const {
  ag::Tape t(false);
  return {vision_layer(t, layer, t.constant_ref(in.data), adapters).value(), in.role};
}

Matrix FrozenEncoder::encode_text_features(std::string_view expression, bool* truncated) const {
  if (expression.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw std::invalid_argument("referring expression is empty");
  const Tokenized tok = tokenizer_.encode(expression);
  if (truncated) *truncated = tok.truncated;
  const auto d = static_cast<std::size_t>(cfg_.dim);
  const Matrix& emb = store_.at("text.tok_emb").value();
  const Matrix& pos = store_.at("text.pos").value();
  Matrix x(tok.ids.size(), d);
  for (std::size_t i = 0; i < tok.ids.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = emb(static_cast<std::size_t>(tok.ids[i]), j) + pos(i, j);
  ag::Tape t(false);
  ag::Var h = t.constant(std::move(x));
  for (const auto& block : text_blocks_) h = block_forward(t, h, block, cfg_.num_heads);
  return ag::layer_norm_rows(h, t.param(std::as_const(store_).at("text.ln_final.g")),
                             t.param(std::as_const(store_).at("text.ln_final.b")))
      .value();
}

const ag::Parameter& FrozenEncoder::attention_weight(int layer, Projection p) const {
  check_layer(layer);
  return *vision_blocks_[static_cast<std::size_t>(layer - 1)].attn[static_cast<int>(p)].w;
}

std::pair<TokenSequence, TokenSequence> encode_text(std::string_view expression, const FrozenEncoder& encoder,
                                                    const TextProjection& projection) {
  bool truncated = false;
  Matrix fs = encoder.encode_text_features(expression, &truncated);
  if (truncated) {
    static std::atomic<int> warned{0};
    if (warned++ < 5)
      std::clog << "warning: expression longer than " << encoder.config().text_max_len
                << " tokens was truncated: \"" << expression << "\"\n";
  }
  if (projection.weight.rows() != fs.cols() || projection.bias.rows() != 1 ||
      projection.bias.cols() != projection.weight.cols())
    throw std::invalid_argument("text projection shape does not match encoder width");
  ag::Tape t(false);
  ag::Var ts = ag::linear(t.constant_ref(fs), t.constant_ref(projection.weight), t.constant_ref(projection.bias));
  Matrix ts_value = ts.value();
  return {TokenSequence{std::move(fs), TokenRole::text}, TokenSequence{std::move(ts_value), TokenRole::text}};
}

}  // namespace rgbtvg
