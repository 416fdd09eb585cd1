#pragma once

// The grounding network: frozen towers with per-modality adapters,
// language-aware refinement between encoder layers, the fused
// [visual; text; Reg] sequence, a vision-language transformer and a box head.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rgbtvg/ama.hpp"
#include "rgbtvg/backbone.hpp"
#include "rgbtvg/geometry.hpp"
#include "rgbtvg/lavs.hpp"

namespace rgbtvg {

enum class ModalityMode : std::uint8_t { RGB = 0, TIR, RGBT };
std::string_view modality_mode_name(ModalityMode m);
ModalityMode modality_mode_from_name(std::string_view s);

struct VlConfig {
  int layers = 2;
  int heads = 4;
  int dim = 32;  // grounding-space width
  int mlp_ratio = 4;
};

struct LossWeights {
  double l1 = 5.0;
  double giou = 2.0;
};

struct ModelConfig {
  EncoderConfig encoder;
  AmaConfig ama;
  LavsConfig lavs;
  ModalityMode mode = ModalityMode::RGBT;
  bool use_ama = true;
  bool use_lavs = true;
  VlConfig vl;
  std::vector<int> head_hidden = {32};
  LossWeights loss;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the violated rule.
  void validate() const;
  bool uses_rgb() const { return mode != ModalityMode::TIR; }
  bool uses_tir() const { return mode != ModalityMode::RGB; }
  int d_ground() const { return vl.dim; }
};

struct ForwardResult {
  ag::Var box;  // [1 x 4] (cx, cy, w, h) after the sigmoid
  ag::Var reg;  // final embedding of the regression token
  std::size_t sequence_length = 0;
  std::vector<ag::Var> lavs_attention;  // per refined layer: rgb, tir
};

struct Prediction {
  NormBox box{0.5, 0.5, 0.5, 0.5};
  std::vector<Matrix> attention;
};

class VgNet {
 public:
  explicit VgNet(ModelConfig cfg);
  VgNet(const VgNet&) = delete;
  VgNet& operator=(const VgNet&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const FrozenEncoder& encoder() const { return *encoder_; }
  std::uint64_t frozen_checksum() const { return encoder_->checksum(); }

  /// Images must already match the encoder resolution. Streams the mode does
  /// not use are never read and may be null.
  ForwardResult forward(ag::Tape& t, const Image* rgb, const Image* tir, std::string_view expression) const;
  /// Same, with precomputed final-layer text features.
  ForwardResult forward(ag::Tape& t, const Image* rgb, const Image* tir, const Matrix& text_features) const;
  Prediction predict(const Image* rgb, const Image* tir, std::string_view expression, bool keep_attention = false) const;

  /// MLP on the regression token embedding followed by a sigmoid.
  ag::Var regression_head(ag::Tape& t, ag::Var reg) const;

  /// Parameters the configured mode actually uses, in a fixed order.
  std::vector<ag::Parameter*> trainable_parameters() const;
  std::size_t trainable_parameter_count() const;
  const AdapterSet* adapters(Modality m) const;

  WeightMap state() const;
  void load_state(const WeightMap& weights);
  std::uint64_t state_checksum() const { return weights_checksum(state()); }

 private:
  ModelConfig cfg_;
  std::unique_ptr<FrozenEncoder> encoder_;
  std::unique_ptr<AdapterSet> rgb_adapters_;
  std::unique_ptr<AdapterSet> tir_adapters_;
  std::unique_ptr<ParamStore> store_;

  struct LavsLayer {
    int layer;
    ag::Parameter *q_s, *k_v, *k_t, *v_v, *v_t;
  };
  std::vector<LavsLayer> lavs_layers_;
  ag::Parameter *ca_q_ = nullptr, *ca_k_ = nullptr, *ca_v_ = nullptr, *ca_o_ = nullptr;
  LinearParams proj_s_, proj_v_, proj_t_;
  ag::Parameter* reg_token_ = nullptr;
  ag::Parameter* vl_pos_ = nullptr;
  std::vector<BlockParams> vl_blocks_;
  ag::Parameter *vl_ln_g_ = nullptr, *vl_ln_b_ = nullptr;
  std::vector<LinearParams> head_;
};

/// L1 over the four center-form components plus (1 - GIoU) on the corner form.
ag::Var grounding_loss(ag::Var pred, const NormBox& gt, const LossWeights& w);
double grounding_loss(const NormBox& pred, const NormBox& gt, const LossWeights& w);

/// GIoU of two normalized center-form boxes, differentiable in `pred`.
ag::Var giou_var(ag::Var pred, const NormBox& gt);

NormBox to_norm_box(const Matrix& box_row);

}  // namespace rgbtvg
