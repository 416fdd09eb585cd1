#pragma once

// Language-aware visual synergy. Each visual stream is enhanced by attention
// queried from the text features, F = f + A^T (A V), which keeps the stream's
// shape. The final layer's two streams then attend to each other and are
// projected into the grounding space.

#include <utility>
#include <vector>

#include "rgbtvg/autograd.hpp"
#include "rgbtvg/backbone.hpp"

namespace rgbtvg {

struct LavsConfig {
  std::vector<int> layers;  // empty: after every encoder layer
  int heads = 1;            // cross-attention heads
  bool compute_t_every_layer = false;

  void validate(int num_layers, int dim) const;
  bool applies_to(int layer, int num_layers) const;
};

struct EnhanceResult {
  ag::Var features;   // [N x d]
  ag::Var attention;  // [T x N], rows sum to one
};

/// A = softmax(text Wq (f Wk)^T / sqrt(d)); returns f + A^T (A (f Wv)).
EnhanceResult text_queried_enhance(ag::Var f, ag::Var text, ag::Var wq, ag::Var wk, ag::Var wv);
Matrix text_queried_enhance(const Matrix& f, const Matrix& text, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                            Matrix* attention = nullptr);

/// Per-layer enhancement weights; the text query projection is shared by both streams.
struct LavsLayerVars {
  ag::Var q_s, k_v, k_t, v_v, v_t;
};

struct RefineResult {
  ag::Var rgb, tir;
  ag::Var attention_rgb, attention_tir;
};

RefineResult lavs_refine(ag::Var f_v, ag::Var f_t, ag::Var text, const LavsLayerVars& p);

/// Shared bias-free cross-attention plus one output projection per stream.
struct SynergyVars {
  ag::Var ca_q, ca_k, ca_v, ca_o;
  ag::Var p_v_w, p_v_b, p_t_w, p_t_b;
  int heads = 1;
};

/// Cross-attention with queries from `x` and keys/values from `y`.
ag::Var cross_attention(ag::Var x, ag::Var y, ag::Var wq, ag::Var wk, ag::Var wv, ag::Var wo, int heads);

/// (T_v, T_t) with T_v = P_v(F_v + CA(F_v, F_t)) and symmetrically for T_t.
std::pair<ag::Var, ag::Var> cross_modal_synergy(ag::Var f_v, ag::Var f_t, const SynergyVars& p);

}  // namespace rgbtvg
