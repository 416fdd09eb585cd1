#include "rgbtvg/lavs.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rgbtvg {

void LavsConfig::validate(int num_layers, int dim) const {
  std::set<int> seen;
  for (int l : layers) {
    if (l < 1 || l > num_layers) throw ConfigError("lavs.layers: layer " + std::to_string(l) + " out of range");
    if (!seen.insert(l).second) throw ConfigError("lavs.layers: layer " + std::to_string(l) + " listed twice");
  }
  if (heads < 1 || dim % heads != 0) throw ConfigError("lavs.heads must divide the encoder dim");
}

bool LavsConfig::applies_to(int layer, int num_layers) const {
  if (layer < 1 || layer > num_layers) return false;
  if (layers.empty()) return true;
  return std::find(layers.begin(), layers.end(), layer) != layers.end();
}

EnhanceResult text_queried_enhance(ag::Var f, ag::Var text, ag::Var wq, ag::Var wk, ag::Var wv) {
  const std::size_t d = f.cols();
  if (text.cols() != d) throw std::invalid_argument("text_queried_enhance: text width differs from visual width");
  if (f.rows() == 0 || text.rows() == 0) throw std::invalid_argument("text_queried_enhance: empty token sequence");
  if (!f.value().all_finite() || !text.value().all_finite())
    throw std::invalid_argument("text_queried_enhance: non-finite input");
  ag::Var q = ag::matmul(text, wq);
  ag::Var k = ag::matmul(f, wk);
  ag::Var v = ag::matmul(f, wv);
  ag::Var a = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d))));
  // A^T (A V) maps the [T x d] attended summary back onto the N visual tokens.
  ag::Var back = ag::matmul_tn(a, ag::matmul(a, v));
  return {ag::add(f, back), a};
}

Matrix text_queried_enhance(const Matrix& f, const Matrix& text, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                            Matrix* attention) {
  ag::Tape t(false);
  auto r = text_queried_enhance(t.constant_ref(f), t.constant_ref(text), t.constant_ref(wq), t.constant_ref(wk),
                                t.constant_ref(wv));
  if (attention) *attention = r.attention.value();
  return r.features.value();
}

RefineResult lavs_refine(ag::Var f_v, ag::Var f_t, ag::Var text, const LavsLayerVars& p) {
  auto rgb = text_queried_enhance(f_v, text, p.q_s, p.k_v, p.v_v);
  auto tir = text_queried_enhance(f_t, text, p.q_s, p.k_t, p.v_t);
  return {rgb.features, tir.features, rgb.attention, tir.attention};
}

ag::Var cross_attention(ag::Var x, ag::Var y, ag::Var wq, ag::Var wk, ag::Var wv, ag::Var wo, int heads) {
  const std::size_t d = wq.cols();
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0)
    throw std::invalid_argument("cross_attention: width not divisible by head count");
  ag::Var q = ag::matmul(x, wq);
  ag::Var k = ag::matmul(y, wk);
  ag::Var v = ag::matmul(y, wv);
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ag::Var> parts;
  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * dh;
    ag::Var qh = heads == 1 ? q : ag::slice_cols(q, off, dh);
    ag::Var kh = heads == 1 ? k : ag::slice_cols(k, off, dh);
    ag::Var vh = heads == 1 ? v : ag::slice_cols(v, off, dh);
    parts.push_back(ag::matmul(ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt)), vh));
  }
  return ag::matmul(heads == 1 ? parts.front() : ag::concat_cols(parts), wo);
}

std::pair<ag::Var, ag::Var> cross_modal_synergy(ag::Var f_v, ag::Var f_t, const SynergyVars& p) {
  if (f_v.rows() != f_t.rows() || f_v.cols() != f_t.cols())
    throw std::invalid_argument("cross_modal_synergy: streams have shapes " + f_v.value().shape_string() + " and " +
                                f_t.value().shape_string());
  ag::Var mixed_v = ag::add(f_v, cross_attention(f_v, f_t, p.ca_q, p.ca_k, p.ca_v, p.ca_o, p.heads));
  ag::Var mixed_t = ag::add(f_t, cross_attention(f_t, f_v, p.ca_q, p.ca_k, p.ca_v, p.ca_o, p.heads));
  return {ag::linear(mixed_v, p.p_v_w, p.p_v_b), ag::linear(mixed_t, p.p_t_w, p.p_t_b)};
}

}  // namespace rgbtvg
