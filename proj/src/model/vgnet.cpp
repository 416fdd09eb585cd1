#include "rgbtvg/vgnet.hpp"

#include <cmath>

namespace rgbtvg {

std::string_view modality_mode_name(ModalityMode m) {
  switch (m) {
    case ModalityMode::RGB: return "RGB";
    case ModalityMode::TIR: return "TIR";
    case ModalityMode::RGBT: return "RGBT";
  }
  return "?";
}

ModalityMode modality_mode_from_name(std::string_view s) {
  for (ModalityMode m : {ModalityMode::RGB, ModalityMode::TIR, ModalityMode::RGBT})
    if (modality_mode_name(m) == s) return m;
  throw ConfigError("unknown modality mode '" + std::string(s) + "' (RGB, TIR, RGBT)");
}

void ModelConfig::validate() const {
  encoder.validate();
  if (vl.layers < 1) throw ConfigError("vl.layers must be >= 1");
  if (vl.heads < 1 || vl.dim < 2 || vl.dim % vl.heads != 0) throw ConfigError("vl.dim must be divisible by vl.heads");
  if (vl.mlp_ratio < 1) throw ConfigError("vl.mlp_ratio must be >= 1");
  for (int h : head_hidden)
    if (h < 1) throw ConfigError("model.head_hidden entries must be >= 1");
  if (!std::isfinite(loss.l1) || !std::isfinite(loss.giou) || loss.l1 < 0 || loss.giou < 0 ||
      loss.l1 + loss.giou <= 0)
    throw ConfigError("loss weights must be finite, non-negative and not both zero");
  if (use_lavs && !use_ama)
    throw ConfigError("use_lavs requires use_ama: language-aware synergy is only defined on adapted features");
  if (use_lavs && mode != ModalityMode::RGBT)
    throw ConfigError("use_lavs requires modality mode RGBT: synergy needs both visual streams");
  if (use_ama) ama.validate(encoder.num_layers);
  lavs.validate(encoder.num_layers, encoder.dim);
}

VgNet::VgNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  encoder_ = build_toy_encoder(cfg_.encoder);
  const std::uint64_t seed = cfg_.seed;
  const int n = cfg_.encoder.num_layers;
  if (cfg_.use_ama) {
    if (cfg_.uses_rgb()) rgb_adapters_ = std::make_unique<AdapterSet>(build_adapters(cfg_.ama, *encoder_, Modality::rgb, seed));
    if (cfg_.uses_tir()) tir_adapters_ = std::make_unique<AdapterSet>(build_adapters(cfg_.ama, *encoder_, Modality::tir, seed));
  }

  store_ = std::make_unique<ParamStore>();
  ParamStore& s = *store_;
  const auto d = static_cast<std::size_t>(cfg_.encoder.dim);
  const auto g = static_cast<std::size_t>(cfg_.d_ground());
  const double dstd = 1.0 / std::sqrt(static_cast<double>(d));
  const double gstd = 1.0 / std::sqrt(static_cast<double>(g));

  if (cfg_.use_lavs) {
    for (int l = 1; l <= n; ++l) {
      if (!cfg_.lavs.applies_to(l, n)) continue;
      const std::string p = "lavs.l" + std::to_string(l) + ".";
      lavs_layers_.push_back({l, &s.add_normal(p + "q_s", d, d, dstd, seed, true),
                              &s.add_normal(p + "k_v", d, d, dstd, seed, true),
                              &s.add_normal(p + "k_t", d, d, dstd, seed, true),
                              &s.add_normal(p + "v_v", d, d, 0.02, seed, true),
                              &s.add_normal(p + "v_t", d, d, 0.02, seed, true)});
    }
    ca_q_ = &s.add_normal("synergy.ca.q", d, d, dstd, seed, true);
    ca_k_ = &s.add_normal("synergy.ca.k", d, d, dstd, seed, true);
    ca_v_ = &s.add_normal("synergy.ca.v", d, d, dstd, seed, true);
    ca_o_ = &s.add_normal("synergy.ca.o", d, d, 0.02, seed, true);
  }
  proj_s_ = {&s.add_normal("proj.s.w", d, g, dstd, seed, true), &s.add_constant("proj.s.b", 1, g, 0.0, true)};
  if (cfg_.uses_rgb())
    proj_v_ = {&s.add_normal("proj.v.w", d, g, dstd, seed, true), &s.add_constant("proj.v.b", 1, g, 0.0, true)};
  if (cfg_.uses_tir())
    proj_t_ = {&s.add_normal("proj.t.w", d, g, dstd, seed, true), &s.add_constant("proj.t.b", 1, g, 0.0, true)};

  const auto nv = static_cast<std::size_t>(cfg_.encoder.num_visual_tokens());
  const auto positions = 2 * nv + static_cast<std::size_t>(cfg_.encoder.text_max_len) + 1;
  vl_pos_ = &s.add_normal("vl.pos", positions, g, 0.1, seed, true);
  reg_token_ = &s.add_normal("reg_token", 1, g, 0.02, seed, true);
  const BlockInit vinit{gstd, 0.5 * gstd, gstd};
  for (int l = 1; l <= cfg_.vl.layers; ++l)
    vl_blocks_.push_back(make_block(s, "vl.l" + std::to_string(l), cfg_.vl.dim, cfg_.vl.dim * cfg_.vl.mlp_ratio, vinit,
                                    seed, true));
  vl_ln_g_ = &s.add_constant("vl.ln_f.g", 1, g, 1.0, true);
  vl_ln_b_ = &s.add_constant("vl.ln_f.b", 1, g, 0.0, true);

  std::size_t fan_in = g;
  for (std::size_t i = 0; i < cfg_.head_hidden.size(); ++i) {
    const auto h = static_cast<std::size_t>(cfg_.head_hidden[i]);
    const std::string p = "head." + std::to_string(i);
    head_.push_back({&s.add_normal(p + ".w", fan_in, h, 1.0 / std::sqrt(static_cast<double>(fan_in)), seed, true),
                     &s.add_constant(p + ".b", 1, h, 0.0, true)});
    fan_in = h;
  }
  const std::string p = "head." + std::to_string(cfg_.head_hidden.size());
  head_.push_back({&s.add_normal(p + ".w", fan_in, 4, 0.01, seed, true), &s.add_constant(p + ".b", 1, 4, 0.0, true)});
}

const AdapterSet* VgNet::adapters(Modality m) const {
  return m == Modality::rgb ? rgb_adapters_.get() : tir_adapters_.get();
}

ForwardResult VgNet::forward(ag::Tape& t, const Image* rgb, const Image* tir, std::string_view expression) const {
  return forward(t, rgb, tir, encoder_->encode_text_features(expression));
}

ForwardResult VgNet::forward(ag::Tape& t, const Image* rgb, const Image* tir, const Matrix& text_features) const {
  const auto& ec = cfg_.encoder;
  if (text_features.cols() != static_cast<std::size_t>(ec.dim) || text_features.rows() < 1 ||
      text_features.rows() > static_cast<std::size_t>(ec.text_max_len))
    throw std::invalid_argument("text features have shape " + text_features.shape_string());
  if (cfg_.uses_rgb() && !rgb) throw std::invalid_argument("mode " + std::string(modality_mode_name(cfg_.mode)) + " needs an RGB image");
  if (cfg_.uses_tir() && !tir) throw std::invalid_argument("mode " + std::string(modality_mode_name(cfg_.mode)) + " needs a TIR image");

  ForwardResult out;
  ag::Var text = t.constant(text_features);
  ag::Var xv, xt;
  if (cfg_.uses_rgb()) xv = encoder_->embed_image(t, *rgb);
  if (cfg_.uses_tir()) xt = encoder_->embed_image(t, *tir);

  SynergyVars syn;
  if (cfg_.use_lavs)
    syn = {t.param(*ca_q_), t.param(*ca_k_), t.param(*ca_v_), t.param(*ca_o_), t.param(*proj_v_.w),
           t.param(*proj_v_.b), t.param(*proj_t_.w), t.param(*proj_t_.b), cfg_.lavs.heads};

  auto lavs_it = lavs_layers_.begin();
  for (int l = 1; l <= ec.num_layers; ++l) {
    if (xv.valid()) xv = encoder_->vision_layer(t, l, xv, rgb_adapters_ ? rgb_adapters_->layer(l) : nullptr);
    if (xt.valid()) xt = encoder_->vision_layer(t, l, xt, tir_adapters_ ? tir_adapters_->layer(l) : nullptr);
    if (lavs_it != lavs_layers_.end() && lavs_it->layer == l) {
      const LavsLayerVars vars{t.param(*lavs_it->q_s), t.param(*lavs_it->k_v), t.param(*lavs_it->k_t),
                               t.param(*lavs_it->v_v), t.param(*lavs_it->v_t)};
      RefineResult r = lavs_refine(xv, xt, text, vars);
      xv = r.rgb;
      xt = r.tir;
      out.lavs_attention.push_back(r.attention_rgb);
      out.lavs_attention.push_back(r.attention_tir);
      // Diagnostic projected tokens of intermediate layers; nothing consumes them.
      if (cfg_.lavs.compute_t_every_layer && l < ec.num_layers) (void)cross_modal_synergy(xv, xt, syn);
      ++lavs_it;
    }
  }

  ag::Var tv, tt;
  if (cfg_.use_lavs) {
    std::tie(tv, tt) = cross_modal_synergy(xv, xt, syn);
  } else {
    if (xv.valid()) tv = ag::linear(xv, t.param(*proj_v_.w), t.param(*proj_v_.b));
    if (xt.valid()) tt = ag::linear(xt, t.param(*proj_t_.w), t.param(*proj_t_.b));
  }
  ag::Var ts = ag::linear(text, t.param(*proj_s_.w), t.param(*proj_s_.b));

  // Fixed position segments: RGB, TIR, text, Reg. Absent streams leave their
  // segment unused rather than shifting the others.
  const auto nv = static_cast<std::size_t>(ec.num_visual_tokens());
  const auto text_off = 2 * nv;
  const auto reg_off = text_off + static_cast<std::size_t>(ec.text_max_len);
  ag::Var pos = t.param(*vl_pos_);
  std::vector<ag::Var> tokens, positions;
  if (tv.valid()) {
    tokens.push_back(tv);
    positions.push_back(ag::slice_rows(pos, 0, nv));
  }
  if (tt.valid()) {
    tokens.push_back(tt);
    positions.push_back(ag::slice_rows(pos, nv, nv));
  }
  tokens.push_back(ts);
  positions.push_back(ag::slice_rows(pos, text_off, ts.rows()));
  tokens.push_back(t.param(*reg_token_));
  positions.push_back(ag::slice_rows(pos, reg_off, 1));

  ag::Var seq = ag::add(ag::concat_rows(tokens), ag::concat_rows(positions));
  out.sequence_length = seq.rows();
  for (const auto& block : vl_blocks_) seq = block_forward(t, seq, block, cfg_.vl.heads);
  seq = ag::layer_norm_rows(seq, t.param(*vl_ln_g_), t.param(*vl_ln_b_));
  out.reg = ag::slice_rows(seq, seq.rows() - 1, 1);
  out.box = regression_head(t, out.reg);
  return out;
}

ag::Var VgNet::regression_head(ag::Tape& t, ag::Var reg) const {
  if (reg.rows() != 1 || reg.cols() != static_cast<std::size_t>(cfg_.d_ground()))
    throw std::invalid_argument("regression_head: expected a [1 x " + std::to_string(cfg_.d_ground()) + "] token");
  ag::Var h = reg;
  for (std::size_t i = 0; i + 1 < head_.size(); ++i) h = ag::gelu(project(t, h, head_[i]));
  return ag::sigmoid(project(t, h, head_.back()));
}

Prediction VgNet::predict(const Image* rgb, const Image* tir, std::string_view expression, bool keep_attention) const {
  ag::Tape t(false);
  ForwardResult r = forward(t, rgb, tir, expression);
  Prediction p{to_norm_box(r.box.value()), {}};
  if (keep_attention)
    for (const auto& a : r.lavs_attention) p.attention.push_back(a.value());
  return p;
}

std::vector<ag::Parameter*> VgNet::trainable_parameters() const {
  std::vector<ag::Parameter*> out;
  for (const auto& set : {rgb_adapters_.get(), tir_adapters_.get()})
    if (set)
      for (auto* p : set->parameters()) out.push_back(p);
  for (auto* p : store_->all()) out.push_back(p);
  return out;
}

std::size_t VgNet::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : trainable_parameters()) n += p->size();
  return n;
}

WeightMap VgNet::state() const {
  WeightMap out;
  for (const auto* p : trainable_parameters()) out.emplace(p->name(), p->value());
  return out;
}

void VgNet::load_state(const WeightMap& weights) {
  const auto params = trainable_parameters();
  if (weights.size() != params.size())
    throw std::invalid_argument("checkpoint holds " + std::to_string(weights.size()) + " tensors, model expects " +
                                std::to_string(params.size()));
  for (const auto* p : params) {
    auto it = weights.find(p->name());
    if (it == weights.end()) throw std::invalid_argument("checkpoint lacks '" + p->name() + "'");
    if (!it->second.same_shape(p->value()))
      throw std::invalid_argument("checkpoint tensor '" + p->name() + "' has shape " + it->second.shape_string() +
                                  ", model expects " + p->value().shape_string());
  }
  for (auto* p : params) p->value() = weights.at(p->name());
}

// ---- loss -------------------------------------------------------------------

NormBox to_norm_box(const Matrix& box_row) {
  if (box_row.rows() != 1 || box_row.cols() != 4) throw std::invalid_argument("box must be [1 x 4]");
  return NormBox(box_row[0], box_row[1], box_row[2], box_row[3]);
}

ag::Var giou_var(ag::Var pred, const NormBox& gt) {
  if (!(gt.w > 0) || !(gt.h > 0)) throw std::invalid_argument("ground-truth box has zero area");
  if (pred.rows() != 1 || pred.cols() != 4) throw std::invalid_argument("prediction must be [1 x 4]");
  ag::Tape& t = *pred.tape();
  auto c = [&](double v) { return t.constant(Matrix(1, 1, v)); };
  ag::Var cx = ag::slice_cols(pred, 0, 1), cy = ag::slice_cols(pred, 1, 1);
  ag::Var hw = ag::scale(ag::slice_cols(pred, 2, 1), 0.5), hh = ag::scale(ag::slice_cols(pred, 3, 1), 0.5);
  ag::Var px1 = ag::sub(cx, hw), px2 = ag::add(cx, hw), py1 = ag::sub(cy, hh), py2 = ag::add(cy, hh);
  ag::Var gx1 = c(gt.cx - gt.w / 2), gx2 = c(gt.cx + gt.w / 2), gy1 = c(gt.cy - gt.h / 2), gy2 = c(gt.cy + gt.h / 2);

  ag::Var iw = ag::relu(ag::sub(ag::minimum(px2, gx2), ag::maximum(px1, gx1)));
  ag::Var ih = ag::relu(ag::sub(ag::minimum(py2, gy2), ag::maximum(py1, gy1)));
  ag::Var inter = ag::mul(iw, ih);
  ag::Var area_p = ag::mul(ag::sub(px2, px1), ag::sub(py2, py1));
  ag::Var uni = ag::sub(ag::add_scalar(area_p, gt.w * gt.h), inter);
  ag::Var cw = ag::sub(ag::maximum(px2, gx2), ag::minimum(px1, gx1));
  ag::Var ch = ag::sub(ag::maximum(py2, gy2), ag::minimum(py1, gy1));
  ag::Var enclosing = ag::mul(cw, ch);
  return ag::sub(ag::div(inter, uni), ag::div(ag::sub(enclosing, uni), enclosing));
}

ag::Var grounding_loss(ag::Var pred, const NormBox& gt, const LossWeights& w) {
  ag::Tape& t = *pred.tape();
  ag::Var target = t.constant(Matrix{{gt.cx, gt.cy, gt.w, gt.h}});
  ag::Var l1 = ag::sum(ag::abs(ag::sub(pred, target)));
  ag::Var giou_term = ag::add_scalar(ag::scale(giou_var(pred, gt), -1.0), 1.0);
  return ag::add(ag::scale(l1, w.l1), ag::scale(giou_term, w.giou));
}

double grounding_loss(const NormBox& pred, const NormBox& gt, const LossWeights& w) {
  if (!(pred.w > 0) || !(pred.h > 0)) throw std::invalid_argument("predicted box has zero area");
  ag::Tape t(false);
  return grounding_loss(t.constant(Matrix{{pred.cx, pred.cy, pred.w, pred.h}}), gt, w).value()[0];
}

}  // namespace rgbtvg
