#include "rgbtvg/ama.hpp"

#include <algorithm>
#include <cmath>

namespace rgbtvg {

std::string_view modality_name(Modality m) { return m == Modality::rgb ? "rgb" : "tir"; }

Matrix adapt_weight(const Matrix& w, const Matrix& a, const Matrix& b, double alpha) {
  if (a.rows() != w.rows() || b.cols() != w.cols() || a.cols() != b.rows())
    throw std::invalid_argument("adapt_weight: W " + w.shape_string() + ", A " + a.shape_string() + ", B " +
                                b.shape_string() + " are incompatible");
  if (!std::isfinite(alpha)) throw std::invalid_argument("adapt_weight: alpha must be finite");
  Matrix delta = matmul(a, b);
  Matrix out = w;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * delta[i];
  return out;
}

Matrix adapt_weight(const Matrix& w, const LowRankAdapter& adapter) {
  return adapt_weight(w, adapter.A.value(), adapter.B.value(), adapter.alpha);
}

void AmaConfig::validate(int num_layers) const {
  auto check_pair = [](int rv, int rt, const std::string& where) {
    if (rv < 1 || rt < 1) throw ConfigError(where + ": ranks must be >= 1");
    if (rv > rt)
      throw ConfigError(where + ": r_v (" + std::to_string(rv) + ") must not exceed r_t (" + std::to_string(rt) +
                        "); the thermal branch needs at least the RGB adaptation capacity");
  };
  check_pair(r_v, r_t, "ama");
  for (const auto* a : {&alpha_v, &alpha_t})
    if (*a && (!std::isfinite(**a) || **a < 0)) throw ConfigError("ama: alpha must be finite and >= 0");
  if (targets.empty()) throw ConfigError("ama.targets must not be empty");
  if (!(init_std > 0)) throw ConfigError("ama.init_std must be positive");
  std::set<int> adapted;
  for (int l : layers) {
    if (l < 1 || l > num_layers) throw ConfigError("ama.layers: layer " + std::to_string(l) + " out of range");
    if (!adapted.insert(l).second) throw ConfigError("ama.layers: layer " + std::to_string(l) + " listed twice");
  }
  const auto all = adapted_layers(num_layers);
  std::set<int> grouped;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::string where = "ama.group." + std::to_string(g);
    check_pair(groups[g].r_v, groups[g].r_t, where);
    if (groups[g].layers.empty()) throw ConfigError(where + ": layers must not be empty");
    for (int l : groups[g].layers) {
      if (std::find(all.begin(), all.end(), l) == all.end())
        throw ConfigError(where + ": layer " + std::to_string(l) + " is not an adapted layer");
      if (!grouped.insert(l).second) throw ConfigError(where + ": layer " + std::to_string(l) + " is in two groups");
    }
  }
}

std::vector<int> AmaConfig::adapted_layers(int num_layers) const {
  if (!layers.empty()) {
    std::vector<int> out = layers;
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<int> out;
  for (int l = 1; l <= num_layers; ++l) out.push_back(l);
  return out;
}

std::optional<AmaConfig::LayerSetting> AmaConfig::setting(int layer, Modality m, int num_layers) const {
  const auto all = adapted_layers(num_layers);
  if (std::find(all.begin(), all.end(), layer) == all.end()) return std::nullopt;
  int rv = r_v, rt = r_t;
  std::optional<double> av = alpha_v, at = alpha_t;
  for (const auto& g : groups)
    if (std::find(g.layers.begin(), g.layers.end(), layer) != g.layers.end()) {
      rv = g.r_v;
      rt = g.r_t;
      av = g.alpha_v ? g.alpha_v : alpha_v;
      at = g.alpha_t ? g.alpha_t : alpha_t;
    }
  if (m == Modality::rgb) return LayerSetting{rv, av.value_or(static_cast<double>(rv))};
  return LayerSetting{rt, at.value_or(static_cast<double>(rt))};
}

LowRankAdapter& AdapterSet::add(LowRankAdapter adapter) {
  if (adapter.layer < 1 || adapter.layer > static_cast<int>(by_layer_.size()))
    throw std::out_of_range("adapter layer out of range");
  auto& slot = by_layer_[static_cast<std::size_t>(adapter.layer - 1)][static_cast<int>(adapter.target)];
  if (slot) throw std::logic_error("duplicate adapter for one projection");
  LowRankAdapter& stored = adapters_.emplace_back(std::move(adapter));
  slot = &stored;
  return stored;
}

LowRankAdapter* AdapterSet::find(int layer, Projection p) const {
  if (layer < 1 || layer > static_cast<int>(by_layer_.size())) return nullptr;
  return by_layer_[static_cast<std::size_t>(layer - 1)][static_cast<int>(p)];
}

const LayerAdapters* AdapterSet::layer(int layer) const {
  if (layer < 1 || layer > static_cast<int>(by_layer_.size())) throw std::out_of_range("adapter layer out of range");
  return &by_layer_[static_cast<std::size_t>(layer - 1)];
}

std::vector<ag::Parameter*> AdapterSet::parameters() {
  std::vector<ag::Parameter*> out;
  for (auto& a : adapters_) {
    out.push_back(&a.A);
    out.push_back(&a.B);
  }
  return out;
}

std::size_t AdapterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& a : adapters_) n += a.parameter_count();
  return n;
}

std::string adapter_param_name(Modality m, int layer, Projection p, char which) {
  return "ama." + std::string(modality_name(m)) + ".l" + std::to_string(layer) + "." + std::string(projection_name(p)) +
         "." + which;
}

AdapterSet build_adapters(const AmaConfig& cfg, const FrozenEncoder& encoder, Modality m, std::uint64_t seed) {
  const int n = encoder.config().num_layers;
  cfg.validate(n);
  const auto d = static_cast<std::size_t>(encoder.config().dim);
  AdapterSet set(m, n);
  for (int l : cfg.adapted_layers(n)) {
    const auto s = *cfg.setting(l, m, n);
    const auto r = static_cast<std::size_t>(s.rank);
    for (Projection p : cfg.targets) {
      const std::string a_name = adapter_param_name(m, l, p, 'A');
      const std::string b_name = adapter_param_name(m, l, p, 'B');
      set.add(LowRankAdapter{ag::Parameter(a_name, seeded_normal(d, r, cfg.init_std, seed, a_name)),
                             ag::Parameter(b_name, Matrix(r, d, 0.0)), s.alpha, s.rank, p, l});
    }
  }
  return set;
}

std::pair<AdapterSet, AdapterSet> build_asymmetric_adapters(const AmaConfig& cfg, const FrozenEncoder& encoder,
                                                            std::uint64_t seed) {
  return {build_adapters(cfg, encoder, Modality::rgb, seed), build_adapters(cfg, encoder, Modality::tir, seed)};
}

std::size_t adapter_parameter_count(const AmaConfig& cfg, int dim, int num_layers, Modality m) {
  std::size_t n = 0;
  for (int l : cfg.adapted_layers(num_layers))
    n += cfg.targets.size() * 2 * static_cast<std::size_t>(dim) *
         static_cast<std::size_t>(cfg.setting(l, m, num_layers)->rank);
  return n;
}

}  // namespace rgbtvg
