#pragma once

// Asymmetric modality adaptation: per-modality low-rank deltas on the frozen
// attention projections of the shared vision tower. The thermal branch gets
// at least the rank of the RGB branch.

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "rgbtvg/autograd.hpp"
#include "rgbtvg/backbone.hpp"
#include "rgbtvg/nn.hpp"

namespace rgbtvg {

enum class Modality : std::uint8_t { rgb = 0, tir };
std::string_view modality_name(Modality m);

/// Delta alpha * A * B on one projection of one layer.
struct LowRankAdapter {
  ag::Parameter A;  // [d x r]
  ag::Parameter B;  // [r x d], zero at initialization
  double alpha = 1.0;
  int rank = 1;
  Projection target = Projection::query;
  int layer = 1;

  std::size_t parameter_count() const { return A.size() + B.size(); }
};

/// W + alpha * A * B. W is not modified.
Matrix adapt_weight(const Matrix& w, const Matrix& a, const Matrix& b, double alpha);
Matrix adapt_weight(const Matrix& w, const LowRankAdapter& adapter);

/// Rank and scale override for a subset of layers.
struct AmaGroup {
  std::vector<int> layers;
  int r_v = 8;
  int r_t = 32;
  std::optional<double> alpha_v;
  std::optional<double> alpha_t;
};

struct AmaConfig {
  int r_v = 8;
  int r_t = 32;
  // Unset scales default to the rank of the branch.
  std::optional<double> alpha_v;
  std::optional<double> alpha_t;
  std::set<Projection> targets = {Projection::query, Projection::value};
  std::vector<int> layers;  // empty: every layer
  std::vector<AmaGroup> groups;
  double init_std = 0.02;

  void validate(int num_layers) const;
  std::vector<int> adapted_layers(int num_layers) const;

  struct LayerSetting {
    int rank;
    double alpha;
  };
  // nullopt when the layer carries no adapter.
  std::optional<LayerSetting> setting(int layer, Modality m, int num_layers) const;
};

/// All adapters of one modality. Addresses stay valid for the set's lifetime.
class AdapterSet {
 public:
  explicit AdapterSet(Modality m, int num_layers) : modality_(m), by_layer_(static_cast<std::size_t>(num_layers)) {
    for (auto& slot : by_layer_) slot.fill(nullptr);
  }
  AdapterSet(const AdapterSet&) = delete;
  AdapterSet& operator=(const AdapterSet&) = delete;
  AdapterSet(AdapterSet&&) = default;
  AdapterSet& operator=(AdapterSet&&) = default;

  Modality modality() const { return modality_; }
  LowRankAdapter& add(LowRankAdapter adapter);
  LowRankAdapter* find(int layer, Projection p) const;
  // Null entries for unadapted projections.
  const LayerAdapters* layer(int layer) const;
  std::vector<ag::Parameter*> parameters();
  std::size_t parameter_count() const;
  std::size_t size() const { return adapters_.size(); }
  const std::deque<LowRankAdapter>& adapters() const { return adapters_; }

 private:
  Modality modality_;
  std::deque<LowRankAdapter> adapters_;
  std::vector<LayerAdapters> by_layer_;
};

AdapterSet build_adapters(const AmaConfig& cfg, const FrozenEncoder& encoder, Modality m, std::uint64_t seed);
/// (RGB set with ranks r_v, TIR set with ranks r_t).
std::pair<AdapterSet, AdapterSet> build_asymmetric_adapters(const AmaConfig& cfg, const FrozenEncoder& encoder,
                                                            std::uint64_t seed);

/// Closed form 2 * d * r summed over adapted (layer, target) pairs.
std::size_t adapter_parameter_count(const AmaConfig& cfg, int dim, int num_layers, Modality m);

std::string adapter_param_name(Modality m, int layer, Projection p, char which);

}  // namespace rgbtvg
