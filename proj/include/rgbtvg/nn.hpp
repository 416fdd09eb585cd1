#pragma once

// Parameter storage and the transformer building blocks shared by the frozen
// towers and the trainable grounding modules.

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "rgbtvg/autograd.hpp"
#include "rgbtvg/snapshot.hpp"

namespace rgbtvg {

struct LowRankAdapter;

enum class Projection : std::uint8_t { query = 0, key, value, output };
inline constexpr std::array<Projection, 4> kAllProjections = {Projection::query, Projection::key, Projection::value,
                                                             Projection::output};
std::string_view projection_name(Projection p);
Projection projection_from_name(std::string_view s);

/// Optional low-rank adapter per attention projection of one layer.
using LayerAdapters = std::array<LowRankAdapter*, 4>;

/// Owns named parameters with stable addresses. Names are unique.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  ag::Parameter& add(std::string name, Matrix value, bool trainable);
  // Normal(0, stddev) drawn from a generator seeded by (seed, name) so a
  // parameter's initial value does not depend on which others exist.
  ag::Parameter& add_normal(std::string name, std::size_t rows, std::size_t cols, double stddev,
                            std::uint64_t seed, bool trainable);
  ag::Parameter& add_constant(std::string name, std::size_t rows, std::size_t cols, double value, bool trainable);

  ag::Parameter* find(const std::string& name);
  const ag::Parameter* find(const std::string& name) const;
  ag::Parameter& at(const std::string& name);
  const ag::Parameter& at(const std::string& name) const;

  // Insertion order.
  std::vector<ag::Parameter*> all();
  std::vector<const ag::Parameter*> all() const;
  std::size_t size() const { return params_.size(); }

  WeightMap snapshot() const;
  // Every stored parameter must appear in `weights` with the same shape, and
  // nothing else may.
  void load(const WeightMap& weights);

 private:
  std::deque<ag::Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

Matrix seeded_normal(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed, std::string_view name);

struct LinearParams {
  ag::Parameter* w = nullptr;
  ag::Parameter* b = nullptr;  // may be null
};

struct BlockParams {
  ag::Parameter *ln1_g, *ln1_b;
  std::array<LinearParams, 4> attn;  // indexed by Projection
  ag::Parameter *ln2_g, *ln2_b;
  LinearParams fc1, fc2;
};

struct BlockInit {
  double attn_std;
  double out_std;  // attention output and second MLP layer
  double mlp_std;
};

/// Pre-norm transformer block parameters under "<prefix>.".
BlockParams make_block(ParamStore& store, const std::string& prefix, int dim, int hidden, const BlockInit& init,
                       std::uint64_t seed, bool trainable);

ag::Var project(ag::Tape& t, ag::Var x, const LinearParams& p, LowRankAdapter* adapter = nullptr);

struct AttentionOutput {
  ag::Var out;
  std::vector<ag::Var> weights;  // one [Tq x Tk] matrix per head
};

/// Multi-head scaled dot-product attention; queries from `xq`, keys and values from `xkv`.
AttentionOutput multi_head_attention(ag::Tape& t, ag::Var xq, ag::Var xkv, const std::array<LinearParams, 4>& proj,
                                     int heads, const LayerAdapters* adapters = nullptr);

ag::Var block_forward(ag::Tape& t, ag::Var x, const BlockParams& p, int heads, const LayerAdapters* adapters = nullptr);

}  // namespace rgbtvg
