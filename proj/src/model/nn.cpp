#include "rgbtvg/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "rgbtvg/ama.hpp"

namespace rgbtvg {

std::string_view projection_name(Projection p) {
  switch (p) {
    case Projection::query: return "query";
    case Projection::key: return "key";
    case Projection::value: return "value";
    case Projection::output: return "output";
  }
  return "?";
}

Projection projection_from_name(std::string_view s) {
  for (Projection p : kAllProjections)
    if (projection_name(p) == s) return p;
  throw std::invalid_argument("unknown attention projection '" + std::string(s) + "' (query, key, value, output)");
}

Matrix seeded_normal(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed, std::string_view name) {
  std::mt19937_64 rng(mix_seed(seed, name));
  return Matrix::randn(rows, cols, stddev, rng);
}

ag::Parameter& ParamStore::add(std::string name, Matrix value, bool trainable) {
  if (index_.contains(name)) throw std::logic_error("duplicate parameter name " + name);
  index_.emplace(name, params_.size());
  return params_.emplace_back(std::move(name), std::move(value), trainable);
}

ag::Parameter& ParamStore::add_normal(std::string name, std::size_t rows, std::size_t cols, double stddev,
                                      std::uint64_t seed, bool trainable) {
  Matrix m = seeded_normal(rows, cols, stddev, seed, name);
  return add(std::move(name), std::move(m), trainable);
}

ag::Parameter& ParamStore::add_constant(std::string name, std::size_t rows, std::size_t cols, double value,
                                        bool trainable) {
  return add(std::move(name), Matrix(rows, cols, value), trainable);
}

ag::Parameter* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const ag::Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

ag::Parameter& ParamStore::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + name);
}

const ag::Parameter& ParamStore::at(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + name);
}

std::vector<ag::Parameter*> ParamStore::all() {
  std::vector<ag::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const ag::Parameter*> ParamStore::all() const {
  std::vector<const ag::Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

WeightMap ParamStore::snapshot() const {
  WeightMap out;
  for (const auto& p : params_) out.emplace(p.name(), p.value());
  return out;
}

void ParamStore::load(const WeightMap& weights) {
  for (const auto& [name, m] : weights)
    if (!index_.contains(name)) throw std::invalid_argument("unexpected weight '" + name + "'");
  for (auto& p : params_) {
    auto it = weights.find(p.name());
    if (it == weights.end()) throw std::invalid_argument("missing weight '" + p.name() + "'");
    if (!it->second.same_shape(p.value()))
      throw std::invalid_argument("weight '" + p.name() + "' has shape " + it->second.shape_string() + ", expected " +
                                  p.value().shape_string());
  }
  for (auto& p : params_) p.value() = weights.at(p.name());
}

BlockParams make_block(ParamStore& store, const std::string& prefix, int dim, int hidden, const BlockInit& init,
                       std::uint64_t seed, bool trainable) {
  const auto d = static_cast<std::size_t>(dim);
  const auto h = static_cast<std::size_t>(hidden);
  BlockParams b{};
  b.ln1_g = &store.add_constant(prefix + ".ln1.g", 1, d, 1.0, trainable);
  b.ln1_b = &store.add_constant(prefix + ".ln1.b", 1, d, 0.0, trainable);
  for (Projection p : kAllProjections) {
    const std::string name = prefix + ".attn." + std::string(projection_name(p));
    const double std = p == Projection::output ? init.out_std : init.attn_std;
    b.attn[static_cast<int>(p)] = {&store.add_normal(name + ".w", d, d, std, seed, trainable),
                                   &store.add_constant(name + ".b", 1, d, 0.0, trainable)};
  }
  b.ln2_g = &store.add_constant(prefix + ".ln2.g", 1, d, 1.0, trainable);
  b.ln2_b = &store.add_constant(prefix + ".ln2.b", 1, d, 0.0, trainable);
  b.fc1 = {&store.add_normal(prefix + ".mlp.fc1.w", d, h, init.mlp_std, seed, trainable),
           &store.add_constant(prefix + ".mlp.fc1.b", 1, h, 0.0, trainable)};
  b.fc2 = {&store.add_normal(prefix + ".mlp.fc2.w", h, d, init.out_std, seed, trainable),
           &store.add_constant(prefix + ".mlp.fc2.b", 1, d, 0.0, trainable)};
  return b;
}

ag::Var project(ag::Tape& t, ag::Var x, const LinearParams& p, LowRankAdapter* adapter) {
  ag::Var y = ag::matmul(x, t.param(*p.w));
  if (p.b) y = ag::add_row(y, t.param(*p.b));
  if (adapter) {
    // Factored form of x (W + alpha A B): never materializes the d x d delta.
    ag::Var low = ag::matmul(ag::matmul(x, t.param(adapter->A)), t.param(adapter->B));
    y = ag::add(y, ag::scale(low, adapter->alpha));
  }
  return y;
}

AttentionOutput multi_head_attention(ag::Tape& t, ag::Var xq, ag::Var xkv, const std::array<LinearParams, 4>& proj,
                                     int heads, const LayerAdapters* adapters) {
  auto adapter_for = [&](Projection p) { return adapters ? (*adapters)[static_cast<int>(p)] : nullptr; };
  const std::size_t d = xq.cols();
  if (xkv.cols() != d) throw std::invalid_argument("attention: query and key/value widths differ");
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0)
    throw std::invalid_argument("attention: width not divisible by head count");
  ag::Var q = project(t, xq, proj[0], adapter_for(Projection::query));
  ag::Var k = project(t, xkv, proj[1], adapter_for(Projection::key));
  ag::Var v = project(t, xkv, proj[2], adapter_for(Projection::value));
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionOutput out;
  std::vector<ag::Var> parts;
  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * dh;
    ag::Var qh = heads == 1 ? q : ag::slice_cols(q, off, dh);
    ag::Var kh = heads == 1 ? k : ag::slice_cols(k, off, dh);
    ag::Var vh = heads == 1 ? v : ag::slice_cols(v, off, dh);
    ag::Var a = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt));
    out.weights.push_back(a);
    parts.push_back(ag::matmul(a, vh));
  }
  ag::Var merged = heads == 1 ? parts.front() : ag::concat_cols(parts);
  out.out = project(t, merged, proj[3], adapter_for(Projection::output));
  return out;
}

ag::Var block_forward(ag::Tape& t, ag::Var x, const BlockParams& p, int heads, const LayerAdapters* adapters) {
  ag::Var n1 = ag::layer_norm_rows(x, t.param(*p.ln1_g), t.param(*p.ln1_b));
  ag::Var h = ag::add(x, multi_head_attention(t, n1, n1, p.attn, heads, adapters).out);
  ag::Var n2 = ag::layer_norm_rows(h, t.param(*p.ln2_g), t.param(*p.ln2_b));
  ag::Var mlp = project(t, ag::gelu(project(t, n2, p.fc1)), p.fc2);
  return ag::add(h, mlp);
}

}  // namespace rgbtvg
