#include <cmath>
#include <random>

#include "doctest.h"
#include "rgbtvg/lavs.hpp"
#include "rgbtvg/oracles.hpp"

using namespace rgbtvg;

namespace {

// Row softmax with explicit loops.
Matrix softmax_oracle(Matrix s) {
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < s.cols(); ++c) mx = std::max(mx, s(r, c));
    double z = 0;
    for (std::size_t c = 0; c < s.cols(); ++c) z += (s(r, c) = std::exp(s(r, c) - mx));
    for (std::size_t c = 0; c < s.cols(); ++c) s(r, c) /= z;
  }
  return s;
}

Matrix cross_attention_oracle(const Matrix& x, const Matrix& y, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                              const Matrix& wo, int heads) {
  const Matrix q = oracle::matmul(x, wq), k = oracle::matmul(y, wk), v = oracle::matmul(y, wv);
  const std::size_t d = wq.cols(), dh = d / static_cast<std::size_t>(heads);
  Matrix concat(x.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * dh;
    Matrix s(x.rows(), y.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < y.rows(); ++j) {
        double acc = 0;
        for (std::size_t c = 0; c < dh; ++c) acc += q(i, off + c) * k(j, off + c);
        s(i, j) = acc / std::sqrt(static_cast<double>(dh));
      }
    const Matrix a = softmax_oracle(s);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < y.rows(); ++j) acc += a(i, j) * v(j, off + c);
        concat(i, off + c) = acc;
      }
  }
  return oracle::matmul(concat, wo);
}

struct SynergyWeights {
  Matrix ca_q, ca_k, ca_v, ca_o, p_v_w, p_v_b, p_t_w, p_t_b;
};

SynergyWeights random_synergy(std::size_t d, std::mt19937_64& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  return {Matrix::randn(d, d, s, rng), Matrix::randn(d, d, s, rng), Matrix::randn(d, d, s, rng),
          Matrix::randn(d, d, s, rng), Matrix::randn(d, d, s, rng), Matrix::randn(1, d, 0.1, rng),
          Matrix::randn(d, d, s, rng), Matrix::randn(1, d, 0.1, rng)};
}

SynergyVars bind(ag::Tape& t, const SynergyWeights& w, int heads) {
  return {t.constant_ref(w.ca_q),  t.constant_ref(w.ca_k),  t.constant_ref(w.ca_v),  t.constant_ref(w.ca_o),
          t.constant_ref(w.p_v_w), t.constant_ref(w.p_v_b), t.constant_ref(w.p_t_w), t.constant_ref(w.p_t_b), heads};
}

}  // namespace

TEST_CASE("enhancement with zero value projection is the identity") {
  std::mt19937_64 rng(1);
  const Matrix f = Matrix::randn(17, 8, 1, rng), text = Matrix::randn(5, 8, 1, rng);
  const Matrix wq = Matrix::randn(8, 8, 1, rng), wk = Matrix::randn(8, 8, 1, rng);
  CHECK(text_queried_enhance(f, text, wq, wk, Matrix(8, 8)) == f);
}

TEST_CASE("enhancement with uniform attention") {
  // wq = 0 makes every logit equal, so A = [[0.5, 0.5]] and A^T A V = 0.25 everywhere.
  const Matrix f = Matrix::identity(2);
  Matrix attn;
  const Matrix out = text_queried_enhance(f, Matrix{{0.3, -0.7}}, Matrix(2, 2), Matrix::identity(2),
                                          Matrix::identity(2), &attn);
  CHECK(attn == Matrix{{0.5, 0.5}});
  CHECK(max_abs_diff(out, Matrix{{1.25, 0.25}, {0.25, 1.25}}) < 1e-15);
}

TEST_CASE("enhancement matches a dense computation") {
  std::mt19937_64 rng(2);
  const Matrix f = Matrix::randn(6, 4, 1, rng), text = Matrix::randn(3, 4, 1, rng);
  const Matrix wq = Matrix::randn(4, 4, 0.5, rng), wk = Matrix::randn(4, 4, 0.5, rng), wv = Matrix::randn(4, 4, 0.5, rng);
  Matrix attn;
  const Matrix got = text_queried_enhance(f, text, wq, wk, wv, &attn);
  const Matrix q = oracle::matmul(text, wq), k = oracle::matmul(f, wk), v = oracle::matmul(f, wv);
  Matrix s = oracle::matmul(q, k.transposed());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] /= 2.0;
  const Matrix a = softmax_oracle(s);
  const Matrix back = oracle::matmul(a.transposed(), oracle::matmul(a, v));
  Matrix expect = f;
  for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += back[i];
  CHECK(max_abs_diff(attn, a) < 1e-12);
  CHECK(max_rel_diff(got, expect, 1e-12) < 1e-10);
}

TEST_CASE("enhancement shapes and attention rows") {
  std::mt19937_64 rng(4);
  for (int T : {1, 4, 16})
    for (int N : {1, 17, 50})
      for (int d : {8, 32, 64}) {
        const auto du = static_cast<std::size_t>(d);
        const Matrix f = Matrix::randn(static_cast<std::size_t>(N), du, 1, rng);
        const Matrix text = Matrix::randn(static_cast<std::size_t>(T), du, 1, rng);
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        Matrix attn;
        const Matrix out = text_queried_enhance(f, text, Matrix::randn(du, du, s, rng), Matrix::randn(du, du, s, rng),
                                                Matrix::randn(du, du, s, rng), &attn);
        CAPTURE(T);
        CAPTURE(N);
        CAPTURE(d);
        CHECK(out.same_shape(f));
        CHECK(attn.rows() == static_cast<std::size_t>(T));
        CHECK(attn.cols() == static_cast<std::size_t>(N));
        for (std::size_t r = 0; r < attn.rows(); ++r) {
          double row = 0;
          for (double v : attn.row(r)) row += v;
          CHECK(std::abs(row - 1.0) < 1e-12);
        }
      }
}

TEST_CASE("enhancement input checks") {
  Matrix f(3, 4, 0.1), text(2, 4, 0.2), w = Matrix::identity(4);
  CHECK_THROWS_WITH_AS(text_queried_enhance(f, Matrix(2, 5), w, w, w), doctest::Contains("width"), std::invalid_argument);
  f(1, 2) = std::nan("");
  CHECK_THROWS_WITH_AS(text_queried_enhance(f, text, w, w, w), doctest::Contains("non-finite"), std::invalid_argument);
  CHECK_THROWS_AS(text_queried_enhance(Matrix(0, 4), text, w, w, w), std::invalid_argument);
}

TEST_CASE("refinement shares the text query across streams") {
  std::mt19937_64 rng(5);
  const Matrix fv = Matrix::randn(17, 8, 1, rng), ft = Matrix::randn(17, 8, 1, rng), text = Matrix::randn(4, 8, 1, rng);
  const Matrix q = Matrix::randn(8, 8, 0.3, rng), kv = Matrix::randn(8, 8, 0.3, rng), kt = Matrix::randn(8, 8, 0.3, rng);
  const Matrix vv = Matrix::randn(8, 8, 0.3, rng), vt = Matrix::randn(8, 8, 0.3, rng);
  ag::Tape t(false);
  const auto r = lavs_refine(t.constant_ref(fv), t.constant_ref(ft), t.constant_ref(text),
                             {t.constant_ref(q), t.constant_ref(kv), t.constant_ref(kt), t.constant_ref(vv), t.constant_ref(vt)});
  CHECK(r.rgb.value() == text_queried_enhance(fv, text, q, kv, vv));
  CHECK(r.tir.value() == text_queried_enhance(ft, text, q, kt, vt));
  CHECK(r.attention_rgb.rows() == 4);
}

TEST_CASE("cross attention matches a per-head dense computation") {
  std::mt19937_64 rng(6);
  for (int heads : {1, 2, 4}) {
    const Matrix x = Matrix::randn(7, 8, 1, rng), y = Matrix::randn(5, 8, 1, rng);
    const Matrix wq = Matrix::randn(8, 8, 0.4, rng), wk = Matrix::randn(8, 8, 0.4, rng);
    const Matrix wv = Matrix::randn(8, 8, 0.4, rng), wo = Matrix::randn(8, 8, 0.4, rng);
    ag::Tape t(false);
    const Matrix got = cross_attention(t.constant_ref(x), t.constant_ref(y), t.constant_ref(wq), t.constant_ref(wk),
                                       t.constant_ref(wv), t.constant_ref(wo), heads)
                           .value();
    CAPTURE(heads);
    CHECK(got.rows() == 7);
    CHECK(max_rel_diff(got, cross_attention_oracle(x, y, wq, wk, wv, wo, heads), 1e-12) < 1e-10);
  }
  ag::Tape t(false);
  const Matrix x(2, 6, 1.0), w = Matrix::identity(6);
  auto c = [&](const Matrix& m) { return t.constant_ref(m); };
  CHECK_THROWS_AS(cross_attention(c(x), c(x), c(w), c(w), c(w), c(w), 4), std::invalid_argument);
}

TEST_CASE("synergy") {
  std::mt19937_64 rng(7);
  const std::size_t d = 8;
  const Matrix fv = Matrix::randn(17, d, 1, rng), ft = Matrix::randn(17, d, 1, rng);

  SUBCASE("zero value path and identity projections pass features through") {
    SynergyWeights w = random_synergy(d, rng);
    w.ca_v = Matrix(d, d);
    w.p_v_w = w.p_t_w = Matrix::identity(d);
    w.p_v_b = w.p_t_b = Matrix(1, d);
    ag::Tape t(false);
    const auto [tv, tt] = cross_modal_synergy(t.constant_ref(fv), t.constant_ref(ft), bind(t, w, 2));
    CHECK(tv.value() == fv);
    CHECK(tt.value() == ft);
  }
  SUBCASE("matches the dense formula") {
    const SynergyWeights w = random_synergy(d, rng);
    ag::Tape t(false);
    const auto [tv, tt] = cross_modal_synergy(t.constant_ref(fv), t.constant_ref(ft), bind(t, w, 2));
    auto expect = [&](const Matrix& a, const Matrix& b, const Matrix& pw, const Matrix& pb) {
      Matrix mixed = cross_attention_oracle(a, b, w.ca_q, w.ca_k, w.ca_v, w.ca_o, 2);
      for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] += a[i];
      Matrix out = oracle::matmul(mixed, pw);
      for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += pb(0, c);
      return out;
    };
    CHECK(max_rel_diff(tv.value(), expect(fv, ft, w.p_v_w, w.p_v_b), 1e-12) < 1e-10);
    CHECK(max_rel_diff(tt.value(), expect(ft, fv, w.p_t_w, w.p_t_b), 1e-12) < 1e-10);
  }
  SUBCASE("swapping streams and projections swaps outputs") {
    const SynergyWeights w = random_synergy(d, rng);
    SynergyWeights swapped = w;
    std::swap(swapped.p_v_w, swapped.p_t_w);
    std::swap(swapped.p_v_b, swapped.p_t_b);
    ag::Tape t(false);
    const auto [tv, tt] = cross_modal_synergy(t.constant_ref(fv), t.constant_ref(ft), bind(t, w, 1));
    const auto [sv, st] = cross_modal_synergy(t.constant_ref(ft), t.constant_ref(fv), bind(t, swapped, 1));
    CHECK(sv.value() == tt.value());
    CHECK(st.value() == tv.value());
  }
  SUBCASE("deterministic and shape checked") {
    const SynergyWeights w = random_synergy(d, rng);
    ag::Tape t(false);
    const auto a = cross_modal_synergy(t.constant_ref(fv), t.constant_ref(ft), bind(t, w, 4));
    const auto b = cross_modal_synergy(t.constant_ref(fv), t.constant_ref(ft), bind(t, w, 4));
    CHECK(a.first.value() == b.first.value());
    const Matrix short_t = Matrix::randn(16, d, 1, rng);
    CHECK_THROWS_WITH_AS(cross_modal_synergy(t.constant_ref(fv), t.constant_ref(short_t), bind(t, w, 4)),
                         doctest::Contains("shapes"), std::invalid_argument);
  }
}

TEST_CASE("lavs config") {
  LavsConfig cfg;
  CHECK(cfg.applies_to(1, 2));
  CHECK(cfg.applies_to(2, 2));
  CHECK_FALSE(cfg.applies_to(3, 2));
  cfg.layers = {2};
  CHECK_FALSE(cfg.applies_to(1, 2));
  CHECK(cfg.applies_to(2, 2));
  cfg.validate(2, 32);
  cfg.layers = {3};
  CHECK_THROWS_AS(cfg.validate(2, 32), ConfigError);
  cfg.layers = {};
  cfg.heads = 3;
  CHECK_THROWS_WITH_AS(cfg.validate(2, 32), doctest::Contains("divide"), ConfigError);
}
