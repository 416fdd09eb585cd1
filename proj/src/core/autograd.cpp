#include "rgbtvg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rgbtvg/kernels.hpp"

namespace rgbtvg::ag {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix m) {
  Node n;
  n.value = std::move(m);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant_ref(const Matrix& m) {
  Node n;
  n.ref = &m;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (!record_ || !p.trainable()) return constant_ref(p.value());
  Node n;
  n.ref = &p.value();
  n.needs_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Matrix& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Matrix& v = value(id);
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      if (p.valid() && nodes_[p.id()].needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("backward: variable from another tape");
  const Matrix& rv = value(root.id());
  if (rv.rows() != 1 || rv.cols() != 1) throw std::invalid_argument("backward: root must be 1x1, got " + rv.shape_string());
  if (!nodes_[root.id()].needs_grad) return;
  grad(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.param) {
      Matrix& pg = n.param->grad();
      kernels::axpy(1.0, n.grad.data(), pg.data(), pg.size());
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
    n.grad = Matrix();
  }
}

namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("autograd: invalid variable");
  return *a.tape();
}

void accumulate(Tape& t, Var v, const Matrix& g) {
  if (!v.valid() || !t.needs_grad(v.id())) return;
  Matrix& dst = t.grad(v.id());
  kernels::axpy(1.0, g.data(), dst.data(), dst.size());
}

// Applies f elementwise, records df/dx * g for the backward pass.
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return t.record(std::move(out), {a}, [a, df](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    Matrix& ga = t.grad(a.id());
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same(a.value(), b.value(), "add");
  Matrix out = a.value();
  kernels::axpy(1.0, b.value().data(), out.data(), out.size());
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same(a.value(), b.value(), "sub");
  Matrix out = a.value();
  kernels::axpy(-1.0, b.value().data(), out.data(), out.size());
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    accumulate(t, a, g);
    if (t.needs_grad(b.id())) kernels::axpy(-1.0, g.data(), t.grad(b.id()).data(), g.size());
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same(a.value(), b.value(), "mul");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (t.needs_grad(a.id())) {
      Matrix& ga = t.grad(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.needs_grad(b.id())) {
      Matrix& gb = t.grad(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same(a.value(), b.value(), "div");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / y[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (t.needs_grad(a.id())) {
      Matrix& ga = t.grad(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / y[i];
    }
    if (t.needs_grad(b.id())) {
      Matrix& gb = t.grad(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * x[i] / (y[i] * y[i]);
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return t.record(std::move(out), {a}, [a, s](Tape& t, const Matrix& g) {
    kernels::axpy(s, g.data(), t.grad(a.id()).data(), g.size());
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { accumulate(t, a, g); });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Matrix& b = bias.value();
  if (b.rows() != 1 || b.cols() != x.cols())
    throw std::invalid_argument("add_row: bias " + b.shape_string() + " for input " + x.shape_string());
  Matrix out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) kernels::axpy(1.0, b.data(), out.row(r).data(), x.cols());
  return t.record(std::move(out), {a, bias}, [a, bias](Tape& t, const Matrix& g) {
    accumulate(t, a, g);
    if (t.needs_grad(bias.id())) {
      Matrix& gb = t.grad(bias.id());
      for (std::size_t r = 0; r < g.rows(); ++r) kernels::axpy(1.0, g.row(r).data(), gb.data(), g.cols());
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (x.cols() != y.rows()) throw std::invalid_argument("matmul: " + x.shape_string() + " * " + y.shape_string());
  Matrix out(x.rows(), y.cols());
  kernels::gemm_nn(x.rows(), y.cols(), x.cols(), x.data(), y.data(), out.data(), false);
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (t.needs_grad(a.id()))
      kernels::gemm_nt(x.rows(), x.cols(), y.cols(), g.data(), y.data(), t.grad(a.id()).data(), true);
    if (t.needs_grad(b.id()))
      kernels::gemm_tn(y.rows(), y.cols(), x.rows(), x.data(), g.data(), t.grad(b.id()).data(), true);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (x.cols() != y.cols()) throw std::invalid_argument("matmul_nt: " + x.shape_string() + " * " + y.shape_string() + "^T");
  Matrix out(x.rows(), y.rows());
  kernels::gemm_nt(x.rows(), y.rows(), x.cols(), x.data(), y.data(), out.data(), false);
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (t.needs_grad(a.id()))
      kernels::gemm_nn(x.rows(), x.cols(), y.rows(), g.data(), y.data(), t.grad(a.id()).data(), true);
    if (t.needs_grad(b.id()))
      kernels::gemm_tn(y.rows(), y.cols(), x.rows(), g.data(), x.data(), t.grad(b.id()).data(), true);
  });
}

Var matmul_tn(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (x.rows() != y.rows()) throw std::invalid_argument("matmul_tn: " + x.shape_string() + "^T * " + y.shape_string());
  Matrix out(x.cols(), y.cols());
  kernels::gemm_tn(x.cols(), y.cols(), x.rows(), x.data(), y.data(), out.data(), false);
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (t.needs_grad(a.id()))
      kernels::gemm_nt(x.rows(), x.cols(), y.cols(), y.data(), g.data(), t.grad(a.id()).data(), true);
    if (t.needs_grad(b.id()))
      kernels::gemm_nn(y.rows(), y.cols(), x.cols(), x.data(), g.data(), t.grad(b.id()).data(), true);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  return t.record(a.value().transposed(), {a}, [a](Tape& t, const Matrix& g) { accumulate(t, a, g.transposed()); });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (out[c] = std::exp(in[c] - mx));
    for (double& v : out) v /= z;
  }
  Matrix saved = t.recording() ? y : Matrix();
  return t.record(std::move(y), {a}, [a, y = std::move(saved)](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a.id());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double s = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) s += gr[c] * yr[c];
      for (std::size_t c = 0; c < yr.size(); ++c) ga(r, c) += yr[c] * (gr[c] - s);
    }
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of(x);
  const Matrix& in = x.value();
  const Matrix& gm = gamma.value();
  const Matrix& bt = beta.value();
  const std::size_t rows = in.rows(), cols = in.cols();
  if (gm.rows() != 1 || gm.cols() != cols || !gm.same_shape(bt))
    throw std::invalid_argument("layer_norm_rows: affine params do not match " + in.shape_string());
  Matrix xhat(rows, cols);
  std::vector<double> inv_std(rows);
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto v = in.row(r);
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double e : v) var += (e - mean) * (e - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (v[c] - mean) * inv_std[r];
      out(r, c) = xhat(r, c) * gm[c] + bt[c];
    }
  }
  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Matrix& g) {
                    const std::size_t rows = g.rows(), cols = g.cols();
                    const Matrix& gm = gamma.value();
                    if (t.needs_grad(gamma.id()) || t.needs_grad(beta.id())) {
                      Matrix dg(1, cols), db(1, cols);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) {
                          dg[c] += g(r, c) * xhat(r, c);
                          db[c] += g(r, c);
                        }
                      accumulate(t, gamma, dg);
                      accumulate(t, beta, db);
                    }
                    if (!t.needs_grad(x.id())) return;
                    Matrix& gx = t.grad(x.id());
                    const double inv_n = 1.0 / static_cast<double>(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_gy = 0.0, mean_gy_xhat = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double gy = g(r, c) * gm[c];
                        mean_gy += gy;
                        mean_gy_xhat += gy * xhat(r, c);
                      }
                      mean_gy *= inv_n;
                      mean_gy_xhat *= inv_n;
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double gy = g(r, c) * gm[c];
                        gx(r, c) += inv_std[r] * (gy - mean_gy - xhat(r, c) * mean_gy_xhat);
                      }
                    }
                  });
}

Var gelu(Var a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
      [](double x) {
        const double u = k * (x + c * x * x * x);
        const double th = std::tanh(u);
        const double du = k * (1.0 + 3.0 * c * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); }, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {

// Elementwise select; ties route the gradient to `a`.
Var select(Var a, Var b, bool take_min) {
  Tape& t = tape_of(a);
  require_same(a.value(), b.value(), take_min ? "minimum" : "maximum");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out(x.rows(), x.cols());
  std::vector<bool> from_a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    from_a[i] = take_min ? x[i] <= y[i] : x[i] >= y[i];
    out[i] = from_a[i] ? x[i] : y[i];
  }
  return t.record(std::move(out), {a, b}, [a, b, from_a = std::move(from_a)](Tape& t, const Matrix& g) {
    if (t.needs_grad(a.id())) {
      Matrix& ga = t.grad(a.id());
      for (std::size_t i = 0; i < g.size(); ++i)
        if (from_a[i]) ga[i] += g[i];
    }
    if (t.needs_grad(b.id())) {
      Matrix& gb = t.grad(b.id());
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!from_a[i]) gb[i] += g[i];
    }
  });
}

}  // namespace

Var minimum(Var a, Var b) { return select(a, b, true); }
Var maximum(Var a, Var b) { return select(a, b, false); }

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Matrix(1, 1, s), {a}, [a](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a.id());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offset * cols);
    offset += v.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [saved](Tape& t, const Matrix& g) {
    std::size_t offset = 0;
    for (const Var& p : saved) {
      const std::size_t n = p.rows() * g.cols();
      if (t.needs_grad(p.id())) kernels::axpy(1.0, g.data() + offset * g.cols(), t.grad(p.id()).data(), n);
      offset += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + offset);
    offset += v.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [saved](Tape& t, const Matrix& g) {
    std::size_t offset = 0;
    for (const Var& p : saved) {
      const std::size_t pc = p.cols();
      if (t.needs_grad(p.id())) {
        Matrix& gp = t.grad(p.id());
        for (std::size_t r = 0; r < g.rows(); ++r)
          kernels::axpy(1.0, g.row(r).data() + offset, gp.row(r).data(), pc);
      }
      offset += pc;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (begin + count > x.rows() || count == 0) throw std::invalid_argument("slice_rows: out of range");
  Matrix out(count, x.cols());
  std::copy(x.data() + begin * x.cols(), x.data() + (begin + count) * x.cols(), out.data());
  return t.record(std::move(out), {a}, [a, begin](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a.id());
    kernels::axpy(1.0, g.data(), ga.data() + begin * ga.cols(), g.size());
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (begin + count > x.cols() || count == 0) throw std::invalid_argument("slice_cols: out of range");
  Matrix out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    std::copy(x.row(r).begin() + begin, x.row(r).begin() + begin + count, out.row(r).begin());
  return t.record(std::move(out), {a}, [a, begin](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r) kernels::axpy(1.0, g.row(r).data(), ga.row(r).data() + begin, g.cols());
  });
}

Var linear(Var x, Var w, Var b) {
  Var y = matmul(x, w);
  return b.valid() ? add_row(y, b) : y;
}

}  // namespace rgbtvg::ag
