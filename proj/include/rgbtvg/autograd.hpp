#pragma once

// Reverse-mode differentiation over Matrix values.
//
// A Tape records every operation of one forward pass. Frozen weights enter as
// constant references and never receive gradients; trainable Parameters
// accumulate into Parameter::grad when Tape::backward runs. A Tape built with
// record=false skips gradient bookkeeping entirely (inference).

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rgbtvg/matrix.hpp"

namespace rgbtvg::ag {

class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix value, bool trainable = true)
      : name_(std::move(name)), value_(std::move(value)), grad_(value_.rows(), value_.cols()), trainable_(trainable) {}

  const std::string& name() const { return name_; }
  Matrix& value() { return value_; }
  const Matrix& value() const { return value_; }
  Matrix& grad() { return grad_; }
  const Matrix& grad() const { return grad_; }
  bool trainable() const { return trainable_; }
  std::size_t size() const { return value_.size(); }
  void zero_grad() { grad_.fill(0.0); }

 private:
  std::string name_;
  Matrix value_;
  Matrix grad_;
  bool trainable_ = true;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the Tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix m);
  // The referenced matrix must outlive the tape.
  Var constant_ref(const Matrix& m);
  // Trainable parameters are tracked when recording; frozen ones are constants.
  Var param(Parameter& p);
  Var param(const Parameter& p) { return constant_ref(p.value()); }

  const Matrix& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Gradient buffer of a node, zero-allocated on first touch. Only valid during backward().
  Matrix& grad(std::size_t id);

  // Record an op. `parents` decide whether the result needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  // Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };
  bool record_;
  std::deque<Node> nodes_;
};

// Elementwise and structural ops. Shapes are checked; mismatches throw std::invalid_argument.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a[r x c] + bias[1 x c] on every row
Var add_row(Var a, Var bias);
Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
// a^T * b
Var matmul_tn(Var a, Var b);
Var transpose(Var a);
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Var a);
Var sigmoid(Var a);
Var abs(Var a);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var relu(Var a);
Var sum(Var a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);

// x * W + b (b optional)
Var linear(Var x, Var w, Var b = {});

}  // namespace rgbtvg::ag
