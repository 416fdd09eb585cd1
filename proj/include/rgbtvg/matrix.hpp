#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rgbtvg {

/// Dense row-major double matrix. Token sequences, weights and gradients all
/// live in this one type; a row is one token.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix randn(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& values() const { return data_; }

  void fill(double v);
  Matrix transposed() const;
  bool all_finite() const;
  std::string shape_string() const;

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);
// max |a-b| / max(|a|, |b|, floor) over elements
double max_rel_diff(const Matrix& a, const Matrix& b, double floor = 1e-300);

/// 64-bit FNV-1a over raw bytes; used for weight checksums and seed mixing.
std::uint64_t fnv1a(const void* bytes, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t checksum(const Matrix& m, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t mix_seed(std::uint64_t base, std::string_view tag);

}  // namespace rgbtvg
