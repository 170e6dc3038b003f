#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace pathcast {

// Dense row-major tensor of doubles. Rank is dynamic, but nearly everything
// in the model is a matrix; rows()/cols() assume rank 2.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), v_(numel_of(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    if (v_.size() != numel_of(shape_)) {
      throw std::invalid_argument("Tensor: value count does not match shape");
    }
  }

  static Tensor matrix(std::size_t r, std::size_t c) { return Tensor({r, c}); }

  static Tensor matrix(std::size_t r, std::size_t c,
                       std::initializer_list<double> values) {
    return Tensor({r, c}, std::vector<double>(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.v_[i * n + i] = 1.0;
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return v_.size(); }

  std::size_t rows() const {
    require_rank(2);
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return shape_[1];
  }

  double& at(std::size_t r, std::size_t c) {
    require_rank(2);
    return v_[r * shape_[1] + c];
  }
  double at(std::size_t r, std::size_t c) const {
    require_rank(2);
    return v_[r * shape_[1] + c];
  }

  // Rank-3 access, used for the T x N x d feature tensor.
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    require_rank(3);
    return v_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    require_rank(3);
    return v_[(i * shape_[1] + j) * shape_[2] + k];
  }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (double x : v_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  void fill(double x) {
    for (double& e : v_) e = x;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

private:
  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    if (shape.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
      n *= d;
    }
    return n;
  }

  void require_rank(std::size_t r) const {
    if (shape_.size() != r) {
      throw std::invalid_argument("Tensor: expected rank " + std::to_string(r) +
                                  ", have " + shape_str());
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<double> v_;
};

}  // namespace pathcast
