#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pathcast/tensor.hpp"

namespace pathcast {

// Square sparse matrix in compressed-row form. The transpose is materialized
// up front because the backward pass of A*X needs A^T * G.
class CsrMatrix {
public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  static CsrMatrix from_triplets(std::size_t n, std::vector<Triplet> entries) {
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    CsrMatrix m;
    m.n_ = n;
    m.row_ptr_.assign(n + 1, 0);
    for (const Triplet& e : entries) {
      if (e.row >= n || e.col >= n) {
        throw std::invalid_argument("CsrMatrix: index out of range");
      }
      ++m.row_ptr_[e.row + 1];
    }
    for (std::size_t i = 0; i < n; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
    m.col_.resize(entries.size());
    m.val_.resize(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (k > 0 && entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
        throw std::invalid_argument("CsrMatrix: duplicate entry");
      }
      m.col_[k] = entries[k].col;
      m.val_[k] = entries[k].value;
    }
    m.build_transpose();
    return m;
  }

  static CsrMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, std::move(t));
  }

  std::size_t size() const { return n_; }
  std::size_t nnz() const { return val_.size(); }

  // A * X where X is n x k.
  Tensor multiply(const Tensor& x) const {
    check_operand(x);
    const std::size_t k = x.cols();
    Tensor out({n_, k});
    for (std::size_t i = 0; i < n_; ++i) {
      double* oi = out.data() + i * k;
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        const double w = val_[p];
        const double* xj = x.data() + col_[p] * k;
        for (std::size_t c = 0; c < k; ++c) oi[c] += w * xj[c];
      }
    }
    return out;
  }

  // A^T * G where G is n x k.
  Tensor multiply_transpose(const Tensor& g) const {
    check_operand(g);
    const std::size_t k = g.cols();
    Tensor out({n_, k});
    for (std::size_t i = 0; i < n_; ++i) {
      double* oi = out.data() + i * k;
      for (std::size_t p = t_row_ptr_[i]; p < t_row_ptr_[i + 1]; ++p) {
        const double w = t_val_[p];
        const double* gj = g.data() + t_col_[p] * k;
        for (std::size_t c = 0; c < k; ++c) oi[c] += w * gj[c];
      }
    }
    return out;
  }

  Tensor to_dense() const {
    Tensor d({n_, n_});
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        d.at(i, col_[p]) = val_[p];
      }
    }
    return d;
  }

  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) s += val_[p];
    return s;
  }

private:
  void check_operand(const Tensor& x) const {
    if (x.rank() != 2 || x.rows() != n_) {
      throw std::invalid_argument("CsrMatrix: operand rows do not match matrix size");
    }
  }

  void build_transpose() {
    t_row_ptr_.assign(n_ + 1, 0);
    for (std::size_t c : col_) ++t_row_ptr_[c + 1];
    for (std::size_t i = 0; i < n_; ++i) t_row_ptr_[i + 1] += t_row_ptr_[i];
    t_col_.resize(val_.size());
    t_val_.resize(val_.size());
    std::vector<std::size_t> cursor(t_row_ptr_.begin(), t_row_ptr_.end() - 1);
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
        const std::size_t q = cursor[col_[p]]++;
        t_col_[q] = r;
        t_val_[q] = val_[p];
      }
    }
  }

  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_, col_;
  std::vector<double> val_;
  std::vector<std::size_t> t_row_ptr_, t_col_;
  std::vector<double> t_val_;
};

}  // namespace pathcast
