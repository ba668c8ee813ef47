#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "aligntk/errors.hpp"

namespace aligntk {

// Dense row-major tensor of 64-bit floats, rank 1-3.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::int64_t> shape, double v);
  static Tensor vec(std::vector<double> data);
  static Tensor mat(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::int64_t n);

  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<std::int64_t>& shape() const { return shape_; }
  bool empty() const { return data_.empty(); }

  // rank-2 accessors
  std::int64_t rows() const;
  std::int64_t cols() const;

  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  double at(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;
  bool all_finite() const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

// Boolean "allowed" matrix for attention masking. A false entry forces the
// corresponding softmax output to exactly 0.
struct Mask {
  std::int64_t n_rows = 0, n_cols = 0;
  std::vector<std::uint8_t> allowed;

  Mask() = default;
  Mask(std::int64_t r, std::int64_t c, bool value = true)
      : n_rows(r), n_cols(c),
        allowed(static_cast<std::size_t>(r * c), value ? 1 : 0) {}

  bool at(std::int64_t i, std::int64_t j) const {
    return allowed[static_cast<std::size_t>(i * n_cols + j)] != 0;
  }
  void set(std::int64_t i, std::int64_t j, bool v) {
    allowed[static_cast<std::size_t>(i * n_cols + j)] = v ? 1 : 0;
  }

  // t x t lower-triangular (diagonal included).
  static Mask causal(std::int64_t t);
  // t x s, all allowed except one excluded column.
  static Mask exclude_col(std::int64_t t, std::int64_t s, std::int64_t col);
};

// ---- forward kernels ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,n]x[n,p] -> [m,p]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T, [m,n]x[p,n] -> [m,p]
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor elem_mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
// Row-wise masked softmax. Masked entries are exactly 0; each row of output
// sums to 1. Throws MaskError if a row has no allowed entry.
Tensor softmax_rows(const Tensor& x, const Mask* mask = nullptr);
// Per-row normalization over the last dimension: gain * (x-mu)/sqrt(var+eps) + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-6);
Tensor embed_lookup(const Tensor& table, const std::vector<std::int64_t>& ids);
// Per-row -log softmax(logits)[target].
Tensor cross_entropy_rows(const Tensor& logits,
                          const std::vector<std::int64_t>& targets);
double cross_entropy(const Tensor& logits_row, std::int64_t target);
Tensor concat_cols(const std::vector<Tensor>& parts);
// rank-2 sub-block [r0,r1) x [c0,c1).
Tensor slice(const Tensor& a, std::int64_t r0, std::int64_t r1, std::int64_t c0,
             std::int64_t c1);
double sum_all(const Tensor& a);
double max_all(const Tensor& a);

// softmax(Q K^T / sqrt(d)) with optional mask; d is the shared last dimension.
Tensor calc_att(const Tensor& q, const Tensor& k, const Mask* mask = nullptr);
// A * V with no constraint that rows of A sum to 1.
Tensor apply_att(const Tensor& a, const Tensor& v);

}  // namespace aligntk
