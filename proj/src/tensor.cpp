#include "aligntk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace aligntk {

namespace {

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

void require_rank(const Tensor& t, std::int64_t r, const char* what) {
  if (t.rank() != r) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r) +
                     ", got " + t.shape_str());
  }
}

void check_shape(const std::vector<std::int64_t>& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw ShapeError("tensor rank must be 1-3, got rank " +
                     std::to_string(shape.size()));
  }
  for (std::int64_t d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::vec(std::vector<double> data) {
  std::vector<std::int64_t> shape{static_cast<std::int64_t>(data.size())};
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::mat(std::initializer_list<std::initializer_list<double>> rows) {
  std::int64_t r = static_cast<std::int64_t>(rows.size());
  std::int64_t c = r > 0 ? static_cast<std::int64_t>(rows.begin()->size()) : 0;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(r * c));
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != c) {
      throw ShapeError("ragged matrix initializer");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::int64_t n) {
  Tensor t({n, n});
  for (std::int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::int64_t Tensor::rows() const {
  require_rank(*this, 2, "rows()");
  return shape_[0];
}

std::int64_t Tensor::cols() const {
  require_rank(*this, 2, "cols()");
  return shape_[1];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ',';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Mask Mask::causal(std::int64_t t) {
  Mask m(t, t, false);
  for (std::int64_t i = 0; i < t; ++i) {
    for (std::int64_t j = 0; j <= i; ++j) m.set(i, j, true);
  }
  return m;
}

Mask Mask::exclude_col(std::int64_t t, std::int64_t s, std::int64_t col) {
  Mask m(t, s, true);
  for (std::int64_t i = 0; i < t; ++i) m.set(i, col, false);
  return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() +
                     " x " + b.shape_str());
  }
  const std::int64_t m = a.rows(), n = a.cols(), p = b.cols();
  Tensor out({m, p});
  const double* ad = a.data();
  const double* bd = b.data();
  double* od = out.data();
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = ad + i * n;
    double* orow = od + i * p;
    for (std::int64_t k = 0; k < n; ++k) {
      const double aik = arow[k];
      const double* brow = bd + k * p;
      for (std::int64_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt lhs");
  require_rank(b, 2, "matmul_nt rhs");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: shared dimension disagrees, " + a.shape_str() +
                     " x " + b.shape_str() + "^T");
  }
  const std::int64_t m = a.rows(), n = a.cols(), p = b.rows();
  Tensor out({m, p});
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * n;
    for (std::int64_t j = 0; j < p; ++j) {
      const double* brow = b.data() + j * n;
      double acc = 0.0;
      for (std::int64_t k = 0; k < n; ++k) acc += arow[k] * brow[k];
      out.at(i, j) = acc;
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    for (std::int64_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Tensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) += b.at(i);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("sub: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Tensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) -= b.at(i);
  return out;
}

Tensor elem_mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("elem_mul: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Tensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) *= b.at(i);
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) *= s;
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    if (out.at(i) < 0.0) out.at(i) = 0.0;
  }
  return out;
}

// Max-subtraction over the allowed entries only, masked outputs written as
// exact zeros. Equivalent to additive -1e30 masking for all realistic
// magnitudes, but keeps the finite-output invariant even for extreme inputs.
Tensor softmax_rows(const Tensor& x, const Mask* mask) {
  require_rank(x, 2, "softmax_rows");
  if (mask != nullptr && (mask->n_rows != x.rows() || mask->n_cols != x.cols())) {
    throw ShapeError("softmax_rows: mask shape [" + std::to_string(mask->n_rows) +
                     "," + std::to_string(mask->n_cols) + "] vs input " +
                     x.shape_str());
  }
  Tensor out({x.rows(), x.cols()});
  for (std::int64_t i = 0; i < x.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < x.cols(); ++j) {
      if (mask == nullptr || mask->at(i, j)) m = std::max(m, x.at(i, j));
    }
    if (!std::isfinite(m)) {
      throw MaskError("softmax_rows: row " + std::to_string(i) +
                      " has no unmasked entry");
    }
    double z = 0.0;
    for (std::int64_t j = 0; j < x.cols(); ++j) {
      if (mask == nullptr || mask->at(i, j)) {
        double e = std::exp(x.at(i, j) - m);
        out.at(i, j) = e;
        z += e;
      }
    }
    for (std::int64_t j = 0; j < x.cols(); ++j) out.at(i, j) /= z;
    if (mask != nullptr) {
      for (std::int64_t j = 0; j < x.cols(); ++j) {
        if (!mask->at(i, j)) out.at(i, j) = 0.0;
      }
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_rank(x, 2, "layer_norm");
  const std::int64_t n = x.cols();
  if (gain.rank() != 1 || gain.size() != n || bias.rank() != 1 ||
      bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias must be rank-1 of size " +
                     std::to_string(n));
  }
  Tensor out({x.rows(), n});
  for (std::int64_t i = 0; i < x.rows(); ++i) {
    double mu = 0.0;
    for (std::int64_t j = 0; j < n; ++j) mu += x.at(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::int64_t j = 0; j < n; ++j) {
      out.at(i, j) = gain.at(j) * ((x.at(i, j) - mu) * inv) + bias.at(j);
    }
  }
  return out;
}

Tensor embed_lookup(const Tensor& table, const std::vector<std::int64_t>& ids) {
  require_rank(table, 2, "embed_lookup table");
  const std::int64_t v = table.rows(), d = table.cols();
  Tensor out({static_cast<std::int64_t>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::int64_t id = ids[i];
    if (id < 0 || id >= v) {
      throw IndexError("embed_lookup: id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(v));
    }
    for (std::int64_t j = 0; j < d; ++j) {
      out.at(static_cast<std::int64_t>(i), j) = table.at(id, j);
    }
  }
  return out;
}

Tensor cross_entropy_rows(const Tensor& logits,
                          const std::vector<std::int64_t>& targets) {
  require_rank(logits, 2, "cross_entropy_rows");
  if (static_cast<std::int64_t>(targets.size()) != logits.rows()) {
    throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(logits.rows()) + " rows");
  }
  const std::int64_t v = logits.cols();
  Tensor out({logits.rows()});
  for (std::int64_t i = 0; i < logits.rows(); ++i) {
    std::int64_t t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= v) {
      throw IndexError("cross_entropy: target id " + std::to_string(t) +
                       " outside vocabulary of size " + std::to_string(v));
    }
    double m = logits.at(i, 0);
    for (std::int64_t j = 1; j < v; ++j) m = std::max(m, logits.at(i, j));
    double z = 0.0;
    for (std::int64_t j = 0; j < v; ++j) z += std::exp(logits.at(i, j) - m);
    out.at(i) = (m + std::log(z)) - logits.at(i, t);
  }
  return out;
}

double cross_entropy(const Tensor& logits_row, std::int64_t target) {
  if (logits_row.rank() != 1) {
    throw ShapeError("cross_entropy: expected rank-1 logits, got " +
                     logits_row.shape_str());
  }
  Tensor m({1, logits_row.size()},
           std::vector<double>(logits_row.data(),
                               logits_row.data() + logits_row.size()));
  return cross_entropy_rows(m, {target}).at(0);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input");
  const std::int64_t r = parts[0].rows();
  std::int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != r) {
      throw ShapeError("concat_cols: row mismatch " + parts[0].shape_str() +
                       " vs " + p.shape_str());
    }
    total += p.cols();
  }
  Tensor out({r, total});
  std::int64_t off = 0;
  for (const Tensor& p : parts) {
    for (std::int64_t i = 0; i < r; ++i) {
      for (std::int64_t j = 0; j < p.cols(); ++j) {
        out.at(i, off + j) = p.at(i, j);
      }
    }
    off += p.cols();
  }
  return out;
}

Tensor slice(const Tensor& a, std::int64_t r0, std::int64_t r1, std::int64_t c0,
             std::int64_t c1) {
  require_rank(a, 2, "slice");
  if (r0 < 0 || r1 > a.rows() || c0 < 0 || c1 > a.cols() || r0 >= r1 ||
      c0 >= c1) {
    throw ShapeError("slice: bad range on " + a.shape_str());
  }
  Tensor out({r1 - r0, c1 - c0});
  for (std::int64_t i = r0; i < r1; ++i) {
    for (std::int64_t j = c0; j < c1; ++j) out.at(i - r0, j - c0) = a.at(i, j);
  }
  return out;
}

double sum_all(const Tensor& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a.at(i);
  return s;
}

double max_all(const Tensor& a) {
  double m = a.at(0);
  for (std::int64_t i = 1; i < a.size(); ++i) m = std::max(m, a.at(i));
  return m;
}

Tensor calc_att(const Tensor& q, const Tensor& k, const Mask* mask) {
  require_rank(q, 2, "calc_att q");
  require_rank(k, 2, "calc_att k");
  if (q.cols() != k.cols()) {
    throw ShapeError("calc_att: q depth " + q.shape_str() + " vs k depth " +
                     k.shape_str());
  }
  Tensor scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  return softmax_rows(scores, mask);
}

Tensor apply_att(const Tensor& a, const Tensor& v) {
  require_rank(a, 2, "apply_att a");
  require_rank(v, 2, "apply_att v");
  if (a.cols() != v.rows()) {
    throw ShapeError("apply_att: " + std::to_string(a.cols()) +
                     " attention columns vs " + std::to_string(v.rows()) +
                     " values");
  }
  return matmul(a, v);
}

}  // namespace aligntk
