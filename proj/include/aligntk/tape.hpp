#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "aligntk/tensor.hpp"

namespace aligntk {

// A node in the computation graph. Gradients are allocated lazily on first
// accumulation; `grad_live()` distinguishes "never touched" from "zero".
struct Var {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;

  void accumulate(const Tensor& g);
  void zero_grad();
  bool grad_live() const { return !grad.empty(); }
  // grad, or zeros of value's shape if never accumulated.
  const Tensor& grad_or_zero();
};

using VarPtr = std::shared_ptr<Var>;

VarPtr make_var(Tensor value, bool requires_grad = true);
inline VarPtr make_const(Tensor value) { return make_var(std::move(value), false); }

// Ordered record of backward closures for one forward pass. Vars outlive the
// tape; a tape is built, played backward once, and discarded.
class Tape {
 public:
  void record(std::function<void()> back) { ops_.push_back(std::move(back)); }
  // Seeds d(root)/d(root) = 1 (root must be a single element) and replays the
  // recorded closures in reverse. Each op contributes to its inputs exactly once.
  void backward(const VarPtr& root);
  std::size_t op_count() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

// ---- recorded ops ----------------------------------------------------------
// Each op computes the forward value with the plain kernel and, when any input
// requires grad, records a closure producing vector-Jacobian products.

VarPtr op_add(Tape& t, const VarPtr& a, const VarPtr& b);
// x (m x n) + row vector b (n), broadcast over rows.
VarPtr op_add_rowvec(Tape& t, const VarPtr& x, const VarPtr& b);
VarPtr op_scale(Tape& t, const VarPtr& a, double s);
// Elementwise multiply by a constant tensor (dropout masks, test probes).
VarPtr op_elem_mul_const(Tape& t, const VarPtr& a, Tensor m);
VarPtr op_matmul(Tape& t, const VarPtr& a, const VarPtr& b);
VarPtr op_matmul_nt(Tape& t, const VarPtr& a, const VarPtr& b);
VarPtr op_transpose(Tape& t, const VarPtr& a);
VarPtr op_relu(Tape& t, const VarPtr& a);
VarPtr op_softmax_rows(Tape& t, const VarPtr& x, const Mask* mask = nullptr);
VarPtr op_layer_norm(Tape& t, const VarPtr& x, const VarPtr& gain,
                     const VarPtr& bias, double eps = 1e-6);
VarPtr op_embed_lookup(Tape& t, const VarPtr& table,
                       std::vector<std::int64_t> ids);
VarPtr op_cross_entropy_rows(Tape& t, const VarPtr& logits,
                             std::vector<std::int64_t> targets);
// rank-1 logits, single target; returns a 1-element tensor.
VarPtr op_cross_entropy(Tape& t, const VarPtr& logits_row, std::int64_t target);
VarPtr op_concat_cols(Tape& t, const std::vector<VarPtr>& parts);
VarPtr op_sum(Tape& t, const VarPtr& a);   // -> [1]
VarPtr op_mean(Tape& t, const VarPtr& a);  // -> [1]
VarPtr op_calc_att(Tape& t, const VarPtr& q, const VarPtr& k,
                   const Mask* mask = nullptr);
VarPtr op_apply_att(Tape& t, const VarPtr& a, const VarPtr& v);

// Multi-head scaled dot-product attention. Per-head projections are applied to
// q/k/v, heads run independently, contexts are concatenated and projected by
// wo. Activations and projected values are exposed per head.
struct MultiHeadParamsV {
  std::vector<VarPtr> wq, wk, wv;  // one [d, d/m] matrix per head
  VarPtr wo;                       // [d, d]
};

struct MultiHeadOut {
  VarPtr context;                     // [q, d]
  std::vector<VarPtr> activations;    // per head, [q, k]
  std::vector<VarPtr> head_values;    // per head, V * wv_i, [k, d/m]
};

MultiHeadOut op_multi_head(Tape& t, const VarPtr& q, const VarPtr& k,
                           const VarPtr& v, const MultiHeadParamsV& p,
                           const Mask* mask = nullptr);

}  // namespace aligntk
