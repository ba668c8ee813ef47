#include "aligntk/tape.hpp"

#include <cmath>
#include <utility>

namespace aligntk {

void Var::accumulate(const Tensor& g) {
  if (!g.same_shape(value)) {
    throw ShapeError("gradient shape " + g.shape_str() +
                     " does not match value shape " + value.shape_str());
  }
  if (grad.empty()) {
    grad = g;
  } else {
    for (std::int64_t i = 0; i < grad.size(); ++i) grad.at(i) += g.at(i);
  }
}

void Var::zero_grad() { grad = Tensor(); }

const Tensor& Var::grad_or_zero() {
  if (grad.empty()) grad = Tensor::zeros(value.shape());
  return grad;
}

VarPtr make_var(Tensor value, bool requires_grad) {
  auto v = std::make_shared<Var>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

void Tape::backward(const VarPtr& root) {
  if (root->value.size() != 1) {
    throw ShapeError("backward root must be a single element, got " +
                     root->value.shape_str());
  }
  root->accumulate(Tensor::full(root->value.shape(), 1.0));
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

namespace {

bool needs(const VarPtr& a) { return a->requires_grad; }

}  // namespace

VarPtr op_add(Tape& t, const VarPtr& a, const VarPtr& b) {
  VarPtr out = make_var(add(a->value, b->value), needs(a) || needs(b));
  if (out->requires_grad) {
    t.record([a, b, out] {
      if (!out->grad_live()) return;
      if (a->requires_grad) a->accumulate(out->grad);
      if (b->requires_grad) b->accumulate(out->grad);
    });
  }
  return out;
}

VarPtr op_add_rowvec(Tape& t, const VarPtr& x, const VarPtr& b) {
  const Tensor& xv = x->value;
  const Tensor& bv = b->value;
  if (xv.rank() != 2 || bv.rank() != 1 || bv.size() != xv.cols()) {
    throw ShapeError("add_rowvec: " + xv.shape_str() + " + " + bv.shape_str());
  }
  Tensor ov = xv;
  for (std::int64_t i = 0; i < ov.rows(); ++i) {
    for (std::int64_t j = 0; j < ov.cols(); ++j) ov.at(i, j) += bv.at(j);
  }
  VarPtr out = make_var(std::move(ov), needs(x) || needs(b));
  if (out->requires_grad) {
    t.record([x, b, out] {
      if (!out->grad_live()) return;
      const Tensor& g = out->grad;
      if (x->requires_grad) x->accumulate(g);
      if (b->requires_grad) {
        Tensor gb = Tensor::zeros(b->value.shape());
        for (std::int64_t i = 0; i < g.rows(); ++i) {
          for (std::int64_t j = 0; j < g.cols(); ++j) gb.at(j) += g.at(i, j);
        }
        b->accumulate(gb);
      }
    });
  }
  return out;
}

VarPtr op_scale(Tape& t, const VarPtr& a, double s) {
  VarPtr out = make_var(scale(a->value, s), needs(a));
  if (out->requires_grad) {
    t.record([a, out, s] {
      if (!out->grad_live()) return;
      a->accumulate(scale(out->grad, s));
    });
  }
  return out;
}

VarPtr op_elem_mul_const(Tape& t, const VarPtr& a, Tensor m) {
  VarPtr out = make_var(elem_mul(a->value, m), needs(a));
  if (out->requires_grad) {
    t.record([a, out, m = std::move(m)] {
      if (!out->grad_live()) return;
      a->accumulate(elem_mul(out->grad, m));
    });
  }
  return out;
}

VarPtr op_matmul(Tape& t, const VarPtr& a, const VarPtr& b) {
  VarPtr out = make_var(matmul(a->value, b->value), needs(a) || needs(b));
  if (out->requires_grad) {
    t.record([a, b, out] {
      if (!out->grad_live()) return;
      const Tensor& g = out->grad;
      if (a->requires_grad) a->accumulate(matmul_nt(g, b->value));
      if (b->requires_grad) b->accumulate(matmul(transpose(a->value), g));
    });
  }
  return out;
}

VarPtr op_matmul_nt(Tape& t, const VarPtr& a, const VarPtr& b) {
  VarPtr out = make_var(matmul_nt(a->value, b->value), needs(a) || needs(b));
  if (out->requires_grad) {
    t.record([a, b, out] {
      if (!out->grad_live()) return;
      const Tensor& g = out->grad;
      if (a->requires_grad) a->accumulate(matmul(g, b->value));
      if (b->requires_grad) b->accumulate(matmul(transpose(g), a->value));
    });
  }
  return out;
}

VarPtr op_transpose(Tape& t, const VarPtr& a) {
  VarPtr out = make_var(transpose(a->value), needs(a));
  if (out->requires_grad) {
    t.record([a, out] {
      if (!out->grad_live()) return;
      a->accumulate(transpose(out->grad));
    });
  }
  return out;
}

VarPtr op_relu(Tape& t, const VarPtr& a) {
  VarPtr out = make_var(relu(a->value), needs(a));
  if (out->requires_grad) {
    // subgradient 0 at the kink
    t.record([a, out] {
      if (!out->grad_live()) return;
      Tensor ga = out->grad;
      for (std::int64_t i = 0; i < ga.size(); ++i) {
        if (a->value.at(i) <= 0.0) ga.at(i) = 0.0;
      }
      a->accumulate(ga);
    });
  }
  return out;
}

VarPtr op_softmax_rows(Tape& t, const VarPtr& x, const Mask* mask) {
  VarPtr out = make_var(softmax_rows(x->value, mask), needs(x));
  if (out->requires_grad) {
    // masked entries have y = 0, so the row formula already zeroes them
    t.record([x, out] {
      if (!out->grad_live()) return;
      const Tensor& y = out->value;
      const Tensor& g = out->grad;
      Tensor gx({y.rows(), y.cols()});
      for (std::int64_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::int64_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
        for (std::int64_t j = 0; j < y.cols(); ++j) {
          gx.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
        }
      }
      x->accumulate(gx);
    });
  }
  return out;
}

VarPtr op_layer_norm(Tape& t, const VarPtr& x, const VarPtr& gain,
                     const VarPtr& bias, double eps) {
  VarPtr out = make_var(layer_norm(x->value, gain->value, bias->value, eps),
                        needs(x) || needs(gain) || needs(bias));
  if (out->requires_grad) {
    t.record([x, gain, bias, out, eps] {
      if (!out->grad_live()) return;
      const Tensor& xv = x->value;
      const Tensor& g = out->grad;
      const std::int64_t n = xv.cols();
      Tensor gx = x->requires_grad ? Tensor::zeros(xv.shape()) : Tensor();
      Tensor ggain = gain->requires_grad ? Tensor::zeros(gain->value.shape()) : Tensor();
      Tensor gbias = bias->requires_grad ? Tensor::zeros(bias->value.shape()) : Tensor();
      std::vector<double> xhat(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < xv.rows(); ++i) {
        double mu = 0.0;
        for (std::int64_t j = 0; j < n; ++j) mu += xv.at(i, j);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
          double d = xv.at(i, j) - mu;
          var += d * d;
        }
        var /= static_cast<double>(n);
        double inv = 1.0 / std::sqrt(var + eps);
        for (std::int64_t j = 0; j < n; ++j) {
          xhat[static_cast<std::size_t>(j)] = (xv.at(i, j) - mu) * inv;
        }
        if (gain->requires_grad) {
          for (std::int64_t j = 0; j < n; ++j) {
            ggain.at(j) += g.at(i, j) * xhat[static_cast<std::size_t>(j)];
          }
        }
        if (bias->requires_grad) {
          for (std::int64_t j = 0; j < n; ++j) gbias.at(j) += g.at(i, j);
        }
        if (x->requires_grad) {
          double mean_h = 0.0, mean_hx = 0.0;
          for (std::int64_t j = 0; j < n; ++j) {
            double h = g.at(i, j) * gain->value.at(j);
            mean_h += h;
            mean_hx += h * xhat[static_cast<std::size_t>(j)];
          }
          mean_h /= static_cast<double>(n);
          mean_hx /= static_cast<double>(n);
          for (std::int64_t j = 0; j < n; ++j) {
            double h = g.at(i, j) * gain->value.at(j);
            gx.at(i, j) =
                inv * (h - mean_h - xhat[static_cast<std::size_t>(j)] * mean_hx);
          }
        }
      }
      if (x->requires_grad) x->accumulate(gx);
      if (gain->requires_grad) gain->accumulate(ggain);
      if (bias->requires_grad) bias->accumulate(gbias);
    });
  }
  return out;
}

VarPtr op_embed_lookup(Tape& t, const VarPtr& table,
                       std::vector<std::int64_t> ids) {
  VarPtr out = make_var(embed_lookup(table->value, ids), needs(table));
  if (out->requires_grad) {
    t.record([table, out, ids = std::move(ids)] {
      if (!out->grad_live()) return;
      const Tensor& g = out->grad;
      Tensor gt = Tensor::zeros(table->value.shape());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::int64_t j = 0; j < g.cols(); ++j) {
          gt.at(ids[i], j) += g.at(static_cast<std::int64_t>(i), j);
        }
      }
      table->accumulate(gt);
    });
  }
  return out;
}

VarPtr op_cross_entropy_rows(Tape& t, const VarPtr& logits,
                             std::vector<std::int64_t> targets) {
  VarPtr out =
      make_var(cross_entropy_rows(logits->value, targets), needs(logits));
  if (out->requires_grad) {
    t.record([logits, out, targets = std::move(targets)] {
      if (!out->grad_live()) return;
      const Tensor& g = out->grad;
      Tensor p = softmax_rows(logits->value);
      for (std::int64_t i = 0; i < p.rows(); ++i) {
        for (std::int64_t j = 0; j < p.cols(); ++j) p.at(i, j) *= g.at(i);
        p.at(i, targets[static_cast<std::size_t>(i)]) -= g.at(i);
      }
      logits->accumulate(p);
    });
  }
  return out;
}

VarPtr op_cross_entropy(Tape& t, const VarPtr& logits_row, std::int64_t target) {
  const Tensor& lv = logits_row->value;
  if (lv.rank() != 1) {
    throw ShapeError("cross_entropy: expected rank-1 logits, got " +
                     lv.shape_str());
  }
  VarPtr out = make_var(Tensor({1}, {cross_entropy(lv, target)}),
                        needs(logits_row));
  if (out->requires_grad) {
    t.record([logits_row, out, target] {
      if (!out->grad_live()) return;
      const Tensor& lv = logits_row->value;
      Tensor row({1, lv.size()},
                 std::vector<double>(lv.data(), lv.data() + lv.size()));
      Tensor p = softmax_rows(row);
      Tensor gl = Tensor::zeros(lv.shape());
      double g0 = out->grad.at(0);
      for (std::int64_t j = 0; j < lv.size(); ++j) gl.at(j) = g0 * p.at(0, j);
      gl.at(target) -= g0;
      logits_row->accumulate(gl);
    });
  }
  return out;
}

VarPtr op_concat_cols(Tape& t, const std::vector<VarPtr>& parts) {
  std::vector<Tensor> vals;
  vals.reserve(parts.size());
  bool rg = false;
  for (const VarPtr& p : parts) {
    vals.push_back(p->value);
    rg = rg || p->requires_grad;
  }
  VarPtr out = make_var(concat_cols(vals), rg);
  if (out->requires_grad) {
    t.record([parts, out] {
      if (!out->grad_live()) return;
      const Tensor& g = out->grad;
      std::int64_t off = 0;
      for (const VarPtr& p : parts) {
        std::int64_t w = p->value.cols();
        if (p->requires_grad) {
          p->accumulate(slice(g, 0, g.rows(), off, off + w));
        }
        off += w;
      }
    });
  }
  return out;
}

VarPtr op_sum(Tape& t, const VarPtr& a) {
  VarPtr out = make_var(Tensor({1}, {sum_all(a->value)}), needs(a));
  if (out->requires_grad) {
    t.record([a, out] {
      if (!out->grad_live()) return;
      a->accumulate(Tensor::full(a->value.shape(), out->grad.at(0)));
    });
  }
  return out;
}

VarPtr op_mean(Tape& t, const VarPtr& a) {
  const double n = static_cast<double>(a->value.size());
  VarPtr out = make_var(Tensor({1}, {sum_all(a->value) / n}), needs(a));
  if (out->requires_grad) {
    t.record([a, out, n] {
      if (!out->grad_live()) return;
      a->accumulate(Tensor::full(a->value.shape(), out->grad.at(0) / n));
    });
  }
  return out;
}

VarPtr op_calc_att(Tape& t, const VarPtr& q, const VarPtr& k, const Mask* mask) {
  if (q->value.rank() != 2 || k->value.rank() != 2 ||
      q->value.cols() != k->value.cols()) {
    throw ShapeError("calc_att: q depth " + q->value.shape_str() +
                     " vs k depth " + k->value.shape_str());
  }
  VarPtr scores = op_matmul_nt(t, q, k);
  VarPtr scaled =
      op_scale(t, scores, 1.0 / std::sqrt(static_cast<double>(q->value.cols())));
  return op_softmax_rows(t, scaled, mask);
}

VarPtr op_apply_att(Tape& t, const VarPtr& a, const VarPtr& v) {
  VarPtr out = make_var(apply_att(a->value, v->value), needs(a) || needs(v));
  if (out->requires_grad) {
    t.record([a, v, out] {
      if (!out->grad_live()) return;
      const Tensor& g = out->grad;
      if (a->requires_grad) a->accumulate(matmul_nt(g, v->value));
      if (v->requires_grad) v->accumulate(matmul(transpose(a->value), g));
    });
  }
  return out;
}

MultiHeadOut op_multi_head(Tape& t, const VarPtr& q, const VarPtr& k,
                           const VarPtr& v, const MultiHeadParamsV& p,
                           const Mask* mask) {
  const std::size_t m = p.wq.size();
  if (m == 0 || p.wk.size() != m || p.wv.size() != m || !p.wo) {
    throw ConfigError("multi_head: need one q/k/v projection per head and wo");
  }
  MultiHeadOut out;
  std::vector<VarPtr> contexts;
  for (std::size_t i = 0; i < m; ++i) {
    VarPtr qi = op_matmul(t, q, p.wq[i]);
    VarPtr ki = op_matmul(t, k, p.wk[i]);
    VarPtr vi = op_matmul(t, v, p.wv[i]);
    VarPtr ai = op_calc_att(t, qi, ki, mask);
    out.activations.push_back(ai);
    out.head_values.push_back(vi);
    contexts.push_back(op_apply_att(t, ai, vi));
  }
  VarPtr cat = m == 1 ? contexts[0] : op_concat_cols(t, contexts);
  out.context = op_matmul(t, cat, p.wo);
  return out;
}

}  // namespace aligntk
