#include "aligntk/attnopt.hpp"

#include <cmath>

#include "aligntk/errors.hpp"
#include "aligntk/rng.hpp"

namespace aligntk {

void OptConfig::validate() const {
  if (steps < 0) throw ConfigError("optimization steps must be >= 0");
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
}

Tensor restricted_forward(const Tensor& a_row, const Tensor& vprime,
                          const AlignLayerParams& params) {
  if (a_row.rank() != 2 || a_row.rows() != 1) {
    throw ShapeError("expected a single attention row, got " +
                     a_row.shape_str());
  }
  Tensor h = matmul(apply_att(relu(a_row), vprime), params.att.wo->value);
  Tensor p = softmax_rows(matmul_nt(h, params.w->value));
  Tensor out({p.cols()});
  for (std::int64_t j = 0; j < p.cols(); ++j) out.at(j) = p.at(0, j);
  return out;
}

namespace {

VarPtr op_restricted_logits(Tape& tape, const VarPtr& a, const VarPtr& vprime,
                            const AlignLayerParams& params) {
  VarPtr ctx = op_apply_att(tape, op_relu(tape, a), vprime);
  VarPtr h = op_matmul(tape, ctx, params.att.wo);
  return op_matmul_nt(tape, h, params.w);
}

}  // namespace

VarPtr op_restricted_forward(Tape& tape, const VarPtr& a, const VarPtr& vprime,
                             const AlignLayerParams& params) {
  return op_softmax_rows(tape, op_restricted_logits(tape, a, vprime, params));
}

OptResult optimize(const Tensor& a_init, const Tensor& vprime,
                   const std::vector<std::int64_t>& target_ids,
                   const AlignLayerParams& params, const OptConfig& cfg) {
  cfg.validate();
  if (a_init.rank() != 2) {
    throw ShapeError("attention must be rank 2, got " + a_init.shape_str());
  }
  const std::int64_t t = a_init.rows();
  if (static_cast<std::int64_t>(target_ids.size()) != t) {
    throw ShapeError("one target id per attention row required");
  }
  const std::int64_t vocab = params.w->value.rows();
  for (std::int64_t id : target_ids) {
    if (id < 0 || id >= vocab) {
      throw IndexError("target id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
  }

  OptResult result;
  VarPtr a = make_var(a_init);
  VarPtr vp = make_const(vprime);
  for (std::int64_t step = 0; step <= cfg.steps; ++step) {
    Tape tape;
    VarPtr logits = op_restricted_logits(tape, a, vp, params);
    // the probabilities feed only the trace; the gradient path is the
    // cross entropy on the logits
    VarPtr p = op_softmax_rows(tape, logits);
    VarPtr losses = op_cross_entropy_rows(tape, logits, target_ids);

    std::vector<double> loss_row(t), prob_row(t);
    for (std::int64_t j = 0; j < t; ++j) {
      loss_row[j] = losses->value.at(j);
      prob_row[j] = p->value.at(j, target_ids[j]);
    }
    result.loss_trace.push_back(std::move(loss_row));
    result.prob_trace.push_back(std::move(prob_row));
    if (step == cfg.steps) break;

    // summing the per-position losses keeps the row gradients independent
    tape.backward(op_sum(tape, losses));
    const Tensor& g = a->grad_or_zero();
    for (std::int64_t i = 0; i < a->value.size(); ++i) {
      a->value.at(i) -= cfg.learning_rate * g.at(i);
    }
    a->zero_grad();
  }
  result.a_final = a->value;
  return result;
}

Tensor init_attention(AttInit mode, std::int64_t t, std::int64_t s,
                      const Tensor* forward_a, std::uint64_t seed) {
  if (mode == AttInit::FromForward) {
    if (forward_a == nullptr) {
      throw ConfigError("FromForward initialization needs the forward pass");
    }
    if (forward_a->rank() != 2 || forward_a->rows() != t ||
        forward_a->cols() != s) {
      throw ShapeError("forward activations are " + forward_a->shape_str() +
                       ", expected " + std::to_string(t) + "x" +
                       std::to_string(s));
    }
    return *forward_a;
  }
  Rng rng(seed);
  Tensor a({t, s});
  for (std::int64_t i = 0; i < a.size(); ++i) a.at(i) = rng.uniform01();
  return a;
}

}  // namespace aligntk
