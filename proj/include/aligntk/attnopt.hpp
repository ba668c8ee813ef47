#pragma once

#include <cstdint>
#include <vector>

#include "aligntk/alignlayer.hpp"
#include "aligntk/tape.hpp"

namespace aligntk {

enum class AttInit { FromForward, RandomUniform };

struct OptConfig {
  std::int64_t steps = 3;
  double learning_rate = 1.0;
  AttInit init = AttInit::FromForward;
  std::uint64_t seed = 0;  // RandomUniform only

  void validate() const;
};

struct OptResult {
  Tensor a_final;  // [t, s]
  // traces[k][j]: state after k update steps at target position j;
  // index 0 is the initial state, so each trace has steps+1 entries
  std::vector<std::vector<double>> loss_trace;
  std::vector<std::vector<double>> prob_trace;
};

// p = softmax(W ((relu(A) V') W^O)) for one target position. A is
// unconstrained: relu clamps negatives, and no normalization is applied.
// Feeding the forward-pass activations reproduces align_forward's p row
// bit for bit.
Tensor restricted_forward(const Tensor& a_row, const Tensor& vprime,
                          const AlignLayerParams& params);

// Differentiable graph of the same map, all rows at once.
VarPtr op_restricted_forward(Tape& tape, const VarPtr& a, const VarPtr& vprime,
                             const AlignLayerParams& params);

// Plain gradient descent on -log p[target] through restricted_forward,
// each target position independently.
OptResult optimize(const Tensor& a_init, const Tensor& vprime,
                   const std::vector<std::int64_t>& target_ids,
                   const AlignLayerParams& params, const OptConfig& cfg);

// forward_a is required for FromForward and ignored otherwise.
Tensor init_attention(AttInit mode, std::int64_t t, std::int64_t s,
                      const Tensor* forward_a, std::uint64_t seed);

}  // namespace aligntk
