#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aligntk/tape.hpp"
#include "aligntk/transformer.hpp"

namespace aligntk {

// Which source-side representation feeds the alignment layer.
enum class EncoderReprMode { Word, Enc, Add };

std::string repr_mode_name(EncoderReprMode mode);
EncoderReprMode repr_mode_from_name(const std::string& name);

// Single-head attention (all projections d x d) plus an output projection
// W [V_tgt, d] with no bias. Sits on top of a frozen base model; has no
// self-attention and no skip connections.
struct AlignLayerParams {
  MultiHeadParamsV att;  // one head
  VarPtr w;

  static AlignLayerParams init(std::int64_t d_model, std::int64_t tgt_vocab,
                               std::uint64_t seed);
  void visit(
      const std::function<void(const std::string&, const VarPtr&)>& fn) const;
  std::vector<VarPtr> all() const;
  void set_trainable(bool trainable);
  std::uint64_t content_hash() const;
};

struct AlignForwardOut {
  VarPtr p;       // [t, V] next-word distribution per target position
  VarPtr logits;  // [t, V] pre-softmax scores; the training loss reads these
  VarPtr a;       // [t, s] attention activations
  VarPtr vprime;  // [s, d] E * W^V
};

// E per mode: Word -> word embeddings (with positions), Enc -> final encoder
// layer, Add -> their elementwise mean.
VarPtr build_E(Tape& tape, EncoderReprMode mode, const EncodedSourceV& enc);

// Q = decoder_output, K = V = E. p = softmax(W h) directly: no residual, so
// with E = 0 the prediction collapses to the uniform distribution.
// eos_mask must exclude the source EOS column; passing null is an error.
// Dropout (on h) is active only when drop_rng is given.
AlignForwardOut align_forward(Tape& tape, const VarPtr& decoder_output,
                              const VarPtr& E, const AlignLayerParams& params,
                              const Mask* eos_mask, double dropout = 0.0,
                              Rng* drop_rng = nullptr);

struct FinetuneResult {
  AlignLayerParams params;
  std::vector<double> epoch_losses;  // mean cross-entropy per target token
  double heldout_ppl = 0.0;
};

// Teacher-forced fine-tuning of the alignment layer only. The base model is
// frozen in place (its requires_grad flags are cleared and stay cleared) and
// runs in inference mode; dropout at cfg.dropout applies to the new layer.
FinetuneResult finetune(const TransformerParams& base, const ModelConfig& cfg,
                        EncoderReprMode mode, const std::vector<IdPair>& train,
                        const std::vector<IdPair>& heldout,
                        const TrainHyper& hyper);

// exp(mean per-token cross entropy) of the alignment layer's predictions.
double align_heldout_perplexity(const TransformerParams& base,
                                const AlignLayerParams& align,
                                EncoderReprMode mode,
                                const std::vector<IdPair>& data,
                                const ModelConfig& cfg);

}  // namespace aligntk
