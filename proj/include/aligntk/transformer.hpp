#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aligntk/rng.hpp"
#include "aligntk/tape.hpp"

namespace aligntk {

struct ModelConfig {
  std::int64_t d_model = 64;
  std::int64_t heads = 4;
  std::int64_t enc_layers = 2;  // the full-scale setup uses 6
  std::int64_t dec_layers = 2;  // and 3
  std::int64_t src_vocab = 0;
  std::int64_t tgt_vocab = 0;
  std::int64_t max_len = 256;
  double dropout = 0.1;

  void validate() const;
};

// Standard post-norm encoder layer: self-attention and a two-linear ReLU
// feed-forward (hidden 4*d), layer norm after each sub-layer.
struct EncLayerParams {
  MultiHeadParamsV self_att;
  VarPtr ln1_gain, ln1_bias;
  VarPtr ff_w1, ff_b1, ff_w2, ff_b2;
  VarPtr ln2_gain, ln2_bias;
};

// Simplified decoder layer: the filter is one linear map and there is a
// single layer norm, applied after it.
struct DecLayerParams {
  MultiHeadParamsV self_att;
  MultiHeadParamsV enc_att;
  VarPtr filter_w;
  VarPtr ln_gain, ln_bias;
};

struct TransformerParams {
  VarPtr src_emb, tgt_emb;  // [vocab, d]
  std::vector<EncLayerParams> enc;
  std::vector<DecLayerParams> dec;
  VarPtr out_w;  // [tgt_vocab, d]

  static TransformerParams init(const ModelConfig& cfg, std::uint64_t seed);
  // every tensor with a stable name, in a fixed order
  void visit(
      const std::function<void(const std::string&, const VarPtr&)>& fn) const;
  std::vector<VarPtr> all() const;
  void set_trainable(bool trainable);
  std::uint64_t content_hash() const;
};

struct EncodedSourceV {
  VarPtr word_embeddings;  // [s,d], embedding + position encoding
  VarPtr encoder_output;   // [s,d], final layer
  std::int64_t eos_position = -1;
};

struct DecodeOutV {
  VarPtr decoder_output;                     // [t,d]
  std::vector<std::vector<VarPtr>> enc_att;  // [layer][head], each [t,s]
  VarPtr logits;                             // [t, tgt_vocab]
};

// src_ids must end with EOS. Dropout is active only when drop_rng is given.
EncodedSourceV encode_v(Tape& tape, const std::vector<std::int64_t>& src_ids,
                        const TransformerParams& params, const ModelConfig& cfg,
                        Rng* drop_rng = nullptr);

// tgt_in_ids is the shifted-right target: BOS followed by the reference
// tokens. Decoder self-attention is causal (diagonal included); every
// encoder-attention head is masked to put exactly 0 on the source EOS.
DecodeOutV decode_v(Tape& tape, const std::vector<std::int64_t>& tgt_in_ids,
                    const EncodedSourceV& enc, const TransformerParams& params,
                    const ModelConfig& cfg, Rng* drop_rng = nullptr);

VarPtr dropout_v(Tape& tape, const VarPtr& x, double rate, Rng* rng);

Tensor positional_encoding(std::int64_t n, std::int64_t d);

// token ids without specials; EOS/BOS are added by the model code
struct IdPair {
  std::vector<std::int64_t> src, tgt;
};

struct TrainHyper {
  std::int64_t epochs = 5;
  std::int64_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> epoch_losses;  // mean cross-entropy per target token
  double heldout_ppl = 0.0;
};

// Adam with bias correction and a fixed learning rate.
class Adam {
 public:
  Adam(std::vector<VarPtr> params, double lr);
  void step();  // applies and clears gradients

 private:
  std::vector<VarPtr> params_;
  std::vector<Tensor> m_, v_;
  double lr_;
  std::int64_t t_ = 0;
};

TrainResult train_transformer(TransformerParams& params,
                              const std::vector<IdPair>& train,
                              const std::vector<IdPair>& heldout,
                              const ModelConfig& cfg, const TrainHyper& hyper);

// exp(mean per-token cross entropy), teacher-forced, no dropout
double heldout_perplexity(const TransformerParams& params,
                          const std::vector<IdPair>& data,
                          const ModelConfig& cfg);

}  // namespace aligntk
