#include "aligntk/alignlayer.hpp"

#include <cmath>

#include "aligntk/datapipe.hpp"
#include "aligntk/errors.hpp"
#include "aligntk/hash.hpp"

namespace aligntk {

std::string repr_mode_name(EncoderReprMode mode) {
  switch (mode) {
    case EncoderReprMode::Word: return "word";
    case EncoderReprMode::Enc: return "enc";
    case EncoderReprMode::Add: return "add";
  }
  throw ConfigError("unknown representation mode");
}

EncoderReprMode repr_mode_from_name(const std::string& name) {
  if (name == "word") return EncoderReprMode::Word;
  if (name == "enc") return EncoderReprMode::Enc;
  if (name == "add") return EncoderReprMode::Add;
  throw ConfigError("unknown representation mode '" + name + "'");
}

AlignLayerParams AlignLayerParams::init(std::int64_t d_model,
                                        std::int64_t tgt_vocab,
                                        std::uint64_t seed) {
  if (d_model <= 0 || tgt_vocab <= 0) {
    throw ConfigError("alignment layer needs positive dimensions");
  }
  Rng rng(seed);
  auto glorot = [&](std::int64_t r, std::int64_t c) {
    Tensor t({r, c});
    double s = std::sqrt(2.0 / static_cast<double>(r + c));
    for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal() * s;
    return make_var(std::move(t));
  };
  AlignLayerParams p;
  p.att.wq.push_back(glorot(d_model, d_model));
  p.att.wk.push_back(glorot(d_model, d_model));
  p.att.wv.push_back(glorot(d_model, d_model));
  p.att.wo = glorot(d_model, d_model);
  p.w = glorot(tgt_vocab, d_model);
  return p;
}

void AlignLayerParams::visit(
    const std::function<void(const std::string&, const VarPtr&)>& fn) const {
  fn("align.wq", att.wq.at(0));
  fn("align.wk", att.wk.at(0));
  fn("align.wv", att.wv.at(0));
  fn("align.wo", att.wo);
  fn("align.w", w);
}

std::vector<VarPtr> AlignLayerParams::all() const {
  std::vector<VarPtr> out;
  visit([&](const std::string&, const VarPtr& v) { out.push_back(v); });
  return out;
}

void AlignLayerParams::set_trainable(bool trainable) {
  for (const VarPtr& v : all()) v->requires_grad = trainable;
}

std::uint64_t AlignLayerParams::content_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  visit([&](const std::string& name, const VarPtr& v) {
    h = fnv1a_str(name, h);
    h = fnv1a_u64(static_cast<std::uint64_t>(v->value.rank()), h);
    for (std::int64_t d : v->value.shape()) {
      h = fnv1a_u64(static_cast<std::uint64_t>(d), h);
    }
    for (std::int64_t i = 0; i < v->value.size(); ++i) {
      h = fnv1a_f64(v->value.at(i), h);
    }
  });
  return h;
}

VarPtr build_E(Tape& tape, EncoderReprMode mode, const EncodedSourceV& enc) {
  switch (mode) {
    case EncoderReprMode::Word:
      return enc.word_embeddings;
    case EncoderReprMode::Enc:
      return enc.encoder_output;
    case EncoderReprMode::Add:
      return op_scale(tape, op_add(tape, enc.word_embeddings, enc.encoder_output),
                      0.5);
  }
  throw ConfigError("unknown representation mode");
}

AlignForwardOut align_forward(Tape& tape, const VarPtr& decoder_output,
                              const VarPtr& E, const AlignLayerParams& params,
                              const Mask* eos_mask, double dropout,
                              Rng* drop_rng) {
  if (eos_mask == nullptr) {
    throw MaskError("alignment layer requires the EOS mask");
  }
  MultiHeadOut att =
      op_multi_head(tape, decoder_output, E, E, params.att, eos_mask);
  AlignForwardOut out;
  out.a = att.activations.at(0);
  out.vprime = att.head_values.at(0);
  VarPtr h = dropout_v(tape, att.context, dropout, drop_rng);
  out.logits = op_matmul_nt(tape, h, params.w);
  out.p = op_softmax_rows(tape, out.logits);
  return out;
}

namespace {

struct AlignBatchLoss {
  VarPtr loss;
  std::int64_t tokens = 0;
};

AlignBatchLoss align_sentence_loss(Tape& tape, const TransformerParams& base,
                                   const ModelConfig& cfg, EncoderReprMode mode,
                                   const AlignLayerParams& align,
                                   const IdPair& pair, Rng* drop_rng) {
  std::vector<std::int64_t> src = pair.src;
  src.push_back(Vocab::kEos);
  std::vector<std::int64_t> tgt_in{Vocab::kBos};
  tgt_in.insert(tgt_in.end(), pair.tgt.begin(), pair.tgt.end());
  std::vector<std::int64_t> tgt_out = pair.tgt;
  tgt_out.push_back(Vocab::kEos);

  EncodedSourceV enc = encode_v(tape, src, base, cfg);
  DecodeOutV dec = decode_v(tape, tgt_in, enc, base, cfg);
  VarPtr E = build_E(tape, mode, enc);
  Mask eos_mask = Mask::exclude_col(dec.decoder_output->value.rows(),
                                    E->value.rows(), enc.eos_position);
  AlignForwardOut fwd =
      align_forward(tape, dec.decoder_output, E, align, &eos_mask,
                    drop_rng ? cfg.dropout : 0.0, drop_rng);
  AlignBatchLoss out;
  out.loss = op_sum(tape, op_cross_entropy_rows(tape, fwd.logits, tgt_out));
  out.tokens = static_cast<std::int64_t>(tgt_out.size());
  return out;
}

}  // namespace

FinetuneResult finetune(const TransformerParams& base, const ModelConfig& cfg,
                        EncoderReprMode mode, const std::vector<IdPair>& train,
                        const std::vector<IdPair>& heldout,
                        const TrainHyper& hyper) {
  if (train.empty()) throw DataError("fine-tuning corpus is empty");
  cfg.validate();
  for (const VarPtr& v : base.all()) v->requires_grad = false;

  FinetuneResult result;
  result.params = AlignLayerParams::init(cfg.d_model, cfg.tgt_vocab, hyper.seed);
  Adam opt(result.params.all(), hyper.lr);
  Rng order_rng(hyper.seed);
  Rng drop_rng(hyper.seed ^ 0xD1B54A32D192ED03ULL);

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::int64_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_ce = 0.0;
    std::int64_t epoch_tokens = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(hyper.batch_size)) {
      std::size_t end = std::min(
          order.size(), begin + static_cast<std::size_t>(hyper.batch_size));
      Tape tape;
      VarPtr total;
      std::int64_t tokens = 0;
      for (std::size_t k = begin; k < end; ++k) {
        AlignBatchLoss one = align_sentence_loss(
            tape, base, cfg, mode, result.params, train[order[k]], &drop_rng);
        total = total ? op_add(tape, total, one.loss) : one.loss;
        tokens += one.tokens;
      }
      VarPtr loss = op_scale(tape, total, 1.0 / static_cast<double>(tokens));
      epoch_ce += loss->value.at(0) * static_cast<double>(tokens);
      epoch_tokens += tokens;
      tape.backward(loss);
      opt.step();
    }
    result.epoch_losses.push_back(epoch_ce / static_cast<double>(epoch_tokens));
  }
  if (!heldout.empty()) {
    result.heldout_ppl =
        align_heldout_perplexity(base, result.params, mode, heldout, cfg);
  }
  return result;
}

double align_heldout_perplexity(const TransformerParams& base,
                                const AlignLayerParams& align,
                                EncoderReprMode mode,
                                const std::vector<IdPair>& data,
                                const ModelConfig& cfg) {
  if (data.empty()) throw DataError("perplexity needs a non-empty corpus");
  double total = 0.0;
  std::int64_t tokens = 0;
  for (const IdPair& pair : data) {
    Tape tape;
    AlignBatchLoss one =
        align_sentence_loss(tape, base, cfg, mode, align, pair, nullptr);
    total += one.loss->value.at(0);
    tokens += one.tokens;
  }
  return std::exp(total / static_cast<double>(tokens));
}

}  // namespace aligntk
