#include "aligntk/transformer.hpp"

#include <cmath>

#include "aligntk/datapipe.hpp"
#include "aligntk/hash.hpp"

namespace aligntk {

void ModelConfig::validate() const {
  if (d_model <= 0 || heads <= 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " not divisible by head count " + std::to_string(heads));
  }
  if (enc_layers < 1 || dec_layers < 1) {
    throw ConfigError("layer counts must be at least 1");
  }
  if (src_vocab <= Vocab::kUnk || tgt_vocab <= Vocab::kUnk) {
    throw ConfigError("vocabulary sizes must cover the reserved ids");
  }
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must be in [0, 1)");
  }
}

namespace {

Tensor glorot(Rng& rng, std::int64_t r, std::int64_t c) {
  Tensor t({r, c});
  double s = std::sqrt(2.0 / static_cast<double>(r + c));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal() * s;
  return t;
}

MultiHeadParamsV init_mh(Rng& rng, std::int64_t d, std::int64_t heads) {
  MultiHeadParamsV p;
  const std::int64_t dh = d / heads;
  for (std::int64_t h = 0; h < heads; ++h) {
    p.wq.push_back(make_var(glorot(rng, d, dh)));
    p.wk.push_back(make_var(glorot(rng, d, dh)));
    p.wv.push_back(make_var(glorot(rng, d, dh)));
  }
  p.wo = make_var(glorot(rng, d, d));
  return p;
}

void visit_mh(const std::string& prefix, const MultiHeadParamsV& p,
              const std::function<void(const std::string&, const VarPtr&)>& fn) {
  for (std::size_t h = 0; h < p.wq.size(); ++h) {
    fn(prefix + ".wq" + std::to_string(h), p.wq[h]);
    fn(prefix + ".wk" + std::to_string(h), p.wk[h]);
    fn(prefix + ".wv" + std::to_string(h), p.wv[h]);
  }
  fn(prefix + ".wo", p.wo);
}

}  // namespace

TransformerParams TransformerParams::init(const ModelConfig& cfg,
                                          std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::int64_t d = cfg.d_model;
  TransformerParams p;

  Tensor se({cfg.src_vocab, d}), te({cfg.tgt_vocab, d});
  double emb_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::int64_t i = 0; i < se.size(); ++i) se.at(i) = rng.normal() * emb_scale;
  for (std::int64_t i = 0; i < te.size(); ++i) te.at(i) = rng.normal() * emb_scale;
  p.src_emb = make_var(std::move(se));
  p.tgt_emb = make_var(std::move(te));

  for (std::int64_t l = 0; l < cfg.enc_layers; ++l) {
    EncLayerParams e;
    e.self_att = init_mh(rng, d, cfg.heads);
    e.ln1_gain = make_var(Tensor::full({d}, 1.0));
    e.ln1_bias = make_var(Tensor::zeros({d}));
    e.ff_w1 = make_var(glorot(rng, d, 4 * d));
    e.ff_b1 = make_var(Tensor::zeros({4 * d}));
    e.ff_w2 = make_var(glorot(rng, 4 * d, d));
    e.ff_b2 = make_var(Tensor::zeros({d}));
    e.ln2_gain = make_var(Tensor::full({d}, 1.0));
    e.ln2_bias = make_var(Tensor::zeros({d}));
    p.enc.push_back(std::move(e));
  }
  for (std::int64_t l = 0; l < cfg.dec_layers; ++l) {
    DecLayerParams dl;
    dl.self_att = init_mh(rng, d, cfg.heads);
    dl.enc_att = init_mh(rng, d, cfg.heads);
    dl.filter_w = make_var(glorot(rng, d, d));
    dl.ln_gain = make_var(Tensor::full({d}, 1.0));
    dl.ln_bias = make_var(Tensor::zeros({d}));
    p.dec.push_back(std::move(dl));
  }
  p.out_w = make_var(glorot(rng, cfg.tgt_vocab, d));
  return p;
}

void TransformerParams::visit(
    const std::function<void(const std::string&, const VarPtr&)>& fn) const {
  fn("src_emb", src_emb);
  fn("tgt_emb", tgt_emb);
  for (std::size_t l = 0; l < enc.size(); ++l) {
    const std::string pre = "enc" + std::to_string(l);
    visit_mh(pre + ".self", enc[l].self_att, fn);
    fn(pre + ".ln1.g", enc[l].ln1_gain);
    fn(pre + ".ln1.b", enc[l].ln1_bias);
    fn(pre + ".ff.w1", enc[l].ff_w1);
    fn(pre + ".ff.b1", enc[l].ff_b1);
    fn(pre + ".ff.w2", enc[l].ff_w2);
    fn(pre + ".ff.b2", enc[l].ff_b2);
    fn(pre + ".ln2.g", enc[l].ln2_gain);
    fn(pre + ".ln2.b", enc[l].ln2_bias);
  }
  for (std::size_t l = 0; l < dec.size(); ++l) {
    const std::string pre = "dec" + std::to_string(l);
    visit_mh(pre + ".self", dec[l].self_att, fn);
    visit_mh(pre + ".enc", dec[l].enc_att, fn);
    fn(pre + ".filter.w", dec[l].filter_w);
    fn(pre + ".ln.g", dec[l].ln_gain);
    fn(pre + ".ln.b", dec[l].ln_bias);
  }
  fn("out_w", out_w);
}

std::vector<VarPtr> TransformerParams::all() const {
  std::vector<VarPtr> out;
  visit([&](const std::string&, const VarPtr& v) { out.push_back(v); });
  return out;
}

void TransformerParams::set_trainable(bool trainable) {
  for (const VarPtr& v : all()) v->requires_grad = trainable;
}

std::uint64_t TransformerParams::content_hash() const {
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

Tensor positional_encoding(std::int64_t n, std::int64_t d) {
  Tensor pe({n, d});
  for (std::int64_t pos = 0; pos < n; ++pos) {
    for (std::int64_t j = 0; j < d; ++j) {
      double exponent = static_cast<double>(2 * (j / 2)) / static_cast<double>(d);
      double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe.at(pos, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

VarPtr dropout_v(Tape& tape, const VarPtr& x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  Tensor mask(x->value.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    mask.at(i) = rng->uniform01() < rate ? 0.0 : keep;
  }
  return op_elem_mul_const(tape, x, std::move(mask));
}

namespace {

VarPtr embed_with_positions(Tape& tape, const VarPtr& table,
                            const std::vector<std::int64_t>& ids,
                            const ModelConfig& cfg, Rng* drop_rng) {
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  if (n == 0) throw DataError("empty token sequence");
  if (n > cfg.max_len) {
    throw IndexError("sequence length " + std::to_string(n) +
                     " exceeds max_len " + std::to_string(cfg.max_len));
  }
  VarPtr e = op_embed_lookup(tape, table, ids);
  e = op_scale(tape, e, std::sqrt(static_cast<double>(cfg.d_model)));
  e = op_add(tape, e, make_const(positional_encoding(n, cfg.d_model)));
  return dropout_v(tape, e, cfg.dropout, drop_rng);
}

VarPtr feed_forward(Tape& tape, const VarPtr& x, const EncLayerParams& p) {
  VarPtr h = op_add_rowvec(tape, op_matmul(tape, x, p.ff_w1), p.ff_b1);
  h = op_relu(tape, h);
  return op_add_rowvec(tape, op_matmul(tape, h, p.ff_w2), p.ff_b2);
}

}  // namespace

EncodedSourceV encode_v(Tape& tape, const std::vector<std::int64_t>& src_ids,
                        const TransformerParams& params, const ModelConfig& cfg,
                        Rng* drop_rng) {
  if (src_ids.empty() || src_ids.back() != Vocab::kEos) {
    throw DataError("source sequence must end with the EOS token");
  }
  EncodedSourceV out;
  VarPtr x = embed_with_positions(tape, params.src_emb, src_ids, cfg, drop_rng);
  out.word_embeddings = x;
  for (const EncLayerParams& layer : params.enc) {
    MultiHeadOut sa = op_multi_head(tape, x, x, x, layer.self_att);
    x = op_add(tape, x, dropout_v(tape, sa.context, cfg.dropout, drop_rng));
    x = op_layer_norm(tape, x, layer.ln1_gain, layer.ln1_bias);
    VarPtr ff = feed_forward(tape, x, layer);
    x = op_add(tape, x, dropout_v(tape, ff, cfg.dropout, drop_rng));
    x = op_layer_norm(tape, x, layer.ln2_gain, layer.ln2_bias);
  }
  out.encoder_output = x;
  out.eos_position = static_cast<std::int64_t>(src_ids.size()) - 1;
  return out;
}

DecodeOutV decode_v(Tape& tape, const std::vector<std::int64_t>& tgt_in_ids,
                    const EncodedSourceV& enc, const TransformerParams& params,
                    const ModelConfig& cfg, Rng* drop_rng) {
  if (tgt_in_ids.empty() || tgt_in_ids.front() != Vocab::kBos) {
    throw DataError("decoder input must start with the BOS token");
  }
  const std::int64_t t = static_cast<std::int64_t>(tgt_in_ids.size());
  const std::int64_t s = enc.encoder_output->value.rows();
  Mask causal = Mask::causal(t);
  Mask eos_mask = Mask::exclude_col(t, s, enc.eos_position);

  DecodeOutV out;
  VarPtr y = embed_with_positions(tape, params.tgt_emb, tgt_in_ids, cfg, drop_rng);
  for (const DecLayerParams& layer : params.dec) {
    MultiHeadOut sa = op_multi_head(tape, y, y, y, layer.self_att, &causal);
    y = op_add(tape, y, dropout_v(tape, sa.context, cfg.dropout, drop_rng));
    MultiHeadOut ea = op_multi_head(tape, y, enc.encoder_output,
                                    enc.encoder_output, layer.enc_att, &eos_mask);
    out.enc_att.push_back(ea.activations);
    y = op_add(tape, y, dropout_v(tape, ea.context, cfg.dropout, drop_rng));
    VarPtr f = op_matmul(tape, y, layer.filter_w);
    y = op_add(tape, y, dropout_v(tape, f, cfg.dropout, drop_rng));
    y = op_layer_norm(tape, y, layer.ln_gain, layer.ln_bias);
  }
  out.decoder_output = y;
  out.logits = op_matmul_nt(tape, y, params.out_w);
  return out;
}

Adam::Adam(std::vector<VarPtr> params, double lr)
    : params_(std::move(params)), lr_(lr) {
  for (const VarPtr& p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step() {
  constexpr double b1 = 0.9, b2 = 0.98, eps = 1e-9;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = *params_[i];
    const Tensor& g = p.grad_or_zero();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::int64_t j = 0; j < g.size(); ++j) {
      double gj = g.at(j);
      m.at(j) = b1 * m.at(j) + (1.0 - b1) * gj;
      v.at(j) = b2 * v.at(j) + (1.0 - b2) * gj * gj;
      p.value.at(j) -= lr_ * (m.at(j) / c1) / (std::sqrt(v.at(j) / c2) + eps);
    }
    p.zero_grad();
  }
}

namespace {

struct SentenceViews {
  std::vector<std::int64_t> src_with_eos, tgt_in, tgt_out;
};

SentenceViews make_views(const IdPair& pair) {
  SentenceViews v;
  v.src_with_eos = pair.src;
  v.src_with_eos.push_back(Vocab::kEos);
  v.tgt_in.push_back(Vocab::kBos);
  v.tgt_in.insert(v.tgt_in.end(), pair.tgt.begin(), pair.tgt.end());
  v.tgt_out = pair.tgt;
  v.tgt_out.push_back(Vocab::kEos);
  return v;
}

}  // namespace

double heldout_perplexity(const TransformerParams& params,
                          const std::vector<IdPair>& data,
                          const ModelConfig& cfg) {
  if (data.empty()) throw DataError("perplexity needs a non-empty corpus");
  double total = 0.0;
  std::int64_t tokens = 0;
  for (const IdPair& pair : data) {
    SentenceViews v = make_views(pair);
    Tape tape;
    EncodedSourceV enc = encode_v(tape, v.src_with_eos, params, cfg);
    DecodeOutV dec = decode_v(tape, v.tgt_in, enc, params, cfg);
    Tensor ce = cross_entropy_rows(dec.logits->value, v.tgt_out);
    total += sum_all(ce);
    tokens += ce.size();
  }
  return std::exp(total / static_cast<double>(tokens));
}

TrainResult train_transformer(TransformerParams& params,
                              const std::vector<IdPair>& train,
                              const std::vector<IdPair>& heldout,
                              const ModelConfig& cfg, const TrainHyper& hyper) {
  if (train.empty()) throw DataError("training corpus is empty");
  cfg.validate();

  Adam opt(params.all(), hyper.lr);
  Rng order_rng(hyper.seed);
  Rng drop_rng(hyper.seed ^ 0xD1B54A32D192ED03ULL);

  TrainResult result;
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
        SentenceViews v = make_views(train[order[k]]);
        EncodedSourceV enc =
            encode_v(tape, v.src_with_eos, params, cfg, &drop_rng);
        DecodeOutV dec = decode_v(tape, v.tgt_in, enc, params, cfg, &drop_rng);
        VarPtr ce = op_cross_entropy_rows(tape, dec.logits, v.tgt_out);
        VarPtr sum = op_sum(tape, ce);
        total = total ? op_add(tape, total, sum) : sum;
        tokens += static_cast<std::int64_t>(v.tgt_out.size());
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
    result.heldout_ppl = heldout_perplexity(params, heldout, cfg);
  }
  return result;
}

}  // namespace aligntk
