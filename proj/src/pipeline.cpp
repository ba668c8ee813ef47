#include "aligntk/pipeline.hpp"

namespace aligntk {

std::string align_mode_name(AlignMode mode) {
  switch (mode) {
    case AlignMode::Avg: return "avg";
    case AlignMode::Layer: return "layer";
    case AlignMode::Sgd: return "sgd";
    case AlignMode::RandSgd: return "rand-sgd";
  }
  throw ConfigError("unknown alignment mode");
}

AlignMode align_mode_from_name(const std::string& name) {
  if (name == "avg") return AlignMode::Avg;
  if (name == "layer") return AlignMode::Layer;
  if (name == "sgd") return AlignMode::Sgd;
  if (name == "rand-sgd") return AlignMode::RandSgd;
  throw ConfigError("unknown alignment mode \"" + name +
                    "\" (expected avg, layer, sgd or rand-sgd)");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SubwordMap subword_map_from_markers(const std::vector<std::string>& subwords) {
  SubwordMap map;
  std::int64_t word = -1;
  for (const std::string& s : subwords) {
    if (!s.empty() && s[0] == '_') ++word;
    if (word < 0) {
      throw DataError("subword line does not start with a word marker");
    }
    map.push_back(word);
  }
  return map;
}

Tensor attention_matrix(const Checkpoint& ck, const AlignJob& job,
                        const std::vector<std::int64_t>& src_ids,
                        const std::vector<std::int64_t>& tgt_ids) {
  if (src_ids.empty() || tgt_ids.empty()) {
    throw DataError("cannot align an empty sentence");
  }
  if (job.mode != AlignMode::Avg && !ck.has_align) {
    throw DataError("checkpoint has no alignment-layer section");
  }
  const std::int64_t s = static_cast<std::int64_t>(src_ids.size());
  const std::int64_t t = static_cast<std::int64_t>(tgt_ids.size());

  std::vector<std::int64_t> src_full = src_ids;
  src_full.push_back(Vocab::kEos);
  std::vector<std::int64_t> tgt_in;
  tgt_in.reserve(tgt_ids.size() + 1);
  tgt_in.push_back(Vocab::kBos);
  tgt_in.insert(tgt_in.end(), tgt_ids.begin(), tgt_ids.end());

  Tape tape;
  EncodedSourceV enc = encode_v(tape, src_full, ck.base, ck.config);
  DecodeOutV dec = decode_v(tape, tgt_in, enc, ck.base, ck.config);

  if (job.mode == AlignMode::Avg) {
    std::vector<Tensor> acts;
    for (const auto& layer : dec.enc_att) {
      for (const VarPtr& head : layer) acts.push_back(head->value);
    }
    return slice(avg_attention(acts), 0, s, 0, t);
  }

  Mask eos_mask = Mask::exclude_col(t + 1, s + 1, enc.eos_position);
  AlignForwardOut fwd = align_forward(tape, dec.decoder_output,
                                      build_E(tape, ck.align_mode, enc),
                                      ck.align, &eos_mask);
  if (job.mode == AlignMode::Layer) {
    return transpose(slice(fwd.a->value, 0, t, 0, s));
  }

  // The EOS-prediction row is dropped before optimizing; the EOS column
  // stays, unmasked, as the restricted forward has no mask at all.
  Tensor a0 = job.mode == AlignMode::Sgd
                  ? slice(fwd.a->value, 0, t, 0, s + 1)
                  : init_attention(AttInit::RandomUniform, t, s + 1, nullptr,
                                   job.seed);
  OptConfig ocfg;
  ocfg.steps = job.steps;
  ocfg.learning_rate = job.learning_rate;
  ocfg.init = job.mode == AlignMode::Sgd ? AttInit::FromForward
                                         : AttInit::RandomUniform;
  ocfg.seed = job.seed;
  ocfg.validate();
  OptResult res = optimize(a0, fwd.vprime->value, tgt_ids, ck.align, ocfg);
  return transpose(slice(relu(res.a_final), 0, t, 0, s));
}

AlignmentSet align_pair(const Checkpoint& ck, const AlignJob& job,
                        const std::vector<std::int64_t>& src_ids,
                        const std::vector<std::int64_t>& tgt_ids,
                        const SubwordMap& src_map, const SubwordMap& tgt_map) {
  if (src_map.size() != src_ids.size() || tgt_map.size() != tgt_ids.size()) {
    throw ShapeError("subword maps do not match the id sequences");
  }
  Tensor m = attention_matrix(ck, job, src_ids, tgt_ids);
  return project_to_words(hard_align(m), src_map, tgt_map);
}

}  // namespace aligntk
