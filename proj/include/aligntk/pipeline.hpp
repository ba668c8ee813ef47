#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aligntk/attnopt.hpp"
#include "aligntk/checkpoint.hpp"
#include "aligntk/extraction.hpp"

namespace aligntk {

// The four inference variants. Avg averages the base model's encoder
// attention; the other three read the alignment layer, with the two sgd
// modes running attention optimization first (from the forward activations
// or from random ones).
enum class AlignMode { Avg, Layer, Sgd, RandSgd };

std::string align_mode_name(AlignMode mode);
AlignMode align_mode_from_name(const std::string& name);  // ConfigError

struct AlignJob {
  AlignMode mode = AlignMode::Layer;
  std::int64_t steps = 3;      // sgd modes
  double learning_rate = 1.0;  // sgd modes
  std::uint64_t seed = 0;      // rand-sgd init
};

// splitmix64-style mix of a run seed with a sentence index, so per-sentence
// randomness is decorrelated but reproducible.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k);

// Rebuild the subword-to-word map of a tokenized subword line: a leading "_"
// starts a new word. The first subword must carry the marker.
SubwordMap subword_map_from_markers(const std::vector<std::string>& subwords);

// Teacher-forced subword-level attention for one pair, sliced to the content
// block (no source EOS, no EOS-prediction row) and transposed to [s, t].
// src_ids/tgt_ids carry no specials. Modes other than Avg require the
// checkpoint's alignment-layer section (DataError otherwise).
Tensor attention_matrix(const Checkpoint& ck, const AlignJob& job,
                        const std::vector<std::int64_t>& src_ids,
                        const std::vector<std::int64_t>& tgt_ids);

// attention_matrix, hard per-target argmax, subword-to-word projection.
// Thread-safe on a loaded checkpoint: all mutable state is call-local.
AlignmentSet align_pair(const Checkpoint& ck, const AlignJob& job,
                        const std::vector<std::int64_t>& src_ids,
                        const std::vector<std::int64_t>& tgt_ids,
                        const SubwordMap& src_map, const SubwordMap& tgt_map);

}  // namespace aligntk
