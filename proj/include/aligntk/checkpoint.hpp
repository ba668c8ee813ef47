#pragma once

#include <cstdint>
#include <string>

#include "aligntk/alignlayer.hpp"
#include "aligntk/datapipe.hpp"
#include "aligntk/transformer.hpp"

namespace aligntk {

// Everything needed to rebuild a model from disk: config, both vocabularies,
// the base transformer and, once fine-tuned, the alignment layer with its
// representation mode. base_hash is the content hash of the base tensors,
// computed at save time and re-checked on load.
struct Checkpoint {
  ModelConfig config;
  Vocab src_vocab, tgt_vocab;
  TransformerParams base;
  bool has_align = false;
  AlignLayerParams align;
  EncoderReprMode align_mode = EncoderReprMode::Add;
  std::uint64_t base_hash = 0;
};

// Layout: magic "ATALIGN1", u32 header length, JSON header (format version,
// config, vocab token lists, align mode, base hash), then one record per
// tensor: u32 name length, name bytes, u32 rank, u64 dims, f64 payload.
// Integers and floats are little-endian regardless of host order.
void save_checkpoint(const std::string& path, const Checkpoint& ck);

// Rejects wrong magic, unknown format versions, truncated or inconsistent
// files (DataError). All tensors come back frozen (requires_grad false).
Checkpoint load_checkpoint(const std::string& path);

}  // namespace aligntk
