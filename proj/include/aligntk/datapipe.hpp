#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aligntk/extraction.hpp"

namespace aligntk {

// Ordered BPE merge list. Words carry a "_" marker fused onto their first
// character ("_low" splits to ["_l", "o", "w"]).
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
};

// Split a marked word into single-character symbols (UTF-8 aware); the marker
// stays glued to the first character.
std::vector<std::string> bpe_split_word(const std::string& word);

// Greedy most-frequent-pair merging over a word frequency table; ties go to
// the lexicographically smallest (left, right). Stops early once no pair
// occurs twice.
BpeModel bpe_learn(const std::map<std::string, std::int64_t>& word_freq,
                   std::int64_t n_merges);

std::vector<std::string> bpe_apply(const std::string& word,
                                   const BpeModel& model);
// Inverse of applying BPE to a token sequence: marker boundaries delimit
// words, markers are stripped.
std::vector<std::string> bpe_decode(const std::vector<std::string>& subwords);

BpeModel read_merges(const std::string& path);
void write_merges(const std::string& path, const BpeModel& model);

// Token ids 0-3 are reserved; UNK covers symbols unseen at training time.
struct Vocab {
  static constexpr std::int64_t kPad = 0, kBos = 1, kEos = 2, kUnk = 3;

  std::vector<std::string> tokens{"<pad>", "<bos>", "<eos>", "<unk>"};
  std::map<std::string, std::int64_t> index;

  Vocab();
  std::int64_t add(const std::string& tok);
  std::int64_t id(const std::string& tok) const;        // kUnk when missing
  std::int64_t id_strict(const std::string& tok) const;  // DataError when missing
  const std::string& token(std::int64_t id) const;
  std::int64_t size() const { return static_cast<std::int64_t>(tokens.size()); }
};

// Sorted subword inventory from tokenized+BPE'd lines.
Vocab build_vocab(const std::vector<std::vector<std::string>>& subword_lines);

struct SentencePair {
  std::vector<std::string> src_words, tgt_words;
  std::vector<std::string> src_sub, tgt_sub;
  std::vector<std::int64_t> src_ids, tgt_ids;  // filled by number_corpus
  SubwordMap src_map, tgt_map;                 // subword -> word index
  AlignmentSet gold;                           // synthetic corpora only
};

struct Corpus {
  std::vector<SentencePair> pairs;
  std::int64_t skipped_empty = 0;
};

// lowercase + whitespace split
std::vector<std::string> tokenize(const std::string& line);

// Reads line-aligned source/target files, lowercases, tokenizes, applies BPE,
// and builds the subword maps. Pairs with an empty side are skipped and
// counted.
Corpus preprocess(const std::string& src_path, const std::string& tgt_path,
                  const BpeModel& src_bpe, const BpeModel& tgt_bpe);

// Subword id lookup for every pair. strict=true raises on unseen subwords
// (training); otherwise they map to UNK (alignment of new text).
void number_corpus(Corpus& corpus, const Vocab& src_vocab,
                   const Vocab& tgt_vocab, bool strict);

struct SynthSpec {
  std::int64_t vocab_size = 50;
  std::int64_t max_fanout = 2;  // source word translates to 1..max_fanout words
  std::int64_t min_len = 3, max_len = 10;
  double swap_prob = 0.2;
  std::int64_t size = 1000;
  std::uint64_t seed = 1;
};

// Parallel corpus from an injective random dictionary: every target word is
// emitted by exactly one source word and carries a gold link; adjacent target
// words then swap with swap_prob (links follow).
std::vector<SentencePair> gen_synthetic(const SynthSpec& spec);

}  // namespace aligntk
