#include "aligntk/datapipe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "aligntk/errors.hpp"
#include "aligntk/rng.hpp"

namespace aligntk {

namespace {

// byte length of the UTF-8 sequence starting at s[i]
std::size_t utf8_len(const std::string& s, std::size_t i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  std::size_t n = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
  return std::min(n, s.size() - i);
}

}  // namespace

std::vector<std::string> bpe_split_word(const std::string& word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  bool first = true;
  while (i < word.size()) {
    if (first && word[i] == '_') {
      std::size_t n = i + 1 < word.size() ? utf8_len(word, i + 1) : 0;
      out.push_back(word.substr(i, 1 + n));
      i += 1 + n;
    } else {
      std::size_t n = utf8_len(word, i);
      out.push_back(word.substr(i, n));
      i += n;
    }
    first = false;
  }
  return out;
}

BpeModel bpe_learn(const std::map<std::string, std::int64_t>& word_freq,
                   std::int64_t n_merges) {
  if (word_freq.empty()) throw DataError("bpe_learn: empty corpus");
  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
  for (const auto& [w, f] : word_freq) words.emplace_back(bpe_split_word(w), f);

  BpeModel model;
  for (std::int64_t step = 0; step < n_merges; ++step) {
    std::map<std::pair<std::string, std::string>, std::int64_t> counts;
    for (const auto& [syms, f] : words) {
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        counts[{syms[i], syms[i + 1]}] += f;
      }
    }
    std::pair<std::string, std::string> best;
    std::int64_t best_count = 0;
    for (const auto& [pair, c] : counts) {
      // map iteration is already in ascending (left, right) order, so a
      // strict > keeps the lexicographically smallest pair on ties
      if (c > best_count) {
        best = pair;
        best_count = c;
      }
    }
    if (best_count < 2) break;
    model.merges.push_back(best);
    const std::string merged = best.first + best.second;
    for (auto& [syms, f] : words) {
      for (std::size_t i = 0; i + 1 < syms.size();) {
        if (syms[i] == best.first && syms[i + 1] == best.second) {
          syms[i] = merged;
          syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        }
        ++i;
      }
    }
  }
  return model;
}

std::vector<std::string> bpe_apply(const std::string& word,
                                   const BpeModel& model) {
  std::vector<std::string> syms = bpe_split_word(word);
  for (const auto& [l, r] : model.merges) {
    if (syms.size() < 2) break;
    const std::string merged = l + r;
    for (std::size_t i = 0; i + 1 < syms.size();) {
      if (syms[i] == l && syms[i + 1] == r) {
        syms[i] = merged;
        syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      }
      ++i;
    }
  }
  return syms;
}

std::vector<std::string> bpe_decode(const std::vector<std::string>& subwords) {
  std::vector<std::string> words;
  for (const std::string& s : subwords) {
    if (!s.empty() && s[0] == '_') {
      words.push_back(s.substr(1));
    } else if (words.empty()) {
      words.push_back(s);  // stray unmarked start, keep it a word
    } else {
      words.back() += s;
    }
  }
  return words;
}

BpeModel read_merges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open merge file " + path);
  BpeModel model;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string l, r, extra;
    if (!(ls >> l >> r) || (ls >> extra)) {
      throw DataError("merge file " + path + " line " + std::to_string(lineno) +
                      ": expected \"left right\"");
    }
    model.merges.emplace_back(l, r);
  }
  return model;
}

void write_merges(const std::string& path, const BpeModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write merge file " + path);
  for (const auto& [l, r] : model.merges) out << l << ' ' << r << '\n';
}

Vocab::Vocab() {
  for (std::int64_t i = 0; i < 4; ++i) index[tokens[static_cast<std::size_t>(i)]] = i;
}

std::int64_t Vocab::add(const std::string& tok) {
  auto it = index.find(tok);
  if (it != index.end()) return it->second;
  std::int64_t id = size();
  tokens.push_back(tok);
  index[tok] = id;
  return id;
}

std::int64_t Vocab::id(const std::string& tok) const {
  auto it = index.find(tok);
  return it == index.end() ? kUnk : it->second;
}

std::int64_t Vocab::id_strict(const std::string& tok) const {
  auto it = index.find(tok);
  if (it == index.end()) throw DataError("token \"" + tok + "\" not in vocabulary");
  return it->second;
}

const std::string& Vocab::token(std::int64_t id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("token id " + std::to_string(id) +
                     " outside vocabulary of size " + std::to_string(size()));
  }
  return tokens[static_cast<std::size_t>(id)];
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& subword_lines) {
  std::set<std::string> seen;
  for (const auto& line : subword_lines) seen.insert(line.begin(), line.end());
  Vocab v;
  for (const std::string& s : seen) v.add(s);
  return v;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::string lower = line;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  std::vector<std::string> out;
  std::istringstream in(lower);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

namespace {

void apply_bpe_side(const std::vector<std::string>& words, const BpeModel& bpe,
                    std::vector<std::string>& subs, SubwordMap& map) {
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (std::string& s : bpe_apply("_" + words[w], bpe)) {
      subs.push_back(std::move(s));
      map.push_back(static_cast<std::int64_t>(w));
    }
  }
}

}  // namespace

Corpus preprocess(const std::string& src_path, const std::string& tgt_path,
                  const BpeModel& src_bpe, const BpeModel& tgt_bpe) {
  std::ifstream src_in(src_path), tgt_in(tgt_path);
  if (!src_in) throw DataError("cannot open source file " + src_path);
  if (!tgt_in) throw DataError("cannot open target file " + tgt_path);
  Corpus out;
  std::string src_line, tgt_line;
  while (true) {
    bool got_src = static_cast<bool>(std::getline(src_in, src_line));
    bool got_tgt = static_cast<bool>(std::getline(tgt_in, tgt_line));
    if (!got_src && !got_tgt) break;
    if (got_src != got_tgt) {
      throw DataError("line count mismatch between " + src_path + " and " +
                      tgt_path);
    }
    SentencePair p;
    p.src_words = tokenize(src_line);
    p.tgt_words = tokenize(tgt_line);
    if (p.src_words.empty() || p.tgt_words.empty()) {
      ++out.skipped_empty;
      continue;
    }
    apply_bpe_side(p.src_words, src_bpe, p.src_sub, p.src_map);
    apply_bpe_side(p.tgt_words, tgt_bpe, p.tgt_sub, p.tgt_map);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

void number_corpus(Corpus& corpus, const Vocab& src_vocab,
                   const Vocab& tgt_vocab, bool strict) {
  for (SentencePair& p : corpus.pairs) {
    p.src_ids.clear();
    p.tgt_ids.clear();
    for (const std::string& s : p.src_sub) {
      p.src_ids.push_back(strict ? src_vocab.id_strict(s) : src_vocab.id(s));
    }
    for (const std::string& s : p.tgt_sub) {
      p.tgt_ids.push_back(strict ? tgt_vocab.id_strict(s) : tgt_vocab.id(s));
    }
  }
}

std::vector<SentencePair> gen_synthetic(const SynthSpec& spec) {
  if (spec.vocab_size <= 0) throw ConfigError("synthetic vocab must be positive");
  if (spec.max_fanout < 1 || spec.max_fanout > 2) {
    throw ConfigError("synthetic fan-out must be 1 or 2");
  }
  if (spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw ConfigError("bad synthetic sentence length range");
  }
  Rng rng(spec.seed);

  // injective dictionary: source word i -> "t<i>a" (and "t<i>b" on fan-out 2)
  std::vector<std::vector<std::string>> dict(
      static_cast<std::size_t>(spec.vocab_size));
  for (std::int64_t i = 0; i < spec.vocab_size; ++i) {
    std::int64_t fan = spec.max_fanout == 2 ? 1 + rng.below(2) : 1;
    auto& entry = dict[static_cast<std::size_t>(i)];
    entry.push_back("t" + std::to_string(i) + "a");
    if (fan == 2) entry.push_back("t" + std::to_string(i) + "b");
  }

  std::vector<SentencePair> out;
  out.reserve(static_cast<std::size_t>(spec.size));
  for (std::int64_t n = 0; n < spec.size; ++n) {
    SentencePair p;
    std::int64_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    std::vector<std::int64_t> tgt_src;  // source word index per target word
    for (std::int64_t i = 0; i < len; ++i) {
      std::int64_t w = rng.below(spec.vocab_size);
      p.src_words.push_back("s" + std::to_string(w));
      for (const std::string& t : dict[static_cast<std::size_t>(w)]) {
        p.tgt_words.push_back(t);
        tgt_src.push_back(i);
      }
    }
    for (std::size_t j = 0; j + 1 < p.tgt_words.size(); ++j) {
      if (rng.uniform01() < spec.swap_prob) {
        std::swap(p.tgt_words[j], p.tgt_words[j + 1]);
        std::swap(tgt_src[j], tgt_src[j + 1]);
      }
    }
    p.gold.src_len = len;
    p.gold.tgt_len = static_cast<std::int64_t>(p.tgt_words.size());
    for (std::size_t j = 0; j < tgt_src.size(); ++j) {
      p.gold.add(tgt_src[j], static_cast<std::int64_t>(j));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace aligntk
