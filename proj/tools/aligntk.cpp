// aligntk: batch front end for the alignment toolkit. Subcommands cover the
// whole pipeline: synthetic data, BPE, base training, alignment-layer
// fine-tuning, alignment in the four inference modes, symmetrization,
// scoring and heatmap export. Exit codes: 0 ok, 1 data/config error, 2 usage.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "aligntk/evalio.hpp"
#include "aligntk/hash.hpp"
#include "aligntk/pipeline.hpp"
#include "json.hpp"

namespace {

using namespace aligntk;
using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

using Clock = std::chrono::steady_clock;

// ---- plumbing --------------------------------------------------------------

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const std::string& l : lines) out << l << '\n';
  if (!out) throw DataError("failed writing " + path);
}

// One manifest per invocation, next to the command's primary artifact.
void write_manifest(const std::string& artifact, const std::string& command,
                    json config, std::uint64_t seed,
                    std::vector<std::string> inputs,
                    std::vector<std::string> outputs, Clock::time_point t0) {
  json m;
  m["command"] = command;
  m["config"] = std::move(config);
  m["seed"] = seed;
  m["inputs"] = std::move(inputs);
  m["outputs"] = std::move(outputs);
  m["version"] = kVersion;
  m["duration_seconds"] =
      std::chrono::duration<double>(Clock::now() - t0).count();
  std::string path = artifact + ".manifest.json";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << m.dump(2) << '\n';
}

std::int64_t resolve_threads(std::int64_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("ALIGNTK_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0 && v <= 256) return v;
  }
  return 1;
}

std::string fmt6(double v) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(6);
  out << v;
  return out.str();
}

// ---- subword corpus loading -------------------------------------------------

struct SubCorpus {
  std::vector<IdPair> pairs;
  std::int64_t skipped_empty = 0;
  std::int64_t skipped_long = 0;
};

// Line-aligned source/target files of BPE subwords. Pairs with an empty side
// are skipped; pairs that would not fit max_len (plus EOS/BOS) are skipped
// with their own count. strict numbering raises on unseen subwords.
SubCorpus load_subword_corpus(const std::string& src_path,
                              const std::string& tgt_path,
                              const Vocab& src_vocab, const Vocab& tgt_vocab,
                              bool strict, std::int64_t max_len) {
  std::vector<std::string> src = read_lines(src_path);
  std::vector<std::string> tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw DataError("line count mismatch between " + src_path + " and " +
                    tgt_path);
  }
  SubCorpus out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::vector<std::string> s = tokenize(src[i]);
    std::vector<std::string> t = tokenize(tgt[i]);
    if (s.empty() || t.empty()) {
      ++out.skipped_empty;
      continue;
    }
    if (static_cast<std::int64_t>(s.size()) + 1 > max_len ||
        static_cast<std::int64_t>(t.size()) + 1 > max_len) {
      ++out.skipped_long;
      continue;
    }
    IdPair p;
    for (const std::string& w : s) {
      p.src.push_back(strict ? src_vocab.id_strict(w) : src_vocab.id(w));
    }
    for (const std::string& w : t) {
      p.tgt.push_back(strict ? tgt_vocab.id_strict(w) : tgt_vocab.id(w));
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<std::string>> tokenized_lines(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const std::string& l : read_lines(path)) {
    std::vector<std::string> toks = tokenize(l);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

// ---- gen-synth ---------------------------------------------------------------

struct GenSynthArgs {
  std::string out_prefix;
  std::int64_t size = 10000, test_size = 500;
  std::int64_t vocab = 50, fanout = 2, min_len = 3, max_len = 10;
  double swap_prob = 0.2;
  std::uint64_t seed = 1;
};

int cmd_gen_synth(const GenSynthArgs& a, Clock::time_point t0) {
  SynthSpec spec;
  spec.vocab_size = a.vocab;
  spec.max_fanout = a.fanout;
  spec.min_len = a.min_len;
  spec.max_len = a.max_len;
  spec.swap_prob = a.swap_prob;
  spec.size = a.size + a.test_size;
  spec.seed = a.seed;
  std::vector<SentencePair> pairs = gen_synthetic(spec);

  auto join = [](const std::vector<std::string>& w) {
    std::string s;
    for (const std::string& x : w) {
      if (!s.empty()) s += ' ';
      s += x;
    }
    return s;
  };
  std::vector<std::string> train_src, train_tgt, test_src, test_tgt, gold;
  for (std::int64_t i = 0; i < a.size; ++i) {
    train_src.push_back(join(pairs[static_cast<std::size_t>(i)].src_words));
    train_tgt.push_back(join(pairs[static_cast<std::size_t>(i)].tgt_words));
  }
  for (std::int64_t i = 0; i < a.test_size; ++i) {
    const SentencePair& p = pairs[static_cast<std::size_t>(a.size + i)];
    test_src.push_back(join(p.src_words));
    test_tgt.push_back(join(p.tgt_words));
    for (const Link& l : p.gold.links) {
      gold.push_back(std::to_string(i + 1) + ' ' + std::to_string(l.src + 1) +
                     ' ' + std::to_string(l.tgt + 1) + " S");
    }
  }
  const std::string& p = a.out_prefix;
  std::vector<std::string> outputs = {p + ".train.src", p + ".train.tgt",
                                      p + ".test.src", p + ".test.tgt",
                                      p + ".test.gold"};
  write_lines(outputs[0], train_src);
  write_lines(outputs[1], train_tgt);
  write_lines(outputs[2], test_src);
  write_lines(outputs[3], test_tgt);
  write_lines(outputs[4], gold);

  json cfg{{"size", a.size},       {"test_size", a.test_size},
           {"vocab", a.vocab},     {"fanout", a.fanout},
           {"min_len", a.min_len}, {"max_len", a.max_len},
           {"swap_prob", a.swap_prob}};
  write_manifest(p, "gen-synth", cfg, a.seed, {}, outputs, t0);
  std::cout << "wrote " << a.size << " training and " << a.test_size
            << " test pairs to " << p << ".*\n";
  return 0;
}

// ---- learn-bpe / apply-bpe ---------------------------------------------------

struct LearnBpeArgs {
  std::string in, out;
  std::int64_t merges = 0;
};

int cmd_learn_bpe(const LearnBpeArgs& a, Clock::time_point t0) {
  std::map<std::string, std::int64_t> freq;
  for (const std::string& line : read_lines(a.in)) {
    for (const std::string& tok : tokenize(line)) ++freq["_" + tok];
  }
  BpeModel model = bpe_learn(freq, a.merges);
  write_merges(a.out, model);
  write_manifest(a.out, "learn-bpe", json{{"merges", a.merges}}, 0, {a.in},
                 {a.out}, t0);
  std::cout << "learned " << model.merges.size() << " merges\n";
  return 0;
}

struct ApplyBpeArgs {
  std::string codes, in, out;
  bool decode = false;
};

int cmd_apply_bpe(const ApplyBpeArgs& a, Clock::time_point t0) {
  std::vector<std::string> lines = read_lines(a.in);
  std::vector<std::string> result;
  result.reserve(lines.size());
  if (a.decode) {
    for (const std::string& line : lines) {
      std::vector<std::string> subs = tokenize(line);
      std::string out;
      if (!subs.empty()) {
        for (const std::string& w : bpe_decode(subs)) {
          if (!out.empty()) out += ' ';
          out += w;
        }
      }
      result.push_back(std::move(out));
    }
  } else {
    BpeModel model = read_merges(a.codes);
    for (const std::string& line : lines) {
      std::string out;
      for (const std::string& tok : tokenize(line)) {
        for (const std::string& sub : bpe_apply("_" + tok, model)) {
          if (!out.empty()) out += ' ';
          out += sub;
        }
      }
      result.push_back(std::move(out));
    }
  }
  write_lines(a.out, result);
  json cfg{{"decode", a.decode}};
  std::vector<std::string> inputs{a.in};
  if (!a.decode) {
    cfg["codes"] = a.codes;
    inputs.push_back(a.codes);
  }
  write_manifest(a.out, "apply-bpe", cfg, 0, inputs, {a.out}, t0);
  return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string src, tgt, heldout_src, heldout_tgt, out;
  std::int64_t d_model = 64, heads = 4, enc_layers = 2, dec_layers = 2;
  std::int64_t max_len = 128;
  double dropout = 0.1;
  std::int64_t epochs = 5, batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

json train_config_json(const TrainArgs& a, const ModelConfig& cfg,
                       const SubCorpus& train) {
  return {{"d_model", a.d_model},
          {"heads", a.heads},
          {"enc_layers", a.enc_layers},
          {"dec_layers", a.dec_layers},
          {"max_len", a.max_len},
          {"dropout", a.dropout},
          {"epochs", a.epochs},
          {"batch", a.batch},
          {"lr", a.lr},
          {"src_vocab", cfg.src_vocab},
          {"tgt_vocab", cfg.tgt_vocab},
          {"skipped_empty", train.skipped_empty},
          {"skipped_long", train.skipped_long}};
}

int cmd_train(const TrainArgs& a, Clock::time_point t0) {
  std::vector<std::vector<std::string>> src_lines = tokenized_lines(a.src);
  std::vector<std::vector<std::string>> tgt_lines = tokenized_lines(a.tgt);
  Vocab src_vocab = build_vocab(src_lines);
  Vocab tgt_vocab = build_vocab(tgt_lines);

  ModelConfig cfg;
  cfg.d_model = a.d_model;
  cfg.heads = a.heads;
  cfg.enc_layers = a.enc_layers;
  cfg.dec_layers = a.dec_layers;
  cfg.src_vocab = src_vocab.size();
  cfg.tgt_vocab = tgt_vocab.size();
  cfg.max_len = a.max_len;
  cfg.dropout = a.dropout;
  cfg.validate();

  SubCorpus train = load_subword_corpus(a.src, a.tgt, src_vocab, tgt_vocab,
                                        true, a.max_len);
  if (train.skipped_long > 0) {
    std::cerr << "note: skipped " << train.skipped_long
              << " pairs longer than max_len\n";
  }
  SubCorpus heldout;
  if (!a.heldout_src.empty()) {
    heldout = load_subword_corpus(a.heldout_src, a.heldout_tgt, src_vocab,
                                  tgt_vocab, false, a.max_len);
  }

  TransformerParams params = TransformerParams::init(cfg, a.seed);
  TrainHyper hyper;
  hyper.epochs = a.epochs;
  hyper.batch_size = a.batch;
  hyper.lr = a.lr;
  hyper.seed = a.seed;
  TrainResult res = train_transformer(params, train.pairs, heldout.pairs, cfg,
                                      hyper);
  for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss " << fmt6(res.epoch_losses[e])
              << '\n';
  }
  if (!heldout.pairs.empty()) {
    std::cout << "heldout perplexity " << fmt6(res.heldout_ppl) << '\n';
  }

  Checkpoint ck;
  ck.config = cfg;
  ck.src_vocab = std::move(src_vocab);
  ck.tgt_vocab = std::move(tgt_vocab);
  ck.base = std::move(params);
  save_checkpoint(a.out, ck);

  json cj = train_config_json(a, cfg, train);
  cj["epoch_losses"] = res.epoch_losses;
  if (!heldout.pairs.empty()) cj["heldout_ppl"] = res.heldout_ppl;
  cj["base_hash"] = hex64(ck.base.content_hash());
  std::vector<std::string> inputs{a.src, a.tgt};
  if (!a.heldout_src.empty()) {
    inputs.push_back(a.heldout_src);
    inputs.push_back(a.heldout_tgt);
  }
  write_manifest(a.out, "train", cj, a.seed, inputs, {a.out}, t0);
  return 0;
}

// ---- finetune ------------------------------------------------------------------

struct FinetuneArgs {
  std::string base, src, tgt, heldout_src, heldout_tgt, repr, out;
  std::int64_t epochs = 5, batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

int cmd_finetune(const FinetuneArgs& a, Clock::time_point t0) {
  Checkpoint ck = load_checkpoint(a.base);
  EncoderReprMode mode = repr_mode_from_name(a.repr);
  SubCorpus train = load_subword_corpus(a.src, a.tgt, ck.src_vocab,
                                        ck.tgt_vocab, true, ck.config.max_len);
  SubCorpus heldout;
  if (!a.heldout_src.empty()) {
    heldout = load_subword_corpus(a.heldout_src, a.heldout_tgt, ck.src_vocab,
                                  ck.tgt_vocab, false, ck.config.max_len);
  }

  std::uint64_t hash_before = ck.base.content_hash();
  TrainHyper hyper;
  hyper.epochs = a.epochs;
  hyper.batch_size = a.batch;
  hyper.lr = a.lr;
  hyper.seed = a.seed;
  FinetuneResult res = finetune(ck.base, ck.config, mode, train.pairs,
                                heldout.pairs, hyper);
  std::uint64_t hash_after = ck.base.content_hash();
  if (hash_after != hash_before) {
    throw Error("base model changed during fine-tuning");
  }
  for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss " << fmt6(res.epoch_losses[e])
              << '\n';
  }
  if (!heldout.pairs.empty()) {
    std::cout << "heldout perplexity " << fmt6(res.heldout_ppl) << '\n';
  }

  ck.has_align = true;
  ck.align = std::move(res.params);
  ck.align_mode = mode;
  save_checkpoint(a.out, ck);

  json cj{{"repr", a.repr},       {"epochs", a.epochs},
          {"batch", a.batch},     {"lr", a.lr},
          {"base", a.base},       {"base_hash_before", hex64(hash_before)},
          {"base_hash_after", hex64(hash_after)},
          {"base_unchanged", hash_after == hash_before},
          {"epoch_losses", res.epoch_losses},
          {"skipped_empty", train.skipped_empty},
          {"skipped_long", train.skipped_long}};
  if (!heldout.pairs.empty()) cj["heldout_ppl"] = res.heldout_ppl;
  std::vector<std::string> inputs{a.base, a.src, a.tgt};
  if (!a.heldout_src.empty()) {
    inputs.push_back(a.heldout_src);
    inputs.push_back(a.heldout_tgt);
  }
  write_manifest(a.out, "finetune", cj, a.seed, inputs, {a.out}, t0);
  return 0;
}

// ---- align ---------------------------------------------------------------------

struct AlignArgs {
  std::string model, src, tgt, out, mode;
  std::int64_t steps = 3;
  double lr = 1.0;
  std::uint64_t seed = 0;
  std::int64_t threads = 0;
};

struct LineJob {
  std::vector<std::int64_t> src_ids, tgt_ids;
  SubwordMap src_map, tgt_map;
  bool empty = false;
};

int cmd_align(const AlignArgs& a, Clock::time_point t0) {
  Checkpoint ck = load_checkpoint(a.model);
  AlignJob job;
  job.mode = align_mode_from_name(a.mode);
  job.steps = a.steps;
  job.learning_rate = a.lr;
  if (job.mode != AlignMode::Avg && !ck.has_align) {
    throw DataError("checkpoint " + a.model +
                    " has no alignment-layer section (mode " + a.mode + ")");
  }

  std::vector<std::string> src_lines = read_lines(a.src);
  std::vector<std::string> tgt_lines = read_lines(a.tgt);
  if (src_lines.size() != tgt_lines.size()) {
    throw DataError("line count mismatch between " + a.src + " and " + a.tgt);
  }

  // Tokenize and validate up front so errors carry line numbers; the parallel
  // part below is pure computation on frozen parameters.
  std::vector<LineJob> jobs(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    std::vector<std::string> s = tokenize(src_lines[i]);
    std::vector<std::string> t = tokenize(tgt_lines[i]);
    if (s.empty() || t.empty()) {
      jobs[i].empty = true;
      continue;
    }
    if (static_cast<std::int64_t>(s.size()) + 1 > ck.config.max_len ||
        static_cast<std::int64_t>(t.size()) + 1 > ck.config.max_len) {
      throw DataError("line " + std::to_string(i + 1) +
                      ": sentence does not fit max_len " +
                      std::to_string(ck.config.max_len));
    }
    for (const std::string& w : s) jobs[i].src_ids.push_back(ck.src_vocab.id(w));
    for (const std::string& w : t) jobs[i].tgt_ids.push_back(ck.tgt_vocab.id(w));
    try {
      jobs[i].src_map = subword_map_from_markers(s);
      jobs[i].tgt_map = subword_map_from_markers(t);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(i + 1) + ": " + e.what());
    }
  }

  std::vector<std::string> out_lines(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    while (!stop.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      if (jobs[i].empty) continue;
      try {
        AlignJob jb = job;
        jb.seed = mix_seed(a.seed, i);
        out_lines[i] = write_pharaoh_line(align_pair(
            ck, jb, jobs[i].src_ids, jobs[i].tgt_ids, jobs[i].src_map,
            jobs[i].tgt_map));
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };
  std::int64_t n_threads = std::min<std::int64_t>(
      resolve_threads(a.threads), static_cast<std::int64_t>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::int64_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  write_lines(a.out, out_lines);
  json cj{{"mode", a.mode},   {"steps", a.steps},
          {"lr", a.lr},       {"model", a.model},
          {"threads", n_threads}};
  write_manifest(a.out, "align", cj, a.seed, {a.model, a.src, a.tgt}, {a.out},
                 t0);
  return 0;
}

// ---- symmetrize ----------------------------------------------------------------

struct SymmetrizeArgs {
  std::string fwd, rev, out;
};

int cmd_symmetrize(const SymmetrizeArgs& a, Clock::time_point t0) {
  std::vector<AlignmentSet> fwd = read_pharaoh_file(a.fwd);
  std::vector<AlignmentSet> rev = read_pharaoh_file(a.rev);
  if (fwd.size() != rev.size()) {
    std::size_t n = std::min(fwd.size(), rev.size());
    throw DataError("line " + std::to_string(n + 1) + ": " + a.fwd + " has " +
                    std::to_string(fwd.size()) + " sentences but " + a.rev +
                    " has " + std::to_string(rev.size()));
  }
  std::vector<AlignmentSet> out;
  out.reserve(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    out.push_back(grow_diag(fwd[i], transpose_set(rev[i])));
  }
  write_pharaoh_file(a.out, out);
  write_manifest(a.out, "symmetrize", json::object(), 0, {a.fwd, a.rev},
                 {a.out}, t0);
  return 0;
}

// ---- score ---------------------------------------------------------------------

struct ScoreArgs {
  std::string hyp, gold, gold_format = "gold", out;
  bool zero_indexed = false;
  bool swap_hyp = false;
};

int cmd_score(const ScoreArgs& a, Clock::time_point t0) {
  std::vector<AlignmentSet> hyp = read_pharaoh_file(a.hyp);
  std::vector<GoldAlignment> gold;
  if (a.gold_format == "pharaoh") {
    for (const AlignmentSet& s : read_pharaoh_file(a.gold)) {
      gold.push_back({s, s});
    }
  } else {
    gold = read_gold(a.gold, a.zero_indexed);
  }
  if (gold.size() > hyp.size()) {
    throw DataError("gold has " + std::to_string(gold.size()) +
                    " sentences but " + a.hyp + " has only " +
                    std::to_string(hyp.size()));
  }
  // sentences past the last annotated one are unannotated
  gold.resize(hyp.size());

  AerCounts counts;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    counts.add(a.swap_hyp ? transpose_set(hyp[i]) : hyp[i], gold[i]);
  }
  std::cout << "aer\t" << fmt6(counts.aer()) << '\n'
            << "precision\t" << fmt6(counts.precision()) << '\n'
            << "recall\t" << fmt6(counts.recall()) << '\n';

  if (!a.out.empty()) {
    json m{{"aer", counts.aer()},
           {"precision", counts.precision()},
           {"recall", counts.recall()},
           {"hyp_links", counts.a},
           {"sure_links", counts.s}};
    std::ofstream f(a.out);
    if (!f) throw DataError("cannot write " + a.out);
    f << m.dump(2) << '\n';
    json cj{{"gold_format", a.gold_format},
            {"zero_indexed", a.zero_indexed},
            {"swap_hyp", a.swap_hyp}};
    write_manifest(a.out, "score", cj, 0, {a.hyp, a.gold}, {a.out}, t0);
  }
  return 0;
}

// ---- inspect -------------------------------------------------------------------

struct InspectArgs {
  std::string model, src, tgt, mode, out_prefix;
  std::int64_t line = 1;
  std::int64_t steps = 3;
  double lr = 1.0;
  std::uint64_t seed = 0;
};

int cmd_inspect(const InspectArgs& a, Clock::time_point t0) {
  Checkpoint ck = load_checkpoint(a.model);
  std::vector<std::string> src_lines = read_lines(a.src);
  std::vector<std::string> tgt_lines = read_lines(a.tgt);
  if (a.line < 1 || a.line > static_cast<std::int64_t>(src_lines.size()) ||
      a.line > static_cast<std::int64_t>(tgt_lines.size())) {
    throw DataError("line " + std::to_string(a.line) + " outside the corpus");
  }
  std::vector<std::string> s = tokenize(src_lines[static_cast<std::size_t>(a.line - 1)]);
  std::vector<std::string> t = tokenize(tgt_lines[static_cast<std::size_t>(a.line - 1)]);
  if (s.empty() || t.empty()) {
    throw DataError("line " + std::to_string(a.line) + " is empty");
  }
  AlignJob job;
  job.mode = align_mode_from_name(a.mode);
  job.steps = a.steps;
  job.learning_rate = a.lr;
  job.seed = a.seed;
  std::vector<std::int64_t> src_ids, tgt_ids;
  for (const std::string& w : s) src_ids.push_back(ck.src_vocab.id(w));
  for (const std::string& w : t) tgt_ids.push_back(ck.tgt_vocab.id(w));
  Tensor m = attention_matrix(ck, job, src_ids, tgt_ids);

  double max_v = max_all(m);
  std::ostringstream pgm;
  pgm << "P2\n# " << a.mode << " attention, " << m.rows()
      << " source x " << m.cols() << " target subwords\n"
      << m.cols() << ' ' << m.rows() << "\n255\n";
  std::ostringstream csv;
  csv.precision(17);
  for (std::int64_t i = 0; i < m.rows(); ++i) {
    for (std::int64_t j = 0; j < m.cols(); ++j) {
      long pix = max_v > 0.0 ? std::lround(m.at(i, j) / max_v * 255.0) : 0;
      pgm << pix << (j + 1 < m.cols() ? " " : "\n");
      csv << m.at(i, j) << (j + 1 < m.cols() ? "," : "\n");
    }
  }
  std::string pgm_path = a.out_prefix + ".pgm";
  std::string csv_path = a.out_prefix + ".csv";
  std::ofstream pf(pgm_path);
  if (!pf) throw DataError("cannot write " + pgm_path);
  pf << pgm.str();
  std::ofstream cf(csv_path);
  if (!cf) throw DataError("cannot write " + csv_path);
  cf << csv.str();

  json cj{{"mode", a.mode}, {"steps", a.steps}, {"lr", a.lr},
          {"line", a.line}, {"model", a.model}};
  write_manifest(a.out_prefix, "inspect", cj, a.seed,
                 {a.model, a.src, a.tgt}, {pgm_path, csv_path}, t0);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Clock::time_point t0 = Clock::now();
  CLI::App app{"neural word alignment toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenSynthArgs gen;
  CLI::App* gen_sc =
      app.add_subcommand("gen-synth", "generate a synthetic parallel corpus");
  gen_sc->add_option("--out-prefix", gen.out_prefix, "output path prefix")
      ->required();
  gen_sc->add_option("--size", gen.size, "training pairs");
  gen_sc->add_option("--test-size", gen.test_size, "test pairs with gold");
  gen_sc->add_option("--vocab", gen.vocab, "source dictionary size");
  gen_sc->add_option("--fanout", gen.fanout, "max target words per source word");
  gen_sc->add_option("--min-len", gen.min_len, "min source length");
  gen_sc->add_option("--max-len", gen.max_len, "max source length");
  gen_sc->add_option("--swap-prob", gen.swap_prob, "adjacent swap probability");
  gen_sc->add_option("--seed", gen.seed, "rng seed");

  LearnBpeArgs lb;
  CLI::App* lb_sc = app.add_subcommand("learn-bpe", "learn BPE merges");
  lb_sc->add_option("--in", lb.in, "tokenized text file")->required();
  lb_sc->add_option("--merges", lb.merges, "number of merges")->required();
  lb_sc->add_option("--out", lb.out, "merge file")->required();

  ApplyBpeArgs ab;
  CLI::App* ab_sc =
      app.add_subcommand("apply-bpe", "apply (or undo) BPE to a text file");
  ab_sc->add_option("--codes", ab.codes, "merge file (required unless --decode)");
  ab_sc->add_option("--in", ab.in, "input file")->required();
  ab_sc->add_option("--out", ab.out, "output file")->required();
  ab_sc->add_flag("--decode", ab.decode, "join subwords back into words");

  TrainArgs tr;
  CLI::App* tr_sc =
      app.add_subcommand("train", "train a base translation model");
  tr_sc->add_option("--src", tr.src, "source subword file")->required();
  tr_sc->add_option("--tgt", tr.tgt, "target subword file")->required();
  CLI::Option* tr_hs =
      tr_sc->add_option("--heldout-src", tr.heldout_src, "heldout source");
  CLI::Option* tr_ht =
      tr_sc->add_option("--heldout-tgt", tr.heldout_tgt, "heldout target");
  tr_hs->needs(tr_ht);
  tr_ht->needs(tr_hs);
  tr_sc->add_option("--out", tr.out, "checkpoint path")->required();
  tr_sc->add_option("--d-model", tr.d_model, "model width");
  tr_sc->add_option("--heads", tr.heads, "attention heads");
  tr_sc->add_option("--enc-layers", tr.enc_layers, "encoder layers");
  tr_sc->add_option("--dec-layers", tr.dec_layers, "decoder layers");
  tr_sc->add_option("--max-len", tr.max_len, "max sequence length");
  tr_sc->add_option("--dropout", tr.dropout, "dropout rate");
  tr_sc->add_option("--epochs", tr.epochs, "training epochs");
  tr_sc->add_option("--batch", tr.batch, "batch size");
  tr_sc->add_option("--lr", tr.lr, "Adam learning rate");
  tr_sc->add_option("--seed", tr.seed, "rng seed");

  FinetuneArgs ft;
  CLI::App* ft_sc = app.add_subcommand(
      "finetune", "fine-tune an alignment layer on a frozen base model");
  ft_sc->add_option("--base", ft.base, "base checkpoint")->required();
  ft_sc->add_option("--src", ft.src, "source subword file")->required();
  ft_sc->add_option("--tgt", ft.tgt, "target subword file")->required();
  CLI::Option* ft_hs =
      ft_sc->add_option("--heldout-src", ft.heldout_src, "heldout source");
  CLI::Option* ft_ht =
      ft_sc->add_option("--heldout-tgt", ft.heldout_tgt, "heldout target");
  ft_hs->needs(ft_ht);
  ft_ht->needs(ft_hs);
  ft_sc->add_option("--repr", ft.repr, "source representation: word, enc, add")
      ->required()
      ->check(CLI::IsMember({"word", "enc", "add"}));
  ft_sc->add_option("--out", ft.out, "checkpoint path")->required();
  ft_sc->add_option("--epochs", ft.epochs, "training epochs");
  ft_sc->add_option("--batch", ft.batch, "batch size");
  ft_sc->add_option("--lr", ft.lr, "Adam learning rate");
  ft_sc->add_option("--seed", ft.seed, "rng seed");

  AlignArgs al;
  CLI::App* al_sc =
      app.add_subcommand("align", "align a corpus with a trained model");
  al_sc->add_option("--model", al.model, "checkpoint")->required();
  al_sc->add_option("--src", al.src, "source subword file")->required();
  al_sc->add_option("--tgt", al.tgt, "target subword file")->required();
  al_sc->add_option("--out", al.out, "Pharaoh output file")->required();
  al_sc->add_option("--mode", al.mode, "avg, layer, sgd or rand-sgd")
      ->required()
      ->check(CLI::IsMember({"avg", "layer", "sgd", "rand-sgd"}));
  al_sc->add_option("--steps", al.steps, "gradient descent steps");
  al_sc->add_option("--lr", al.lr, "gradient descent learning rate");
  al_sc->add_option("--seed", al.seed, "rand-sgd init seed");
  al_sc->add_option("--threads", al.threads,
                    "worker threads (default from ALIGNTK_THREADS)");

  SymmetrizeArgs sy;
  CLI::App* sy_sc = app.add_subcommand(
      "symmetrize", "grow-diag combination of both directions");
  sy_sc->add_option("--fwd", sy.fwd, "forward Pharaoh file")->required();
  sy_sc->add_option("--rev", sy.rev, "reverse Pharaoh file (will be transposed)")
      ->required();
  sy_sc->add_option("--out", sy.out, "Pharaoh output file")->required();

  ScoreArgs sc;
  CLI::App* sc_sc =
      app.add_subcommand("score", "AER, precision and recall against gold");
  sc_sc->add_option("--hyp", sc.hyp, "hypothesis Pharaoh file")->required();
  sc_sc->add_option("--gold", sc.gold, "gold alignment file")->required();
  sc_sc->add_option("--gold-format", sc.gold_format,
                    "gold file format: gold or pharaoh (treated as S=P)")
      ->check(CLI::IsMember({"gold", "pharaoh"}));
  sc_sc->add_flag("--zero-indexed-gold", sc.zero_indexed,
                  "gold positions start at 0");
  sc_sc->add_flag("--swap-hyp", sc.swap_hyp,
                  "transpose hypothesis links before scoring");
  sc_sc->add_option("--out", sc.out, "optional metrics JSON file");

  InspectArgs in;
  CLI::App* in_sc = app.add_subcommand(
      "inspect", "export one pair's attention matrix as PGM + CSV");
  in_sc->add_option("--model", in.model, "checkpoint")->required();
  in_sc->add_option("--src", in.src, "source subword file")->required();
  in_sc->add_option("--tgt", in.tgt, "target subword file")->required();
  in_sc->add_option("--line", in.line, "1-based line number");
  in_sc->add_option("--mode", in.mode, "avg, layer, sgd or rand-sgd")
      ->required()
      ->check(CLI::IsMember({"avg", "layer", "sgd", "rand-sgd"}));
  in_sc->add_option("--steps", in.steps, "gradient descent steps");
  in_sc->add_option("--lr", in.lr, "gradient descent learning rate");
  in_sc->add_option("--seed", in.seed, "rand-sgd init seed");
  in_sc->add_option("--out-prefix", in.out_prefix, "output path prefix")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (ab_sc->parsed() && !ab.decode && ab.codes.empty()) {
      std::cerr << "apply-bpe requires --codes unless --decode is given\n";
      return 2;
    }
    if (gen_sc->parsed()) return cmd_gen_synth(gen, t0);
    if (lb_sc->parsed()) return cmd_learn_bpe(lb, t0);
    if (ab_sc->parsed()) return cmd_apply_bpe(ab, t0);
    if (tr_sc->parsed()) return cmd_train(tr, t0);
    if (ft_sc->parsed()) return cmd_finetune(ft, t0);
    if (al_sc->parsed()) return cmd_align(al, t0);
    if (sy_sc->parsed()) return cmd_symmetrize(sy, t0);
    if (sc_sc->parsed()) return cmd_score(sc, t0);
    if (in_sc->parsed()) return cmd_inspect(in, t0);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
