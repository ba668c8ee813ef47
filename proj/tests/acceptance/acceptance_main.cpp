// Acceptance gate for the toolkit. Each shipping criterion runs once and
// prints a single PASS/FAIL line; the exit status is the number of failures.
// Criteria 1-7 run in process against the library; 8 and 9 drive the
// installed CLI through the full synthetic experiment in a temp directory.
//
// Usage: acceptance <path-to-aligntk-cli> [--skip-e2e]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aligntk/alignlayer.hpp"
#include "aligntk/attnopt.hpp"
#include "aligntk/datapipe.hpp"
#include "aligntk/errors.hpp"
#include "aligntk/evalio.hpp"
#include "aligntk/extraction.hpp"
#include "aligntk/rng.hpp"
#include "aligntk/tape.hpp"
#include "aligntk/tensor.hpp"
#include "aligntk/transformer.hpp"
#include "support/testutil.hpp"

using namespace aligntk;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// ---- pinned tolerances and budgets ----------------------------------------
constexpr double kGradTol = 1e-4;       // relative error, finite differences
constexpr int kGradInstances = 100;     // seeded instances per kernel
constexpr double kGradBudgetSec = 60.0;
constexpr double kHandTol = 1e-3;       // hand-derived d=1 instance
constexpr int kMaskSeeds = 20;          // randomized mask-invariant configs
constexpr double kMarginPts = 0.02;     // strict AER orderings: >= 2 points
constexpr double kBidirSlackPts = 0.005;  // bidir vs each unidirectional
constexpr double kBidirMax = 0.15;      // absolute bidirectional target
constexpr double kE2eBudgetSec = 1200.0;

struct Check {
  int failures = 0;
  std::string first;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures++ == 0) first = what;
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

void report(int num, const char* title, const Check& c, const std::string& ok_detail) {
  if (c.failures == 0) {
    std::printf("PASS  criterion %d  %s  (%s)\n", num, title, ok_detail.c_str());
  } else {
    std::printf("FAIL  criterion %d  %s  (%d failed: %s)\n", num, title,
                c.failures, c.first.c_str());
  }
  std::fflush(stdout);
}

Tensor random_away_from_zero(Rng& rng, std::vector<std::int64_t> shape) {
  Tensor t = test::random_tensor(rng, std::move(shape), -1.0, 1.0);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    if (t.at(i) >= 0.0 && t.at(i) < 1e-3) t.at(i) += 1e-3;
    if (t.at(i) < 0.0 && t.at(i) > -1e-3) t.at(i) -= 1e-3;
  }
  return t;
}

VarPtr project(Tape& t, const VarPtr& out, const Tensor& r) {
  return op_sum(t, op_elem_mul_const(t, out, r));
}

std::vector<std::int64_t> random_ids(Rng& rng, std::int64_t n, std::int64_t vocab) {
  std::vector<std::int64_t> ids(n);
  for (auto& id : ids) id = Vocab::kUnk + 1 + rng.below(vocab - Vocab::kUnk - 1);
  return ids;
}

std::vector<std::int64_t> with_eos(std::vector<std::int64_t> ids) {
  ids.push_back(Vocab::kEos);
  return ids;
}

std::vector<std::int64_t> with_bos(const std::vector<std::int64_t>& ids) {
  std::vector<std::int64_t> out{Vocab::kBos};
  out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

AlignLayerParams random_align_params(Rng& rng, std::int64_t d, std::int64_t vocab) {
  AlignLayerParams p;
  p.att.wq.push_back(make_var(test::random_tensor(rng, {d, d})));
  p.att.wk.push_back(make_var(test::random_tensor(rng, {d, d})));
  p.att.wv.push_back(make_var(test::random_tensor(rng, {d, d})));
  p.att.wo = make_var(test::random_tensor(rng, {d, d}));
  p.w = make_var(test::random_tensor(rng, {vocab, d}));
  return p;
}

// ---- criterion 1: finite-difference gradient suite -------------------------

Check criterion1(std::string& detail) {
  Check c;
  auto t0 = Clock::now();
  double worst = 0.0;
  auto run = [&](const char* name, double err) {
    worst = std::max(worst, err);
    c.expect(err <= kGradTol, fmt("%s rel err %.3g", name, err));
  };

  for (int it = 0; it < kGradInstances; ++it) {
    Rng rng(100 + it);
    std::int64_t r = 1 + rng.below(4), cc = 1 + rng.below(4);
    {
      auto a = make_var(test::random_tensor(rng, {r, cc}));
      auto b = make_var(test::random_tensor(rng, {r, cc}));
      Tensor proj = test::random_tensor(rng, {r, cc});
      run("add", test::gradcheck({a, b}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_add(t, in[0], in[1]), proj);
          }));
      auto x = make_var(test::random_tensor(rng, {r, cc}));
      auto v = make_var(test::random_tensor(rng, {cc}));
      run("add_rowvec", test::gradcheck({x, v}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_add_rowvec(t, in[0], in[1]), proj);
          }));
      auto s = make_var(test::random_tensor(rng, {r, cc}));
      Tensor m = test::random_tensor(rng, {r, cc}, -2, 2);
      double k = rng.uniform(-2, 2);
      run("scale", test::gradcheck({s}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_scale(t, in[0], k), proj);
          }));
      run("elem_mul_const", test::gradcheck({s}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_elem_mul_const(t, in[0], m), proj);
          }));
    }
    {
      std::int64_t m = 1 + rng.below(4), n = 1 + rng.below(4), p = 1 + rng.below(4);
      auto a = make_var(test::random_tensor(rng, {m, n}));
      auto b = make_var(test::random_tensor(rng, {n, p}));
      Tensor proj = test::random_tensor(rng, {m, p});
      run("matmul", test::gradcheck({a, b}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_matmul(t, in[0], in[1]), proj);
          }));
      auto bt = make_var(test::random_tensor(rng, {p, n}));
      run("matmul_nt", test::gradcheck({a, bt}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_matmul_nt(t, in[0], in[1]), proj);
          }));
      Tensor projt = test::random_tensor(rng, {n, m});
      run("transpose", test::gradcheck({a}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_transpose(t, in[0]), projt);
          }));
    }
    {
      auto a = make_var(random_away_from_zero(rng, {r, cc}));
      Tensor proj = test::random_tensor(rng, {r, cc});
      run("relu", test::gradcheck({a}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_relu(t, in[0]), proj);
          }));
    }
    {
      std::int64_t rows = 1 + rng.below(4), cols = 2 + rng.below(4);
      auto x = make_var(test::random_tensor(rng, {rows, cols}, -3, 3));
      Tensor proj = test::random_tensor(rng, {rows, cols});
      run("softmax_rows", test::gradcheck({x}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_softmax_rows(t, in[0]), proj);
          }));
      Mask m(rows, cols, false);
      for (std::int64_t i = 0; i < rows; ++i) {
        m.set(i, rng.below(cols), true);
        for (std::int64_t j = 0; j < cols; ++j) {
          if (rng.uniform01() < 0.6) m.set(i, j, true);
        }
      }
      run("softmax_rows/mask", test::gradcheck({x}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_softmax_rows(t, in[0], &m), proj);
          }));
    }
    {
      std::int64_t rows = 1 + rng.below(3), cols = 2 + rng.below(5);
      Tensor xv = test::random_tensor(rng, {rows, cols}, -1, 1);
      for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) xv.at(i, j) += 0.7 * (double)j;
      }
      auto x = make_var(xv);
      auto g = make_var(test::random_tensor(rng, {cols}, 0.5, 1.5));
      auto b = make_var(test::random_tensor(rng, {cols}));
      Tensor proj = test::random_tensor(rng, {rows, cols});
      run("layer_norm", test::gradcheck({x, g, b}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_layer_norm(t, in[0], in[1], in[2]), proj);
          }));
    }
    {
      std::int64_t v = 2 + rng.below(5), d = 1 + rng.below(4), n = 1 + rng.below(5);
      auto table = make_var(test::random_tensor(rng, {v, d}));
      std::vector<std::int64_t> ids;
      for (std::int64_t i = 0; i < n; ++i) ids.push_back(rng.below(v));
      Tensor proj = test::random_tensor(rng, {n, d});
      run("embed_lookup", test::gradcheck({table}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_embed_lookup(t, in[0], ids), proj);
          }));
    }
    {
      std::int64_t n = 1 + rng.below(4), v = 2 + rng.below(6);
      auto logits = make_var(test::random_tensor(rng, {n, v}, -3, 3));
      std::vector<std::int64_t> targets;
      for (std::int64_t i = 0; i < n; ++i) targets.push_back(rng.below(v));
      Tensor proj = test::random_tensor(rng, {n}, 0.1, 1.0);
      run("cross_entropy_rows", test::gradcheck({logits}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_cross_entropy_rows(t, in[0], targets), proj);
          }));
      auto row = make_var(test::random_tensor(rng, {v}, -3, 3));
      std::int64_t tgt = rng.below(v);
      run("cross_entropy", test::gradcheck({row}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return op_cross_entropy(t, in[0], tgt);
          }));
    }
    {
      std::int64_t rows = 1 + rng.below(3);
      auto a = make_var(test::random_tensor(rng, {rows, 1 + rng.below(3)}));
      auto b = make_var(test::random_tensor(rng, {rows, 1 + rng.below(3)}));
      auto d = make_var(test::random_tensor(rng, {rows, 1 + rng.below(3)}));
      Tensor proj = test::random_tensor(
          rng, {rows, a->value.cols() + b->value.cols() + d->value.cols()});
      run("concat_cols", test::gradcheck({a, b, d}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_concat_cols(t, {in[0], in[1], in[2]}), proj);
          }));
      run("sum", test::gradcheck({a}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return op_sum(t, in[0]);
          }));
      run("mean", test::gradcheck({a}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return op_mean(t, in[0]);
          }));
    }
    {
      std::int64_t tq = 1 + rng.below(3), tk = 2 + rng.below(3), d = 1 + rng.below(4);
      auto q = make_var(test::random_tensor(rng, {tq, d}));
      auto k = make_var(test::random_tensor(rng, {tk, d}));
      Tensor proj = test::random_tensor(rng, {tq, tk});
      Mask m(tq, tk, true);
      m.set(rng.below(tq), rng.below(tk), false);
      run("calc_att", test::gradcheck({q, k}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_calc_att(t, in[0], in[1], &m), proj);
          }));
      auto a = make_var(test::random_tensor(rng, {tq, tk}, -2, 2));
      auto v = make_var(test::random_tensor(rng, {tk, d}));
      Tensor projav = test::random_tensor(rng, {tq, d});
      run("apply_att", test::gradcheck({a, v}, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_apply_att(t, in[0], in[1]), projav);
          }));
    }
    {
      const std::int64_t d = 4, heads = 2, dh = d / heads;
      std::int64_t tq = 1 + rng.below(3), tk = 1 + rng.below(3);
      auto q = make_var(test::random_tensor(rng, {tq, d}));
      auto k = make_var(test::random_tensor(rng, {tk, d}));
      auto v = make_var(test::random_tensor(rng, {tk, d}));
      std::vector<VarPtr> inputs{q, k, v};
      MultiHeadParamsV p;
      for (int h = 0; h < heads; ++h) {
        p.wq.push_back(make_var(test::random_tensor(rng, {d, dh})));
        p.wk.push_back(make_var(test::random_tensor(rng, {d, dh})));
        p.wv.push_back(make_var(test::random_tensor(rng, {d, dh})));
        inputs.push_back(p.wq.back());
        inputs.push_back(p.wk.back());
        inputs.push_back(p.wv.back());
      }
      p.wo = make_var(test::random_tensor(rng, {d, d}));
      inputs.push_back(p.wo);
      Tensor proj = test::random_tensor(rng, {tq, d});
      run("multi_head", test::gradcheck(inputs, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_multi_head(t, in[0], in[1], in[2], p).context, proj);
          }));
    }
    {
      // the full restricted forward, gradients through a, V', and both
      // alignment-layer weight matrices at once
      const std::int64_t tt = 2, s = 4, d = 3, vocab = 6;
      AlignLayerParams params = random_align_params(rng, d, vocab);
      auto a = make_var(random_away_from_zero(rng, {tt, s}));
      auto vprime = make_var(test::random_tensor(rng, {s, d}));
      Tensor proj = test::random_tensor(rng, {tt, vocab});
      std::vector<VarPtr> inputs{a, vprime, params.att.wo, params.w};
      run("restricted_forward", test::gradcheck(inputs, [&](Tape& t, const std::vector<VarPtr>& in) {
            return project(t, op_restricted_forward(t, in[0], in[1], params), proj);
          }));
    }
  }

  double secs = seconds_since(t0);
  c.expect(secs < kGradBudgetSec, fmt("took %.1fs, budget %.0fs", secs, kGradBudgetSec));
  detail = fmt("worst rel err %.2e over %d instances/kernel, %.1fs", worst,
               kGradInstances, secs);
  return c;
}

// ---- criterion 2: hand-derived d=1 optimization step ------------------------

Check criterion2(std::string& detail) {
  Check c;
  AlignLayerParams params;
  params.att.wq.push_back(make_const(Tensor::mat({{1.0}})));
  params.att.wk.push_back(make_const(Tensor::mat({{1.0}})));
  params.att.wv.push_back(make_const(Tensor::mat({{1.0}})));
  params.att.wo = make_const(Tensor::mat({{1.0}}));
  params.w = make_const(Tensor::mat({{1.0}, {-1.0}}));
  Tensor vprime = Tensor::mat({{1.0}, {0.0}});
  Tensor a0 = Tensor::mat({{0.5, 0.5}});

  OptConfig cfg;
  cfg.steps = 1;
  cfg.learning_rate = 1.0;
  OptResult r = optimize(a0, vprime, {0}, params, cfg);

  double g0 = (r.a_final.at(0, 0) - a0.at(0, 0)) / -cfg.learning_rate;
  double g1 = (r.a_final.at(0, 1) - a0.at(0, 1)) / -cfg.learning_rate;
  c.expect(std::abs(g0 - (-0.5378)) <= kHandTol, fmt("grad[0] = %.6f", g0));
  c.expect(g1 == 0.0, fmt("grad[1] = %.6f, want exactly 0", g1));
  c.expect(std::abs(r.a_final.at(0, 0) - 1.0378) <= kHandTol,
           fmt("a_final[0] = %.6f", r.a_final.at(0, 0)));
  c.expect(std::abs(r.a_final.at(0, 1) - 0.5) <= kHandTol,
           fmt("a_final[1] = %.6f", r.a_final.at(0, 1)));
  detail = fmt("grad [%.4f, %g], a_final [%.4f, %.4f]", g0, g1 + 0.0,
               r.a_final.at(0, 0), r.a_final.at(0, 1));
  return c;
}

// ---- criterion 3: mask invariants, exact, randomized configs ----------------

Check criterion3(std::string& detail) {
  Check c;

  // causal mask: decoder rows up to j are bit-identical when every later
  // target token changes
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 2;
  cfg.src_vocab = 12;
  cfg.tgt_vocab = 12;
  cfg.max_len = 16;
  cfg.dropout = 0.0;

  for (std::uint64_t seed = 1; seed <= kMaskSeeds; ++seed) {
    Rng rng(seed);
    TransformerParams p = TransformerParams::init(cfg, seed);
    auto src = with_eos(random_ids(rng, 3 + rng.below(4), cfg.src_vocab));
    auto tgt = random_ids(rng, 4 + rng.below(4), cfg.tgt_vocab);

    Tape t1;
    EncodedSourceV enc1 = encode_v(t1, src, p, cfg);
    DecodeOutV full = decode_v(t1, with_bos(tgt), enc1, p, cfg);

    std::size_t j = 1 + rng.below(static_cast<std::int64_t>(tgt.size()) - 1);
    auto perturbed = tgt;
    for (std::size_t k = j; k < perturbed.size(); ++k) {
      perturbed[k] = Vocab::kUnk + 1 +
                     (perturbed[k] - Vocab::kUnk) % (cfg.tgt_vocab - Vocab::kUnk - 1);
    }
    Tape t2;
    EncodedSourceV enc2 = encode_v(t2, src, p, cfg);
    DecodeOutV alt = decode_v(t2, with_bos(perturbed), enc2, p, cfg);

    for (std::size_t r = 0; r <= j; ++r) {
      auto row = static_cast<std::int64_t>(r);
      for (std::int64_t col = 0; col < cfg.d_model; ++col) {
        c.expect(full.decoder_output->value.at(row, col) ==
                     alt.decoder_output->value.at(row, col),
                 fmt("seed %llu: decoder row %lld changed", (unsigned long long)seed, (long long)row));
      }
    }
  }

  // encoder attention holds exactly zero weight on the source EOS column
  for (std::uint64_t seed = 1; seed <= kMaskSeeds; ++seed) {
    Rng rng(seed + 200);
    TransformerParams p = TransformerParams::init(cfg, seed);
    auto src = with_eos(random_ids(rng, 2 + rng.below(5), cfg.src_vocab));
    auto tgt = random_ids(rng, 1 + rng.below(5), cfg.tgt_vocab);

    Tape tape;
    EncodedSourceV enc = encode_v(tape, src, p, cfg);
    DecodeOutV dec = decode_v(tape, with_bos(tgt), enc, p, cfg);
    for (const auto& layer : dec.enc_att) {
      for (const VarPtr& head : layer) {
        for (std::int64_t r = 0; r < head->value.rows(); ++r) {
          c.expect(head->value.at(r, enc.eos_position) == 0.0,
                   fmt("seed %llu: nonzero EOS attention", (unsigned long long)seed));
        }
      }
    }
  }

  // attention optimization treats target positions independently, and keeps
  // an exactly-zero column (the masked EOS) at exactly zero
  for (std::uint64_t seed = 1; seed <= kMaskSeeds; ++seed) {
    Rng rng(seed + 400);
    const std::int64_t t = 3, s = 5, d = 4, vocab = 8;
    AlignLayerParams params = random_align_params(rng, d, vocab);
    Tensor vprime = test::random_tensor(rng, {s, d});
    Tensor a0 = test::random_tensor(rng, {t, s});
    for (std::int64_t i = 0; i < t; ++i) a0.at(i, s - 1) = 0.0;
    std::vector<std::int64_t> targets;
    for (std::int64_t i = 0; i < t; ++i) targets.push_back(rng.below(vocab));

    OptConfig ocfg;
    OptResult joint = optimize(a0, vprime, targets, params, ocfg);
    for (std::int64_t j = 0; j < t; ++j) {
      c.expect(joint.a_final.at(j, s - 1) == 0.0,
               fmt("seed %llu: optimization moved the zero EOS column", (unsigned long long)seed));
      OptResult single =
          optimize(slice(a0, j, j + 1, 0, s), vprime, {targets[j]}, params, ocfg);
      for (std::int64_t col = 0; col < s; ++col) {
        c.expect(single.a_final.at(0, col) == joint.a_final.at(j, col),
                 fmt("seed %llu: row %lld depends on other rows", (unsigned long long)seed, (long long)j));
      }
    }
  }

  detail = fmt("causal + EOS + per-position independence, %d seeds each, exact", kMaskSeeds);
  return c;
}

// ---- criterion 4: alignment-layer structural checks -------------------------

Check criterion4(std::string& detail) {
  Check c;
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.src_vocab = 30;
  cfg.tgt_vocab = 30;
  cfg.max_len = 12;
  cfg.dropout = 0.1;

  // fine-tuning leaves every base tensor byte-identical
  {
    Rng rng(7);
    std::vector<IdPair> data;
    for (int i = 0; i < 30; ++i) {
      auto ids = random_ids(rng, 2 + rng.below(4), cfg.src_vocab);
      data.push_back({ids, ids});
    }
    TransformerParams base = TransformerParams::init(cfg, 51);
    std::vector<Tensor> snapshot;
    for (const VarPtr& v : base.all()) snapshot.push_back(v->value);

    TrainHyper hyper;
    hyper.epochs = 2;
    hyper.batch_size = 8;
    hyper.seed = 9;
    finetune(base, cfg, EncoderReprMode::Add, data, data, hyper);

    std::size_t k = 0;
    for (const VarPtr& v : base.all()) {
      const Tensor& before = snapshot[k++];
      for (std::int64_t i = 0; i < v->value.size(); ++i) {
        c.expect(v->value.at(i) == before.at(i), "fine-tuning moved a base tensor");
      }
      c.expect(!v->grad_live(), "fine-tuning left a gradient on the base");
    }
  }

  // E = 0 collapses the prediction to the uniform distribution, exactly
  {
    Rng rng(4);
    const std::int64_t t = 3, s = 4, d = 8, vocab = 10;
    AlignLayerParams align = AlignLayerParams::init(d, vocab, 2);
    VarPtr dec = make_const(test::random_tensor(rng, {t, d}));
    VarPtr E = make_const(Tensor::zeros({s, d}));
    Mask eos_mask = Mask::exclude_col(t, s, s - 1);
    Tape tape;
    AlignForwardOut fwd = align_forward(tape, dec, E, align, &eos_mask);
    for (std::int64_t i = 0; i < t; ++i) {
      for (std::int64_t v = 0; v < vocab; ++v) {
        c.expect(fwd.p->value.at(i, v) == 1.0 / vocab, "E=0 output is not uniform");
      }
    }
  }

  // alignment row i is bit-identical when the token at i and every later
  // token change
  {
    ModelConfig rcfg = cfg;
    rcfg.dropout = 0.0;
    TransformerParams base = TransformerParams::init(rcfg, 21);
    AlignLayerParams align = AlignLayerParams::init(rcfg.d_model, rcfg.tgt_vocab, 22);

    auto run = [&](const std::vector<std::int64_t>& src_no_eos,
                   const std::vector<std::int64_t>& tgt) {
      std::vector<std::int64_t> src = src_no_eos;
      src.push_back(Vocab::kEos);
      Tape tape;
      EncodedSourceV enc = encode_v(tape, src, base, rcfg);
      DecodeOutV dec = decode_v(tape, with_bos(tgt), enc, base, rcfg);
      VarPtr E = build_E(tape, EncoderReprMode::Add, enc);
      Mask eos_mask = Mask::exclude_col(dec.decoder_output->value.rows(),
                                        E->value.rows(), enc.eos_position);
      return align_forward(tape, dec.decoder_output, E, align, &eos_mask).a->value;
    };

    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      auto src = random_ids(rng, 4 + rng.below(3), rcfg.src_vocab);
      auto tgt = random_ids(rng, 4 + rng.below(3), rcfg.tgt_vocab);
      Tensor full = run(src, tgt);

      std::size_t i = rng.below(static_cast<std::int64_t>(tgt.size()));
      auto changed = tgt;
      for (std::size_t k = i; k < changed.size(); ++k) {
        changed[k] = Vocab::kUnk + 1 +
                     (changed[k] - Vocab::kUnk) % (rcfg.tgt_vocab - Vocab::kUnk - 1);
      }
      Tensor alt = run(src, changed);
      for (std::size_t r = 0; r <= i; ++r) {
        for (std::int64_t col = 0; col < full.cols(); ++col) {
          c.expect(full.at(static_cast<std::int64_t>(r), col) ==
                       alt.at(static_cast<std::int64_t>(r), col),
                   fmt("seed %llu: alignment row %zu depends on tokens >= %zu",
                       (unsigned long long)seed, r, i));
        }
      }
    }
  }

  detail = "frozen base bitwise, E=0 uniform, row-i suffix invariance";
  return c;
}

// ---- criterion 5: grow-diag vs brute-force oracle ----------------------------

AlignmentSet oracle_grow_diag(const AlignmentSet& fwd, const AlignmentSet& rev,
                              std::int64_t S, std::int64_t T) {
  static const std::int64_t offs[8][2] = {{-1, 0}, {0, -1}, {1, 0},  {0, 1},
                                          {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  std::vector<Link> uni, cur;
  for (std::int64_t s = 0; s < S; ++s) {
    for (std::int64_t t = 0; t < T; ++t) {
      bool f = fwd.contains(s, t), r = rev.contains(s, t);
      if (f || r) uni.push_back({s, t});
      if (f && r) cur.push_back({s, t});
    }
  }
  auto has = [](const std::vector<Link>& v, Link x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<Link> snap = cur;
    std::sort(snap.begin(), snap.end());
    for (const Link& l : snap) {
      for (const auto& o : offs) {
        Link n{l.src + o[0], l.tgt + o[1]};
        if (n.src < 0 || n.tgt < 0 || n.src >= S || n.tgt >= T) continue;
        if (!has(uni, n) || has(cur, n)) continue;
        bool scov = false, tcov = false;
        for (const Link& x : cur) {
          if (x.src == n.src) scov = true;
          if (x.tgt == n.tgt) tcov = true;
        }
        if (scov && tcov) continue;
        cur.push_back(n);
        changed = true;
      }
    }
  }
  AlignmentSet out;
  out.src_len = S;
  out.tgt_len = T;
  for (const Link& l : cur) out.links.insert(l);
  return out;
}

AlignmentSet make_set(std::int64_t s, std::int64_t t,
                      std::initializer_list<Link> links) {
  AlignmentSet out;
  out.src_len = s;
  out.tgt_len = t;
  for (const Link& l : links) out.add(l.src, l.tgt);
  return out;
}

Check criterion5(std::string& detail) {
  Check c;

  AlignmentSet f = make_set(2, 2, {{0, 0}, {1, 1}});
  AlignmentSet r = make_set(2, 2, {{0, 0}});
  c.expect(grow_diag(f, r) == make_set(2, 2, {{0, 0}, {1, 1}}),
           "hand trace 1: diagonal grows back");
  AlignmentSet f2 = make_set(3, 3, {{0, 0}});
  AlignmentSet r2 = make_set(3, 3, {{2, 2}});
  c.expect(grow_diag(f2, r2).size() == 0, "hand trace 2: empty intersection stays empty");

  Rng rng(24);
  for (int it = 0; it < 1000; ++it) {
    std::int64_t S = 1 + rng.below(6), T = 1 + rng.below(6);
    AlignmentSet fwd, rev;
    fwd.src_len = rev.src_len = S;
    fwd.tgt_len = rev.tgt_len = T;
    if (it % 2 == 0) {
      for (std::int64_t s = 0; s < S; ++s) {
        for (std::int64_t t = 0; t < T; ++t) {
          if (rng.uniform01() < 0.25) fwd.links.insert({s, t});
          if (rng.uniform01() < 0.25) rev.links.insert({s, t});
        }
      }
    } else {
      for (std::int64_t t = 0; t < T; ++t) fwd.links.insert({rng.below(S), t});
      for (std::int64_t s = 0; s < S; ++s) rev.links.insert({s, rng.below(T)});
    }
    AlignmentSet got = grow_diag(fwd, rev);
    c.expect(got == oracle_grow_diag(fwd, rev, S, T),
             fmt("instance %d disagrees with the oracle", it));

    AlignmentSet inter = intersect_sets(fwd, rev);
    AlignmentSet uni = union_sets(fwd, rev);
    for (const Link& l : inter.links) {
      c.expect(got.links.count(l) == 1, fmt("instance %d drops an intersection link", it));
    }
    for (const Link& l : got.links) {
      c.expect(uni.links.count(l) == 1, fmt("instance %d invents a link", it));
    }
  }

  detail = "oracle agreement on 1000 instances, hand traces, subset chain";
  return c;
}

// ---- criterion 6: AER worked examples and the zero condition ----------------

Check criterion6(std::string& detail) {
  Check c;
  auto links = [](std::initializer_list<Link> ls) {
    AlignmentSet out;
    for (const Link& l : ls) out.links.insert(l);
    return out;
  };
  auto gold_of = [&](std::initializer_list<Link> s, std::initializer_list<Link> p) {
    GoldAlignment g;
    g.sure = links(s);
    g.probable = links(p);
    g.probable.links.insert(g.sure.links.begin(), g.sure.links.end());
    return g;
  };

  c.expect(aer(links({{0, 0}, {1, 1}}), gold_of({{0, 0}, {1, 1}}, {})) == 0.0,
           "perfect hypothesis not at AER 0");
  c.expect(std::abs(aer(links({{0, 0}}), gold_of({{1, 1}}, {})) - 1.0) < 1e-12,
           "fully wrong hypothesis not at AER 1");
  c.expect(std::abs(aer(links({{0, 0}, {1, 1}}), gold_of({{0, 0}}, {{2, 1}})) -
                    (1.0 - 2.0 / 3.0)) < 1e-12,
           "mixed sure/probable example off");

  auto is_subset = [](const AlignmentSet& a, const AlignmentSet& b) {
    for (const Link& l : a.links) {
      if (!b.links.count(l)) return false;
    }
    return true;
  };
  Rng rng(31);
  int zeros = 0, instances = 0;
  for (int it = 0; it < 500; ++it) {
    AlignmentSet A, S, P;
    for (std::int64_t s = 0; s < 3; ++s) {
      for (std::int64_t t = 0; t < 3; ++t) {
        if (rng.uniform01() < 0.3) A.links.insert({s, t});
        double u = rng.uniform01();
        if (u < 0.2) {
          S.links.insert({s, t});
          P.links.insert({s, t});
        } else if (u < 0.4) {
          P.links.insert({s, t});
        }
      }
    }
    if (A.size() + S.size() == 0) continue;
    ++instances;
    GoldAlignment g;
    g.sure = S;
    g.probable = P;
    bool brute = is_subset(S, A) && is_subset(A, P);
    bool zero = aer(A, g) == 0.0;
    c.expect(zero == brute, fmt("instance %d: AER=0 and S within A within P disagree", it));
    if (zero) ++zeros;
  }
  c.expect(zeros > 0, "the zero side of the equivalence never fired");
  c.expect(zeros < instances, "the nonzero side of the equivalence never fired");

  detail = fmt("worked examples, zero condition on %d instances (%d zeros)", instances, zeros);
  return c;
}

// ---- criterion 7: BPE merge order and round trip -----------------------------

Check criterion7(std::string& detail) {
  Check c;
  const std::map<std::string, std::int64_t> toy = {
      {"_low", 5}, {"_lower", 2}, {"_newest", 6}, {"_widest", 3}};
  BpeModel m = bpe_learn(toy, 2);
  c.expect(m.merges.size() == 2, "toy corpus produced fewer than 2 merges");
  if (m.merges.size() == 2) {
    c.expect(m.merges[0] == std::make_pair(std::string("e"), std::string("s")),
             fmt("first merge (%s,%s)", m.merges[0].first.c_str(), m.merges[0].second.c_str()));
    c.expect(m.merges[1] == std::make_pair(std::string("es"), std::string("t")),
             fmt("second merge (%s,%s)", m.merges[1].first.c_str(), m.merges[1].second.c_str()));
  }

  auto random_word = [](Rng& rng) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::int64_t len = 1 + rng.below(10);
    std::string w;
    for (std::int64_t i = 0; i < len; ++i) {
      w += alphabet[static_cast<std::size_t>(
          rng.below(static_cast<std::int64_t>(alphabet.size())))];
    }
    return w;
  };

  std::map<std::string, std::int64_t> freq;
  Rng gen(41);
  for (int i = 0; i < 200; ++i) freq["_" + random_word(gen)] += 1 + gen.below(5);
  BpeModel model = bpe_learn(freq, 100);

  Rng rng(42);
  for (int i = 0; i < 1000; ++i) {
    std::string w = random_word(rng);
    std::vector<std::string> subs = bpe_apply("_" + w, model);
    std::vector<std::string> words = bpe_decode(subs);
    c.expect(words.size() == 1 && words[0] == w,
             fmt("decode(apply(%s)) != identity", w.c_str()));
  }

  detail = "toy merges (e,s)(es,t), decode-apply identity on 1000 words";
  return c;
}

// ---- criteria 8 and 9: the synthetic experiment over the CLI -----------------

struct E2eResult {
  bool ran = false;
  std::string error;
  std::map<std::string, double> aer;  // avg, layer, sgd, rand, rev, bidir
  double seconds = 0.0;
};

int run_logged(const std::string& cmd, const fs::path& log) {
  std::string full = cmd + " >> '" + log.string() + "' 2>&1";
  return std::system(full.c_str());
}

double parse_aer(const fs::path& file) {
  std::ifstream in(file);
  std::string key;
  double v = -1.0;
  if (!(in >> key >> v) || key != "aer") {
    throw DataError("no aer line in " + file.string());
  }
  return v;
}

E2eResult run_e2e(const std::string& cli, const fs::path& dir) {
  E2eResult res;
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path log = dir / "pipeline.log";
  auto p = [&](const char* name) { return (dir / name).string(); };
  auto t0 = Clock::now();

  // one fixed recipe, calibrated once: 10k train / 500 test, vocab 50,
  // fan-out 2, swap 0.2, and a base model whose averaged attention is
  // genuinely noisier than the dedicated alignment layer
  std::vector<std::string> cmds = {
      cli + " gen-synth --out-prefix '" + p("syn") +
          "' --size 10000 --test-size 500 --vocab 50 --fanout 2"
          " --min-len 12 --max-len 24 --swap-prob 0.2 --seed 1",
      cli + " learn-bpe --in '" + p("syn.train.src") + "' --merges 300 --out '" + p("src.codes") + "'",
      cli + " learn-bpe --in '" + p("syn.train.tgt") + "' --merges 300 --out '" + p("tgt.codes") + "'",
      cli + " apply-bpe --codes '" + p("src.codes") + "' --in '" + p("syn.train.src") + "' --out '" + p("train.src.bpe") + "'",
      cli + " apply-bpe --codes '" + p("tgt.codes") + "' --in '" + p("syn.train.tgt") + "' --out '" + p("train.tgt.bpe") + "'",
      cli + " apply-bpe --codes '" + p("src.codes") + "' --in '" + p("syn.test.src") + "' --out '" + p("test.src.bpe") + "'",
      cli + " apply-bpe --codes '" + p("tgt.codes") + "' --in '" + p("syn.test.tgt") + "' --out '" + p("test.tgt.bpe") + "'",
      cli + " train --src '" + p("train.src.bpe") + "' --tgt '" + p("train.tgt.bpe") + "' --out '" + p("base_fwd.atal") +
          "' --d-model 32 --heads 4 --enc-layers 1 --dec-layers 2 --max-len 96"
          " --dropout 0.1 --epochs 8 --batch 16 --lr 2e-3 --seed 11",
      cli + " train --src '" + p("train.tgt.bpe") + "' --tgt '" + p("train.src.bpe") + "' --out '" + p("base_rev.atal") +
          "' --d-model 32 --heads 4 --enc-layers 1 --dec-layers 2 --max-len 96"
          " --dropout 0.1 --epochs 8 --batch 16 --lr 2e-3 --seed 12",
      cli + " finetune --base '" + p("base_fwd.atal") + "' --src '" + p("train.src.bpe") + "' --tgt '" + p("train.tgt.bpe") +
          "' --repr add --out '" + p("ft_fwd.atal") + "' --epochs 25 --batch 16 --lr 1e-2 --seed 13",
      cli + " finetune --base '" + p("base_rev.atal") + "' --src '" + p("train.tgt.bpe") + "' --tgt '" + p("train.src.bpe") +
          "' --repr add --out '" + p("ft_rev.atal") + "' --epochs 25 --batch 16 --lr 1e-2 --seed 14",
      cli + " align --model '" + p("ft_fwd.atal") + "' --src '" + p("test.src.bpe") + "' --tgt '" + p("test.tgt.bpe") +
          "' --out '" + p("fwd.avg.ph") + "' --mode avg --threads 4",
      cli + " align --model '" + p("ft_fwd.atal") + "' --src '" + p("test.src.bpe") + "' --tgt '" + p("test.tgt.bpe") +
          "' --out '" + p("fwd.layer.ph") + "' --mode layer --threads 4",
      cli + " align --model '" + p("ft_fwd.atal") + "' --src '" + p("test.src.bpe") + "' --tgt '" + p("test.tgt.bpe") +
          "' --out '" + p("fwd.sgd.ph") + "' --mode sgd --threads 4",
      cli + " align --model '" + p("ft_fwd.atal") + "' --src '" + p("test.src.bpe") + "' --tgt '" + p("test.tgt.bpe") +
          "' --out '" + p("fwd.rand.ph") + "' --mode rand-sgd --seed 21 --threads 4",
      cli + " align --model '" + p("ft_rev.atal") + "' --src '" + p("test.tgt.bpe") + "' --tgt '" + p("test.src.bpe") +
          "' --out '" + p("rev.sgd.ph") + "' --mode sgd --threads 4",
      cli + " symmetrize --fwd '" + p("fwd.sgd.ph") + "' --rev '" + p("rev.sgd.ph") + "' --out '" + p("bidir.ph") + "'",
  };
  for (const std::string& cmd : cmds) {
    if (run_logged(cmd, log) != 0) {
      res.error = "command failed, see " + log.string();
      return res;
    }
  }

  struct ScoreJob {
    const char* key;
    const char* hyp;
    bool swap;
  };
  const ScoreJob jobs[] = {
      {"avg", "fwd.avg.ph", false},  {"layer", "fwd.layer.ph", false},
      {"sgd", "fwd.sgd.ph", false},  {"rand", "fwd.rand.ph", false},
      {"rev", "rev.sgd.ph", true},   {"bidir", "bidir.ph", false},
  };
  for (const ScoreJob& job : jobs) {
    fs::path out = dir / (std::string(job.key) + ".score");
    std::string cmd = cli + " score --hyp '" + p(job.hyp) + "' --gold '" + p("syn.test.gold") + "'";
    if (job.swap) cmd += " --swap-hyp";
    cmd += " > '" + out.string() + "' 2>> '" + log.string() + "'";
    if (std::system(cmd.c_str()) != 0) {
      res.error = std::string("scoring ") + job.hyp + " failed, see " + log.string();
      return res;
    }
    res.aer[job.key] = parse_aer(out);
  }

  res.seconds = seconds_since(t0);
  res.ran = true;
  return res;
}

Check criterion8(const E2eResult& r, std::string& detail) {
  Check c;
  if (!r.ran) {
    c.expect(false, r.error);
    detail = "";
    return c;
  }
  double avg = r.aer.at("avg"), layer = r.aer.at("layer"), sgd = r.aer.at("sgd");
  double rand = r.aer.at("rand"), rev = r.aer.at("rev"), bidir = r.aer.at("bidir");

  c.expect(avg - layer >= kMarginPts,
           fmt("AER(Avg) %.4f beats AER(Add) %.4f by < %.0f points", avg, layer, kMarginPts * 100));
  c.expect(layer >= sgd, fmt("AER(Add) %.4f < AER(Add+SGD) %.4f", layer, sgd));
  c.expect(rand - sgd >= kMarginPts,
           fmt("AER(Rand+SGD) %.4f beats AER(Add+SGD) %.4f by < %.0f points", rand, sgd, kMarginPts * 100));
  c.expect(bidir <= sgd + kBidirSlackPts,
           fmt("bidir %.4f exceeds forward %.4f + %.1f points", bidir, sgd, kBidirSlackPts * 100));
  c.expect(bidir <= rev + kBidirSlackPts,
           fmt("bidir %.4f exceeds reverse %.4f + %.1f points", bidir, rev, kBidirSlackPts * 100));
  c.expect(bidir <= kBidirMax, fmt("bidir %.4f above the %.2f target", bidir, kBidirMax));
  c.expect(r.seconds <= kE2eBudgetSec,
           fmt("pipeline took %.0fs, budget %.0fs", r.seconds, kE2eBudgetSec));

  detail = fmt("avg %.3f > add %.3f >= sgd %.3f, rand %.3f, bidir %.3f, %.0fs",
               avg, layer, sgd, rand, bidir, r.seconds);
  return c;
}

Check criterion9(const std::string& cli, const fs::path& dir1, const E2eResult& first,
                 std::string& detail) {
  Check c;
  if (!first.ran) {
    c.expect(false, "first pipeline run failed, nothing to compare");
    detail = "";
    return c;
  }
  fs::path dir2 = dir1.parent_path() / (dir1.filename().string() + "_rerun");
  E2eResult second = run_e2e(cli, dir2);
  c.expect(second.ran, second.error);
  if (!second.ran) {
    detail = "";
    return c;
  }

  auto slurp = [](const fs::path& f) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const char* outputs[] = {"fwd.avg.ph", "fwd.layer.ph", "fwd.sgd.ph",
                           "fwd.rand.ph", "rev.sgd.ph", "bidir.ph"};
  for (const char* name : outputs) {
    c.expect(slurp(dir1 / name) == slurp(dir2 / name),
             fmt("%s differs between runs", name));
  }
  detail = fmt("6 Pharaoh outputs byte-identical across reruns, %.0fs", second.seconds);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-aligntk-cli> [--skip-e2e]\n");
    return 64;
  }
  std::string cli = "'" + fs::absolute(argv[1]).string() + "'";
  bool skip_e2e = false;
  for (int i = 2; i < argc; ++i) {
    if (std::string(argv[i]) == "--skip-e2e") skip_e2e = true;
  }

  int failures = 0;
  std::string detail;
  auto tally = [&](int num, const char* title, Check c) {
    report(num, title, c, detail);
    if (c.failures > 0) ++failures;
  };

  tally(1, "finite-difference gradients, every kernel + restricted forward", criterion1(detail));
  tally(2, "hand-derived one-dimensional descent step", criterion2(detail));
  tally(3, "mask invariants hold exactly", criterion3(detail));
  tally(4, "alignment-layer structural checks", criterion4(detail));
  tally(5, "grow-diag matches the brute-force oracle", criterion5(detail));
  tally(6, "AER worked examples and zero condition", criterion6(detail));
  tally(7, "BPE merge order and round trip", criterion7(detail));

  if (skip_e2e) {
    std::printf("SKIP  criterion 8  (--skip-e2e)\nSKIP  criterion 9  (--skip-e2e)\n");
    return failures;
  }

  fs::path base = fs::temp_directory_path() / "aligntk_acceptance";
  fs::path dir1 = base / "run";
  E2eResult first = run_e2e(cli, dir1);
  tally(8, "end-to-end synthetic experiment orderings", criterion8(first, detail));
  tally(9, "rerun determinism, byte-identical outputs", criterion9(cli, dir1, first, detail));

  return failures;
}
