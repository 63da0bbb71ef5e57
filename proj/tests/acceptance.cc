// Acceptance gate: one pass/fail line per criterion; nonzero exit on any
// failure. Each criterion is self-contained and uses the independent
// brute-force oracles where the claim is numeric.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "chateval/beam.h"
#include "chateval/finetune.h"
#include "chateval/metrics.h"
#include "chateval/pipeline.h"
#include "chateval/text.h"
#include "chateval/toy_corpus.h"
#include "oracles.h"

using namespace chateval;
using nn::Graph;
using nn::Expr;
using Mat = Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

std::mt19937_64 g_rng(2024);

std::vector<std::string> random_sentence(int max_len, int vocab) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<int> tok(0, vocab - 1);
  std::vector<std::string> s;
  int n = len(g_rng);
  for (int i = 0; i < n; ++i) s.push_back("t" + std::to_string(tok(g_rng)));
  return s;
}

struct Check {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& msg) {
    if (!cond && ok) {
      ok = false;
      detail = msg;
    }
  }
};

// ---- criterion 1: metric oracle equivalence --------------------------------

bool criterion1(std::string& detail) {
  Check c;
  for (int trial = 0; trial < 120; ++trial) {
    std::vector<TokenSeq> hyps, refs;
    int n = 1 + static_cast<int>(g_rng() % 5);
    for (int i = 0; i < n; ++i) {
      hyps.push_back(random_sentence(8, 6));
      refs.push_back(random_sentence(8, 6));
    }
    double got = bleu4_corpus(hyps, refs);
    double want = oracles::bleu4_corpus(hyps, refs);
    c.require(std::abs(got - want) < 1e-6, "bleu4_corpus mismatch");
    got = bleu4_sentence(hyps[0], refs[0]);
    want = oracles::bleu4_sentence(hyps[0], refs[0]);
    c.require(std::abs(got - want) < 1e-6, "bleu4_sentence mismatch");
    got = rouge2(hyps[0], refs[0], false);
    want = oracles::rouge2(hyps[0], refs[0], false);
    c.require(std::abs(got - want) < 1e-9, "rouge2 mismatch");
    c.require(std::abs(distinct2(hyps) - oracles::distinct2(hyps)) < 1e-9,
              "distinct2 mismatch");
  }
  for (int trial = 0; trial < 120; ++trial) {
    ConfusionCounts cc;
    cc.tp = static_cast<long>(g_rng() % 50);
    cc.fp = static_cast<long>(g_rng() % 50);
    cc.fn = static_cast<long>(g_rng() % 50);
    cc.tn = static_cast<long>(g_rng() % 50);
    c.require(std::abs(mcc(cc) - oracles::mcc(cc.tp, cc.fp, cc.fn, cc.tn)) <
                  1e-9,
              "mcc mismatch");
    std::normal_distribution<double> nd;
    std::vector<double> x, y;
    for (int i = 0; i < 10; ++i) {
      x.push_back(nd(g_rng));
      y.push_back(nd(g_rng));
    }
    c.require(std::abs(pearson(x, y).first - oracles::pearson_r(x, y)) < 1e-9,
              "pearson mismatch");
  }
  detail = c.ok ? "metrics match brute-force oracles on randomized cases"
                : c.detail;
  return c.ok;
}

// ---- criterion 2: soft-lookup exactness ------------------------------------

bool criterion2(std::string& detail) {
  Check c;
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const int gv = 11, ev = 9, dim = 6;
  Mat table(ev, dim);
  for (int r = 0; r < ev; ++r)
    for (int col = 0; col < dim; ++col) table(r, col) = nd(g_rng);
  std::vector<int> proj;
  for (int i = 0; i < gv; ++i)
    proj.push_back(static_cast<int>(g_rng() % ev));
  for (int trial = 0; trial < 1000; ++trial) {
    Mat q = Mat::Zero(gv, 1);
    q(static_cast<int>(g_rng() % gv), 0) = 1.0;
    Mat out = soft_embedding_lookup(q, table, proj);
    int tok = 0;
    q.col(0).maxCoeff(&tok);
    double rel = (out.col(0).transpose() - table.row(proj[tok])).norm() /
                 std::max(1.0, table.row(proj[tok]).norm());
    c.require(rel < 1e-6, "one-hot lookup differs from hard row lookup");
  }
  for (int trial = 0; trial < 200; ++trial) {
    Mat q(gv, 3);
    for (int col = 0; col < 3; ++col) {
      double z = 0;
      for (int r = 0; r < gv; ++r) {
        q(r, col) = ud(g_rng) + 1e-9;
        z += q(r, col);
      }
      q.col(col) /= z;
    }
    Mat p = Mat::Zero(ev, 3);
    for (int r = 0; r < gv; ++r) p.row(proj[r]) += q.row(r);
    Mat want = table.transpose() * p;
    c.require((soft_embedding_lookup(q, table, proj) - want).norm() < 1e-6,
              "stochastic lookup differs from dense multiply");
  }
  detail = c.ok ? "soft lookup equals hard lookup / dense multiply" : c.detail;
  return c.ok;
}

// ---- criterion 3: composite-loss gradient check ----------------------------

bool criterion3(std::string& detail) {
  std::vector<std::vector<std::string>> texts = {
      {"alpha", "beta", "gamma"}, {"delta", "echo"}, {"foxtrot", "golf"}};
  Vocabulary v = Vocabulary::build(texts, 12);
  GeneratorConfig gcfg;
  gcfg.hidden = 8;
  gcfg.emb_dim = 8;
  gcfg.vocab_size = v.size();
  gcfg.seed = 2;
  Generator gen(gcfg, v);
  SentenceEncoderConfig ecfg =
      SentenceEncoderConfig::defaults(EncoderKind::kAverage);
  ecfg.output_dim = 8;
  ecfg.vocab_size = 12;
  ecfg.seed = 3;
  auto enc = std::make_shared<SentenceEncoder>(ecfg, v);
  EvaluatorConfig vcfg;
  vcfg.context_rnn_hidden = 4;
  vcfg.ffnn_hidden = 8;
  vcfg.dropout = 0.0;
  Evaluator ev(vcfg, enc);

  Dialog d;
  d.dialog_id = "fd";
  Turn t;
  t.user_tokens = {"alpha", "beta"};
  t.user_text = "alpha beta";
  t.system_tokens = {"delta", "echo", "gamma"};
  t.system_text = "delta echo gamma";
  d.turns.push_back(t);
  FinetuneExample ex;
  ex.dialog = &d;
  ex.turn_index = 0;
  ex.input = v.encode(t.user_tokens);
  ex.target = v.encode(t.system_tokens);
  std::vector<int> proj = vocab_projection(v, enc->vocab());

  auto value = [&]() {
    Graph g;
    return composite_loss(g, gen, ev, {ex}, 1.0, proj).total;
  };
  Graph g;
  Expr loss;
  composite_loss(g, gen, ev, {ex}, 1.0, proj, true, &loss);
  gen.model().zero_grads();
  ev.model().zero_grads();
  g.backward(loss);

  const double step = 1e-5;
  double worst = 0;
  for (auto& p : gen.model().params()) {
    for (int c = 0; c < p->value.cols(); ++c)
      for (int r = 0; r < p->value.rows(); ++r) {
        double saved = p->value(r, c);
        p->value(r, c) = saved + step;
        double up = value();
        p->value(r, c) = saved - step;
        double down = value();
        p->value(r, c) = saved;
        double fd = (up - down) / (2 * step);
        double an = p->grad(r, c);
        double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
        worst = std::max(worst, std::abs(fd - an) / denom);
      }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf),
                "max relative gradient error %.2e (limit 1e-3)", worst);
  detail = buf;
  return worst < 1e-3;
}

// ---- criterion 4: beam-search correctness ----------------------------------

bool criterion4(std::string& detail) {
  Check c;
  std::normal_distribution<double> nd;
  auto table_model = [](const std::vector<Eigen::VectorXd>& logps) {
    return [logps](int state, int) {
      int depth =
          std::min<int>(state, static_cast<int>(logps.size()) - 1);
      return std::make_pair(logps[depth], state + 1);
    };
  };
  // exhaustive enumeration on a 3-token vocabulary (eos = 0)
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::VectorXd> logps;
    for (int depth = 0; depth < 3; ++depth) {
      Eigen::VectorXd l(3);
      for (int i = 0; i < 3; ++i) l[i] = nd(g_rng);
      logps.push_back(l.array() - std::log(l.array().exp().sum()));
    }
    struct Hyp {
      std::vector<int> ids;
      double lp;
    };
    std::vector<Hyp> all;
    std::function<void(std::vector<int>, double)> expand =
        [&](std::vector<int> prefix, double lp) {
          int depth = static_cast<int>(prefix.size());
          if (depth == 3) {
            all.push_back({prefix, lp});
            return;
          }
          all.push_back({prefix, lp + logps[depth][0]});
          for (int tok = 1; tok <= 2; ++tok) {
            auto next = prefix;
            next.push_back(tok);
            expand(next, lp + logps[depth][tok]);
          }
        };
    expand({}, 0.0);
    std::sort(all.begin(), all.end(),
              [](const Hyp& a, const Hyp& b) { return a.lp > b.lp; });
    auto got = beam_search_core(table_model(logps), 1, 0, 15, 3);
    c.require(got.size() == std::min<std::size_t>(15, all.size()),
              "wrong n-best size");
    for (std::size_t i = 0; i < got.size() && c.ok; ++i) {
      c.require(got[i].ids == all[i].ids &&
                    std::abs(got[i].score - all[i].lp) < 1e-9,
                "n-best differs from exhaustive enumeration");
    }
  }
  // beam width 1 equals greedy on 100 random models
  for (int trial = 0; trial < 100; ++trial) {
    int vocab = 4 + static_cast<int>(g_rng() % 4);
    std::vector<Eigen::VectorXd> logps;
    for (int depth = 0; depth < 5; ++depth) {
      Eigen::VectorXd l(vocab);
      for (int i = 0; i < vocab; ++i) l[i] = nd(g_rng);
      logps.push_back(l.array() - std::log(l.array().exp().sum()));
    }
    auto model = table_model(logps);
    auto w1 = beam_search_core(model, 1, 0, 1, 5);
    c.require(w1.size() == 1 &&
                  w1[0].ids == greedy_decode_core(model, 1, 0, 5),
              "width-1 beam differs from greedy");
  }
  detail = c.ok ? "n-best equals enumeration; width-1 equals greedy"
                : c.detail;
  return c.ok;
}

// ---- criterion 5: overfit sanity -------------------------------------------

bool criterion5(std::string& detail) {
  // evaluator on 51 annotated toy turns
  ToyCorpusOptions copts;
  copts.num_dialogs = 40;
  auto corpus_dialogs = make_toy_corpus(copts);
  std::vector<std::vector<std::string>> texts;
  for (const auto& d : corpus_dialogs)
    for (const auto& t : d.turns) {
      texts.push_back(t.user_tokens);
      texts.push_back(t.system_tokens);
    }
  SentenceEncoderConfig ecfg =
      SentenceEncoderConfig::defaults(EncoderKind::kAverage);
  ecfg.output_dim = 16;
  ecfg.vocab_size = 300;
  ecfg.seed = 11;
  auto enc = std::make_shared<SentenceEncoder>(
      ecfg, Vocabulary::build(texts, 300));
  EvaluatorConfig vcfg;
  vcfg.context_rnn_hidden = 8;
  vcfg.ffnn_hidden = 32;
  vcfg.dropout = 0.0;
  vcfg.batch_size = 16;
  vcfg.learning_rate = 0.003;
  vcfg.max_epochs = 200;
  vcfg.patience = 200;
  vcfg.seed = 5;
  Evaluator ev(vcfg, enc);
  ToyCorpusOptions o;
  o.num_dialogs = 17;
  o.seed = 2;
  auto dialogs = make_toy_corpus(o);
  std::vector<const Dialog*> ptrs;
  for (const auto& d : dialogs) ptrs.push_back(&d);
  auto turns = annotated_turns(ptrs);
  ev.train(turns, {});
  double min_acc = 1.0;
  for (int h = 0; h < 4; ++h)
    min_acc = std::min(min_acc, ev.train_accuracy(turns, h));

  // generator on 100 fixed pairs
  std::vector<std::vector<std::string>> gtexts;
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>
      raw;
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> q = {"question", "q" + std::to_string(i),
                                  "please"};
    std::vector<std::string> a = {"answer", "r" + std::to_string(i), "here"};
    gtexts.push_back(q);
    gtexts.push_back(a);
    raw.push_back({q, a});
  }
  Vocabulary gv = Vocabulary::build(gtexts, 400);
  for (auto& [q, a] : raw) pairs.push_back({gv.encode(q), gv.encode(a)});
  GeneratorConfig gcfg;
  gcfg.hidden = 64;
  gcfg.emb_dim = 32;
  gcfg.vocab_size = gv.size();
  gcfg.batch_size = 16;
  gcfg.learning_rate = 0.01;
  gcfg.max_epochs = 100;
  gcfg.patience = 100;
  gcfg.seed = 3;
  Generator gen(gcfg, gv);
  gen.train(pairs, {});
  double ppl = gen.perplexity(pairs);

  char buf[96];
  std::snprintf(buf, sizeof(buf),
                "min head accuracy %.3f (>= 0.95); perplexity %.3f (<= 1.5)",
                min_acc, ppl);
  detail = buf;
  return min_acc >= 0.95 && ppl <= 1.5;
}

// ---- criteria 6/7/9: pipeline-level checks ---------------------------------

PipelineConfig pipeline_config(const std::string& work_dir) {
  PipelineConfig cfg;
  cfg.work_dir = work_dir;
  cfg.seed = 1;
  cfg.toy = true;
  cfg.toy_train = 60;
  cfg.toy_dev = 10;
  cfg.toy_test = 10;
  cfg.mine_limit = 40;
  cfg.encoder = SentenceEncoderConfig::defaults(EncoderKind::kAverage);
  cfg.encoder.output_dim = 24;
  cfg.encoder.vocab_size = 200;
  cfg.encoder.learning_rate = 0.005;
  cfg.encoder_epochs = 3;
  cfg.evaluator.context_turns = 2;
  cfg.evaluator.context_rnn_hidden = 16;
  cfg.evaluator.ffnn_hidden = 32;
  cfg.evaluator.dropout = 0.1;
  cfg.evaluator.learning_rate = 0.003;
  cfg.evaluator.max_epochs = 15;
  cfg.evaluator.patience = 15;
  cfg.generator.hidden = 32;
  cfg.generator.emb_dim = 24;
  cfg.generator.vocab_size = 200;
  cfg.generator.batch_size = 16;
  cfg.generator.learning_rate = 0.01;
  cfg.generator.max_decode_len = 12;
  cfg.generator.beam_width = 15;
  cfg.generator.max_epochs = 12;
  cfg.generator.patience = 12;
  cfg.reranker.learning_rate = 0.01;
  cfg.reranker.max_epochs = 30;
  cfg.finetune.lambda = 10.0;
  cfg.finetune.learning_rate = 1e-3;
  cfg.finetune.max_epochs = 2;
  cfg.finetune.patience = 2;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool criterion6(const fs::path& work_dir, std::string& detail) {
  MetricReport report =
      MetricReport::from_json(slurp(work_dir / "report.json"));
  double s2s = 0, rr = 0, ft = 0, rr_ft = 0, d2_s2s = 0, d2_rr = 0;
  for (const auto& row : report.generation) {
    if (row.variant == "s2s") {
      s2s = row.bleu4;
      d2_s2s = row.distinct2;
    } else if (row.variant == "s2s_rr") {
      rr = row.bleu4;
      d2_rr = row.distinct2;
    } else if (row.variant == "s2s_ft") {
      ft = row.bleu4;
    } else if (row.variant == "s2s_rr_ft") {
      rr_ft = row.bleu4;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "BLEU-4 s2s %.2f rr %.2f ft %.2f rr_ft %.2f; "
                "Distinct-2 s2s %.4f rr %.4f",
                s2s, rr, ft, rr_ft, d2_s2s, d2_rr);
  detail = buf;
  return rr_ft >= rr && rr > s2s && rr >= 1.2 * s2s && ft >= s2s &&
         d2_rr >= d2_s2s;
}

bool criterion7(const fs::path& work_dir, std::string& detail) {
  auto gen = Generator::load((work_dir / "generator").string());
  auto split = make_toy_split(60, 10, 10, /*seed=*/1);
  std::vector<TokenSeq> top, oracle, refs;
  for (const auto& dlg : split.test)
    for (int i = 0; i < static_cast<int>(dlg.turns.size()); ++i) {
      auto nbest = gen->beam_search(
          build_generator_input(dlg, i, gen->vocab()), 15, 12);
      if (nbest.candidates.empty()) continue;
      const auto& ref = dlg.turns[i].system_tokens;
      refs.push_back(ref);
      top.push_back(gen->vocab().decode(nbest.candidates[0].ids));
      int best = 0;
      double best_bleu = -1;
      for (int c = 0; c < static_cast<int>(nbest.candidates.size()); ++c) {
        double b =
            bleu4_sentence(gen->vocab().decode(nbest.candidates[c].ids), ref);
        if (b > best_bleu) {
          best_bleu = b;
          best = c;
        }
      }
      oracle.push_back(gen->vocab().decode(nbest.candidates[best].ids));
    }
  double top_bleu = bleu4_corpus(top, refs);
  double oracle_bleu = bleu4_corpus(oracle, refs);
  char buf[96];
  std::snprintf(buf, sizeof(buf),
                "oracle-reranked BLEU %.2f >= top-beam BLEU %.2f",
                oracle_bleu, top_bleu);
  detail = buf;
  return oracle_bleu >= top_bleu;
}

bool criterion9(const fs::path& a, const fs::path& b, std::string& detail) {
  for (const std::string& stage : pipeline_stages()) {
    std::string la = slurp(a / "logs" / (stage + ".json"));
    std::string lb = slurp(b / "logs" / (stage + ".json"));
    if (la.empty() || la != lb) {
      detail = "artifact hashes differ after rerun of stage " + stage;
      return false;
    }
  }
  detail = "all stage artifact hashes identical across seeded reruns";
  return true;
}

// ---- criterion 8: pair mining + separability -------------------------------

bool criterion8(std::string& detail) {
  Check c;
  SentenceEncoderConfig ecfg =
      SentenceEncoderConfig::defaults(EncoderKind::kAverage);
  ecfg.output_dim = 8;
  ecfg.vocab_size = 100;
  std::vector<std::vector<std::string>> seed_text = {{"seed"}};
  auto enc = std::make_shared<SentenceEncoder>(
      ecfg, Vocabulary::build(seed_text, 100));
  EvaluatorConfig vcfg;
  vcfg.context_rnn_hidden = 8;
  vcfg.ffnn_hidden = 16;
  Evaluator ev(vcfg, enc);
  Dialog d;
  d.dialog_id = "rr";
  Turn t;
  t.user_text = "do you like movies ?";
  t.system_text = "i like movies a lot";
  t.user_tokens = tokenize(t.user_text);
  t.system_tokens = tokenize(t.system_text);
  d.turns.push_back(t);
  std::vector<std::vector<std::string>> texts;
  std::vector<std::string> ref;
  for (int i = 0; i < 16; ++i) ref.push_back("w" + std::to_string(i));
  texts.push_back(ref);
  Vocabulary v = Vocabulary::build(texts, 100);
  NBestList nbest;
  for (int len = 1; len <= 15; ++len) {
    Candidate cand;
    for (int i = 0; i < len; ++i) cand.ids.push_back(v.id(ref[i]));
    nbest.candidates.push_back(cand);
  }
  auto mined = mine_pairs(nbest, ref, ev, d, 0, v);
  c.require(mined.size() == 105, "15 distinct candidates must yield 105");

  RerankerConfig rcfg;
  rcfg.learning_rate = 0.01;
  rcfg.max_epochs = 60;
  rcfg.seed = 13;
  Reranker rr(rcfg);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 200; ++i) {
    double bw = ud(g_rng), bl = ud(g_rng);
    if (std::abs(bw - bl) < 0.05) continue;
    if (bw < bl) std::swap(bw, bl);
    PreferencePair p;
    p.winner_features = Eigen::VectorXd::Zero(8);
    p.loser_features = Eigen::VectorXd::Zero(8);
    for (int k = 0; k < 8; ++k) {
      p.winner_features[k] = ud(g_rng) * 0.1;
      p.loser_features[k] = ud(g_rng) * 0.1;
    }
    p.winner_features[1] = bw + noise(g_rng);
    p.loser_features[1] = bl + noise(g_rng);
    p.bleu_winner = bw;
    p.bleu_loser = bl;
    pairs.push_back(p);
  }
  auto log = rr.train(pairs);
  char buf[96];
  std::snprintf(buf, sizeof(buf),
                "%zu pairs mined; pairwise accuracy %.3f (>= 0.95)",
                mined.size(), log.pairwise_accuracy);
  c.require(log.pairwise_accuracy >= 0.95,
            std::string(buf));
  if (c.ok) detail = buf;
  else detail = c.detail;
  return c.ok;
}

// ---- criterion 10: freeze contract -----------------------------------------

bool criterion10(const fs::path& work_dir, std::string& detail) {
  auto ev = Evaluator::load((work_dir / "evaluator").string());
  std::uint64_t before = ev->model().value_hash();
  auto gen = Generator::load((work_dir / "generator").string());
  auto split = make_toy_split(60, 10, 10, /*seed=*/1);
  std::vector<const Dialog*> train_ptrs, dev_ptrs;
  for (const auto& dlg : split.train) train_ptrs.push_back(&dlg);
  for (const auto& dlg : split.dev) dev_ptrs.push_back(&dlg);
  auto train = make_finetune_examples(train_ptrs, gen->vocab());
  auto dev = make_finetune_examples(dev_ptrs, gen->vocab());
  FinetuneConfig fcfg;
  fcfg.lambda = 10.0;
  fcfg.learning_rate = 1e-4;
  fcfg.max_epochs = 1;
  finetune_generator(*gen, *ev, train, dev, fcfg);
  bool ok = ev->model().value_hash() == before;
  detail = ok ? "evaluator parameter hash unchanged through fine-tuning"
              : "evaluator parameters changed during fine-tuning";
  return ok;
}

}  // namespace

int main() {
  fs::path dir_a = fs::temp_directory_path() / "chateval_accept_a";
  fs::path dir_b = fs::temp_directory_path() / "chateval_accept_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  struct Criterion {
    int id;
    std::string name;
    std::function<bool(std::string&)> run;
  };
  std::vector<Criterion> criteria = {
      {1, "metric oracle equivalence", criterion1},
      {2, "soft-lookup exactness", criterion2},
      {3, "composite-loss gradient check", criterion3},
      {4, "beam-search correctness", criterion4},
      {5, "overfit sanity", criterion5},
      {6, "directional metric ordering",
       [&](std::string& d) {
         run_all(pipeline_config(dir_a.string()));
         run_all(pipeline_config(dir_b.string()));
         return criterion6(dir_a, d);
       }},
      {7, "oracle-reranker bound",
       [&](std::string& d) { return criterion7(dir_a, d); }},
      {8, "pair-mining combinatorics and separability", criterion8},
      {9, "seeded determinism",
       [&](std::string& d) { return criterion9(dir_a, dir_b, d); }},
      {10, "evaluator freeze contract",
       [&](std::string& d) { return criterion10(dir_a, d); }},
  };

  int failures = 0;
  for (auto& c : criteria) {
    bool ok = false;
    std::string detail;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("%s criterion-%d (%s): %s\n", ok ? "PASS" : "FAIL", c.id,
                c.name.c_str(), detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  if (failures) std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
