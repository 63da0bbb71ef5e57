#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

#include "chateval/finetune.h"
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

// small fixture shared across fine-tuning cases: toy split, vocabulary,
// a briefly trained generator, a trained evaluator, and the projection
struct Fixture {
  ToySplit split;
  Vocabulary vocab;
  std::unique_ptr<Generator> gen;
  std::shared_ptr<SentenceEncoder> enc;
  std::unique_ptr<Evaluator> ev;
  std::vector<int> projection;
  std::vector<FinetuneExample> train, dev;
};

GeneratorConfig fixture_gen_config(int vocab_size) {
  GeneratorConfig cfg;
  cfg.hidden = 32;
  cfg.emb_dim = 24;
  cfg.vocab_size = vocab_size;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.max_decode_len = 12;
  cfg.beam_width = 15;
  cfg.max_epochs = 10;
  cfg.patience = 10;
  cfg.seed = 1;
  return cfg;
}

const Fixture& fixture() {
  static Fixture f = [] {
    Fixture x;
    x.split = make_toy_split(60, 10, 10, /*seed=*/3);
    std::vector<std::vector<std::string>> texts;
    for (const auto& d : x.split.train)
      for (const auto& t : d.turns) {
        texts.push_back(t.user_tokens);
        texts.push_back(t.system_tokens);
      }
    x.vocab = Vocabulary::build(texts, 300);

    x.gen = std::make_unique<Generator>(fixture_gen_config(x.vocab.size()),
                                        x.vocab);
    std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
    for (const auto& d : x.split.train)
      for (int i = 0; i < static_cast<int>(d.turns.size()); ++i)
        pairs.push_back({build_generator_input(d, i, x.vocab),
                         x.vocab.encode(d.turns[i].system_tokens)});
    x.gen->train(pairs, {});

    SentenceEncoderConfig ecfg =
        SentenceEncoderConfig::defaults(EncoderKind::kAverage);
    ecfg.output_dim = 16;
    ecfg.vocab_size = 300;
    ecfg.seed = 11;
    x.enc = std::make_shared<SentenceEncoder>(ecfg, x.vocab);
    EvaluatorConfig vcfg;
    vcfg.context_rnn_hidden = 8;
    vcfg.ffnn_hidden = 32;
    vcfg.dropout = 0.0;
    vcfg.batch_size = 16;
    vcfg.learning_rate = 0.003;
    vcfg.max_epochs = 120;
    vcfg.patience = 120;
    vcfg.seed = 5;
    x.ev = std::make_unique<Evaluator>(vcfg, x.enc);
    std::vector<const Dialog*> ptrs;
    for (const auto& d : x.split.train) ptrs.push_back(&d);
    x.ev->train(annotated_turns(ptrs), {});

    x.projection = vocab_projection(x.vocab, x.enc->vocab());
    x.train = make_finetune_examples(ptrs, x.vocab);
    std::vector<const Dialog*> dptrs;
    for (const auto& d : x.split.dev) dptrs.push_back(&d);
    x.dev = make_finetune_examples(dptrs, x.vocab);
    return x;
  }();
  return f;
}

// temporary directory helper
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

PipelineConfig tiny_pipeline_config(const std::string& work_dir,
                                    std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.work_dir = work_dir;
  cfg.seed = seed;
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

double total_of(Generator& gen, Evaluator& ev,
                const std::vector<FinetuneExample>& batch, double lambda,
                const std::vector<int>& proj) {
  Graph g;
  return composite_loss(g, gen, ev, batch, lambda, proj).total;
}

}  // namespace

TEST_CASE("soft embedding lookup matches dense oracles") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const int gen_vocab = 9, eval_vocab = 7, dim = 5, len = 4;
  Mat table(eval_vocab, dim);
  for (int r = 0; r < eval_vocab; ++r)
    for (int c = 0; c < dim; ++c) table(r, c) = nd(rng);
  std::vector<int> proj;
  for (int i = 0; i < gen_vocab; ++i)
    proj.push_back(static_cast<int>(rng() % eval_vocab));

  SUBCASE("one hot columns select projected rows exactly") {
    for (int tok = 0; tok < gen_vocab; ++tok) {
      Mat q = Mat::Zero(gen_vocab, 1);
      q(tok, 0) = 1.0;
      Mat out = soft_embedding_lookup(q, table, proj);
      CHECK((out.col(0).transpose() - table.row(proj[tok])).norm() < 1e-12);
    }
  }

  SUBCASE("uniform columns give the mean of projected rows") {
    Mat q = Mat::Constant(gen_vocab, 1, 1.0 / gen_vocab);
    Mat expect = Mat::Zero(1, dim);
    for (int i = 0; i < gen_vocab; ++i)
      expect += table.row(proj[i]) / gen_vocab;
    Mat out = soft_embedding_lookup(q, table, proj);
    CHECK((out.col(0).transpose() - expect).norm() < 1e-12);
  }

  SUBCASE("stochastic columns match an independent dense multiply") {
    for (int trial = 0; trial < 50; ++trial) {
      Mat q(gen_vocab, len);
      for (int c = 0; c < len; ++c) {
        double z = 0;
        for (int r = 0; r < gen_vocab; ++r) {
          q(r, c) = ud(rng) + 1e-6;
          z += q(r, c);
        }
        q.col(c) /= z;
      }
      // independent oracle: scatter q into evaluator-vocab space, multiply
      Mat p = Mat::Zero(eval_vocab, len);
      for (int r = 0; r < gen_vocab; ++r) p.row(proj[r]) += q.row(r);
      Mat expect = table.transpose() * p;
      Mat out = soft_embedding_lookup(q, table, proj);
      CHECK((out - expect).norm() < 1e-9);
      // the graph-building variant agrees and stays differentiable
      nn::Model m;
      std::mt19937_64 prng(1);
      nn::Parameter& tp = m.add("table", eval_vocab, dim);
      tp.value = table;
      Graph g;
      Expr qe = g.input(q);
      Expr oe = soft_embedding_lookup_expr(g, qe, tp, proj);
      CHECK((oe.value() - expect).norm() < 1e-9);
    }
  }
}

TEST_CASE("soft score is bounded and matches hard evaluation for one hot q") {
  const Fixture& f = fixture();
  Generator& gen = *const_cast<Fixture&>(f).gen;
  Evaluator& ev = *const_cast<Fixture&>(f).ev;
  for (int i = 0; i < 10; ++i) {
    const FinetuneExample& ex = f.train[i];
    Graph g;
    std::array<double, 4> scores{};
    Expr s = soft_eval_score_expr(g, gen, ev, ex, f.projection, true, &scores);
    double val = s.scalar();
    CHECK(val >= 0.0);
    CHECK(val <= 4.0);
    CHECK(val == doctest::Approx(scores[0] + scores[1] + scores[2] +
                                 scores[3]));
  }
}

TEST_CASE("composite loss reduces to cross entropy at lambda zero") {
  const Fixture& f = fixture();
  Generator& gen = *const_cast<Fixture&>(f).gen;
  Evaluator& ev = *const_cast<Fixture&>(f).ev;
  std::vector<FinetuneExample> batch(f.train.begin(), f.train.begin() + 8);
  Graph g;
  CompositeLossValue v = composite_loss(g, gen, ev, batch, 0.0, f.projection);
  // independent plain-MLE value: summed example losses over batch tokens
  double sum = 0;
  long tokens = 0;
  for (const auto& ex : batch) {
    Graph g2;
    sum += gen.example_loss(g2, ex.input, ex.target).scalar();
    tokens += static_cast<long>(ex.target.size()) + 1;
  }
  CHECK(v.total == doctest::Approx(sum / tokens).epsilon(1e-9));
  CHECK(v.ce_term == doctest::Approx(v.total));
  CHECK(v.eval_term_l1 == 0.0);
}

TEST_CASE("composite loss is linear in lambda with a fixed batch") {
  const Fixture& f = fixture();
  Generator& gen = *const_cast<Fixture&>(f).gen;
  Evaluator& ev = *const_cast<Fixture&>(f).ev;
  std::vector<FinetuneExample> batch(f.train.begin(), f.train.begin() + 6);
  Graph g1, g2, g3;
  CompositeLossValue a = composite_loss(g1, gen, ev, batch, 1.0, f.projection);
  CompositeLossValue b = composite_loss(g2, gen, ev, batch, 2.0, f.projection);
  CompositeLossValue c = composite_loss(g3, gen, ev, batch, 3.0, f.projection);
  CHECK(a.ce_term == doctest::Approx(b.ce_term).epsilon(1e-12));
  CHECK(a.eval_term_l1 == doctest::Approx(b.eval_term_l1).epsilon(1e-12));
  CHECK(b.total - a.total == doctest::Approx(c.total - b.total).epsilon(1e-9));
  CHECK(a.total ==
        doctest::Approx(a.ce_term - 1.0 * a.eval_term_l1).epsilon(1e-12));
  CHECK(a.eval_term_l1 >= 0.0);
  CHECK(a.eval_term_l1 <= 4.0);
}

TEST_CASE("composite loss gradients agree with finite differences") {
  // deliberately tiny dimensions so the check runs in seconds
  std::vector<std::vector<std::string>> texts = {
      {"alpha", "beta", "gamma"}, {"delta", "echo"}, {"foxtrot"}};
  Vocabulary v = Vocabulary::build(texts, 20);
  GeneratorConfig gcfg;
  gcfg.hidden = 8;
  gcfg.emb_dim = 8;
  gcfg.vocab_size = v.size();
  gcfg.seed = 2;
  Generator gen(gcfg, v);
  SentenceEncoderConfig ecfg =
      SentenceEncoderConfig::defaults(EncoderKind::kAverage);
  ecfg.output_dim = 8;
  ecfg.vocab_size = 20;
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
  // analytic gradients
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
  CHECK(worst < 1e-3);
}

TEST_CASE("lambda zero fine tuning retraces plain mle training") {
  const Fixture& f = fixture();
  GeneratorConfig gcfg = fixture_gen_config(f.vocab.size());
  gcfg.learning_rate = 0.005;
  gcfg.max_epochs = 3;
  gcfg.patience = 3;

  std::vector<std::pair<std::vector<int>, std::vector<int>>> train_pairs,
      dev_pairs;
  for (const auto& ex : f.train) train_pairs.push_back({ex.input, ex.target});
  for (const auto& ex : f.dev) dev_pairs.push_back({ex.input, ex.target});

  Generator mle(gcfg, f.vocab);
  mle.train(train_pairs, dev_pairs);

  Generator ft(gcfg, f.vocab);
  FinetuneConfig fcfg;
  fcfg.lambda = 0.0;
  fcfg.learning_rate = gcfg.learning_rate;
  fcfg.batch_size = gcfg.batch_size;
  fcfg.max_epochs = gcfg.max_epochs;
  fcfg.patience = gcfg.patience;
  Evaluator& ev = *const_cast<Fixture&>(f).ev;
  finetune_generator(ft, ev, f.train, f.dev, fcfg);

  CHECK(ft.model().value_hash() == mle.model().value_hash());
}

TEST_CASE("the evaluator stays frozen through fine tuning") {
  const Fixture& f = fixture();
  Generator ft(fixture_gen_config(f.vocab.size()), f.vocab);
  Evaluator& ev = *const_cast<Fixture&>(f).ev;
  std::uint64_t before = ev.model().value_hash();
  FinetuneConfig fcfg;
  fcfg.lambda = 10.0;
  fcfg.max_epochs = 1;
  fcfg.batch_size = 20;  // one batch, so the logged terms decompose exactly
  std::vector<FinetuneExample> small(f.train.begin(), f.train.begin() + 20);
  auto log = finetune_generator(ft, ev, small, {}, fcfg);
  CHECK(ev.model().value_hash() == before);
  CHECK(log.train_total.size() == 1);
  CHECK(log.train_total[0] ==
        doctest::Approx(log.train_ce[0] - 10.0 * log.train_eval_l1[0])
            .epsilon(1e-9));
}

TEST_CASE("reranked generation reduction cases") {
  const Fixture& f = fixture();
  Generator& gen = *const_cast<Fixture&>(f).gen;
  Evaluator& ev = *const_cast<Fixture&>(f).ev;
  const Dialog& d = f.split.dev[0];

  SUBCASE("beam width one reduces to greedy decoding") {
    GeneratorConfig cfg = gen.config();
    cfg.beam_width = 1;
    Generator narrow(cfg, f.vocab);
    for (std::size_t i = 0; i < gen.model().params().size(); ++i)
      narrow.model().params()[i]->value = gen.model().params()[i]->value;
    Reranker rr{RerankerConfig{}};
    RerankedDecode out = generate_reranked(narrow, ev, rr, d, 0);
    CHECK(out.ids ==
          narrow.decode_greedy(build_generator_input(d, 0, f.vocab)));
  }

  SUBCASE("a constant scorer keeps the top beam candidate") {
    RerankerConfig cfg;
    Reranker rr(cfg);
    for (const char* name : {"w0", "w1", "w_out", "b0", "b1", "b_out"})
      rr.model().find(name)->value.setZero();
    RerankedDecode out = generate_reranked(gen, ev, rr, d, 0);
    CHECK(out.selected == 0);
    CHECK(out.ids == out.nbest.candidates[0].ids);
  }

  SUBCASE("the selection is always a member of the n best list") {
    Reranker rr{RerankerConfig{}};
    for (int i = 0; i < 3; ++i) {
      RerankedDecode out = generate_reranked(gen, ev, rr, f.split.dev[i], 1);
      REQUIRE(out.selected >= 0);
      REQUIRE(out.selected < static_cast<int>(out.nbest.candidates.size()));
      CHECK(out.ids == out.nbest.candidates[out.selected].ids);
    }
  }
}

TEST_CASE("generation metrics use the oracle formulas and report names") {
  std::vector<TokenSeq> hyps = {{"the", "cat", "sat"},
                                {"a", "dog", "ran", "fast"}};
  std::vector<TokenSeq> refs = {{"the", "cat", "sat", "down"},
                                {"a", "dog", "ran", "away"}};
  GenerationRow row = generation_metrics("s2s", hyps, refs);
  CHECK(row.bleu4 == doctest::Approx(oracles::bleu4_corpus(hyps, refs)));
  double r2 = (oracles::rouge2(hyps[0], refs[0], false) +
               oracles::rouge2(hyps[1], refs[1], false)) /
              2;
  CHECK(row.rouge2 == doctest::Approx(r2));
  CHECK(row.distinct2 == doctest::Approx(oracles::distinct2(hyps)));

  MetricReport report;
  report.generation.push_back(row);
  std::string json = report.to_json();
  for (const char* name : {"BLEU-4", "ROUGE-2", "Distinct-2"})
    CHECK(json.find(name) != std::string::npos);
  MetricReport back = MetricReport::from_json(json);
  REQUIRE(back.generation.size() == 1);
  CHECK(back.generation[0].variant == "s2s");
  CHECK(back.generation[0].bleu4 == doctest::Approx(row.bleu4));

  report.has_evaluator = true;
  std::string with_heads = report.to_json();
  for (const char* name :
       {"Accuracy", "Precision", "Recall", "F-score", "MCC"})
    CHECK(with_heads.find(name) != std::string::npos);
}

TEST_CASE("turn scoring over json contexts") {
  const Fixture& f = fixture();
  Evaluator& ev = *const_cast<Fixture&>(f).ev;

  SUBCASE("zeroed output layers score one half everywhere") {
    Evaluator fresh(f.ev->config(), const_cast<Fixture&>(f).enc);
    for (int h = 0; h < 4; ++h) {
      fresh.model()
          .find(std::string("head_") + head_names()[h] + "_w")
          ->value.setZero();
      fresh.model()
          .find(std::string("head_") + head_names()[h] + "_b")
          ->value.setZero();
    }
    std::string out = score_turn_json(fresh, "{}", "hello there");
    auto j = nlohmann::json::parse(out);
    for (const char* h : {"comprehensible", "on_topic", "interesting",
                          "continue"})
      CHECK(j[h].get<double>() == doctest::Approx(0.5));
  }

  SUBCASE("the trained evaluator reproduces toy labels") {
    // find one good and one junk training turn
    const Dialog* dlg = nullptr;
    int good_idx = -1;
    for (const auto& d : f.split.train) {
      for (int i = 0; i < static_cast<int>(d.turns.size()); ++i) {
        const auto& a = (*d.annotations)[i];
        if (a.comprehensible && a.interesting) {
          dlg = &d;
          good_idx = i;
          break;
        }
      }
      if (dlg) break;
    }
    REQUIRE(dlg != nullptr);
    nlohmann::ordered_json ctx;
    ctx["turns"] = nlohmann::ordered_json::array();
    for (int i = 0; i < good_idx; ++i) {
      ctx["turns"].push_back({{"user", dlg->turns[i].user_text},
                              {"system", dlg->turns[i].system_text}});
    }
    ctx["user"] = dlg->turns[good_idx].user_text;
    std::string out = score_turn_json(ev, ctx.dump(),
                                      dlg->turns[good_idx].system_text);
    auto j = nlohmann::json::parse(out);
    for (const char* h : {"comprehensible", "on_topic", "interesting",
                          "continue"}) {
      double p = j[h].get<double>();
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    CHECK(j["comprehensible"].get<double>() > 0.5);
    CHECK(j["interesting"].get<double>() > 0.5);
  }
}

TEST_CASE("pipeline stages run end to end and deterministically") {
  TempDir a("chateval_pipe_a"), b("chateval_pipe_b");
  PipelineConfig ca = tiny_pipeline_config(a.path.string(), 1);
  PipelineConfig cb = tiny_pipeline_config(b.path.string(), 1);
  run_all(ca);
  run_all(cb);

  // the report covers every variant with finite metrics
  std::ifstream rin(a.path / "report.json");
  REQUIRE(rin.good());
  std::string text((std::istreambuf_iterator<char>(rin)),
                   std::istreambuf_iterator<char>());
  MetricReport report = MetricReport::from_json(text);
  REQUIRE(report.generation.size() == ca.variants.size());
  for (std::size_t i = 0; i < report.generation.size(); ++i) {
    CHECK(report.generation[i].variant == ca.variants[i]);
    CHECK(std::isfinite(report.generation[i].bleu4));
    CHECK(report.generation[i].distinct2 >= 0.0);
  }
  CHECK(report.has_evaluator);

  // identical seeds produce identical stage logs (artifact content hashes)
  for (const std::string& stage : pipeline_stages()) {
    std::ifstream la(a.path / "logs" / (stage + ".json"));
    std::ifstream lb(b.path / "logs" / (stage + ".json"));
    REQUIRE(la.good());
    REQUIRE(lb.good());
    std::string sa((std::istreambuf_iterator<char>(la)),
                   std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(lb)),
                   std::istreambuf_iterator<char>());
    CHECK(sa == sb);
  }

  // per-response artifacts exist for every variant
  for (const std::string& v : ca.variants)
    CHECK(fs::exists(a.path / ("responses_" + v + ".jsonl")));
}

TEST_CASE("missing dependencies name the producing stage") {
  TempDir t("chateval_pipe_missing");
  PipelineConfig cfg = tiny_pipeline_config(t.path.string(), 1);
  try {
    run_stage(cfg, "train-generator");
    FAIL("expected a missing-artifact error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("prepare-data") != std::string::npos);
  }
  CHECK_THROWS(run_stage(cfg, "no-such-stage"));
}

TEST_CASE("pipeline config json round trip") {
  PipelineConfig cfg = tiny_pipeline_config("/tmp/x", 7);
  PipelineConfig back = PipelineConfig::from_json(cfg.to_json());
  CHECK(back.work_dir == cfg.work_dir);
  CHECK(back.seed == cfg.seed);
  CHECK(back.toy == cfg.toy);
  CHECK(back.toy_train == cfg.toy_train);
  CHECK(back.generator.hidden == cfg.generator.hidden);
  CHECK(back.finetune.lambda == doctest::Approx(cfg.finetune.lambda));
  CHECK(back.variants == cfg.variants);
}
