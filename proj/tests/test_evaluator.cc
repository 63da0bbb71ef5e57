#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>

#include "chateval/evaluator.h"
#include "chateval/text.h"
#include "chateval/toy_corpus.h"
#include "oracles.h"

using namespace chateval;
using nn::Graph;
using Vec = Eigen::VectorXd;

namespace {

std::shared_ptr<SentenceEncoder> toy_encoder(int dim = 8) {
  ToyCorpusOptions opts;
  opts.num_dialogs = 40;
  auto dialogs = make_toy_corpus(opts);
  std::vector<std::vector<std::string>> texts;
  for (const auto& d : dialogs)
    for (const auto& t : d.turns) {
      texts.push_back(t.user_tokens);
      texts.push_back(t.system_tokens);
    }
  Vocabulary v = Vocabulary::build(texts, 300);
  SentenceEncoderConfig cfg =
      SentenceEncoderConfig::defaults(EncoderKind::kAverage);
  cfg.output_dim = dim;
  cfg.vocab_size = 300;
  cfg.seed = 11;
  return std::make_shared<SentenceEncoder>(cfg, v);
}

EvaluatorConfig small_config() {
  EvaluatorConfig cfg;
  cfg.context_rnn_hidden = 8;
  cfg.ffnn_hidden = 16;
  cfg.dropout = 0.0;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 60;
  cfg.patience = 60;
  cfg.seed = 5;
  return cfg;
}

void zero_heads(Evaluator& ev) {
  for (int h = 0; h < 4; ++h) {
    ev.model().find(std::string("head_") + head_names()[h] + "_w")
        ->value.setZero();
    ev.model().find(std::string("head_") + head_names()[h] + "_b")
        ->value.setZero();
  }
}

}  // namespace

TEST_CASE("context encoding anchors") {
  auto enc = toy_encoder();
  Evaluator ev(small_config(), enc);
  Graph g;
  CHECK(ev.encode_context(g, {}).value().isZero());

  Turn t;
  t.user_text = "do you like sushi ?";
  t.system_text = "i really love sushi it is so great";
  t.user_tokens = tokenize(t.user_text);
  t.system_tokens = tokenize(t.system_text);
  Vec once = ev.encode_context_vector({&t});
  CHECK(once == ev.encode_context_vector({&t}));  // deterministic

  // oracle: two manual LSTM steps over (user, system) embeddings
  auto sigmoid = [](const Vec& x) {
    return Vec(1.0 / (1.0 + (-x.array()).exp()));
  };
  auto P = [&](const std::string& n) {
    return ev.model().find("ctx." + n)->value;
  };
  Vec h = Vec::Zero(8), c = Vec::Zero(8);
  for (const Vec& x : {enc->encode_vector(t.user_tokens),
                       enc->encode_vector(t.system_tokens)}) {
    Vec i = sigmoid(P("wi") * x + P("ui") * h + P("bi"));
    Vec f = sigmoid(P("wf") * x + P("uf") * h + P("bf"));
    Vec o = sigmoid(P("wo") * x + P("uo") * h + P("bo"));
    Vec cand = (P("wc") * x + P("uc") * h + P("bc")).array().tanh();
    c = (f.array() * c.array() + i.array() * cand.array()).matrix();
    h = (o.array() * c.array().tanh()).matrix();
  }
  CHECK((once - h).norm() < 1e-10);
}

TEST_CASE("zeroed output layers give half half heads") {
  auto enc = toy_encoder();
  Evaluator ev(small_config(), enc);
  zero_heads(ev);
  ToyCorpusOptions opts;
  opts.num_dialogs = 1;
  auto dialogs = make_toy_corpus(opts);
  EvaluatorOutput out = ev.evaluate_turn(dialogs[0], 0);
  for (int h = 0; h < 4; ++h) {
    CHECK(out.heads[h].first == doctest::Approx(0.5));
    CHECK(out.heads[h].second == doctest::Approx(0.5));
  }
}

TEST_CASE("head outputs are probability pairs for random inputs") {
  auto enc = toy_encoder();
  Evaluator ev(small_config(), enc);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 1000; ++trial) {
    Graph g;
    auto rand_expr = [&](int rows) {
      Eigen::MatrixXd m(rows, 1);
      for (int i = 0; i < rows; ++i) m(i, 0) = nd(rng);
      return g.input(m);
    };
    auto heads = ev.head_outputs(g, rand_expr(8), rand_expr(8), rand_expr(8),
                                 rand_expr(128), false);
    for (int h = 0; h < 4; ++h) {
      double sum = heads[h].value().col(0).sum();
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(heads[h].value().minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("initial joint loss with balanced labels is four log two") {
  auto enc = toy_encoder();
  EvaluatorConfig cfg = small_config();
  cfg.learning_rate = 0.0;  // measure the loss without moving
  cfg.max_epochs = 1;
  Evaluator ev(cfg, enc);
  zero_heads(ev);
  ToyCorpusOptions opts;
  opts.num_dialogs = 8;
  auto dialogs = make_toy_corpus(opts);
  std::vector<const Dialog*> ptrs;
  for (const auto& d : dialogs) ptrs.push_back(&d);
  auto turns = annotated_turns(ptrs);
  auto log = ev.train(turns, {});
  CHECK(log.train_loss[0] ==
        doctest::Approx(4 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("evaluator overfits a single labeled example") {
  auto enc = toy_encoder();
  EvaluatorConfig cfg = small_config();
  cfg.max_epochs = 300;
  cfg.patience = 300;
  Evaluator ev(cfg, enc);
  Dialog d;
  d.dialog_id = "one";
  Turn t;
  t.user_text = "do you like pizza ?";
  t.system_text = "pizza is okay i guess";
  t.user_tokens = tokenize(t.user_text);
  t.system_tokens = tokenize(t.system_text);
  d.turns.push_back(t);
  d.annotations.emplace();
  TurnAnnotation a;
  a.comprehensible = 0;
  a.on_topic = 1;
  a.interesting = 1;
  a.continue_conversation = 0;
  d.annotations->push_back(a);
  ev.train({{&d, 0}}, {});
  auto yes = ev.evaluate_turn(d, 0).yes_probabilities();
  CHECK(std::lround(yes[0]) == 0);
  CHECK(std::lround(yes[1]) == 1);
  CHECK(std::lround(yes[2]) == 1);
  CHECK(std::lround(yes[3]) == 0);
}

TEST_CASE("evaluator reaches high training accuracy on annotated turns") {
  auto enc = toy_encoder(16);
  EvaluatorConfig cfg = small_config();
  cfg.ffnn_hidden = 32;
  cfg.learning_rate = 0.003;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  Evaluator ev(cfg, enc);
  ToyCorpusOptions opts;
  opts.num_dialogs = 17;  // 51 annotated turns
  opts.seed = 2;
  auto dialogs = make_toy_corpus(opts);
  std::vector<const Dialog*> ptrs;
  for (const auto& d : dialogs) ptrs.push_back(&d);
  auto turns = annotated_turns(ptrs);
  REQUIRE(turns.size() >= 50);
  ev.train(turns, {});
  for (int h = 0; h < 4; ++h) CHECK(ev.train_accuracy(turns, h) >= 0.95);
}

TEST_CASE("training is seed deterministic") {
  ToyCorpusOptions opts;
  opts.num_dialogs = 8;
  auto dialogs = make_toy_corpus(opts);
  std::vector<const Dialog*> ptrs;
  for (const auto& d : dialogs) ptrs.push_back(&d);
  auto turns = annotated_turns(ptrs);
  std::vector<TurnExample> train(turns.begin(), turns.end() - 6);
  std::vector<TurnExample> dev(turns.end() - 6, turns.end());
  auto run = [&]() {
    auto enc = toy_encoder();
    EvaluatorConfig cfg = small_config();
    cfg.max_epochs = 6;
    Evaluator ev(cfg, enc);
    return ev.train(train, dev).dev_loss;
  };
  CHECK(run() == run());
}

TEST_CASE("joint training beats separate heads on summed dev loss") {
  ToyCorpusOptions opts;
  opts.num_dialogs = 30;
  opts.seed = 9;
  auto dialogs = make_toy_corpus(opts);
  std::vector<const Dialog*> ptrs;
  for (const auto& d : dialogs) ptrs.push_back(&d);
  auto turns = annotated_turns(ptrs);
  std::vector<TurnExample> train(turns.begin(), turns.begin() + 60);
  std::vector<TurnExample> dev(turns.begin() + 60, turns.end());
  auto run = [&](std::array<bool, 4> mask) {
    auto enc = toy_encoder();
    EvaluatorConfig cfg = small_config();
    cfg.max_epochs = 25;
    cfg.patience = 25;
    for (int h = 0; h < 4; ++h) cfg.heads_enabled[h] = mask[h];
    Evaluator ev(cfg, enc);
    auto log = ev.train(train, dev);
    return log.dev_loss.back();
  };
  double joint = run({true, true, true, true});
  double separate = run({true, false, false, false}) +
                    run({false, true, false, false}) +
                    run({false, false, true, false}) +
                    run({false, false, false, true});
  CHECK(joint <= separate);
}

TEST_CASE("feature ablation flag removes hand crafted features") {
  auto enc = toy_encoder();
  EvaluatorConfig cfg = small_config();
  cfg.use_handcrafted_features = false;
  Evaluator ev(cfg, enc);
  ToyCorpusOptions opts;
  opts.num_dialogs = 2;
  auto dialogs = make_toy_corpus(opts);
  // with features off, contradictory feature-bearing fields cannot matter
  Dialog d = dialogs[0];
  EvaluatorOutput base = ev.evaluate_turn(d, 1);
  d.turns[1].topic = "Politics";
  d.turns[1].da_user = "greeting";
  EvaluatorOutput changed = ev.evaluate_turn(d, 1);
  for (int h = 0; h < 4; ++h) {
    CHECK(base.heads[h].second == doctest::Approx(changed.heads[h].second));
  }
}

TEST_CASE("inference does not mutate the model") {
  auto enc = toy_encoder();
  Evaluator ev(small_config(), enc);
  ToyCorpusOptions opts;
  opts.num_dialogs = 2;
  auto dialogs = make_toy_corpus(opts);
  std::uint64_t before = ev.model().value_hash();
  ev.evaluate_turn(dialogs[0], 0);
  ev.evaluate_turn(dialogs[1], 2);
  CHECK(ev.model().value_hash() == before);
}

TEST_CASE("evaluator checkpoint round trip") {
  auto enc = toy_encoder();
  Evaluator ev(small_config(), enc);
  ToyCorpusOptions opts;
  opts.num_dialogs = 2;
  auto dialogs = make_toy_corpus(opts);
  std::string dir =
      (std::filesystem::temp_directory_path() / "chateval_eval_ckpt")
          .string();
  ev.save(dir);
  auto loaded = Evaluator::load(dir);
  EvaluatorOutput a = ev.evaluate_turn(dialogs[0], 1);
  EvaluatorOutput b = loaded->evaluate_turn(dialogs[0], 1);
  for (int h = 0; h < 4; ++h)
    CHECK(a.heads[h].second == doctest::Approx(b.heads[h].second));
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluator metrics anchors") {
  std::vector<EvaluatorOutput> preds;
  std::vector<TurnAnnotation> labels;
  for (int i = 0; i < 10; ++i) {
    TurnAnnotation a;
    a.comprehensible = i < 8 ? 1 : 0;  // 0.8 yes share
    labels.push_back(a);
    EvaluatorOutput o;
    for (int h = 0; h < 4; ++h) o.heads[h] = {0.1, 0.9};  // always yes
    preds.push_back(o);
  }
  auto m = evaluator_metrics(preds, labels);
  CHECK(m[0].accuracy == doctest::Approx(0.8));
  CHECK(m[0].mcc == 0.0);  // single predicted class
  CHECK(m[0].yes_class_share == doctest::Approx(0.8));

  // perfect predictions
  std::vector<EvaluatorOutput> perfect;
  for (const auto& a : labels) {
    EvaluatorOutput o;
    for (int h = 0; h < 4; ++h) {
      double yes = (h == 0 ? a.comprehensible : 0) ? 0.9 : 0.1;
      o.heads[h] = {1 - yes, yes};
    }
    perfect.push_back(o);
  }
  auto pm = evaluator_metrics(perfect, labels);
  CHECK(pm[0].accuracy == doctest::Approx(1.0));
  CHECK(pm[0].mcc == doctest::Approx(1.0));
}

TEST_CASE("evaluator metrics match a confusion matrix oracle") {
  std::mt19937_64 rng(23);
  std::vector<EvaluatorOutput> preds;
  std::vector<TurnAnnotation> labels;
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (int i = 0; i < 200; ++i) {
    int gold = static_cast<int>(rng() % 2);
    int pred = static_cast<int>(rng() % 2);
    TurnAnnotation a;
    a.comprehensible = gold;
    labels.push_back(a);
    EvaluatorOutput o;
    o.heads[0] = {pred ? 0.2 : 0.8, pred ? 0.8 : 0.2};
    for (int h = 1; h < 4; ++h) o.heads[h] = {0.5, 0.5};
    preds.push_back(o);
    if (pred && gold) ++tp;
    if (pred && !gold) ++fp;
    if (!pred && gold) ++fn;
    if (!pred && !gold) ++tn;
  }
  auto m = evaluator_metrics(preds, labels);
  CHECK(m[0].accuracy == doctest::Approx(static_cast<double>(tp + tn) / 200));
  CHECK(m[0].mcc == doctest::Approx(oracles::mcc(tp, fp, fn, tn)));
  double prec = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0;
  double rec = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0;
  CHECK(m[0].precision == doctest::Approx(prec));
  CHECK(m[0].recall == doctest::Approx(rec));
}

TEST_CASE("rating correlation anchors") {
  std::vector<EvaluatorOutput> preds;
  std::vector<double> ratings;
  for (int i = 0; i < 8; ++i) {
    EvaluatorOutput o;
    o.heads[0] = {1 - 0.1 * i, 0.1 * i};       // linear in rating
    o.heads[1] = {0.1 * i, 1 - 0.1 * i};       // anti-linear
    double wiggle = 0.3 + 0.1 * (i % 3);       // filler with nonzero variance
    o.heads[2] = {1 - wiggle, wiggle};
    o.heads[3] = {wiggle, 1 - wiggle};
    preds.push_back(o);
    ratings.push_back(1 + i * 0.5);
  }
  auto c = correlate_with_ratings(preds, ratings);
  CHECK(c[0].first == doctest::Approx(1.0));
  CHECK(c[1].first == doctest::Approx(-1.0));
}
