#include "chateval/evaluator.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "chateval/metrics.h"

namespace chateval {

namespace fs = std::filesystem;
using nn::Expr;
using nn::Graph;

Evaluator::Evaluator(const EvaluatorConfig& cfg,
                     std::shared_ptr<SentenceEncoder> enc,
                     const FeatureConfig& fcfg)
    : cfg_(cfg), fcfg_(fcfg), encoder_(std::move(enc)) {
  std::mt19937_64 rng(cfg_.seed + 31);
  const int emb_dim = encoder_->config().output_dim;
  ctx_.init(model_, "ctx", emb_dim, cfg_.context_rnn_hidden, rng);
  const int feat_dim =
      cfg_.use_handcrafted_features ? feature_layout().total_dim : 0;
  fused_dim_ = cfg_.context_rnn_hidden + 2 * emb_dim + feat_dim;
  int in_dim = fused_dim_;
  for (int l = 0; l < cfg_.ffnn_layers; ++l) {
    ff_w_.push_back(&model_.add_glorot("ff" + std::to_string(l) + "_w",
                                       cfg_.ffnn_hidden, in_dim, rng));
    ff_b_.push_back(
        &model_.add("ff" + std::to_string(l) + "_b", cfg_.ffnn_hidden, 1));
    in_dim = cfg_.ffnn_hidden;
  }
  for (int h = 0; h < 4; ++h) {
    head_w_[h] = &model_.add_glorot(
        std::string("head_") + head_names()[h] + "_w", 2, in_dim, rng);
    head_b_[h] =
        &model_.add(std::string("head_") + head_names()[h] + "_b", 2, 1);
  }
}

std::vector<const Turn*> Evaluator::context_window(const Dialog& dialog,
                                                   int turn_index) const {
  std::vector<const Turn*> ctx;
  int start = std::max(0, turn_index - cfg_.context_turns);
  for (int i = start; i < turn_index; ++i) ctx.push_back(&dialog.turns[i]);
  return ctx;
}

Expr Evaluator::encode_context(Graph& g,
                               const std::vector<const Turn*>& history) const {
  if (history.empty()) return g.zeros(cfg_.context_rnn_hidden, 1);
  Expr h = ctx_.zero_state(g), c = ctx_.zero_state(g);
  std::size_t start =
      history.size() > static_cast<std::size_t>(cfg_.context_turns)
          ? history.size() - cfg_.context_turns
          : 0;
  for (std::size_t i = start; i < history.size(); ++i) {
    // chronological, user before system within each turn
    Expr u = g.input(encoder_->encode_vector(history[i]->user_tokens));
    auto [h1, c1] = ctx_.step(g, u, h, c);
    Expr s = g.input(encoder_->encode_vector(history[i]->system_tokens));
    auto [h2, c2] = ctx_.step(g, s, h1, c1);
    h = h2;
    c = c2;
  }
  return h;
}

Eigen::VectorXd Evaluator::encode_context_vector(
    const std::vector<const Turn*>& history) const {
  Graph g;
  return encode_context(g, history).value().col(0);
}

Expr Evaluator::trunk(Graph& g, Expr fused, bool train,
                      std::mt19937_64* rng) const {
  Expr h = fused;
  for (std::size_t l = 0; l < ff_w_.size(); ++l) {
    h = g.relu(g.affine(g.parameter(*ff_w_[l]), h, g.parameter(*ff_b_[l])));
    if (train && rng) h = g.dropout(h, cfg_.dropout, *rng, true);
  }
  return h;
}

std::array<Expr, 4> Evaluator::head_outputs(Graph& g, Expr context,
                                            Expr user_emb, Expr sys_emb,
                                            Expr features, bool train,
                                            std::mt19937_64* rng) const {
  std::vector<Expr> parts = {context, user_emb, sys_emb};
  if (cfg_.use_handcrafted_features) parts.push_back(features);
  Expr fused = g.concat_rows(parts);
  Expr h = trunk(g, fused, train, rng);
  std::array<Expr, 4> out;
  for (int i = 0; i < 4; ++i)
    out[i] = g.softmax_cols(
        g.affine(g.parameter(*head_w_[i]), h, g.parameter(*head_b_[i])));
  return out;
}

EvaluatorOutput Evaluator::evaluate_turn(const Dialog& dialog,
                                         int turn_index) const {
  return evaluate_response(dialog, turn_index,
                           dialog.turns[turn_index].system_tokens);
}

EvaluatorOutput Evaluator::evaluate_response(
    const Dialog& dialog, int turn_index,
    const std::vector<std::string>& response_tokens) const {
  const Turn& orig = dialog.turns[turn_index];
  Turn turn = orig;
  if (response_tokens != orig.system_tokens) {
    // a substituted response invalidates the recorded text and any
    // system-side tags; the recorded turn is scored exactly as stored
    turn.system_tokens = response_tokens;
    turn.system_text = join_tokens(response_tokens);
    turn.da_system.reset();
    turn.entities_system.reset();
  }
  Graph g;
  auto history = context_window(dialog, turn_index);
  Expr ctx = encode_context(g, history);
  Expr u = g.input(encoder_->encode_vector(turn.user_tokens));
  Expr s = g.input(encoder_->encode_vector(turn.system_tokens));
  Expr feats = g.input(build_feature_vector(turn, history, *encoder_, fcfg_));
  auto heads = head_outputs(g, ctx, u, s, feats, /*train=*/false);
  EvaluatorOutput out;
  for (int i = 0; i < 4; ++i)
    out.heads[i] = {heads[i].value()(0, 0), heads[i].value()(1, 0)};
  return out;
}

Expr Evaluator::example_loss(Graph& g, const Dialog& d, int turn_index,
                             bool train, std::mt19937_64* rng) const {
  const Turn& turn = d.turns[turn_index];
  const TurnAnnotation& ann = (*d.annotations)[turn_index];
  auto history = context_window(d, turn_index);
  Expr ctx = encode_context(g, history);
  Expr u = g.input(encoder_->encode_vector(turn.user_tokens));
  Expr s = g.input(encoder_->encode_vector(turn.system_tokens));
  Expr feats = g.input(build_feature_vector(turn, history, *encoder_, fcfg_));
  auto heads = head_outputs(g, ctx, u, s, feats, train, rng);
  const int labels[4] = {ann.comprehensible, ann.on_topic, ann.interesting,
                         ann.continue_conversation};
  std::vector<Expr> terms;
  for (int i = 0; i < 4; ++i) {
    if (!cfg_.heads_enabled[i]) continue;
    Expr logp = g.log(heads[i]);
    terms.push_back(g.pick_nll(logp, {labels[i]}));
  }
  return g.sum_all(g.concat_cols(terms));
}

Evaluator::TrainLog Evaluator::train(const std::vector<TurnExample>& train_set,
                                     const std::vector<TurnExample>& dev_set) {
  if (train_set.empty()) throw std::runtime_error("no annotated turns");
  TrainLog log;
  // warn on degenerate heads
  for (int h = 0; h < 4; ++h) {
    long yes = 0;
    for (const auto& ex : train_set) {
      const TurnAnnotation& a = (*ex.dialog->annotations)[ex.turn_index];
      const int labels[4] = {a.comprehensible, a.on_topic, a.interesting,
                             a.continue_conversation};
      yes += labels[h];
    }
    if (yes == 0 || yes == static_cast<long>(train_set.size()))
      log.warnings.push_back(std::string("head '") + head_names()[h] +
                             "' has a single class in training data");
  }
  std::mt19937_64 rng(cfg_.seed + 7);
  std::mt19937_64 dropout_rng(cfg_.seed + 11);
  nn::AdamOptimizer opt(cfg_.learning_rate);
  double best_dev = 1e300;
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t b = 0;
    while (b < order.size()) {
      std::size_t e = std::min(order.size(),
                               b + static_cast<std::size_t>(cfg_.batch_size));
      Graph g;
      std::vector<Expr> losses;
      for (std::size_t i = b; i < e; ++i) {
        const auto& ex = train_set[order[i]];
        losses.push_back(
            example_loss(g, *ex.dialog, ex.turn_index, true, &dropout_rng));
      }
      Expr sum = g.sum_all(g.concat_cols(losses));
      Expr loss = g.scale(sum, 1.0 / static_cast<double>(e - b));
      total += sum.scalar();
      g.backward(loss);
      opt.step(model_);
      b = e;
    }
    log.train_loss.push_back(total / train_set.size());
    double dev = log.train_loss.back();
    if (!dev_set.empty()) {
      double dl = 0;
      for (const auto& ex : dev_set) {
        Graph g;
        dl += example_loss(g, *ex.dialog, ex.turn_index, false, nullptr)
                  .scalar();
      }
      dev = dl / dev_set.size();
    }
    log.dev_loss.push_back(dev);
    log.stopped_epoch = epoch + 1;
    if (dev < best_dev - 1e-9) {
      best_dev = dev;
      since_best = 0;
    } else if (++since_best >= cfg_.patience) {
      break;
    }
  }
  return log;
}

double Evaluator::train_accuracy(const std::vector<TurnExample>& set,
                                 int head) const {
  long correct = 0;
  for (const auto& ex : set) {
    EvaluatorOutput out = evaluate_turn(*ex.dialog, ex.turn_index);
    const TurnAnnotation& a = (*ex.dialog->annotations)[ex.turn_index];
    const int labels[4] = {a.comprehensible, a.on_topic, a.interesting,
                           a.continue_conversation};
    int pred = out.heads[head].second >= cfg_.threshold ? 1 : 0;
    if (pred == labels[head]) ++correct;
  }
  return set.empty() ? 0.0 : static_cast<double>(correct) / set.size();
}

void Evaluator::save(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["context_turns"] = cfg_.context_turns;
  j["context_rnn_hidden"] = cfg_.context_rnn_hidden;
  j["ffnn_layers"] = cfg_.ffnn_layers;
  j["ffnn_hidden"] = cfg_.ffnn_hidden;
  j["dropout"] = cfg_.dropout;
  j["batch_size"] = cfg_.batch_size;
  j["learning_rate"] = cfg_.learning_rate;
  j["max_epochs"] = cfg_.max_epochs;
  j["patience"] = cfg_.patience;
  j["threshold"] = cfg_.threshold;
  j["use_handcrafted_features"] = cfg_.use_handcrafted_features;
  j["seed"] = cfg_.seed;
  j["context_order"] = "user_then_system_per_turn";
  std::ofstream out(fs::path(dir) / "config.json");
  out << j.dump(2) << "\n";
  std::ofstream fl(fs::path(dir) / "feature_layout.json");
  fl << feature_layout().to_json() << "\n";
  model_.save((fs::path(dir) / "params.bin").string());
  encoder_->save((fs::path(dir) / "encoder").string());
}

std::unique_ptr<Evaluator> Evaluator::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "config.json");
  if (!in) throw std::runtime_error("evaluator checkpoint not found: " + dir);
  nlohmann::ordered_json j;
  in >> j;
  EvaluatorConfig cfg;
  cfg.context_turns = j["context_turns"].get<int>();
  cfg.context_rnn_hidden = j["context_rnn_hidden"].get<int>();
  cfg.ffnn_layers = j["ffnn_layers"].get<int>();
  cfg.ffnn_hidden = j["ffnn_hidden"].get<int>();
  cfg.dropout = j["dropout"].get<double>();
  cfg.batch_size = j["batch_size"].get<int>();
  cfg.learning_rate = j["learning_rate"].get<double>();
  cfg.max_epochs = j["max_epochs"].get<int>();
  cfg.patience = j["patience"].get<int>();
  cfg.threshold = j["threshold"].get<double>();
  cfg.use_handcrafted_features = j["use_handcrafted_features"].get<bool>();
  cfg.seed = j["seed"].get<std::uint64_t>();
  // verify the stored feature layout matches this build
  std::ifstream fl(fs::path(dir) / "feature_layout.json");
  if (fl) {
    std::string text((std::istreambuf_iterator<char>(fl)),
                     std::istreambuf_iterator<char>());
    FeatureLayout stored = FeatureLayout::from_json(text);
    if (stored.total_dim != feature_layout().total_dim)
      throw std::runtime_error("feature layout mismatch in checkpoint " + dir);
  }
  auto enc = SentenceEncoder::load((fs::path(dir) / "encoder").string());
  auto ev = std::make_unique<Evaluator>(
      cfg, std::shared_ptr<SentenceEncoder>(std::move(enc)));
  ev->model_.load((fs::path(dir) / "params.bin").string());
  return ev;
}

std::array<HeadMetrics, 4> evaluator_metrics(
    const std::vector<EvaluatorOutput>& predictions,
    const std::vector<TurnAnnotation>& labels, double threshold) {
  if (predictions.empty()) throw std::invalid_argument("empty input");
  if (predictions.size() != labels.size())
    throw std::invalid_argument("prediction/label length mismatch");
  std::array<HeadMetrics, 4> out;
  for (int h = 0; h < 4; ++h) {
    ConfusionCounts c;
    long yes = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const TurnAnnotation& a = labels[i];
      const int lab[4] = {a.comprehensible, a.on_topic, a.interesting,
                          a.continue_conversation};
      int gold = lab[h];
      int pred = predictions[i].heads[h].second >= threshold ? 1 : 0;
      yes += gold;
      if (pred == 1 && gold == 1) ++c.tp;
      if (pred == 1 && gold == 0) ++c.fp;
      if (pred == 0 && gold == 1) ++c.fn;
      if (pred == 0 && gold == 0) ++c.tn;
    }
    HeadMetrics m;
    m.yes_class_share = static_cast<double>(yes) / predictions.size();
    m.accuracy = static_cast<double>(c.tp + c.tn) / predictions.size();
    m.precision = (c.tp + c.fp) ? static_cast<double>(c.tp) / (c.tp + c.fp)
                                : 0.0;
    m.recall = (c.tp + c.fn) ? static_cast<double>(c.tp) / (c.tp + c.fn)
                             : 0.0;
    m.f_score = (m.precision + m.recall) > 0
                    ? 2 * m.precision * m.recall / (m.precision + m.recall)
                    : 0.0;
    m.mcc = mcc(c);
    out[h] = m;
  }
  return out;
}

std::array<std::pair<double, double>, 4> correlate_with_ratings(
    const std::vector<EvaluatorOutput>& predictions,
    const std::vector<double>& ratings) {
  if (predictions.size() != ratings.size())
    throw std::invalid_argument("prediction/rating length mismatch");
  std::array<std::pair<double, double>, 4> out;
  for (int h = 0; h < 4; ++h) {
    std::vector<double> probs;
    for (const auto& p : predictions) probs.push_back(p.heads[h].second);
    out[h] = pearson(probs, ratings);
  }
  return out;
}

std::vector<TurnExample> annotated_turns(
    const std::vector<const Dialog*>& dialogs) {
  std::vector<TurnExample> out;
  for (const Dialog* d : dialogs) {
    if (!d->annotations) continue;
    for (int i = 0; i < static_cast<int>(d->turns.size()); ++i)
      out.push_back({d, i});
  }
  return out;
}

}  // namespace chateval
