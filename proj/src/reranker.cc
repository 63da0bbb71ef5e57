#include "chateval/reranker.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "chateval/metrics.h"

namespace chateval {

namespace fs = std::filesystem;
using nn::Expr;
using nn::Graph;

Eigen::VectorXd flatten_evaluator_output(const EvaluatorOutput& out) {
  Eigen::VectorXd v(8);
  for (int h = 0; h < 4; ++h) {
    v(2 * h) = out.heads[h].first;
    v(2 * h + 1) = out.heads[h].second;
  }
  return v;
}

std::vector<PreferencePair> mine_pairs(
    const NBestList& nbest, const std::vector<std::string>& reference_tokens,
    const Evaluator& evaluator, const Dialog& dialog, int turn_index,
    const Vocabulary& generator_vocab) {
  if (nbest.candidates.empty())
    throw std::invalid_argument("empty n-best list");
  if (reference_tokens.empty())
    throw std::invalid_argument("empty reference");
  struct Scored {
    Eigen::VectorXd features;
    double bleu;
  };
  std::vector<Scored> scored;
  for (const Candidate& c : nbest.candidates) {
    std::vector<std::string> toks = generator_vocab.decode(c.ids);
    double b = bleu4_sentence(toks, reference_tokens);
    EvaluatorOutput out =
        evaluator.evaluate_response(dialog, turn_index, toks);
    scored.push_back({flatten_evaluator_output(out), b});
  }
  std::vector<PreferencePair> pairs;
  for (std::size_t i = 0; i < scored.size(); ++i)
    for (std::size_t j = i + 1; j < scored.size(); ++j) {
      if (scored[i].bleu == scored[j].bleu) continue;  // ties dropped
      const Scored& w = scored[i].bleu > scored[j].bleu ? scored[i]
                                                        : scored[j];
      const Scored& l = scored[i].bleu > scored[j].bleu ? scored[j]
                                                        : scored[i];
      pairs.push_back({w.features, l.features, w.bleu, l.bleu});
    }
  return pairs;
}

Reranker::Reranker(const RerankerConfig& cfg) : cfg_(cfg) {
  std::mt19937_64 rng(cfg_.seed + 41);
  int in = cfg_.input_dim;
  for (int l = 0; l < cfg_.ffnn_layers - 1; ++l) {
    w_.push_back(&model_.add_glorot("w" + std::to_string(l), cfg_.hidden, in,
                                    rng));
    b_.push_back(&model_.add("b" + std::to_string(l), cfg_.hidden, 1));
    in = cfg_.hidden;
  }
  w_.push_back(&model_.add_glorot("w_out", 1, in, rng));
  b_.push_back(&model_.add("b_out", 1, 1));
}

Expr Reranker::score_expr(Graph& g, Expr features) const {
  Expr h = features;
  for (std::size_t l = 0; l + 1 < w_.size(); ++l)
    h = g.relu(g.affine(g.parameter(*w_[l]), h, g.parameter(*b_[l])));
  return g.affine(g.parameter(*w_.back()), h, g.parameter(*b_.back()));
}

double Reranker::score(const Eigen::VectorXd& features) const {
  Graph g;
  return score_expr(g, g.input(features)).scalar();
}

Reranker::TrainLog Reranker::train(const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) throw std::runtime_error("empty pair set");
  std::mt19937_64 rng(cfg_.seed + 43);
  nn::AdamOptimizer opt(cfg_.learning_rate);
  TrainLog log;
  std::vector<std::size_t> order(pairs.size());
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
        const PreferencePair& p = pairs[order[i]];
        Expr sw = score_expr(g, g.input(p.winner_features));
        Expr sl = score_expr(g, g.input(p.loser_features));
        // hinge: max(0, margin - (s_w - s_l))
        Expr diff = g.sub(sw, sl);
        losses.push_back(g.relu(g.add_scalar(g.neg(diff), cfg_.margin)));
      }
      Expr sum = g.sum_all(g.concat_cols(losses));
      Expr loss = g.scale(sum, 1.0 / static_cast<double>(e - b));
      total += sum.scalar();
      g.backward(loss);
      opt.step(model_);
      b = e;
    }
    log.epoch_loss.push_back(total / pairs.size());
  }
  log.pairwise_accuracy = pairwise_accuracy(pairs);
  return log;
}

double Reranker::hinge_loss(const std::vector<PreferencePair>& pairs) const {
  double total = 0;
  for (const auto& p : pairs) {
    double d = score(p.winner_features) - score(p.loser_features);
    total += std::max(0.0, cfg_.margin - d);
  }
  return pairs.empty() ? 0.0 : total / pairs.size();
}

double Reranker::pairwise_accuracy(
    const std::vector<PreferencePair>& pairs) const {
  long correct = 0;
  for (const auto& p : pairs)
    if (score(p.winner_features) > score(p.loser_features)) ++correct;
  return pairs.empty() ? 0.0 : static_cast<double>(correct) / pairs.size();
}

int Reranker::rerank(const NBestList& nbest, const Evaluator& evaluator,
                     const Dialog& dialog, int turn_index,
                     const Vocabulary& generator_vocab) const {
  if (nbest.candidates.empty())
    throw std::invalid_argument("empty n-best list");
  int best = 0;
  double best_score = -1e300;
  for (std::size_t i = 0; i < nbest.candidates.size(); ++i) {
    std::vector<std::string> toks =
        generator_vocab.decode(nbest.candidates[i].ids);
    EvaluatorOutput out =
        evaluator.evaluate_response(dialog, turn_index, toks);
    double s = score(flatten_evaluator_output(out));
    // ties: higher beam score first, then lower beam rank (list order)
    if (s > best_score ||
        (s == best_score &&
         nbest.candidates[i].score > nbest.candidates[best].score)) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

void Reranker::save(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["ffnn_layers"] = cfg_.ffnn_layers;
  j["hidden"] = cfg_.hidden;
  j["input_dim"] = cfg_.input_dim;
  j["margin"] = cfg_.margin;
  j["learning_rate"] = cfg_.learning_rate;
  j["batch_size"] = cfg_.batch_size;
  j["max_epochs"] = cfg_.max_epochs;
  j["seed"] = cfg_.seed;
  std::ofstream out(fs::path(dir) / "config.json");
  out << j.dump(2) << "\n";
  model_.save((fs::path(dir) / "params.bin").string());
}

std::unique_ptr<Reranker> Reranker::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "config.json");
  if (!in) throw std::runtime_error("reranker checkpoint not found: " + dir);
  nlohmann::ordered_json j;
  in >> j;
  RerankerConfig cfg;
  cfg.ffnn_layers = j["ffnn_layers"].get<int>();
  cfg.hidden = j["hidden"].get<int>();
  cfg.input_dim = j["input_dim"].get<int>();
  cfg.margin = j["margin"].get<double>();
  cfg.learning_rate = j["learning_rate"].get<double>();
  cfg.batch_size = j["batch_size"].get<int>();
  cfg.max_epochs = j["max_epochs"].get<int>();
  cfg.seed = j["seed"].get<std::uint64_t>();
  auto r = std::make_unique<Reranker>(cfg);
  r->model_.load((fs::path(dir) / "params.bin").string());
  return r;
}

void save_pairs(const std::vector<PreferencePair>& pairs,
                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["winner"] = std::vector<double>(
        p.winner_features.data(),
        p.winner_features.data() + p.winner_features.size());
    j["loser"] = std::vector<double>(
        p.loser_features.data(),
        p.loser_features.data() + p.loser_features.size());
    j["bleu_w"] = p.bleu_winner;
    j["bleu_l"] = p.bleu_loser;
    out << j.dump() << "\n";
  }
}

std::vector<PreferencePair> load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("pair file not found: " + path);
  std::vector<PreferencePair> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::ordered_json::parse(line);
    PreferencePair p;
    auto w = j["winner"].get<std::vector<double>>();
    auto l = j["loser"].get<std::vector<double>>();
    p.winner_features =
        Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<long>(w.size()));
    p.loser_features =
        Eigen::Map<Eigen::VectorXd>(l.data(), static_cast<long>(l.size()));
    p.bleu_winner = j["bleu_w"].get<double>();
    p.bleu_loser = j["bleu_l"].get<double>();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace chateval
