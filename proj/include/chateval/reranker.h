// Pairwise max-margin reranker over evaluator softmax outputs: mines
// preference pairs from beam candidates labeled by sentence BLEU, trains a
// small FFNN scorer, and selects the final response.

#ifndef CHATEVAL_RERANKER_H_
#define CHATEVAL_RERANKER_H_

#include <memory>
#include <string>
#include <vector>

#include "chateval/evaluator.h"
#include "chateval/generator.h"
#include "chateval/nn/graph.h"

namespace chateval {

struct RerankerConfig {
  int ffnn_layers = 3;
  int hidden = 16;
  int input_dim = 8;  // two softmax components x 4 heads
  double margin = 1.0;
  double learning_rate = 1e-4;
  int batch_size = 16;
  int max_epochs = 50;
  std::uint64_t seed = 0;
};

struct PreferencePair {
  Eigen::VectorXd winner_features;  // 8-dim flattened evaluator output
  Eigen::VectorXd loser_features;
  double bleu_winner = 0;
  double bleu_loser = 0;
};

// (p_no, p_yes) per head, flattened in head order.
Eigen::VectorXd flatten_evaluator_output(const EvaluatorOutput& out);

// Every unordered candidate pair with strictly different sentence BLEU
// against the reference; equal-BLEU pairs are dropped.
std::vector<PreferencePair> mine_pairs(
    const NBestList& nbest, const std::vector<std::string>& reference_tokens,
    const Evaluator& evaluator, const Dialog& dialog, int turn_index,
    const Vocabulary& generator_vocab);

class Reranker {
 public:
  explicit Reranker(const RerankerConfig& cfg);

  const RerankerConfig& config() const { return cfg_; }
  nn::Model& model() { return model_; }
  const nn::Model& model() const { return model_; }

  double score(const Eigen::VectorXd& features) const;
  nn::Expr score_expr(nn::Graph& g, nn::Expr features) const;

  struct TrainLog {
    std::vector<double> epoch_loss;  // mean hinge loss per pair
    double pairwise_accuracy = 0;    // on the training pairs
  };
  TrainLog train(const std::vector<PreferencePair>& pairs);

  double hinge_loss(const std::vector<PreferencePair>& pairs) const;
  double pairwise_accuracy(const std::vector<PreferencePair>& pairs) const;

  // argmax of reranker score over candidates; ties fall back to the beam
  // score, then the lower beam rank. Returns candidate index.
  int rerank(const NBestList& nbest, const Evaluator& evaluator,
             const Dialog& dialog, int turn_index,
             const Vocabulary& generator_vocab) const;

  void save(const std::string& dir) const;
  static std::unique_ptr<Reranker> load(const std::string& dir);

 private:
  RerankerConfig cfg_;
  nn::Model model_;
  std::vector<nn::Parameter*> w_;
  std::vector<nn::Parameter*> b_;
};

void save_pairs(const std::vector<PreferencePair>& pairs,
                const std::string& path);
std::vector<PreferencePair> load_pairs(const std::string& path);

}  // namespace chateval

#endif  // CHATEVAL_RERANKER_H_
