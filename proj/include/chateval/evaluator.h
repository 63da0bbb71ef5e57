// Four-head conversation evaluator: LSTM context encoding over past turns,
// feature fusion, 3-layer FFNN trunk, and one softmax pair per judgment.

#ifndef CHATEVAL_EVALUATOR_H_
#define CHATEVAL_EVALUATOR_H_

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "chateval/corpus.h"
#include "chateval/encoders.h"
#include "chateval/features.h"
#include "chateval/nn/graph.h"
#include "chateval/nn/rnn.h"

namespace chateval {

inline const std::array<const char*, 4>& head_names() {
  static const std::array<const char*, 4> kHeads = {
      "comprehensible", "on_topic", "interesting", "continue"};
  return kHeads;
}

struct EvaluatorConfig {
  int context_turns = 5;
  int context_rnn_hidden = 256;
  int ffnn_layers = 3;
  int ffnn_hidden = 256;
  double dropout = 0.3;
  int batch_size = 128;
  double learning_rate = 5e-5;
  int max_epochs = 50;
  int patience = 5;  // early stop on dev loss
  double threshold = 0.5;
  bool use_handcrafted_features = true;  // false = embeddings-only baseline
  bool heads_enabled[4] = {true, true, true, true};
  std::uint64_t seed = 0;
};

struct EvaluatorOutput {
  // per head: (p_no, p_yes)
  std::array<std::pair<double, double>, 4> heads;
  std::array<double, 4> yes_probabilities() const {
    return {heads[0].second, heads[1].second, heads[2].second,
            heads[3].second};
  }
};

struct HeadMetrics {
  double accuracy = 0, precision = 0, recall = 0, f_score = 0, mcc = 0;
  double yes_class_share = 0;
};

struct TurnExample {
  const Dialog* dialog;
  int turn_index;
};

class Evaluator {
 public:
  Evaluator(const EvaluatorConfig& cfg, std::shared_ptr<SentenceEncoder> enc,
            const FeatureConfig& fcfg = {});

  const EvaluatorConfig& config() const { return cfg_; }
  const SentenceEncoder& encoder() const { return *encoder_; }
  SentenceEncoder& encoder() { return *encoder_; }
  nn::Model& model() { return model_; }
  const nn::Model& model() const { return model_; }
  const FeatureConfig& feature_config() const { return fcfg_; }

  // Last LSTM state over interleaved (user, system) sentence embeddings of
  // up to context_turns preceding turns; zero vector for empty history.
  nn::Expr encode_context(nn::Graph& g,
                          const std::vector<const Turn*>& history) const;
  Eigen::VectorXd encode_context_vector(
      const std::vector<const Turn*>& history) const;

  // Yes/no softmax pairs for the four heads. `response_emb` overrides the
  // system-side sentence embedding (used by the composite fine-tuning loss
  // with a soft embedding mixture); features and context stay as given.
  std::array<nn::Expr, 4> head_outputs(nn::Graph& g, nn::Expr context,
                                       nn::Expr user_emb, nn::Expr sys_emb,
                                       nn::Expr features, bool train,
                                       std::mt19937_64* rng = nullptr) const;

  EvaluatorOutput evaluate_turn(const Dialog& dialog, int turn_index) const;
  // Score an alternative response in place of the recorded system turn.
  EvaluatorOutput evaluate_response(
      const Dialog& dialog, int turn_index,
      const std::vector<std::string>& response_tokens) const;

  struct TrainLog {
    std::vector<double> train_loss;
    std::vector<double> dev_loss;
    int stopped_epoch = 0;
    std::vector<std::string> warnings;
  };
  TrainLog train(const std::vector<TurnExample>& train_set,
                 const std::vector<TurnExample>& dev_set);

  double train_accuracy(const std::vector<TurnExample>& set, int head) const;

  void save(const std::string& dir) const;
  static std::unique_ptr<Evaluator> load(const std::string& dir);

  // Context = pointers to the turns preceding turn_index.
  std::vector<const Turn*> context_window(const Dialog& dialog,
                                          int turn_index) const;

 private:
  nn::Expr trunk(nn::Graph& g, nn::Expr fused, bool train,
                 std::mt19937_64* rng) const;
  nn::Expr example_loss(nn::Graph& g, const Dialog& d, int turn_index,
                        bool train, std::mt19937_64* rng) const;

  EvaluatorConfig cfg_;
  FeatureConfig fcfg_;
  std::shared_ptr<SentenceEncoder> encoder_;
  nn::Model model_;
  nn::LSTMCell ctx_;
  std::vector<nn::Parameter*> ff_w_;
  std::vector<nn::Parameter*> ff_b_;
  std::array<nn::Parameter*, 4> head_w_;
  std::array<nn::Parameter*, 4> head_b_;
  int fused_dim_ = 0;

  friend class CompositeLoss;
};

std::array<HeadMetrics, 4> evaluator_metrics(
    const std::vector<EvaluatorOutput>& predictions,
    const std::vector<TurnAnnotation>& labels, double threshold = 0.5);

// Per-head Pearson correlation of yes-probabilities with scalar ratings.
std::array<std::pair<double, double>, 4> correlate_with_ratings(
    const std::vector<EvaluatorOutput>& predictions,
    const std::vector<double>& ratings);

// All annotated turns of the given dialogs.
std::vector<TurnExample> annotated_turns(
    const std::vector<const Dialog*>& dialogs);

}  // namespace chateval

#endif  // CHATEVAL_EVALUATOR_H_
