// Context-aware seq2seq response generator: GRU encoder/decoder with dot
// attention, MLE training, greedy and beam-search decoding, and soft
// (distributional) decoding.

#ifndef CHATEVAL_GENERATOR_H_
#define CHATEVAL_GENERATOR_H_

#include <memory>
#include <string>
#include <vector>

#include "chateval/corpus.h"
#include "chateval/nn/graph.h"
#include "chateval/nn/rnn.h"
#include "chateval/text.h"

namespace chateval {

struct GeneratorConfig {
  int hidden = 512;
  int emb_dim = 300;
  int vocab_size = 30000;
  int batch_size = 256;
  double learning_rate = 1e-4;
  int max_decode_len = 40;
  int beam_width = 15;
  bool length_normalize = false;
  int max_epochs = 30;
  int patience = 3;  // early stop on dev loss
  std::uint64_t seed = 0;
};

// Token-id sequence x_{n-1} <transition> y_{n-1} <transition> x_n; empty
// leading segments are omitted at turn 0.
std::vector<int> build_generator_input(const Dialog& dialog, int turn_index,
                                       const Vocabulary& vocab);

struct Candidate {
  std::vector<int> ids;       // without BOS/EOS
  double log_prob = 0;        // sum of token log-probs
  double score = 0;           // ranking score (log_prob, normalized if asked)
};

struct NBestList {
  std::vector<Candidate> candidates;  // sorted descending by score
};

struct SoftDecodeOutput {
  // q: |V| x len, each column a softmax distribution
  nn::Mat q;
};

struct TrainingLog {
  std::vector<double> train_loss;  // per epoch, per-token
  std::vector<double> dev_loss;
  int stopped_epoch = 0;
};

class Generator {
 public:
  Generator(const GeneratorConfig& cfg, const Vocabulary& vocab);

  const GeneratorConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::Model& model() { return model_; }
  const nn::Model& model() const { return model_; }
  nn::Parameter& embeddings() { return *emb_; }

  // Teacher-forced token-level cross-entropy for one example; target must
  // not include BOS/EOS (they are added internally). Positions where
  // `target` holds kPad are masked out. Returns the per-step decoder
  // log-softmax columns through `out_logprobs` when requested.
  nn::Expr example_loss(nn::Graph& g, const std::vector<int>& input,
                        const std::vector<int>& target,
                        nn::Expr* out_logprobs = nullptr,
                        std::vector<nn::Expr>* out_softmax = nullptr) const;

  TrainingLog train(const std::vector<std::pair<std::vector<int>,
                                                std::vector<int>>>& train_set,
                    const std::vector<std::pair<std::vector<int>,
                                                std::vector<int>>>& dev_set);

  std::vector<int> decode_greedy(const std::vector<int>& input) const;
  NBestList beam_search(const std::vector<int>& input, int beam_width,
                        int max_len) const;
  NBestList beam_search(const std::vector<int>& input) const {
    return beam_search(input, cfg_.beam_width, cfg_.max_decode_len);
  }

  // Teacher-forced softmax sequence over the target (plus EOS).
  SoftDecodeOutput decode_soft(const std::vector<int>& input,
                               const std::vector<int>& target) const;
  // Graph-building variant; columns are differentiable. Returns the list of
  // per-step softmax columns (|V| x 1 each).
  std::vector<nn::Expr> decode_soft_expr(nn::Graph& g,
                                         const std::vector<int>& input,
                                         const std::vector<int>& target) const;
  // Free-running soft decode: feeds per-step argmax tokens back.
  std::vector<nn::Expr> decode_soft_free_expr(nn::Graph& g,
                                              const std::vector<int>& input,
                                              int max_len) const;

  double perplexity(const std::vector<std::pair<std::vector<int>,
                                                std::vector<int>>>& set) const;

  void save(const std::string& dir) const;
  static std::unique_ptr<Generator> load(const std::string& dir);

  // Attention weights of the last decode step chain are exposed for tests.
  struct StepState {
    nn::Expr hidden;
    nn::Expr log_probs;   // |V| x 1
    nn::Expr probs;       // |V| x 1
    nn::Expr attention;   // src_len x 1
  };
  // Encoder pass shared by all decode modes.
  struct Encoded {
    nn::Expr states;  // hidden x src_len
    nn::Expr last;    // hidden x 1
  };
  Encoded encode(nn::Graph& g, const std::vector<int>& input) const;
  StepState decode_step(nn::Graph& g, const Encoded& enc, int prev_token,
                        nn::Expr prev_hidden) const;

 private:
  GeneratorConfig cfg_;
  Vocabulary vocab_;
  nn::Model model_;
  nn::Parameter* emb_ = nullptr;
  nn::GRUCell enc_;
  nn::GRUCell dec_;
  nn::Parameter* attn_wc_ = nullptr;  // hidden x 2*hidden
  nn::Parameter* out_w_ = nullptr;    // |V| x hidden
  nn::Parameter* out_b_ = nullptr;    // |V| x 1
};

}  // namespace chateval

#endif  // CHATEVAL_GENERATOR_H_
