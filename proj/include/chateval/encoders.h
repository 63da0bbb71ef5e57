// Sentence encoders (average, transformer, BiLSTM) pretrained with the
// Quick-Thought objective; produce fixed-length utterance embeddings.

#ifndef CHATEVAL_ENCODERS_H_
#define CHATEVAL_ENCODERS_H_

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chateval/corpus.h"
#include "chateval/nn/graph.h"
#include "chateval/nn/rnn.h"
#include "chateval/text.h"

namespace chateval {

enum class EncoderKind { kAverage, kTransformer, kBiLstm };

std::string encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& name);

struct SentenceEncoderConfig {
  EncoderKind kind = EncoderKind::kTransformer;
  int output_dim = 600;  // 300 for average, 600 for transformer/bilstm
  int layers = 1;
  int heads = 8;          // transformer
  int max_len = 64;       // tokens beyond this are truncated
  int batch_size = 400;
  double learning_rate = 5e-4;
  double dropout = 0.0;
  int vocab_size = 10000;
  std::uint64_t seed = 0;

  static int default_output_dim(EncoderKind k) {
    return k == EncoderKind::kAverage ? 300 : 600;
  }
  static SentenceEncoderConfig defaults(EncoderKind k) {
    SentenceEncoderConfig c;
    c.kind = k;
    c.output_dim = default_output_dim(k);
    return c;
  }
};

// argmax of mean benchmark score; transformer on ties or when empty.
EncoderKind select_encoder(
    const std::map<EncoderKind, std::vector<double>>& benchmark_scores);

class SentenceEncoder {
 public:
  SentenceEncoder(const SentenceEncoderConfig& cfg, const Vocabulary& vocab,
                  const EmbeddingInitOptions& emb_opts = {});

  const SentenceEncoderConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::Model& model() { return model_; }
  const nn::Model& model() const { return model_; }
  nn::Parameter& embeddings() { return *emb_; }
  const nn::Parameter& embeddings() const { return *emb_; }
  int word_dim() const { return word_dim_; }

  // Graph-building paths (differentiable).
  nn::Expr encode(nn::Graph& g, const std::vector<int>& ids, bool train,
                  std::mt19937_64* rng = nullptr) const;
  // X is word_dim x len (e.g. a soft embedding mixture).
  nn::Expr encode_matrix(nn::Graph& g, nn::Expr x, bool train,
                         std::mt19937_64* rng = nullptr) const;

  // Inference convenience; empty input yields the zero vector.
  Eigen::VectorXd encode_vector(const std::vector<std::string>& tokens) const;
  Eigen::VectorXd encode_ids(const std::vector<int>& ids) const;

  void save(const std::string& dir) const;
  static std::unique_ptr<SentenceEncoder> load(const std::string& dir);

 private:
  void build_params();

  SentenceEncoderConfig cfg_;
  Vocabulary vocab_;
  nn::Model model_;
  nn::Parameter* emb_ = nullptr;
  int word_dim_ = 0;

  // transformer
  nn::Parameter* wq_ = nullptr;
  nn::Parameter* wk_ = nullptr;
  nn::Parameter* wv_ = nullptr;
  nn::Parameter* wo_ = nullptr;
  nn::Parameter* ln1_g_ = nullptr;
  nn::Parameter* ln1_b_ = nullptr;
  nn::Parameter* ff1_w_ = nullptr;
  nn::Parameter* ff1_b_ = nullptr;
  nn::Parameter* ff2_w_ = nullptr;
  nn::Parameter* ff2_b_ = nullptr;
  nn::Parameter* ln2_g_ = nullptr;
  nn::Parameter* ln2_b_ = nullptr;

  // bilstm
  nn::LSTMCell fwd_;
  nn::LSTMCell bwd_;
};

struct QuickThoughtOptions {
  int epochs = 5;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct QuickThoughtLog {
  std::vector<double> epoch_loss;
  double final_accuracy = 0;  // in-batch successor retrieval
};

// In-batch Quick-Thought: classify each sentence's true successor among all
// batch sentences by embedding inner product, cross-entropy over the batch.
QuickThoughtLog train_quick_thought(SentenceEncoder& encoder,
                                    const std::vector<Dialog>& dialogs,
                                    const QuickThoughtOptions& opts);

// Uniform-score QT loss on a batch of B equals ln B; exposed for tests.
double quick_thought_batch_loss(SentenceEncoder& encoder,
                                const std::vector<std::vector<int>>& sentences,
                                const std::vector<int>& successor_index,
                                nn::Graph* out_graph = nullptr,
                                nn::Expr* out_loss = nullptr);

// Ordered sentence stream: user and system utterances of each dialog in
// turn order; pairs never cross dialog boundaries.
std::vector<std::pair<std::vector<int>, std::vector<int>>>
adjacent_sentence_pairs(const std::vector<Dialog>& dialogs,
                        const Vocabulary& vocab);

}  // namespace chateval

#endif  // CHATEVAL_ENCODERS_H_
