// Evaluator-guided generator fine-tuning: composite loss = teacher-forced
// cross-entropy minus lambda times the L1 sum of the frozen evaluator's four
// yes-scores, made differentiable through a soft embedding lookup of the
// decoder's softmax sequence.
//
// The evaluator's "score" of a soft response is the sum of its four heads'
// yes-probabilities; the L1 norm in the loss is exactly that sum. Context
// and hand-crafted features are held fixed at their reference-turn values;
// only the response-side sentence embedding is the soft mixture.

#ifndef CHATEVAL_FINETUNE_H_
#define CHATEVAL_FINETUNE_H_

#include <string>
#include <vector>

#include "chateval/evaluator.h"
#include "chateval/generator.h"
#include "chateval/reranker.h"

namespace chateval {

struct FinetuneConfig {
  double lambda = 10.0;
  double learning_rate = 1e-4;
  int batch_size = 16;
  int max_epochs = 10;
  int patience = 3;  // early stop on dev composite loss
  bool teacher_forced = true;  // false = free-running soft decode
};

struct CompositeLossValue {
  double total = 0;        // ce_term - lambda * eval_term_l1
  double ce_term = 0;      // per-token cross-entropy
  double eval_term_l1 = 0; // batch mean of per-sentence head-score sums
  std::array<double, 4> eval_scores = {0, 0, 0, 0};  // batch-mean yes-probs
};

struct FinetuneExample {
  const Dialog* dialog = nullptr;
  int turn_index = 0;
  std::vector<int> input;   // generator-vocab source ids
  std::vector<int> target;  // generator-vocab reference response ids
};

// One example per turn: input from build_generator_input, target = encoded
// reference system response. Turns with an empty response are skipped.
std::vector<FinetuneExample> make_finetune_examples(
    const std::vector<const Dialog*>& dialogs, const Vocabulary& vocab);

// projection[i] = evaluator-vocabulary id of generator token i (UNK for
// tokens the evaluator does not know). Lets the frozen evaluator consume
// generator-vocabulary distributions.
std::vector<int> vocab_projection(const Vocabulary& generator_vocab,
                                  const Vocabulary& evaluator_vocab);

// Weighted embedding lookup: rows of `table` (|V| x D) mixed by the
// stochastic columns of q (|V| x len) -> D x len. `projection` reindexes
// q's vocabulary into table rows.
Eigen::MatrixXd soft_embedding_lookup(const Eigen::MatrixXd& q,
                                      const Eigen::MatrixXd& table,
                                      const std::vector<int>& projection);
// Graph-building variant; differentiable with respect to q.
nn::Expr soft_embedding_lookup_expr(nn::Graph& g, nn::Expr q,
                                    nn::Parameter& table,
                                    const std::vector<int>& projection);

// Differentiable evaluator L1 score of the generator's soft output for one
// example: 1x1 expression, value in [0, 4].
nn::Expr soft_eval_score_expr(nn::Graph& g, Generator& generator,
                              Evaluator& evaluator,
                              const FinetuneExample& ex,
                              const std::vector<int>& projection,
                              bool teacher_forced,
                              std::array<double, 4>* out_scores = nullptr);

// Batch composite loss. With lambda = 0 the built graph is exactly the MLE
// training graph, so fine-tuning reduces bitwise to continued MLE training.
CompositeLossValue composite_loss(nn::Graph& g, Generator& generator,
                                  Evaluator& evaluator,
                                  const std::vector<FinetuneExample>& batch,
                                  double lambda,
                                  const std::vector<int>& projection,
                                  bool teacher_forced = true,
                                  nn::Expr* out_loss = nullptr);

struct FinetuneLog {
  std::vector<double> train_total;
  std::vector<double> train_ce;
  std::vector<double> train_eval_l1;
  std::vector<double> dev_total;
  std::vector<double> dev_eval_l1;
  int stopped_epoch = 0;
};

// Adam on the composite loss; the evaluator never receives updates (its
// parameter hash is checked every epoch). Shuffling is seeded from the
// generator seed exactly as MLE training is, so a lambda = 0 run with
// matching hyperparameters follows the identical parameter trajectory.
FinetuneLog finetune_generator(Generator& generator, Evaluator& evaluator,
                               const std::vector<FinetuneExample>& train_set,
                               const std::vector<FinetuneExample>& dev_set,
                               const FinetuneConfig& cfg);

struct RerankedDecode {
  NBestList nbest;
  int selected = 0;  // index into nbest
  std::vector<int> ids;
};

// Beam search from the (fine-tuned) generator, then reranker selection.
RerankedDecode generate_reranked(const Generator& generator,
                                 const Evaluator& evaluator,
                                 const Reranker& reranker,
                                 const Dialog& dialog, int turn_index);

}  // namespace chateval

#endif  // CHATEVAL_FINETUNE_H_
