#include "chateval/finetune.h"

#include <algorithm>
#include <stdexcept>

namespace chateval {

using nn::Expr;
using nn::Graph;

std::vector<FinetuneExample> make_finetune_examples(
    const std::vector<const Dialog*>& dialogs, const Vocabulary& vocab) {
  std::vector<FinetuneExample> out;
  for (const Dialog* d : dialogs)
    for (int t = 0; t < static_cast<int>(d->turns.size()); ++t) {
      if (d->turns[t].system_tokens.empty()) continue;
      FinetuneExample ex;
      ex.dialog = d;
      ex.turn_index = t;
      ex.input = build_generator_input(*d, t, vocab);
      ex.target = vocab.encode(d->turns[t].system_tokens);
      out.push_back(std::move(ex));
    }
  return out;
}

std::vector<int> vocab_projection(const Vocabulary& generator_vocab,
                                  const Vocabulary& evaluator_vocab) {
  std::vector<int> proj(generator_vocab.size());
  for (int i = 0; i < generator_vocab.size(); ++i)
    proj[i] = evaluator_vocab.id(generator_vocab.token(i));
  return proj;
}

Eigen::MatrixXd soft_embedding_lookup(const Eigen::MatrixXd& q,
                                      const Eigen::MatrixXd& table,
                                      const std::vector<int>& projection) {
  if (static_cast<std::size_t>(q.rows()) != projection.size())
    throw std::invalid_argument("projection size does not match q rows");
  Eigen::MatrixXd proj_table(table.cols(), q.rows());  // D x |V|
  for (long i = 0; i < q.rows(); ++i) {
    int row = projection[i];
    if (row < 0 || row >= table.rows())
      throw std::invalid_argument("projection id out of table range");
    proj_table.col(i) = table.row(row).transpose();
  }
  return proj_table * q;
}

Expr soft_embedding_lookup_expr(Graph& g, Expr q, nn::Parameter& table,
                                const std::vector<int>& projection) {
  if (static_cast<std::size_t>(q.rows()) != projection.size())
    throw std::invalid_argument("projection size does not match q rows");
  return g.matmul(g.lookup(table, projection), q);
}

Expr soft_eval_score_expr(Graph& g, Generator& generator, Evaluator& evaluator,
                          const FinetuneExample& ex,
                          const std::vector<int>& projection,
                          bool teacher_forced,
                          std::array<double, 4>* out_scores) {
  std::vector<Expr> cols =
      teacher_forced
          ? generator.decode_soft_expr(g, ex.input, ex.target)
          : generator.decode_soft_free_expr(
                g, ex.input, generator.config().max_decode_len);
  Expr q = cols.size() == 1 ? cols[0] : g.concat_cols(cols);
  const SentenceEncoder& enc = evaluator.encoder();
  Expr soft_words = soft_embedding_lookup_expr(
      g, q, evaluator.encoder().embeddings(), projection);
  Expr sys_emb = enc.encode_matrix(g, soft_words, /*train=*/false);
  // context, user embedding, and features stay at their reference values
  const Turn& turn = ex.dialog->turns[ex.turn_index];
  auto history = evaluator.context_window(*ex.dialog, ex.turn_index);
  Expr ctx = evaluator.encode_context(g, history);
  Expr u = g.input(enc.encode_vector(turn.user_tokens));
  Expr feats = g.input(build_feature_vector(turn, history, enc,
                                            evaluator.feature_config()));
  auto heads =
      evaluator.head_outputs(g, ctx, u, sys_emb, feats, /*train=*/false);
  std::vector<Expr> yes;
  for (int h = 0; h < 4; ++h) {
    yes.push_back(g.slice_rows(heads[h], 1, 1));
    if (out_scores) (*out_scores)[h] = heads[h].value()(1, 0);
  }
  return g.sum_all(g.concat_cols(yes));
}

CompositeLossValue composite_loss(Graph& g, Generator& generator,
                                  Evaluator& evaluator,
                                  const std::vector<FinetuneExample>& batch,
                                  double lambda,
                                  const std::vector<int>& projection,
                                  bool teacher_forced, Expr* out_loss) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::vector<Expr> ce_losses;
  long batch_tokens = 0;
  for (const FinetuneExample& ex : batch) {
    ce_losses.push_back(generator.example_loss(g, ex.input, ex.target));
    batch_tokens += static_cast<long>(ex.target.size()) + 1;
  }
  Expr ce_sum = ce_losses.size() == 1 ? ce_losses[0]
                                      : g.sum_all(g.concat_cols(ce_losses));
  Expr loss = g.scale(ce_sum, 1.0 / batch_tokens);
  CompositeLossValue v;
  v.ce_term = loss.scalar();
  if (lambda != 0.0) {
    // built only for lambda > 0 so a lambda = 0 graph is exactly MLE
    std::vector<Expr> evals;
    for (const FinetuneExample& ex : batch) {
      std::array<double, 4> scores;
      evals.push_back(soft_eval_score_expr(g, generator, evaluator, ex,
                                           projection, teacher_forced,
                                           &scores));
      for (int h = 0; h < 4; ++h) v.eval_scores[h] += scores[h];
      v.eval_term_l1 += evals.back().scalar();
    }
    for (int h = 0; h < 4; ++h) v.eval_scores[h] /= batch.size();
    v.eval_term_l1 /= batch.size();
    Expr eval_sum = evals.size() == 1 ? evals[0]
                                      : g.sum_all(g.concat_cols(evals));
    loss = g.add(loss, g.scale(eval_sum, -lambda / batch.size()));
  }
  v.total = v.ce_term - lambda * v.eval_term_l1;
  if (out_loss) *out_loss = loss;
  return v;
}

FinetuneLog finetune_generator(Generator& generator, Evaluator& evaluator,
                               const std::vector<FinetuneExample>& train_set,
                               const std::vector<FinetuneExample>& dev_set,
                               const FinetuneConfig& cfg) {
  if (train_set.empty()) throw std::runtime_error("empty training set");
  if (cfg.lambda < 0) throw std::invalid_argument("lambda must be >= 0");
  std::vector<int> proj =
      vocab_projection(generator.vocab(), evaluator.encoder().vocab());
  const std::uint64_t eval_hash = evaluator.model().value_hash();
  // same shuffler seeding as MLE training: lambda = 0 with matching
  // hyperparameters retraces the MLE trajectory exactly
  std::mt19937_64 rng(generator.config().seed + 17);
  nn::AdamOptimizer opt(cfg.learning_rate);
  FinetuneLog log;
  double best_dev = 1e300;
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total_ce = 0, total_eval = 0, total_loss = 0;
    long total_tokens = 0, batches = 0;
    std::size_t b = 0;
    while (b < order.size()) {
      std::size_t e = std::min(order.size(),
                               b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<FinetuneExample> batch;
      long batch_tokens = 0;
      for (std::size_t i = b; i < e; ++i) {
        batch.push_back(train_set[order[i]]);
        batch_tokens += static_cast<long>(batch.back().target.size()) + 1;
      }
      Graph g;
      Expr loss;
      CompositeLossValue v = composite_loss(g, generator, evaluator, batch,
                                            cfg.lambda, proj,
                                            cfg.teacher_forced, &loss);
      g.backward(loss);
      opt.step(generator.model());
      evaluator.model().zero_grads();  // scoring is read-only
      total_ce += v.ce_term * batch_tokens;
      total_eval += v.eval_term_l1;
      total_loss += v.total;
      total_tokens += batch_tokens;
      ++batches;
      b = e;
    }
    log.train_ce.push_back(total_ce / total_tokens);
    log.train_eval_l1.push_back(total_eval / batches);
    log.train_total.push_back(total_loss / batches);
    if (evaluator.model().value_hash() != eval_hash)
      throw std::runtime_error("evaluator parameters changed during "
                               "fine-tuning");
    double dev_total, dev_eval = 0;
    if (dev_set.empty()) {
      dev_total = log.train_total.back();
      dev_eval = log.train_eval_l1.back();
    } else {
      double dl = 0, de = 0;
      long dt = 0;
      for (const FinetuneExample& ex : dev_set) {
        Graph g;
        dl += generator.example_loss(g, ex.input, ex.target).scalar();
        dt += static_cast<long>(ex.target.size()) + 1;
        if (cfg.lambda != 0.0)
          de += soft_eval_score_expr(g, generator, evaluator, ex, proj,
                                     cfg.teacher_forced)
                    .scalar();
      }
      dev_eval = de / dev_set.size();
      dev_total = dl / dt - cfg.lambda * dev_eval;
    }
    log.dev_total.push_back(dev_total);
    log.dev_eval_l1.push_back(dev_eval);
    log.stopped_epoch = epoch + 1;
    if (dev_total < best_dev - 1e-9) {
      best_dev = dev_total;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return log;
}

RerankedDecode generate_reranked(const Generator& generator,
                                 const Evaluator& evaluator,
                                 const Reranker& reranker,
                                 const Dialog& dialog, int turn_index) {
  RerankedDecode out;
  std::vector<int> input =
      build_generator_input(dialog, turn_index, generator.vocab());
  out.nbest = generator.beam_search(input);
  out.selected = reranker.rerank(out.nbest, evaluator, dialog, turn_index,
                                 generator.vocab());
  out.ids = out.nbest.candidates[out.selected].ids;
  return out;
}

}  // namespace chateval
