#include "chateval/encoders.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace chateval {

namespace fs = std::filesystem;
using nn::Expr;
using nn::Graph;
using nn::Mat;

std::string encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::kAverage: return "average";
    case EncoderKind::kTransformer: return "transformer";
    case EncoderKind::kBiLstm: return "bilstm";
  }
  return "transformer";
}

EncoderKind encoder_kind_from_name(const std::string& name) {
  if (name == "average") return EncoderKind::kAverage;
  if (name == "transformer") return EncoderKind::kTransformer;
  if (name == "bilstm") return EncoderKind::kBiLstm;
  throw std::invalid_argument("unknown encoder kind: " + name);
}

EncoderKind select_encoder(
    const std::map<EncoderKind, std::vector<double>>& benchmark_scores) {
  EncoderKind best = EncoderKind::kTransformer;
  double best_score = -1e300;
  bool any = false;
  for (const auto& [kind, scores] : benchmark_scores) {
    if (scores.empty()) continue;
    double mean = 0;
    for (double s : scores) mean += s;
    mean /= scores.size();
    any = true;
    if (mean > best_score ||
        (mean == best_score && kind == EncoderKind::kTransformer)) {
      best_score = mean;
      best = kind;
    }
  }
  return any ? best : EncoderKind::kTransformer;
}

SentenceEncoder::SentenceEncoder(const SentenceEncoderConfig& cfg,
                                 const Vocabulary& vocab,
                                 const EmbeddingInitOptions& emb_opts)
    : cfg_(cfg), vocab_(vocab) {
  switch (cfg_.kind) {
    case EncoderKind::kAverage:
    case EncoderKind::kTransformer:
      word_dim_ = cfg_.output_dim;
      break;
    case EncoderKind::kBiLstm:
      if (cfg_.output_dim % 2 != 0)
        throw std::invalid_argument("bilstm output_dim must be even");
      word_dim_ = cfg_.output_dim / 2;
      break;
  }
  EmbeddingInitOptions opts = emb_opts;
  if (opts.seed == 0) opts.seed = cfg_.seed + 1;
  emb_ = &init_embeddings(model_, "emb", vocab_, word_dim_, opts);
  build_params();
}

void SentenceEncoder::build_params() {
  std::mt19937_64 rng(cfg_.seed + 2);
  if (cfg_.kind == EncoderKind::kTransformer) {
    const int d = cfg_.output_dim;
    if (d % cfg_.heads != 0)
      throw std::invalid_argument("output_dim must be divisible by heads");
    wq_ = &model_.add_glorot("wq", d, d, rng);
    wk_ = &model_.add_glorot("wk", d, d, rng);
    wv_ = &model_.add_glorot("wv", d, d, rng);
    wo_ = &model_.add_glorot("wo", d, d, rng);
    ln1_g_ = &model_.add("ln1_g", d, 1);
    ln1_g_->value.setOnes();
    ln1_b_ = &model_.add("ln1_b", d, 1);
    ff1_w_ = &model_.add_glorot("ff1_w", 4 * d, d, rng);
    ff1_b_ = &model_.add("ff1_b", 4 * d, 1);
    ff2_w_ = &model_.add_glorot("ff2_w", d, 4 * d, rng);
    ff2_b_ = &model_.add("ff2_b", d, 1);
    ln2_g_ = &model_.add("ln2_g", d, 1);
    ln2_g_->value.setOnes();
    ln2_b_ = &model_.add("ln2_b", d, 1);
  } else if (cfg_.kind == EncoderKind::kBiLstm) {
    const int h = cfg_.output_dim / 2;
    fwd_.init(model_, "fwd", word_dim_, h, rng);
    bwd_.init(model_, "bwd", word_dim_, h, rng);
  }
}

namespace {

Mat positional_encoding(int d, int len) {
  Mat pe(d, len);
  for (int pos = 0; pos < len; ++pos)
    for (int i = 0; i < d; ++i) {
      double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / d);
      pe(i, pos) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

}  // namespace

Expr SentenceEncoder::encode_matrix(Graph& g, Expr x, bool train,
                                    std::mt19937_64* rng) const {
  const int len = x.cols();
  switch (cfg_.kind) {
    case EncoderKind::kAverage:
      return g.mean_cols(x);
    case EncoderKind::kTransformer: {
      const int d = cfg_.output_dim;
      const int dh = d / cfg_.heads;
      Expr h = g.add(x, g.input(positional_encoding(d, len)));
      Expr q = g.matmul(g.parameter(*wq_), h);
      Expr k = g.matmul(g.parameter(*wk_), h);
      Expr v = g.matmul(g.parameter(*wv_), h);
      std::vector<Expr> head_outs;
      const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
      for (int hd = 0; hd < cfg_.heads; ++hd) {
        Expr qh = g.slice_rows(q, hd * dh, dh);
        Expr kh = g.slice_rows(k, hd * dh, dh);
        Expr vh = g.slice_rows(v, hd * dh, dh);
        // column i of scores = attention logits of query i over all keys
        Expr scores = g.scale(g.matmul(g.transpose(kh), qh), inv_sqrt);
        Expr attn = g.softmax_cols(scores);
        head_outs.push_back(g.matmul(vh, attn));
      }
      Expr mh = g.matmul(g.parameter(*wo_), g.concat_rows(head_outs));
      if (train && rng) mh = g.dropout(mh, cfg_.dropout, *rng, true);
      Expr r1 = g.layer_norm_cols(g.add(h, mh), g.parameter(*ln1_g_),
                                  g.parameter(*ln1_b_));
      Expr ff = g.affine(g.parameter(*ff2_w_),
                         g.relu(g.affine(g.parameter(*ff1_w_), r1,
                                         g.parameter(*ff1_b_))),
                         g.parameter(*ff2_b_));
      if (train && rng) ff = g.dropout(ff, cfg_.dropout, *rng, true);
      Expr r2 = g.layer_norm_cols(g.add(r1, ff), g.parameter(*ln2_g_),
                                  g.parameter(*ln2_b_));
      return g.mean_cols(r2);
    }
    case EncoderKind::kBiLstm: {
      Expr hf = fwd_.zero_state(g), cf = fwd_.zero_state(g);
      for (int t = 0; t < len; ++t) {
        auto [h2, c2] = fwd_.step(g, g.slice_cols(x, t, 1), hf, cf);
        hf = h2;
        cf = c2;
      }
      Expr hb = bwd_.zero_state(g), cb = bwd_.zero_state(g);
      for (int t = len - 1; t >= 0; --t) {
        auto [h2, c2] = bwd_.step(g, g.slice_cols(x, t, 1), hb, cb);
        hb = h2;
        cb = c2;
      }
      return g.concat_rows({hf, hb});
    }
  }
  throw std::logic_error("unreachable");
}

Expr SentenceEncoder::encode(Graph& g, const std::vector<int>& ids, bool train,
                             std::mt19937_64* rng) const {
  std::vector<int> use = ids;
  if (static_cast<int>(use.size()) > cfg_.max_len) use.resize(cfg_.max_len);
  if (use.empty()) return g.zeros(cfg_.output_dim, 1);
  Expr x = g.lookup(*emb_, use);
  return encode_matrix(g, x, train, rng);
}

Eigen::VectorXd SentenceEncoder::encode_ids(const std::vector<int>& ids) const {
  Graph g;
  Expr e = encode(g, ids, /*train=*/false);
  return e.value().col(0);
}

Eigen::VectorXd SentenceEncoder::encode_vector(
    const std::vector<std::string>& tokens) const {
  return encode_ids(vocab_.encode(tokens));
}

void SentenceEncoder::save(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["kind"] = encoder_kind_name(cfg_.kind);
  j["output_dim"] = cfg_.output_dim;
  j["layers"] = cfg_.layers;
  j["heads"] = cfg_.heads;
  j["max_len"] = cfg_.max_len;
  j["batch_size"] = cfg_.batch_size;
  j["learning_rate"] = cfg_.learning_rate;
  j["dropout"] = cfg_.dropout;
  j["vocab_size"] = cfg_.vocab_size;
  j["seed"] = cfg_.seed;
  std::ofstream out(fs::path(dir) / "config.json");
  out << j.dump(2) << "\n";
  vocab_.save((fs::path(dir) / "vocab.txt").string());
  model_.save((fs::path(dir) / "params.bin").string());
}

std::unique_ptr<SentenceEncoder> SentenceEncoder::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "config.json");
  if (!in)
    throw std::runtime_error("encoder checkpoint not found: " + dir);
  nlohmann::ordered_json j;
  in >> j;
  SentenceEncoderConfig cfg;
  cfg.kind = encoder_kind_from_name(j["kind"].get<std::string>());
  cfg.output_dim = j["output_dim"].get<int>();
  cfg.layers = j["layers"].get<int>();
  cfg.heads = j["heads"].get<int>();
  cfg.max_len = j["max_len"].get<int>();
  cfg.batch_size = j["batch_size"].get<int>();
  cfg.learning_rate = j["learning_rate"].get<double>();
  cfg.dropout = j["dropout"].get<double>();
  cfg.vocab_size = j["vocab_size"].get<int>();
  cfg.seed = j["seed"].get<std::uint64_t>();
  Vocabulary vocab =
      Vocabulary::load_file((fs::path(dir) / "vocab.txt").string());
  auto enc = std::make_unique<SentenceEncoder>(cfg, vocab);
  enc->model_.load((fs::path(dir) / "params.bin").string());
  return enc;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>>
adjacent_sentence_pairs(const std::vector<Dialog>& dialogs,
                        const Vocabulary& vocab) {
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  for (const Dialog& d : dialogs) {
    std::vector<std::vector<int>> stream;
    for (const Turn& t : d.turns) {
      stream.push_back(vocab.encode(t.user_tokens));
      stream.push_back(vocab.encode(t.system_tokens));
    }
    for (std::size_t i = 0; i + 1 < stream.size(); ++i)
      if (!stream[i].empty() && !stream[i + 1].empty())
        pairs.emplace_back(stream[i], stream[i + 1]);
  }
  return pairs;
}

double quick_thought_batch_loss(SentenceEncoder& encoder,
                                const std::vector<std::vector<int>>& sentences,
                                const std::vector<int>& successor_index,
                                Graph* out_graph, Expr* out_loss) {
  Graph local;
  Graph& g = out_graph ? *out_graph : local;
  const int b = static_cast<int>(sentences.size());
  std::vector<Expr> embs;
  for (const auto& s : sentences)
    embs.push_back(encoder.encode(g, s, /*train=*/false));
  Expr e = g.concat_cols(embs);  // dim x B
  Expr scores = g.matmul(g.transpose(e), e);  // B x B, symmetric
  Expr logp = g.log_softmax_cols(scores);
  std::vector<int> ids;
  std::vector<double> weights;
  int valid = 0;
  ids.resize(b, 0);
  weights.resize(b, 0.0);
  for (int i = 0; i < b; ++i) {
    if (successor_index[i] >= 0) {
      ids[i] = successor_index[i];
      weights[i] = 1.0;
      ++valid;
    }
  }
  if (valid == 0) throw std::runtime_error("no successor pairs in batch");
  Expr loss = g.scale(g.pick_nll(logp, ids, weights), 1.0 / valid);
  if (out_loss) *out_loss = loss;
  return loss.scalar();
}

QuickThoughtLog train_quick_thought(SentenceEncoder& encoder,
                                    const std::vector<Dialog>& dialogs,
                                    const QuickThoughtOptions& opts) {
  // Sentence stream with within-dialog successor links.
  struct Sent {
    std::vector<int> ids;
    int dialog;
    int pos;
  };
  std::vector<Sent> stream;
  int dlg = 0;
  for (const Dialog& d : dialogs) {
    int pos = 0;
    int count_before = static_cast<int>(stream.size());
    for (const Turn& t : d.turns) {
      auto u = encoder.vocab().encode(t.user_tokens);
      auto s = encoder.vocab().encode(t.system_tokens);
      if (!u.empty()) stream.push_back({u, dlg, pos++});
      if (!s.empty()) stream.push_back({s, dlg, pos++});
    }
    if (static_cast<int>(stream.size()) - count_before < 2)
      throw std::runtime_error(
          "dialog with fewer than 2 sentences: " + d.dialog_id);
    ++dlg;
  }
  std::mt19937_64 rng(opts.seed);
  nn::AdamOptimizer opt(encoder.config().learning_rate);
  QuickThoughtLog log;
  const int bsz = std::min<int>(encoder.config().batch_size,
                                static_cast<int>(stream.size()));
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    // Shuffle window starts, not sentences: successors stay adjacent.
    std::vector<int> starts;
    for (int s = 0; s < static_cast<int>(stream.size()); s += bsz)
      starts.push_back(s);
    std::shuffle(starts.begin(), starts.end(), rng);
    double epoch_loss = 0;
    for (int start : starts) {
      int end = std::min<int>(start + bsz, static_cast<int>(stream.size()));
      if (end - start < 2) continue;
      std::vector<std::vector<int>> batch;
      std::vector<int> succ;
      for (int i = start; i < end; ++i) {
        batch.push_back(stream[i].ids);
        bool has_succ = i + 1 < end && stream[i + 1].dialog == stream[i].dialog;
        succ.push_back(has_succ ? (i + 1 - start) : -1);
      }
      Graph g;
      Expr loss;
      double lv = quick_thought_batch_loss(encoder, batch, succ, &g, &loss);
      epoch_loss += lv;
      g.backward(loss);
      opt.step(encoder.model());
    }
    log.epoch_loss.push_back(epoch_loss / std::max<std::size_t>(1, starts.size()));
  }
  // Final retrieval accuracy over the whole stream in fixed batches.
  long correct = 0, total = 0;
  for (int start = 0; start < static_cast<int>(stream.size()); start += bsz) {
    int end = std::min<int>(start + bsz, static_cast<int>(stream.size()));
    if (end - start < 2) continue;
    Graph g;
    std::vector<Expr> embs;
    for (int i = start; i < end; ++i)
      embs.push_back(encoder.encode(g, stream[i].ids, false));
    Expr e = g.concat_cols(embs);
    Mat scores = e.value().transpose() * e.value();
    for (int i = start; i < end; ++i) {
      if (i + 1 >= end || stream[i + 1].dialog != stream[i].dialog) continue;
      int col = i - start;
      // self tends to score highest under a symmetric dot product; rank
      // the best non-self candidate
      double best = -1e300;
      int best_j = -1;
      for (int jj = 0; jj < end - start; ++jj) {
        if (jj == col) continue;
        if (scores(jj, col) > best) {
          best = scores(jj, col);
          best_j = jj;
        }
      }
      ++total;
      if (best_j == i + 1 - start) ++correct;
    }
  }
  log.final_accuracy = total ? static_cast<double>(correct) / total : 0.0;
  return log;
}

}  // namespace chateval
