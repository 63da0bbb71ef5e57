#include "chateval/generator.h"

#include "chateval/beam.h"

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

std::vector<int> build_generator_input(const Dialog& dialog, int turn_index,
                                       const Vocabulary& vocab) {
  if (turn_index < 0 || turn_index >= static_cast<int>(dialog.turns.size()))
    throw std::out_of_range("turn_index out of range");
  std::vector<std::vector<int>> segments;
  if (turn_index > 0) {
    const Turn& prev = dialog.turns[turn_index - 1];
    segments.push_back(vocab.encode(prev.user_tokens));
    segments.push_back(vocab.encode(prev.system_tokens));
  }
  segments.push_back(vocab.encode(dialog.turns[turn_index].user_tokens));
  std::vector<int> out;
  bool first = true;
  for (const auto& seg : segments) {
    if (!first) out.push_back(Vocabulary::kTransition);
    first = false;
    out.insert(out.end(), seg.begin(), seg.end());
  }
  if (out.empty()) out.push_back(Vocabulary::kUnk);
  return out;
}

Generator::Generator(const GeneratorConfig& cfg, const Vocabulary& vocab)
    : cfg_(cfg), vocab_(vocab) {
  std::mt19937_64 rng(cfg_.seed);
  emb_ = &model_.add_uniform("emb", vocab_.size(), cfg_.emb_dim, 0.1, rng);
  enc_.init(model_, "enc", cfg_.emb_dim, cfg_.hidden, rng);
  dec_.init(model_, "dec", cfg_.emb_dim, cfg_.hidden, rng);
  attn_wc_ = &model_.add_glorot("attn_wc", cfg_.hidden, 2 * cfg_.hidden, rng);
  out_w_ = &model_.add_glorot("out_w", vocab_.size(), cfg_.hidden, rng);
  out_b_ = &model_.add("out_b", vocab_.size(), 1);
}

Generator::Encoded Generator::encode(Graph& g,
                                     const std::vector<int>& input) const {
  if (input.empty()) throw std::invalid_argument("empty generator input");
  Expr h = enc_.zero_state(g);
  std::vector<Expr> states;
  Expr x = g.lookup(*emb_, input);
  for (std::size_t t = 0; t < input.size(); ++t) {
    h = enc_.step(g, g.slice_cols(x, static_cast<int>(t), 1), h);
    states.push_back(h);
  }
  return {g.concat_cols(states), h};
}

Generator::StepState Generator::decode_step(Graph& g, const Encoded& enc,
                                            int prev_token,
                                            Expr prev_hidden) const {
  Expr x = g.lookup(*emb_, {prev_token});
  Expr h = dec_.step(g, x, prev_hidden);
  // Luong dot attention over encoder states.
  Expr scores = g.matmul(g.transpose(enc.states), h);  // src_len x 1
  Expr attn = g.softmax_cols(scores);
  Expr ctx = g.matmul(enc.states, attn);  // hidden x 1
  Expr htil = g.tanh(
      g.matmul(g.parameter(*attn_wc_), g.concat_rows({ctx, h})));
  Expr logits = g.affine(g.parameter(*out_w_), htil, g.parameter(*out_b_));
  StepState st;
  st.hidden = h;
  st.log_probs = g.log_softmax_cols(logits);
  st.probs = g.softmax_cols(logits);
  st.attention = attn;
  return st;
}

Expr Generator::example_loss(Graph& g, const std::vector<int>& input,
                             const std::vector<int>& target,
                             Expr* out_logprobs,
                             std::vector<Expr>* out_softmax) const {
  Encoded enc = encode(g, input);
  std::vector<int> decoder_targets = target;
  // trailing padding carries no signal; eos follows the last real token
  while (!decoder_targets.empty() &&
         decoder_targets.back() == Vocabulary::kPad)
    decoder_targets.pop_back();
  decoder_targets.push_back(Vocabulary::kEos);
  Expr h = enc.last;
  int prev = Vocabulary::kBos;
  std::vector<Expr> logps;
  std::vector<int> pick_ids;
  std::vector<double> weights;
  for (std::size_t i = 0; i < decoder_targets.size(); ++i) {
    StepState st = decode_step(g, enc, prev, h);
    h = st.hidden;
    logps.push_back(st.log_probs);
    if (out_softmax) out_softmax->push_back(st.probs);
    int tgt = decoder_targets[i];
    bool masked = (tgt == Vocabulary::kPad);
    pick_ids.push_back(masked ? 0 : tgt);
    weights.push_back(masked ? 0.0 : 1.0);
    // teacher forcing feeds the reference token even at padded positions
    prev = tgt;
  }
  Expr all = g.concat_cols(logps);
  if (out_logprobs) *out_logprobs = all;
  return g.pick_nll(all, pick_ids, weights);
}

TrainingLog Generator::train(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>&
        train_set,
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>&
        dev_set) {
  if (train_set.empty()) throw std::runtime_error("empty training set");
  std::mt19937_64 rng(cfg_.seed + 17);
  nn::AdamOptimizer opt(cfg_.learning_rate);
  TrainingLog log;
  double best_dev = 1e300;
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total_loss = 0;
    long total_tokens = 0;
    std::size_t b = 0;
    while (b < order.size()) {
      std::size_t e = std::min(order.size(),
                               b + static_cast<std::size_t>(cfg_.batch_size));
      Graph g;
      std::vector<Expr> losses;
      long batch_tokens = 0;
      for (std::size_t i = b; i < e; ++i) {
        const auto& [input, target] = train_set[order[i]];
        losses.push_back(example_loss(g, input, target));
        batch_tokens += static_cast<long>(target.size()) + 1;
      }
      Expr sum = losses.size() == 1 ? losses[0]
                                    : g.sum_all(g.concat_cols(losses));
      Expr loss = g.scale(sum, 1.0 / batch_tokens);
      total_loss += sum.scalar();
      total_tokens += batch_tokens;
      g.backward(loss);
      opt.step(model_);
      b = e;
    }
    log.train_loss.push_back(total_loss / total_tokens);
    double dev = log.train_loss.back();
    if (!dev_set.empty()) {
      double dl = 0;
      long dt = 0;
      for (const auto& [input, target] : dev_set) {
        Graph g;
        dl += example_loss(g, input, target).scalar();
        dt += static_cast<long>(target.size()) + 1;
      }
      dev = dl / dt;
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

namespace {

// Adapts the decoder to the handle-based step interface of beam.h.
struct DecoderStepper {
  const Generator* gen;
  Graph* g;
  const Generator::Encoded* enc;
  std::vector<Expr> hiddens;

  DecoderStepper(const Generator* gen, Graph* g,
                 const Generator::Encoded* enc)
      : gen(gen), g(g), enc(enc) {
    hiddens.push_back(enc->last);
  }

  std::pair<Eigen::VectorXd, int> operator()(int state, int prev) {
    Generator::StepState st =
        gen->decode_step(*g, *enc, prev, hiddens[state]);
    hiddens.push_back(st.hidden);
    return {st.log_probs.value().col(0),
            static_cast<int>(hiddens.size()) - 1};
  }
};

}  // namespace

std::vector<int> Generator::decode_greedy(const std::vector<int>& input) const {
  Graph g;
  Encoded enc = encode(g, input);
  DecoderStepper stepper(this, &g, &enc);
  return greedy_decode_core(std::ref(stepper), Vocabulary::kBos,
                            Vocabulary::kEos, cfg_.max_decode_len);
}

NBestList Generator::beam_search(const std::vector<int>& input, int beam_width,
                                 int max_len) const {
  Graph g;
  Encoded enc = encode(g, input);
  DecoderStepper stepper(this, &g, &enc);
  auto raw = beam_search_core(std::ref(stepper), Vocabulary::kBos,
                              Vocabulary::kEos, beam_width, max_len,
                              cfg_.length_normalize);
  NBestList out;
  for (auto& c : raw) {
    Candidate cand;
    cand.ids = std::move(c.ids);
    cand.log_prob = c.log_prob;
    cand.score = c.score;
    out.candidates.push_back(std::move(cand));
  }
  return out;
}

std::vector<Expr> Generator::decode_soft_expr(
    Graph& g, const std::vector<int>& input,
    const std::vector<int>& target) const {
  if (target.empty()) throw std::invalid_argument("empty target");
  Encoded enc = encode(g, input);
  std::vector<int> decoder_targets = target;
  decoder_targets.push_back(Vocabulary::kEos);
  Expr h = enc.last;
  int prev = Vocabulary::kBos;
  std::vector<Expr> cols;
  for (std::size_t i = 0; i < decoder_targets.size(); ++i) {
    StepState st = decode_step(g, enc, prev, h);
    h = st.hidden;
    cols.push_back(st.probs);
    prev = decoder_targets[i];
  }
  return cols;
}

std::vector<Expr> Generator::decode_soft_free_expr(
    Graph& g, const std::vector<int>& input, int max_len) const {
  Encoded enc = encode(g, input);
  Expr h = enc.last;
  int prev = Vocabulary::kBos;
  std::vector<Expr> cols;
  for (int t = 0; t < max_len; ++t) {
    StepState st = decode_step(g, enc, prev, h);
    h = st.hidden;
    cols.push_back(st.probs);
    Eigen::Index best = 0;
    st.probs.value().col(0).maxCoeff(&best);
    if (static_cast<int>(best) == Vocabulary::kEos) break;
    prev = static_cast<int>(best);
  }
  return cols;
}

SoftDecodeOutput Generator::decode_soft(const std::vector<int>& input,
                                        const std::vector<int>& target) const {
  Graph g;
  auto cols = decode_soft_expr(g, input, target);
  SoftDecodeOutput out;
  out.q.resize(vocab_.size(), cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i)
    out.q.col(i) = cols[i].value().col(0);
  return out;
}

double Generator::perplexity(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& set)
    const {
  double loss = 0;
  long tokens = 0;
  for (const auto& [input, target] : set) {
    Graph g;
    loss += example_loss(g, input, target).scalar();
    tokens += static_cast<long>(target.size()) + 1;
  }
  return std::exp(loss / tokens);
}

void Generator::save(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["hidden"] = cfg_.hidden;
  j["emb_dim"] = cfg_.emb_dim;
  j["vocab_size"] = cfg_.vocab_size;
  j["batch_size"] = cfg_.batch_size;
  j["learning_rate"] = cfg_.learning_rate;
  j["max_decode_len"] = cfg_.max_decode_len;
  j["beam_width"] = cfg_.beam_width;
  j["length_normalize"] = cfg_.length_normalize;
  j["max_epochs"] = cfg_.max_epochs;
  j["patience"] = cfg_.patience;
  j["seed"] = cfg_.seed;
  std::ofstream out(fs::path(dir) / "config.json");
  out << j.dump(2) << "\n";
  vocab_.save((fs::path(dir) / "vocab.txt").string());
  model_.save((fs::path(dir) / "params.bin").string());
}

std::unique_ptr<Generator> Generator::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "config.json");
  if (!in) throw std::runtime_error("generator checkpoint not found: " + dir);
  nlohmann::ordered_json j;
  in >> j;
  GeneratorConfig cfg;
  cfg.hidden = j["hidden"].get<int>();
  cfg.emb_dim = j["emb_dim"].get<int>();
  cfg.vocab_size = j["vocab_size"].get<int>();
  cfg.batch_size = j["batch_size"].get<int>();
  cfg.learning_rate = j["learning_rate"].get<double>();
  cfg.max_decode_len = j["max_decode_len"].get<int>();
  cfg.beam_width = j["beam_width"].get<int>();
  cfg.length_normalize = j["length_normalize"].get<bool>();
  cfg.max_epochs = j["max_epochs"].get<int>();
  cfg.patience = j["patience"].get<int>();
  cfg.seed = j["seed"].get<std::uint64_t>();
  Vocabulary vocab =
      Vocabulary::load_file((fs::path(dir) / "vocab.txt").string());
  auto gen = std::make_unique<Generator>(cfg, vocab);
  gen->model_.load((fs::path(dir) / "params.bin").string());
  return gen;
}

}  // namespace chateval
