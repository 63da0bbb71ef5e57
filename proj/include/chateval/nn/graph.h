// Dynamic computation graph with reverse-mode differentiation over
// Eigen double matrices. Values are computed eagerly at node creation;
// backward() walks the tape in reverse.

#ifndef CHATEVAL_NN_GRAPH_H_
#define CHATEVAL_NN_GRAPH_H_

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace chateval {
namespace nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;
  bool trainable = true;

  void accumulate(const Mat& g) {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    grad += g;
  }
};

// Parameter collection with binary save/load (bit-exact round trip).
class Model {
 public:
  Parameter& add(const std::string& name, int rows, int cols);
  Parameter& add_uniform(const std::string& name, int rows, int cols,
                         double range, std::mt19937_64& rng);
  Parameter& add_glorot(const std::string& name, int rows, int cols,
                        std::mt19937_64& rng);
  Parameter* find(const std::string& name);

  const std::vector<std::unique_ptr<Parameter>>& params() const {
    return params_;
  }
  void zero_grads();
  void set_trainable(bool t);
  std::size_t param_count() const;
  // FNV-1a over raw value bytes; used for freeze/determinism checks.
  std::uint64_t value_hash() const;

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Graph;

struct Node {
  Mat value;
  Mat grad;
  bool needs_grad = false;
  std::function<void()> backward;  // null for leaves
};

// Lightweight handle into a Graph's tape.
class Expr {
 public:
  Expr() = default;
  Expr(Graph* g, Node* n) : g_(g), n_(n) {}
  const Mat& value() const { return n_->value; }
  double scalar() const { return n_->value(0, 0); }
  Node* node() const { return n_; }
  Graph* graph() const { return g_; }
  bool valid() const { return n_ != nullptr; }
  int rows() const { return static_cast<int>(n_->value.rows()); }
  int cols() const { return static_cast<int>(n_->value.cols()); }

 private:
  Graph* g_ = nullptr;
  Node* n_ = nullptr;
};

class Graph {
 public:
  // Leaves.
  Expr input(Mat m);
  Expr zeros(int rows, int cols);
  Expr parameter(Parameter& p);
  // Embedding row lookup: table is |V| x D, result is D x len.
  Expr lookup(Parameter& table, const std::vector<int>& ids);

  // Arithmetic.
  Expr add(Expr a, Expr b);
  Expr sub(Expr a, Expr b);
  Expr neg(Expr a);
  Expr matmul(Expr a, Expr b);
  Expr cmult(Expr a, Expr b);
  Expr scale(Expr a, double s);
  Expr add_scalar(Expr a, double s);
  // b is a column vector broadcast across the columns of a.
  Expr add_bias(Expr a, Expr b);
  Expr affine(Expr w, Expr x, Expr b);  // w*x + b (b broadcast)

  // Nonlinearities.
  Expr tanh(Expr a);
  Expr sigmoid(Expr a);
  Expr relu(Expr a);
  Expr exp(Expr a);
  Expr log(Expr a);

  // Column-wise softmax / log-softmax.
  Expr softmax_cols(Expr a);
  Expr log_softmax_cols(Expr a);

  // Reductions.
  Expr sum_all(Expr a);   // 1x1
  Expr mean_all(Expr a);  // 1x1
  Expr mean_cols(Expr a); // rows x 1
  Expr dot(Expr a, Expr b);  // 1x1, sum of elementwise product

  // Shape ops.
  Expr transpose(Expr a);
  Expr concat_rows(const std::vector<Expr>& xs);
  Expr concat_cols(const std::vector<Expr>& xs);
  Expr slice_rows(Expr a, int start, int n);
  Expr slice_cols(Expr a, int start, int n);

  // -sum_j w_j * log_probs(ids[j], j); log_probs from log_softmax_cols.
  Expr pick_nll(Expr log_probs, const std::vector<int>& ids,
                const std::vector<double>& weights = {});

  // Inverted dropout; identity when !train or rate == 0.
  Expr dropout(Expr a, double rate, std::mt19937_64& rng, bool train);

  // Column-wise layer norm with gain/bias column vectors.
  Expr layer_norm_cols(Expr a, Expr gain, Expr bias, double eps = 1e-6);

  void backward(Expr loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  Node* make(Mat value, bool needs_grad);
  std::deque<Node> nodes_;
};

// Adam with bias correction; updates trainable parameters, zeroes grads.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(Model& model);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t seed = 1469598103934665603ull);

}  // namespace nn
}  // namespace chateval

#endif  // CHATEVAL_NN_GRAPH_H_
