#include "chateval/nn/graph.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace chateval {
namespace nn {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Model

Parameter& Model::add(const std::string& name, int rows, int cols) {
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& Model::add_uniform(const std::string& name, int rows, int cols,
                              double range, std::mt19937_64& rng) {
  Parameter& p = add(name, rows, cols);
  std::uniform_real_distribution<double> dist(-range, range);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) p.value(r, c) = dist(rng);
  return p;
}

Parameter& Model::add_glorot(const std::string& name, int rows, int cols,
                             std::mt19937_64& rng) {
  double range = std::sqrt(6.0 / (rows + cols));
  return add_uniform(name, rows, cols, range, rng);
}

Parameter* Model::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

void Model::zero_grads() {
  for (auto& p : params_) p->grad.resize(0, 0);
}

void Model::set_trainable(bool t) {
  for (auto& p : params_) p->trainable = t;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::uint64_t Model::value_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (auto& p : params_) {
    h = fnv1a64(p->name.data(), p->name.size(), h);
    h = fnv1a64(p->value.data(), sizeof(double) * p->value.size(), h);
  }
  return h;
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  const char magic[4] = {'C', 'E', 'P', 'M'};
  out.write(magic, 4);
  std::uint64_t count = params_.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (auto& p : params_) {
    std::uint32_t len = static_cast<std::uint32_t>(p->name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(p->name.data(), len);
    std::int64_t rows = p->value.rows(), cols = p->value.cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              sizeof(double) * p->value.size());
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CEPM", 4) != 0)
    throw std::runtime_error("bad parameter file: " + path);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (count != params_.size())
    throw std::runtime_error("parameter count mismatch in " + path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    Parameter* p = find(name);
    if (!p) throw std::runtime_error("unknown parameter " + name);
    if (p->value.rows() != rows || p->value.cols() != cols)
      throw std::runtime_error("shape mismatch for parameter " + name);
    in.read(reinterpret_cast<char*>(p->value.data()),
            sizeof(double) * rows * cols);
  }
  if (!in) throw std::runtime_error("truncated parameter file: " + path);
}

// ---------------------------------------------------------------------------
// Graph

Node* Graph::make(Mat value, bool needs_grad) {
  nodes_.emplace_back();
  Node* n = &nodes_.back();
  n->value = std::move(value);
  n->needs_grad = needs_grad;
  return n;
}

static void acc(Node* n, const Mat& g) {
  if (!n->needs_grad) return;
  if (n->grad.size() == 0) n->grad = Mat::Zero(n->value.rows(), n->value.cols());
  n->grad += g;
}

Expr Graph::input(Mat m) { return Expr(this, make(std::move(m), false)); }

Expr Graph::zeros(int rows, int cols) {
  return Expr(this, make(Mat::Zero(rows, cols), false));
}

Expr Graph::parameter(Parameter& p) {
  Node* n = make(p.value, p.trainable);
  Parameter* pp = &p;
  n->backward = [n, pp]() { pp->accumulate(n->grad); };
  return Expr(this, n);
}

Expr Graph::lookup(Parameter& table, const std::vector<int>& ids) {
  const int d = static_cast<int>(table.value.cols());
  Mat out(d, ids.size());
  for (std::size_t j = 0; j < ids.size(); ++j)
    out.col(j) = table.value.row(ids[j]).transpose();
  Node* n = make(std::move(out), table.trainable);
  if (table.trainable) {
    Parameter* pp = &table;
    std::vector<int> idv = ids;
    n->backward = [n, pp, idv]() {
      if (n->grad.size() == 0) return;
      if (pp->grad.size() == 0)
        pp->grad = Mat::Zero(pp->value.rows(), pp->value.cols());
      for (std::size_t j = 0; j < idv.size(); ++j)
        pp->grad.row(idv[j]) += n->grad.col(j).transpose();
    };
  }
  return Expr(this, n);
}

Expr Graph::add(Expr a, Expr b) {
  Node *na = a.node(), *nb = b.node();
  Node* n = make(na->value + nb->value, na->needs_grad || nb->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, nb]() {
      acc(na, n->grad);
      acc(nb, n->grad);
    };
  return Expr(this, n);
}

Expr Graph::sub(Expr a, Expr b) {
  Node *na = a.node(), *nb = b.node();
  Node* n = make(na->value - nb->value, na->needs_grad || nb->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, nb]() {
      acc(na, n->grad);
      acc(nb, -n->grad);
    };
  return Expr(this, n);
}

Expr Graph::neg(Expr a) { return scale(a, -1.0); }

Expr Graph::matmul(Expr a, Expr b) {
  Node *na = a.node(), *nb = b.node();
  Node* n = make(na->value * nb->value, na->needs_grad || nb->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, nb]() {
      if (na->needs_grad) acc(na, n->grad * nb->value.transpose());
      if (nb->needs_grad) acc(nb, na->value.transpose() * n->grad);
    };
  return Expr(this, n);
}

Expr Graph::cmult(Expr a, Expr b) {
  Node *na = a.node(), *nb = b.node();
  Node* n = make(na->value.cwiseProduct(nb->value),
                 na->needs_grad || nb->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, nb]() {
      if (na->needs_grad) acc(na, n->grad.cwiseProduct(nb->value));
      if (nb->needs_grad) acc(nb, n->grad.cwiseProduct(na->value));
    };
  return Expr(this, n);
}

Expr Graph::scale(Expr a, double s) {
  Node* na = a.node();
  Node* n = make(na->value * s, na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, s]() { acc(na, n->grad * s); };
  return Expr(this, n);
}

Expr Graph::add_scalar(Expr a, double s) {
  Node* na = a.node();
  Node* n = make(na->value.array() + s, na->needs_grad);
  if (n->needs_grad) n->backward = [n, na]() { acc(na, n->grad); };
  return Expr(this, n);
}

Expr Graph::add_bias(Expr a, Expr b) {
  Node *na = a.node(), *nb = b.node();
  Mat out = na->value;
  out.colwise() += Eigen::VectorXd(nb->value.col(0));
  Node* n = make(std::move(out), na->needs_grad || nb->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, nb]() {
      if (na->needs_grad) acc(na, n->grad);
      if (nb->needs_grad) acc(nb, n->grad.rowwise().sum());
    };
  return Expr(this, n);
}

Expr Graph::affine(Expr w, Expr x, Expr b) {
  return add_bias(matmul(w, x), b);
}

Expr Graph::tanh(Expr a) {
  Node* na = a.node();
  Node* n = make(na->value.array().tanh(), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() {
      acc(na, (n->grad.array() * (1.0 - n->value.array().square())).matrix());
    };
  return Expr(this, n);
}

Expr Graph::sigmoid(Expr a) {
  Node* na = a.node();
  Node* n = make((1.0 / (1.0 + (-na->value.array()).exp())).matrix(),
                 na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() {
      acc(na,
          (n->grad.array() * n->value.array() * (1.0 - n->value.array()))
              .matrix());
    };
  return Expr(this, n);
}

Expr Graph::relu(Expr a) {
  Node* na = a.node();
  Node* n = make(na->value.cwiseMax(0.0), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() {
      acc(na, (n->grad.array() * (na->value.array() > 0.0).cast<double>())
                  .matrix());
    };
  return Expr(this, n);
}

Expr Graph::exp(Expr a) {
  Node* na = a.node();
  Node* n = make(na->value.array().exp(), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() {
      acc(na, (n->grad.array() * n->value.array()).matrix());
    };
  return Expr(this, n);
}

Expr Graph::log(Expr a) {
  Node* na = a.node();
  Node* n = make(na->value.array().log(), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() {
      acc(na, (n->grad.array() / na->value.array()).matrix());
    };
  return Expr(this, n);
}

Expr Graph::softmax_cols(Expr a) {
  Node* na = a.node();
  Mat out(na->value.rows(), na->value.cols());
  for (int c = 0; c < na->value.cols(); ++c) {
    Eigen::ArrayXd col = na->value.col(c).array();
    col -= col.maxCoeff();
    Eigen::ArrayXd e = col.exp();
    out.col(c) = (e / e.sum()).matrix();
  }
  Node* n = make(std::move(out), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() {
      Mat g(n->value.rows(), n->value.cols());
      for (int c = 0; c < n->value.cols(); ++c) {
        const auto y = n->value.col(c).array();
        const auto dy = n->grad.col(c).array();
        double s = (y * dy).sum();
        g.col(c) = (y * (dy - s)).matrix();
      }
      acc(na, g);
    };
  return Expr(this, n);
}

Expr Graph::log_softmax_cols(Expr a) {
  Node* na = a.node();
  Mat out(na->value.rows(), na->value.cols());
  for (int c = 0; c < na->value.cols(); ++c) {
    Eigen::ArrayXd col = na->value.col(c).array();
    double m = col.maxCoeff();
    double lse = m + std::log((col - m).exp().sum());
    out.col(c) = (col - lse).matrix();
  }
  Node* n = make(std::move(out), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() {
      Mat g(n->value.rows(), n->value.cols());
      for (int c = 0; c < n->value.cols(); ++c) {
        const auto dy = n->grad.col(c).array();
        double s = dy.sum();
        g.col(c) = (dy - n->value.col(c).array().exp() * s).matrix();
      }
      acc(na, g);
    };
  return Expr(this, n);
}

Expr Graph::sum_all(Expr a) {
  Node* na = a.node();
  Mat out(1, 1);
  out(0, 0) = na->value.sum();
  Node* n = make(std::move(out), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() {
      acc(na, Mat::Constant(na->value.rows(), na->value.cols(), n->grad(0, 0)));
    };
  return Expr(this, n);
}

Expr Graph::mean_all(Expr a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.node()->value.size()));
}

Expr Graph::mean_cols(Expr a) {
  Node* na = a.node();
  const double inv = 1.0 / static_cast<double>(na->value.cols());
  Node* n = make(na->value.rowwise().sum() * inv, na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, inv]() {
      Mat g = (n->grad * inv).replicate(1, na->value.cols());
      acc(na, g);
    };
  return Expr(this, n);
}

Expr Graph::dot(Expr a, Expr b) { return sum_all(cmult(a, b)); }

Expr Graph::transpose(Expr a) {
  Node* na = a.node();
  Node* n = make(na->value.transpose(), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na]() { acc(na, n->grad.transpose()); };
  return Expr(this, n);
}

Expr Graph::concat_rows(const std::vector<Expr>& xs) {
  int rows = 0;
  const int cols = xs.front().cols();
  bool ng = false;
  for (const Expr& x : xs) {
    rows += x.rows();
    ng = ng || x.node()->needs_grad;
  }
  Mat out(rows, cols);
  int r = 0;
  for (const Expr& x : xs) {
    out.middleRows(r, x.rows()) = x.value();
    r += x.rows();
  }
  Node* n = make(std::move(out), ng);
  if (ng) {
    std::vector<Node*> ins;
    for (const Expr& x : xs) ins.push_back(x.node());
    n->backward = [n, ins]() {
      int r = 0;
      for (Node* in : ins) {
        acc(in, n->grad.middleRows(r, in->value.rows()));
        r += static_cast<int>(in->value.rows());
      }
    };
  }
  return Expr(this, n);
}

Expr Graph::concat_cols(const std::vector<Expr>& xs) {
  int cols = 0;
  const int rows = xs.front().rows();
  bool ng = false;
  for (const Expr& x : xs) {
    cols += x.cols();
    ng = ng || x.node()->needs_grad;
  }
  Mat out(rows, cols);
  int c = 0;
  for (const Expr& x : xs) {
    out.middleCols(c, x.cols()) = x.value();
    c += x.cols();
  }
  Node* n = make(std::move(out), ng);
  if (ng) {
    std::vector<Node*> ins;
    for (const Expr& x : xs) ins.push_back(x.node());
    n->backward = [n, ins]() {
      int c = 0;
      for (Node* in : ins) {
        acc(in, n->grad.middleCols(c, in->value.cols()));
        c += static_cast<int>(in->value.cols());
      }
    };
  }
  return Expr(this, n);
}

Expr Graph::slice_rows(Expr a, int start, int nr) {
  Node* na = a.node();
  Node* n = make(na->value.middleRows(start, nr), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, start, nr]() {
      Mat g = Mat::Zero(na->value.rows(), na->value.cols());
      g.middleRows(start, nr) = n->grad;
      acc(na, g);
    };
  return Expr(this, n);
}

Expr Graph::slice_cols(Expr a, int start, int nc) {
  Node* na = a.node();
  Node* n = make(na->value.middleCols(start, nc), na->needs_grad);
  if (n->needs_grad)
    n->backward = [n, na, start, nc]() {
      Mat g = Mat::Zero(na->value.rows(), na->value.cols());
      g.middleCols(start, nc) = n->grad;
      acc(na, g);
    };
  return Expr(this, n);
}

Expr Graph::pick_nll(Expr log_probs, const std::vector<int>& ids,
                     const std::vector<double>& weights) {
  Node* na = log_probs.node();
  double loss = 0.0;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    double w = weights.empty() ? 1.0 : weights[j];
    loss -= w * na->value(ids[j], j);
  }
  Mat out(1, 1);
  out(0, 0) = loss;
  Node* n = make(std::move(out), na->needs_grad);
  if (n->needs_grad) {
    std::vector<int> idv = ids;
    std::vector<double> wv = weights;
    n->backward = [n, na, idv, wv]() {
      Mat g = Mat::Zero(na->value.rows(), na->value.cols());
      for (std::size_t j = 0; j < idv.size(); ++j) {
        double w = wv.empty() ? 1.0 : wv[j];
        g(idv[j], j) = -w * n->grad(0, 0);
      }
      acc(na, g);
    };
  }
  return Expr(this, n);
}

Expr Graph::dropout(Expr a, double rate, std::mt19937_64& rng, bool train) {
  if (!train || rate <= 0.0) return a;
  Node* na = a.node();
  std::bernoulli_distribution keep(1.0 - rate);
  Mat mask(na->value.rows(), na->value.cols());
  const double s = 1.0 / (1.0 - rate);
  for (int c = 0; c < mask.cols(); ++c)
    for (int r = 0; r < mask.rows(); ++r) mask(r, c) = keep(rng) ? s : 0.0;
  Node* n = make(na->value.cwiseProduct(mask), na->needs_grad);
  if (n->needs_grad) {
    auto m = std::make_shared<Mat>(std::move(mask));
    n->backward = [n, na, m]() { acc(na, n->grad.cwiseProduct(*m)); };
  }
  return Expr(this, n);
}

Expr Graph::layer_norm_cols(Expr a, Expr gain, Expr bias, double eps) {
  Node *na = a.node(), *ng = gain.node(), *nb = bias.node();
  const int rows = static_cast<int>(na->value.rows());
  const int cols = static_cast<int>(na->value.cols());
  Mat xhat(rows, cols);
  std::vector<double> inv_sigma(cols);
  for (int c = 0; c < cols; ++c) {
    double mu = na->value.col(c).mean();
    double var = (na->value.col(c).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[c] = is;
    xhat.col(c) = ((na->value.col(c).array() - mu) * is).matrix();
  }
  Mat out(rows, cols);
  for (int c = 0; c < cols; ++c)
    out.col(c) = xhat.col(c).cwiseProduct(ng->value.col(0)) + nb->value.col(0);
  bool needs = na->needs_grad || ng->needs_grad || nb->needs_grad;
  Node* n = make(std::move(out), needs);
  if (needs) {
    auto xh = std::make_shared<Mat>(std::move(xhat));
    auto is = std::make_shared<std::vector<double>>(std::move(inv_sigma));
    n->backward = [n, na, ng, nb, xh, is]() {
      const int rows = static_cast<int>(na->value.rows());
      const int cols = static_cast<int>(na->value.cols());
      if (ng->needs_grad) {
        Mat gg = Mat::Zero(rows, 1);
        for (int c = 0; c < cols; ++c)
          gg.col(0) += n->grad.col(c).cwiseProduct(xh->col(c));
        acc(ng, gg);
      }
      if (nb->needs_grad) acc(nb, n->grad.rowwise().sum());
      if (na->needs_grad) {
        Mat gx(rows, cols);
        for (int c = 0; c < cols; ++c) {
          Eigen::ArrayXd dxhat =
              (n->grad.col(c).cwiseProduct(ng->value.col(0))).array();
          Eigen::ArrayXd x = xh->col(c).array();
          double m1 = dxhat.mean();
          double m2 = (dxhat * x).mean();
          gx.col(c) = ((dxhat - m1 - x * m2) * (*is)[c]).matrix();
        }
        acc(na, gx);
      }
    };
  }
  return Expr(this, n);
}

void Graph::backward(Expr loss) {
  Node* top = loss.node();
  if (top->value.size() != 1)
    throw std::runtime_error("backward requires a scalar loss node");
  top->grad = Mat::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (n.needs_grad && n.grad.size() != 0 && n.backward) n.backward();
  }
}

// ---------------------------------------------------------------------------
// Adam

void AdamOptimizer::step(Model& model) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (auto& p : model.params()) {
    if (!p->trainable || p->grad.size() == 0) continue;
    if (p->adam_m.size() == 0) {
      p->adam_m = Mat::Zero(p->value.rows(), p->value.cols());
      p->adam_v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    p->adam_m = beta1_ * p->adam_m + (1.0 - beta1_) * p->grad;
    p->adam_v = beta2_ * p->adam_v.array().matrix() +
                (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    Mat mhat = p->adam_m / bc1;
    Mat vhat = p->adam_v / bc2;
    p->value.array() -=
        lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
  model.zero_grads();
}

}  // namespace nn
}  // namespace chateval
