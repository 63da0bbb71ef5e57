#include "chateval/nn/rnn.h"

namespace chateval {
namespace nn {

void GRUCell::init(Model& m, const std::string& prefix, int input, int hidden,
                   std::mt19937_64& rng) {
  input_dim = input;
  hidden_dim = hidden;
  wz = &m.add_glorot(prefix + ".wz", hidden, input, rng);
  uz = &m.add_glorot(prefix + ".uz", hidden, hidden, rng);
  bz = &m.add(prefix + ".bz", hidden, 1);
  wr = &m.add_glorot(prefix + ".wr", hidden, input, rng);
  ur = &m.add_glorot(prefix + ".ur", hidden, hidden, rng);
  br = &m.add(prefix + ".br", hidden, 1);
  wh = &m.add_glorot(prefix + ".wh", hidden, input, rng);
  uh = &m.add_glorot(prefix + ".uh", hidden, hidden, rng);
  bh = &m.add(prefix + ".bh", hidden, 1);
}

Expr GRUCell::step(Graph& g, Expr x, Expr h) const {
  Expr z = g.sigmoid(g.add_bias(
      g.add(g.matmul(g.parameter(*wz), x), g.matmul(g.parameter(*uz), h)),
      g.parameter(*bz)));
  Expr r = g.sigmoid(g.add_bias(
      g.add(g.matmul(g.parameter(*wr), x), g.matmul(g.parameter(*ur), h)),
      g.parameter(*br)));
  Expr cand = g.tanh(g.add_bias(
      g.add(g.matmul(g.parameter(*wh), x),
            g.matmul(g.parameter(*uh), g.cmult(r, h))),
      g.parameter(*bh)));
  // h' = (1-z) o h + z o cand
  Expr one_minus_z = g.add_scalar(g.neg(z), 1.0);
  return g.add(g.cmult(one_minus_z, h), g.cmult(z, cand));
}

Expr GRUCell::zero_state(Graph& g, int batch) const {
  return g.zeros(hidden_dim, batch);
}

void LSTMCell::init(Model& m, const std::string& prefix, int input, int hidden,
                    std::mt19937_64& rng) {
  input_dim = input;
  hidden_dim = hidden;
  wi = &m.add_glorot(prefix + ".wi", hidden, input, rng);
  ui = &m.add_glorot(prefix + ".ui", hidden, hidden, rng);
  bi = &m.add(prefix + ".bi", hidden, 1);
  wf = &m.add_glorot(prefix + ".wf", hidden, input, rng);
  uf = &m.add_glorot(prefix + ".uf", hidden, hidden, rng);
  bf = &m.add(prefix + ".bf", hidden, 1);
  wo = &m.add_glorot(prefix + ".wo", hidden, input, rng);
  uo = &m.add_glorot(prefix + ".uo", hidden, hidden, rng);
  bo = &m.add(prefix + ".bo", hidden, 1);
  wc = &m.add_glorot(prefix + ".wc", hidden, input, rng);
  uc = &m.add_glorot(prefix + ".uc", hidden, hidden, rng);
  bc = &m.add(prefix + ".bc", hidden, 1);
}

std::pair<Expr, Expr> LSTMCell::step(Graph& g, Expr x, Expr h, Expr c) const {
  auto gate = [&](Parameter* w, Parameter* u, Parameter* b) {
    return g.add_bias(
        g.add(g.matmul(g.parameter(*w), x), g.matmul(g.parameter(*u), h)),
        g.parameter(*b));
  };
  Expr i = g.sigmoid(gate(wi, ui, bi));
  Expr f = g.sigmoid(gate(wf, uf, bf));
  Expr o = g.sigmoid(gate(wo, uo, bo));
  Expr cand = g.tanh(gate(wc, uc, bc));
  Expr c2 = g.add(g.cmult(f, c), g.cmult(i, cand));
  Expr h2 = g.cmult(o, g.tanh(c2));
  return {h2, c2};
}

Expr LSTMCell::zero_state(Graph& g, int batch) const {
  return g.zeros(hidden_dim, batch);
}

}  // namespace nn
}  // namespace chateval
