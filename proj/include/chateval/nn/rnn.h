// GRU and LSTM cells built from graph primitives.

#ifndef CHATEVAL_NN_RNN_H_
#define CHATEVAL_NN_RNN_H_

#include <string>
#include <utility>

#include "chateval/nn/graph.h"

namespace chateval {
namespace nn {

struct GRUCell {
  int input_dim = 0;
  int hidden_dim = 0;
  Parameter* wz = nullptr;
  Parameter* uz = nullptr;
  Parameter* bz = nullptr;
  Parameter* wr = nullptr;
  Parameter* ur = nullptr;
  Parameter* br = nullptr;
  Parameter* wh = nullptr;
  Parameter* uh = nullptr;
  Parameter* bh = nullptr;

  void init(Model& m, const std::string& prefix, int input, int hidden,
            std::mt19937_64& rng);
  // x: input_dim x B, h: hidden_dim x B -> hidden_dim x B
  Expr step(Graph& g, Expr x, Expr h) const;
  Expr zero_state(Graph& g, int batch = 1) const;
};

struct LSTMCell {
  int input_dim = 0;
  int hidden_dim = 0;
  // gate order: input, forget, output, cell candidate
  Parameter* wi = nullptr;
  Parameter* ui = nullptr;
  Parameter* bi = nullptr;
  Parameter* wf = nullptr;
  Parameter* uf = nullptr;
  Parameter* bf = nullptr;
  Parameter* wo = nullptr;
  Parameter* uo = nullptr;
  Parameter* bo = nullptr;
  Parameter* wc = nullptr;
  Parameter* uc = nullptr;
  Parameter* bc = nullptr;

  void init(Model& m, const std::string& prefix, int input, int hidden,
            std::mt19937_64& rng);
  // returns (h', c')
  std::pair<Expr, Expr> step(Graph& g, Expr x, Expr h, Expr c) const;
  Expr zero_state(Graph& g, int batch = 1) const;
};

}  // namespace nn
}  // namespace chateval

#endif  // CHATEVAL_NN_RNN_H_
