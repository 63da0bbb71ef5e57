#include "chateval/beam.h"

#include <algorithm>
#include <stdexcept>

namespace chateval {

namespace {

bool candidate_less(const BeamCandidate& a, const BeamCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.ids < b.ids;  // deterministic tie-break: lexicographic by ids
}

}  // namespace

std::vector<BeamCandidate> beam_search_core(const BeamStepFn& step, int bos_id,
                                            int eos_id, int beam_width,
                                            int max_len,
                                            bool length_normalize) {
  if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  struct Hyp {
    std::vector<int> ids;
    double log_prob = 0;
    int state = 0;
    int prev;
  };
  std::vector<Hyp> beam;
  beam.push_back({{}, 0.0, 0, bos_id});
  std::vector<BeamCandidate> finished;

  for (int t = 0; t < max_len && !beam.empty(); ++t) {
    struct Ext {
      double log_prob;
      int from;
      int tok;
      int state;
    };
    std::vector<Ext> exts;
    for (std::size_t bi = 0; bi < beam.size(); ++bi) {
      auto [logp, state] = step(beam[bi].state, beam[bi].prev);
      for (int v = 0; v < logp.size(); ++v)
        exts.push_back(
            {beam[bi].log_prob + logp(v), static_cast<int>(bi), v, state});
    }
    std::stable_sort(exts.begin(), exts.end(), [](const Ext& a, const Ext& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.from != b.from) return a.from < b.from;
      return a.tok < b.tok;
    });
    std::vector<Hyp> next;
    int slots = 0;
    for (const Ext& ex : exts) {
      if (slots >= beam_width) break;
      ++slots;
      if (ex.tok == eos_id) {
        BeamCandidate c;
        c.ids = beam[ex.from].ids;
        c.log_prob = ex.log_prob;
        finished.push_back(std::move(c));
        continue;
      }
      Hyp h;
      h.ids = beam[ex.from].ids;
      h.ids.push_back(ex.tok);
      h.log_prob = ex.log_prob;
      h.state = ex.state;
      h.prev = ex.tok;
      next.push_back(std::move(h));
    }
    beam = std::move(next);
    if (t == max_len - 1) {
      for (Hyp& h : beam) {
        BeamCandidate c;
        c.ids = std::move(h.ids);
        c.log_prob = h.log_prob;
        finished.push_back(std::move(c));
      }
      beam.clear();
    }
  }
  for (BeamCandidate& c : finished)
    c.score = length_normalize && !c.ids.empty()
                  ? c.log_prob / static_cast<double>(c.ids.size() + 1)
                  : c.log_prob;
  std::stable_sort(finished.begin(), finished.end(), candidate_less);
  if (static_cast<int>(finished.size()) > beam_width)
    finished.resize(beam_width);
  return finished;
}

std::vector<int> greedy_decode_core(const BeamStepFn& step, int bos_id,
                                    int eos_id, int max_len) {
  std::vector<int> out;
  int state = 0;
  int prev = bos_id;
  for (int t = 0; t < max_len; ++t) {
    auto [logp, next_state] = step(state, prev);
    Eigen::Index best = 0;
    logp.maxCoeff(&best);  // first maximum = lowest token id on ties
    if (static_cast<int>(best) == eos_id) break;
    out.push_back(static_cast<int>(best));
    prev = static_cast<int>(best);
    state = next_state;
  }
  return out;
}

}  // namespace chateval
