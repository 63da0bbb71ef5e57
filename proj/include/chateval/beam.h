// Model-agnostic beam search over a step function. The generator wraps
// this; tests drive it with closed-form toy models.

#ifndef CHATEVAL_BEAM_H_
#define CHATEVAL_BEAM_H_

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace chateval {

struct BeamCandidate {
  std::vector<int> ids;  // without BOS/EOS
  double log_prob = 0;
  double score = 0;
};

// step(state, prev_token) -> (per-token log-probs, successor state handle).
// States are caller-managed integer handles; state 0 is the initial state.
using BeamStepFn =
    std::function<std::pair<Eigen::VectorXd, int>(int state, int prev_token)>;

// Standard beam search: score = sum of token log-probs (optionally length
// normalized for ranking); hypotheses retire at eos or max_len; the result
// holds at most beam_width candidates sorted by descending score, ties
// broken toward the lower first diverging token id.
std::vector<BeamCandidate> beam_search_core(const BeamStepFn& step,
                                            int bos_id, int eos_id,
                                            int beam_width, int max_len,
                                            bool length_normalize = false);

std::vector<int> greedy_decode_core(const BeamStepFn& step, int bos_id,
                                    int eos_id, int max_len);

}  // namespace chateval

#endif  // CHATEVAL_BEAM_H_
