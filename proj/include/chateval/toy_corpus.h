// Synthetic annotated dialog corpus for offline tests and the demo
// pipeline. Responses come in four types with fixed labels: topical
// ("good", all four judgments yes), dull (on-topic but not engaging),
// generic (comprehensible only), and junk (all no). In the training mix the
// generic reply is the single most likely response for every context, while
// good replies dominate in mass and share long n-gram prefixes with each
// other — so greedy decoding of a fitted model goes generic, and
// evaluator-guided selection recovers topical responses that overlap the
// references.

#ifndef CHATEVAL_TOY_CORPUS_H_
#define CHATEVAL_TOY_CORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "chateval/corpus.h"

namespace chateval {

struct ToyCorpusOptions {
  int num_dialogs = 500;
  int turns_per_dialog = 3;
  // response-type mix; must sum to 1
  double p_good = 0.35;
  double p_dull = 0.10;
  double p_generic = 0.45;
  double p_junk = 0.10;
  bool good_only = false;  // every response topical (evaluation references)
  std::uint64_t seed = 0;
  std::string id_prefix = "toy";
};

std::vector<Dialog> make_toy_corpus(const ToyCorpusOptions& opts);

struct ToySplit {
  std::vector<Dialog> train;  // mixed responses, generic modal
  std::vector<Dialog> dev;    // topical references only
  std::vector<Dialog> test;   // topical references only
};

ToySplit make_toy_split(int train_dialogs = 400, int dev_dialogs = 50,
                        int test_dialogs = 50, std::uint64_t seed = 0);

// Entity names grouped by topic; usable as a gazetteer.
std::vector<std::pair<std::string, std::vector<std::string>>>
toy_topic_entities();

}  // namespace chateval

#endif  // CHATEVAL_TOY_CORPUS_H_
