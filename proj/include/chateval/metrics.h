// Self-contained metric kernels: BLEU-4, ROUGE-2, Distinct-2, MCC, Pearson.
// All operate on tokenized strings, never on vocabulary ids.

#ifndef CHATEVAL_METRICS_H_
#define CHATEVAL_METRICS_H_

#include <string>
#include <utility>
#include <vector>

namespace chateval {

using TokenSeq = std::vector<std::string>;

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

// Corpus-level BLEU-4 (percent): geometric mean of modified n-gram
// precisions n=1..4 with brevity penalty, counts aggregated over the corpus.
double bleu4_corpus(const std::vector<TokenSeq>& hypotheses,
                    const std::vector<TokenSeq>& references);

// Sentence BLEU in [0,1] with add-one smoothing on orders 2..4.
double bleu4_sentence(const TokenSeq& hypothesis, const TokenSeq& reference);

// Bigram-overlap F1 in [0,100] for one pair; reference < 2 tokens -> 0.
// recall_only switches to the recall variant.
double rouge2(const TokenSeq& hypothesis, const TokenSeq& reference,
              bool recall_only = false);
double rouge2_corpus(const std::vector<TokenSeq>& hypotheses,
                     const std::vector<TokenSeq>& references,
                     bool recall_only = false);

// Distinct bigrams / total bigrams across all responses, in [0,1].
double distinct2(const std::vector<TokenSeq>& responses);

// Matthews correlation coefficient; 0 when any denominator factor is 0.
double mcc(const ConfusionCounts& counts);

// Sample Pearson r with two-sided p-value from the t distribution (n-2 df).
std::pair<double, double> pearson(const std::vector<double>& x,
                                  const std::vector<double>& y);

}  // namespace chateval

#endif  // CHATEVAL_METRICS_H_
