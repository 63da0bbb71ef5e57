#include "chateval/metrics.h"

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace chateval {

namespace {

// n-gram as joined string with a separator that cannot occur inside tokens
// produced by the tokenizer (it never emits '\x1f').
std::map<std::string, long> ngram_counts(const TokenSeq& toks, int n) {
  std::map<std::string, long> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key += toks[i + k];
    }
    ++counts[key];
  }
  return counts;
}

long clipped_matches(const std::map<std::string, long>& hyp,
                     const std::map<std::string, long>& ref) {
  long m = 0;
  for (const auto& [k, c] : hyp) {
    auto it = ref.find(k);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

// Regularized incomplete beta via Lentz continued fraction.
double betacf(double a, double b, double x) {
  const int kMaxIter = 200;
  const double kEps = 3e-12, kFpMin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                 a * std::log(x) + b * std::log(1.0 - x);
  double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double bleu4_corpus(const std::vector<TokenSeq>& hypotheses,
                    const std::vector<TokenSeq>& references) {
  if (hypotheses.empty()) throw std::invalid_argument("empty corpus");
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("hypothesis/reference length mismatch");
  long hyp_len = 0, ref_len = 0;
  long matches[4] = {0, 0, 0, 0}, totals[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    if (references[i].empty())
      throw std::invalid_argument("empty reference at index " +
                                  std::to_string(i));
    hyp_len += static_cast<long>(hypotheses[i].size());
    ref_len += static_cast<long>(references[i].size());
    for (int n = 1; n <= 4; ++n) {
      auto hc = ngram_counts(hypotheses[i], n);
      auto rc = ngram_counts(references[i], n);
      matches[n - 1] += clipped_matches(hc, rc);
      long tot = static_cast<long>(hypotheses[i].size()) - n + 1;
      if (tot > 0) totals[n - 1] += tot;
    }
  }
  double log_prec = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (totals[n] == 0 || matches[n] == 0) return 0.0;
    log_prec += 0.25 * std::log(static_cast<double>(matches[n]) / totals[n]);
  }
  double bp = 1.0;
  if (hyp_len < ref_len && hyp_len > 0)
    bp = std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  if (hyp_len == 0) return 0.0;
  return 100.0 * bp * std::exp(log_prec);
}

double bleu4_sentence(const TokenSeq& hypothesis, const TokenSeq& reference) {
  if (reference.empty()) throw std::invalid_argument("empty reference");
  if (hypothesis.empty()) return 0.0;
  double log_prec = 0.0;
  for (int n = 1; n <= 4; ++n) {
    auto hc = ngram_counts(hypothesis, n);
    auto rc = ngram_counts(reference, n);
    long m = clipped_matches(hc, rc);
    long tot = std::max<long>(0, static_cast<long>(hypothesis.size()) - n + 1);
    double p;
    if (n == 1) {
      if (m == 0) return 0.0;
      p = static_cast<double>(m) / tot;
    } else {
      p = static_cast<double>(m + 1) / (tot + 1);
    }
    log_prec += 0.25 * std::log(p);
  }
  double bp = 1.0;
  if (hypothesis.size() < reference.size())
    bp = std::exp(1.0 - static_cast<double>(reference.size()) /
                            hypothesis.size());
  return bp * std::exp(log_prec);
}

double rouge2(const TokenSeq& hypothesis, const TokenSeq& reference,
              bool recall_only) {
  if (reference.empty()) throw std::invalid_argument("empty reference");
  if (reference.size() < 2) return 0.0;
  auto hc = ngram_counts(hypothesis, 2);
  auto rc = ngram_counts(reference, 2);
  long m = clipped_matches(hc, rc);
  long ref_total = static_cast<long>(reference.size()) - 1;
  double recall = static_cast<double>(m) / ref_total;
  if (recall_only) return 100.0 * recall;
  long hyp_total = std::max<long>(0, static_cast<long>(hypothesis.size()) - 1);
  if (hyp_total == 0 || m == 0) return 0.0;
  double prec = static_cast<double>(m) / hyp_total;
  return 100.0 * 2.0 * prec * recall / (prec + recall);
}

double rouge2_corpus(const std::vector<TokenSeq>& hypotheses,
                     const std::vector<TokenSeq>& references,
                     bool recall_only) {
  if (hypotheses.empty()) throw std::invalid_argument("empty corpus");
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("hypothesis/reference length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    sum += rouge2(hypotheses[i], references[i], recall_only);
  return sum / hypotheses.size();
}

double distinct2(const std::vector<TokenSeq>& responses) {
  if (responses.empty()) throw std::invalid_argument("empty response list");
  std::set<std::string> distinct;
  long total = 0;
  for (const auto& r : responses) {
    auto counts = ngram_counts(r, 2);
    for (const auto& [k, c] : counts) {
      distinct.insert(k);
      total += c;
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(distinct.size()) / total;
}

double mcc(const ConfusionCounts& c) {
  if (c.tp + c.fp + c.fn + c.tn <= 0)
    throw std::invalid_argument("empty confusion counts");
  double d1 = static_cast<double>(c.tp + c.fp);
  double d2 = static_cast<double>(c.tp + c.fn);
  double d3 = static_cast<double>(c.tn + c.fp);
  double d4 = static_cast<double>(c.tn + c.fn);
  if (d1 == 0 || d2 == 0 || d3 == 0 || d4 == 0) return 0.0;
  double num = static_cast<double>(c.tp) * c.tn -
               static_cast<double>(c.fp) * c.fn;
  return num / std::sqrt(d1 * d2 * d3 * d4);
}

std::pair<double, double> pearson(const std::vector<double>& x,
                                  const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("need at least 3 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0)
    throw std::invalid_argument("zero variance series");
  double r = sxy / std::sqrt(sxx * syy);
  r = std::max(-1.0, std::min(1.0, r));
  double df = static_cast<double>(n) - 2.0;
  double p;
  if (std::fabs(r) >= 1.0) {
    p = 0.0;
  } else {
    double t2 = r * r * df / (1.0 - r * r);
    p = inc_beta(0.5 * df, 0.5, df / (df + t2));
  }
  return {r, p};
}

}  // namespace chateval
