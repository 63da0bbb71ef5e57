#include "chateval/text.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace chateval {

namespace {

bool is_word_char(unsigned char c) {
  // Non-ASCII bytes are treated as word characters so UTF-8 sequences
  // are never split mid-codepoint.
  return std::isalnum(c) || c >= 0x80;
}

const char* kSpecialTokens[] = {"<pad>", "<unk>", "<bos>", "<eos>",
                                "<transition>"};

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* s : kSpecialTokens) add_token(s);
}

void Vocabulary::add_token(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(
    const std::vector<std::vector<std::string>>& texts, int max_size) {
  if (max_size < 1) throw std::invalid_argument("max_size must be >= 1");
  std::map<std::string, long> counts;
  for (const auto& toks : texts)
    for (const auto& t : toks) ++counts[t];
  if (counts.empty()) throw std::runtime_error("empty corpus");
  std::vector<std::pair<std::string, long>> ranked(counts.begin(),
                                                   counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocabulary v;
  for (const auto& [tok, cnt] : ranked) {
    if (static_cast<int>(v.id_to_token_.size()) >= max_size + kNumSpecials)
      break;
    if (!v.contains(tok)) v.add_token(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  return id_to_token_.at(id);
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (int i = kNumSpecials; i < size(); ++i) out << id_to_token_[i] << "\n";
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && !v.contains(line)) v.add_token(line);
  }
  return v;
}

std::vector<std::string> char_ngrams(const std::string& token, int lo,
                                     int hi) {
  std::set<std::string> grams;
  const int n = static_cast<int>(token.size());
  for (int len = lo; len <= hi; ++len)
    for (int i = 0; i + len <= n; ++i) grams.insert(token.substr(i, len));
  return std::vector<std::string>(grams.begin(), grams.end());
}

nn::Parameter& init_embeddings(nn::Model& model, const std::string& name,
                               const Vocabulary& vocab, int dim,
                               const EmbeddingInitOptions& opts) {
  if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
  std::mt19937_64 rng(opts.seed);
  nn::Parameter& table =
      model.add_uniform(name, vocab.size(), dim, opts.random_range, rng);
  switch (opts.source) {
    case EmbeddingSource::kRandom:
      break;
    case EmbeddingSource::kPretrainedFile: {
      std::ifstream in(opts.pretrained_path);
      if (!in)
        throw std::runtime_error("cannot open pretrained vectors: " +
                                 opts.pretrained_path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        std::vector<double> vals;
        double v;
        while (ss >> v) vals.push_back(v);
        if (static_cast<int>(vals.size()) != dim)
          throw std::runtime_error("pretrained vector dimension mismatch for "
                                   "token '" +
                                   tok + "'");
        if (vocab.contains(tok)) {
          int id = vocab.id(tok);
          for (int d = 0; d < dim; ++d) table.value(id, d) = vals[d];
        }
      }
      break;
    }
    case EmbeddingSource::kSubwordHash: {
      // Bucket vectors drawn once from the seed; each token's row is the
      // sum over its distinct 3..6-gram buckets.
      std::mt19937_64 brng(opts.seed ^ 0x9e3779b97f4a7c15ull);
      nn::Mat buckets(opts.hash_buckets, dim);
      std::uniform_real_distribution<double> dist(-opts.random_range,
                                                  opts.random_range);
      for (int r = 0; r < opts.hash_buckets; ++r)
        for (int d = 0; d < dim; ++d) buckets(r, d) = dist(brng);
      for (int id = Vocabulary::kNumSpecials; id < vocab.size(); ++id) {
        const std::string& tok = vocab.token(id);
        auto grams = char_ngrams(tok);
        table.value.row(id).setZero();
        for (const auto& gm : grams) {
          std::uint64_t h = nn::fnv1a64(gm.data(), gm.size());
          table.value.row(id) += buckets.row(h % opts.hash_buckets);
        }
      }
      break;
    }
  }
  return table;
}

}  // namespace chateval
