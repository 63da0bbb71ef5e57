// Tokenization, vocabulary, and word-embedding tables.

#ifndef CHATEVAL_TEXT_H_
#define CHATEVAL_TEXT_H_

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "chateval/nn/graph.h"

namespace chateval {

// Lowercase, punctuation split into separate tokens, whitespace-delimited.
std::vector<std::string> tokenize(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kTransition = 4;
  static constexpr int kNumSpecials = 5;

  Vocabulary();

  // Tokens ranked by frequency, ties broken lexicographically; top max_size
  // kept after the specials.
  static Vocabulary build(const std::vector<std::vector<std::string>>& texts,
                          int max_size);

  int id(const std::string& token) const;  // kUnk for OOV
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // One token per line; id = line number + number of specials.
  void save(const std::string& path) const;
  static Vocabulary load_file(const std::string& path);

 private:
  void add_token(const std::string& token);
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

enum class EmbeddingSource { kRandom, kPretrainedFile, kSubwordHash };

struct EmbeddingInitOptions {
  EmbeddingSource source = EmbeddingSource::kRandom;
  std::string pretrained_path;  // "token v1 ... vD" lines
  double random_range = 0.1;
  int hash_buckets = 50000;
  std::uint64_t seed = 0;
};

// Returns a |V| x D parameter registered in `model`.
nn::Parameter& init_embeddings(nn::Model& model, const std::string& name,
                               const Vocabulary& vocab, int dim,
                               const EmbeddingInitOptions& opts);

// Distinct character 3..6-grams of a token, for the subword-hash source.
std::vector<std::string> char_ngrams(const std::string& token, int lo = 3,
                                     int hi = 6);

}  // namespace chateval

#endif  // CHATEVAL_TEXT_H_
