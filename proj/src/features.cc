#include "chateval/features.h"

#include <cctype>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "chateval/encoders.h"
#include "chateval/text.h"

namespace chateval {

namespace {

const std::unordered_set<std::string>& wh_words() {
  static const std::unordered_set<std::string> s = {
      "what", "who", "where", "when", "why", "how", "which", "whose", "whom"};
  return s;
}

const std::unordered_set<std::string>& auxiliaries() {
  static const std::unordered_set<std::string> s = {
      "is",  "are",  "am",   "was",  "were",  "do",    "does",
      "did", "can",  "could", "will", "would", "should", "shall",
      "may", "might", "have", "has",  "had"};
  return s;
}

const std::unordered_set<std::string>& greetings() {
  static const std::unordered_set<std::string> s = {
      "hello", "hi", "hey", "greetings", "goodbye", "bye", "howdy"};
  return s;
}

const std::unordered_set<std::string>& backchannels() {
  static const std::unordered_set<std::string> s = {"yeah", "ok", "okay",
                                                    "uh-huh", "mhm", "right"};
  return s;
}

const std::unordered_set<std::string>& opinion_words() {
  static const std::unordered_set<std::string> s = {
      "think", "believe", "feel",    "love",     "hate", "like",
      "great", "awesome", "terrible", "amazing", "favorite",
      "best",  "worst",   "boring",  "fun"};
  return s;
}

const std::unordered_set<std::string>& imperative_verbs() {
  static const std::unordered_set<std::string> s = {
      "go",   "tell", "give", "show", "play", "stop",  "open", "close",
      "turn", "put",  "take", "let",  "make", "come",  "look", "listen",
      "find", "bring"};
  return s;
}

int act_index(const std::string& act) {
  const auto& inv = dialog_act_inventory();
  for (std::size_t i = 0; i < inv.size(); ++i)
    if (inv[i] == act) return static_cast<int>(i);
  return static_cast<int>(inv.size()) - 1;  // "other"
}

bool capitalized(const std::string& w) {
  return !w.empty() && std::isupper(static_cast<unsigned char>(w[0]));
}

}  // namespace

const std::vector<std::string>& topic_inventory() {
  static const std::vector<std::string> kTopics = {
      "Sports",     "Movies",       "Music",     "Politics", "Technology",
      "Science",    "Travel",       "Food",      "Fashion",  "Health",
      "Education",  "Business",     "Finance",   "Weather",  "Games",
      "Books",      "Art",          "History",   "Geography", "Celebrities",
      "Cars",       "Animals",      "Family",    "Relationships",
      "Shopping",   "News"};
  return kTopics;
}

std::string tag_dialog_act(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return "other";
  std::vector<std::string> words;
  for (const auto& t : tokens)
    if (std::isalnum(static_cast<unsigned char>(t[0])) || t == "uh-huh")
      words.push_back(t);
  if (words.empty()) return "other";
  const std::string& first = words.front();
  if (words.size() == 1 &&
      (backchannels().count(first) || first == "yes" || first == "no"))
    return "backchannel";
  if (greetings().count(first)) return "greeting";
  if (wh_words().count(first)) return "wh-question";
  if (auxiliaries().count(first)) return "yes-no-question";
  if (imperative_verbs().count(first)) return "command";
  for (const auto& w : words)
    if (opinion_words().count(w)) return "opinion";
  return "statement";
}

std::set<std::string> extract_entities(const std::vector<std::string>& tokens,
                                       const std::string& raw_text,
                                       const std::set<std::string>& gazetteer) {
  std::set<std::string> out;
  // Whitespace words of the raw text keep their casing.
  std::vector<std::string> raw_words;
  {
    std::istringstream ss(raw_text);
    std::string w;
    while (ss >> w) raw_words.push_back(w);
  }
  std::size_t i = 0;
  while (i < raw_words.size()) {
    if (i > 0 && capitalized(raw_words[i])) {
      std::size_t j = i;
      std::string ent;
      while (j < raw_words.size() && capitalized(raw_words[j])) {
        if (j > i) ent.push_back(' ');
        std::string w = raw_words[j];
        // strip trailing punctuation
        while (!w.empty() &&
               !std::isalnum(static_cast<unsigned char>(w.back())))
          w.pop_back();
        ent += w;
        ++j;
      }
      if (!ent.empty()) {
        for (auto& c : ent) c = std::tolower(static_cast<unsigned char>(c));
        out.insert(ent);
      }
      i = j;
    } else {
      ++i;
    }
  }
  // Gazetteer matches over the tokenized, lowercased text.
  if (!gazetteer.empty()) {
    for (const auto& g : gazetteer) {
      auto gtoks = tokenize(g);
      if (gtoks.empty()) continue;
      for (std::size_t s = 0; s + gtoks.size() <= tokens.size(); ++s) {
        bool match = true;
        for (std::size_t k = 0; k < gtoks.size(); ++k)
          if (tokens[s + k] != gtoks[k]) {
            match = false;
            break;
          }
        if (match) {
          out.insert(join_tokens(gtoks));
          break;
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd entity_grid_features(const std::vector<GridTurn>& turns) {
  const int acts = static_cast<int>(dialog_act_inventory().size());
  const int states = acts + 1;  // + absent marker (index `acts`)
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(states * states);
  if (turns.size() < 2) return dist;
  std::set<std::string> all_entities;
  for (const auto& t : turns)
    for (const auto& e : t.entities) all_entities.insert(e);
  long total = 0;
  for (const auto& ent : all_entities) {
    std::vector<int> column;
    for (const auto& t : turns)
      column.push_back(t.entities.count(ent) ? act_index(t.act) : acts);
    for (std::size_t i = 0; i + 1 < column.size(); ++i) {
      dist(column[i] * states + column[i + 1]) += 1.0;
      ++total;
    }
  }
  if (total > 0) dist /= static_cast<double>(total);
  return dist;
}

std::pair<long, double> ne_overlap(const std::set<std::string>& user_entities,
                                   const std::set<std::string>& sys_entities) {
  long inter = 0;
  for (const auto& e : user_entities) inter += sys_entities.count(e);
  long uni = static_cast<long>(user_entities.size() + sys_entities.size()) -
             inter;
  double jaccard = uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
  return {inter, jaccard};
}

Eigen::VectorXd topic_onehot(const std::optional<std::string>& topic) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kNumTopics);
  if (!topic) return v;
  const auto& inv = topic_inventory();
  for (int i = 0; i < kNumTopics; ++i)
    if (inv[i] == *topic) {
      v(i) = 1.0;
      return v;
    }
  throw std::invalid_argument("unknown topic label: " + *topic);
}

double response_similarity(const Eigen::VectorXd& user_emb,
                           const Eigen::VectorXd& response_emb) {
  if (user_emb.size() != response_emb.size())
    throw std::invalid_argument("embedding dimension mismatch");
  double nu = user_emb.norm(), nr = response_emb.norm();
  if (nu == 0.0 || nr == 0.0) return 0.0;
  return user_emb.dot(response_emb) / (nu * nr);
}

int FeatureLayout::offset(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b.offset;
  throw std::invalid_argument("unknown feature block: " + name);
}

int FeatureLayout::length(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b.length;
  throw std::invalid_argument("unknown feature block: " + name);
}

std::string FeatureLayout::to_json() const {
  nlohmann::ordered_json j;
  j["total_dim"] = total_dim;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : blocks)
    j["blocks"].push_back(
        {{"name", b.name}, {"offset", b.offset}, {"length", b.length}});
  return j.dump();
}

FeatureLayout FeatureLayout::from_json(const std::string& json_text) {
  auto j = nlohmann::ordered_json::parse(json_text);
  FeatureLayout l;
  l.total_dim = j["total_dim"].get<int>();
  for (const auto& bj : j["blocks"])
    l.blocks.push_back({bj["name"].get<std::string>(),
                        bj["offset"].get<int>(), bj["length"].get<int>()});
  return l;
}

FeatureLayout feature_layout() {
  const int acts = static_cast<int>(dialog_act_inventory().size());
  const int grid = (acts + 1) * (acts + 1);
  FeatureLayout l;
  int off = 0;
  auto push = [&](const std::string& name, int len) {
    l.blocks.push_back({name, off, len});
    off += len;
  };
  push("da_user", acts);
  push("da_system", acts);
  push("entity_grid", grid);
  push("ne_overlap", 2);
  push("topic", kNumTopics);
  push("response_cosine", 1);
  push("lengths", 2);
  l.total_dim = off;
  return l;
}

std::string turn_act_user(const Turn& t) {
  return t.da_user ? *t.da_user : tag_dialog_act(t.user_tokens);
}

std::string turn_act_system(const Turn& t) {
  return t.da_system ? *t.da_system : tag_dialog_act(t.system_tokens);
}

std::set<std::string> turn_entities_user(const Turn& t,
                                         const FeatureConfig& cfg) {
  if (t.entities_user) return *t.entities_user;
  return extract_entities(t.user_tokens, t.user_text, cfg.gazetteer);
}

std::set<std::string> turn_entities_system(const Turn& t,
                                           const FeatureConfig& cfg) {
  if (t.entities_system) return *t.entities_system;
  return extract_entities(t.system_tokens, t.system_text, cfg.gazetteer);
}

Eigen::VectorXd build_feature_vector(const Turn& turn,
                                     const std::vector<const Turn*>& context,
                                     const SentenceEncoder& encoder,
                                     const FeatureConfig& cfg) {
  const FeatureLayout layout = feature_layout();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(layout.total_dim);
  const int acts = static_cast<int>(dialog_act_inventory().size());

  v(layout.offset("da_user") + act_index(turn_act_user(turn))) = 1.0;
  v(layout.offset("da_system") + act_index(turn_act_system(turn))) = 1.0;

  // Entity grid over the context window plus the current turn. The act of
  // a turn is its system-side act; entities are pooled from both sides.
  std::vector<GridTurn> grid;
  int start = std::max(0, static_cast<int>(context.size()) -
                              cfg.context_window);
  for (std::size_t i = start; i < context.size(); ++i) {
    GridTurn gt;
    gt.act = turn_act_system(*context[i]);
    gt.entities = turn_entities_user(*context[i], cfg);
    for (const auto& e : turn_entities_system(*context[i], cfg))
      gt.entities.insert(e);
    grid.push_back(std::move(gt));
  }
  {
    GridTurn gt;
    gt.act = turn_act_system(turn);
    gt.entities = turn_entities_user(turn, cfg);
    for (const auto& e : turn_entities_system(turn, cfg))
      gt.entities.insert(e);
    grid.push_back(std::move(gt));
  }
  v.segment(layout.offset("entity_grid"), (acts + 1) * (acts + 1)) =
      entity_grid_features(grid);

  auto [count, jaccard] = ne_overlap(turn_entities_user(turn, cfg),
                                     turn_entities_system(turn, cfg));
  v(layout.offset("ne_overlap")) = static_cast<double>(count);
  v(layout.offset("ne_overlap") + 1) = jaccard;

  v.segment(layout.offset("topic"), kNumTopics) = topic_onehot(turn.topic);

  Eigen::VectorXd u_emb = encoder.encode_vector(turn.user_tokens);
  Eigen::VectorXd r_emb = encoder.encode_vector(turn.system_tokens);
  v(layout.offset("response_cosine")) = response_similarity(u_emb, r_emb);

  v(layout.offset("lengths")) = static_cast<double>(turn.user_tokens.size());
  v(layout.offset("lengths") + 1) =
      static_cast<double>(turn.system_tokens.size());
  return v;
}

}  // namespace chateval
