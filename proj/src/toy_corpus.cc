#include "chateval/toy_corpus.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "chateval/text.h"

namespace chateval {

namespace {

const std::vector<std::pair<std::string, std::vector<std::string>>>&
topic_entities() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>>
      kTopics = {
          {"Sports", {"Messi", "Federer", "Serena", "Jordan"}},
          {"Movies", {"Avatar", "Titanic", "Inception", "Casablanca"}},
          {"Music", {"Beethoven", "Madonna", "Coldplay", "Adele"}},
          {"Food", {"Sushi", "Pizza", "Tacos", "Ramen"}},
          {"Travel", {"Paris", "Tokyo", "Cairo", "Lima"}},
      };
  return kTopics;
}

const std::vector<std::string>& good_adjectives() {
  static const std::vector<std::string> kAdj = {"great", "fun", "cool",
                                                "nice"};
  return kAdj;
}

enum class ResponseType { kGood, kDull, kGeneric, kJunk };

std::string user_text(int variant, const std::string& entity) {
  switch (variant % 3) {
    case 0:
      return "do you like " + entity + " ?";
    case 1:
      return "what do you think about " + entity + " ?";
    default:
      return "tell me about " + entity;
  }
}

std::string system_text(ResponseType type, const std::string& entity,
                        const std::string& adjective) {
  switch (type) {
    case ResponseType::kGood:
      return "i really love " + entity + " it is so " + adjective;
    case ResponseType::kDull:
      return entity + " is okay i guess";
    case ResponseType::kGeneric:
      return "i am not sure about that";
    case ResponseType::kJunk:
      return "blue seven the of walk";
  }
  return "";
}

TurnAnnotation annotation_for(ResponseType type) {
  TurnAnnotation a;
  switch (type) {
    case ResponseType::kGood:
      a = {1, 1, 1, 1, {}};
      break;
    case ResponseType::kDull:
      a = {1, 1, 0, 0, {}};
      break;
    case ResponseType::kGeneric:
      a = {1, 0, 0, 0, {}};
      break;
    case ResponseType::kJunk:
      a = {0, 0, 0, 0, {}};
      break;
  }
  a.scalar_rating = 1 + a.comprehensible + a.on_topic + a.interesting +
                    a.continue_conversation;
  return a;
}

}  // namespace

std::vector<std::pair<std::string, std::vector<std::string>>>
toy_topic_entities() {
  return topic_entities();
}

std::vector<Dialog> make_toy_corpus(const ToyCorpusOptions& opts) {
  if (opts.num_dialogs <= 0 || opts.turns_per_dialog <= 0)
    throw std::invalid_argument("toy corpus sizes must be positive");
  double mix = opts.p_good + opts.p_dull + opts.p_generic + opts.p_junk;
  if (std::abs(mix - 1.0) > 1e-9)
    throw std::invalid_argument("response mix must sum to 1");
  std::mt19937_64 rng(opts.seed + 101);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const auto& topics = topic_entities();
  std::vector<Dialog> out;
  for (int d = 0; d < opts.num_dialogs; ++d) {
    Dialog dialog;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "-%05d", d);
    dialog.dialog_id = opts.id_prefix + idbuf;
    dialog.annotations.emplace();
    const auto& [topic, entities] = topics[d % topics.size()];
    int rating_sum = 0;
    for (int t = 0; t < opts.turns_per_dialog; ++t) {
      const std::string& entity =
          entities[static_cast<std::size_t>(rng() % entities.size())];
      ResponseType type = ResponseType::kGood;
      if (!opts.good_only) {
        double u = coin(rng);
        if (u < opts.p_good)
          type = ResponseType::kGood;
        else if (u < opts.p_good + opts.p_dull)
          type = ResponseType::kDull;
        else if (u < opts.p_good + opts.p_dull + opts.p_generic)
          type = ResponseType::kGeneric;
        else
          type = ResponseType::kJunk;
      }
      const std::string& adj =
          good_adjectives()[static_cast<std::size_t>(rng() %
                                                     good_adjectives().size())];
      Turn turn;
      turn.turn_index = t;
      turn.user_text = user_text(d + t, entity);
      turn.system_text = system_text(type, entity, adj);
      turn.user_tokens = tokenize(turn.user_text);
      turn.system_tokens = tokenize(turn.system_text);
      turn.topic = topic;
      dialog.turns.push_back(std::move(turn));
      TurnAnnotation ann = annotation_for(type);
      rating_sum += *ann.scalar_rating;
      dialog.annotations->push_back(ann);
    }
    dialog.conversation_rating = static_cast<int>(
        std::lround(static_cast<double>(rating_sum) / opts.turns_per_dialog));
    out.push_back(std::move(dialog));
  }
  return out;
}

ToySplit make_toy_split(int train_dialogs, int dev_dialogs, int test_dialogs,
                        std::uint64_t seed) {
  ToySplit s;
  ToyCorpusOptions train_opts;
  train_opts.num_dialogs = train_dialogs;
  train_opts.seed = seed;
  train_opts.id_prefix = "toy-train";
  s.train = make_toy_corpus(train_opts);
  ToyCorpusOptions dev_opts;
  dev_opts.num_dialogs = dev_dialogs;
  dev_opts.good_only = true;
  dev_opts.seed = seed + 1;
  dev_opts.id_prefix = "toy-dev";
  s.dev = make_toy_corpus(dev_opts);
  ToyCorpusOptions test_opts;
  test_opts.num_dialogs = test_dialogs;
  test_opts.good_only = true;
  test_opts.seed = seed + 2;
  test_opts.id_prefix = "toy-test";
  s.test = make_toy_corpus(test_opts);
  return s;
}

}  // namespace chateval
