// Hand-crafted turn/dialog features and their fusion into the evaluator's
// input vector.

#ifndef CHATEVAL_FEATURES_H_
#define CHATEVAL_FEATURES_H_

#include <Eigen/Core>

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chateval/corpus.h"

namespace chateval {

class SentenceEncoder;

// Stand-in inventory for the pluggable dialog-act tagger.
inline const std::vector<std::string>& dialog_act_inventory() {
  static const std::vector<std::string> kActs = {
      "statement", "yes-no-question", "wh-question", "opinion",
      "greeting",  "command",         "backchannel", "other"};
  return kActs;
}

const std::vector<std::string>& topic_inventory();  // 26 classes
constexpr int kNumTopics = 26;

// Rule-based default tagger; corpus-supplied da_user/da_system override it
// at the call sites in build_feature_vector.
std::string tag_dialog_act(const std::vector<std::string>& tokens);

// Maximal runs of capitalized tokens not at sentence start, plus gazetteer
// hits; results lowercased.
std::set<std::string> extract_entities(
    const std::vector<std::string>& tokens, const std::string& raw_text,
    const std::set<std::string>& gazetteer = {});

struct GridTurn {
  std::string act;                 // act of the turn
  std::set<std::string> entities;  // entities mentioned in the turn
};

// Distribution over (|acts|+1)^2 length-2 vertical transition patterns of
// the (turns x entities) grid; all-zero when no entity spans the window.
Eigen::VectorXd entity_grid_features(const std::vector<GridTurn>& turns);

std::pair<long, double> ne_overlap(const std::set<std::string>& user_entities,
                                   const std::set<std::string>& sys_entities);

Eigen::VectorXd topic_onehot(const std::optional<std::string>& topic);

double response_similarity(const Eigen::VectorXd& user_emb,
                           const Eigen::VectorXd& response_emb);

struct FeatureBlock {
  std::string name;
  int offset;
  int length;
};

struct FeatureLayout {
  std::vector<FeatureBlock> blocks;
  int total_dim = 0;
  int offset(const std::string& name) const;
  int length(const std::string& name) const;
  std::string to_json() const;
  static FeatureLayout from_json(const std::string& json_text);
};

struct FeatureConfig {
  std::set<std::string> gazetteer;
  int context_window = 5;
};

// Fixed layout:
//   [da_user(8) | da_system(8) | entity_grid(81) | ne_overlap(2) |
//    topic(26) | response_cosine(1) | lengths(2)]
FeatureLayout feature_layout();

// Context = turns strictly before `turn` (at most cfg.context_window used).
Eigen::VectorXd build_feature_vector(const Turn& turn,
                                     const std::vector<const Turn*>& context,
                                     const SentenceEncoder& encoder,
                                     const FeatureConfig& cfg);

// Resolved act/entities for a turn, honoring corpus-supplied fields.
std::string turn_act_user(const Turn& t);
std::string turn_act_system(const Turn& t);
std::set<std::string> turn_entities_user(const Turn& t,
                                         const FeatureConfig& cfg);
std::set<std::string> turn_entities_system(const Turn& t,
                                           const FeatureConfig& cfg);

}  // namespace chateval

#endif  // CHATEVAL_FEATURES_H_
