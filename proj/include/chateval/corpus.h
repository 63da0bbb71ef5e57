// Data model, JSONL ingestion, splitting, and descriptive statistics for
// annotated dialog corpora.

#ifndef CHATEVAL_CORPUS_H_
#define CHATEVAL_CORPUS_H_

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace chateval {

struct Turn {
  int turn_index = 0;
  std::string user_text;
  std::string system_text;
  std::vector<std::string> user_tokens;
  std::vector<std::string> system_tokens;
  std::optional<std::string> da_user;
  std::optional<std::string> da_system;
  std::optional<std::string> topic;
  std::optional<std::set<std::string>> entities_user;
  std::optional<std::set<std::string>> entities_system;
};

struct TurnAnnotation {
  int comprehensible = 0;
  int on_topic = 0;
  int interesting = 0;
  int continue_conversation = 0;
  std::optional<int> scalar_rating;  // 1..5
};

struct Dialog {
  std::string dialog_id;
  std::vector<Turn> turns;
  std::optional<std::vector<TurnAnnotation>> annotations;  // aligned to turns
  std::optional<int> conversation_rating;                  // 1..5
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
};

struct CorpusStats {
  long dialog_count = 0;
  long turn_count = 0;
  double user_mean_tokens = 0;
  double user_median_tokens = 0;
  double system_mean_tokens = 0;
  double system_median_tokens = 0;
};

inline constexpr const char* kCorpusSchemaVersion = "1";

// Strict mode rejects the whole file on the first malformed line (with its
// line number); lenient mode skips bad lines and records them.
struct LoadReport {
  std::vector<std::string> skipped;  // "line N: reason" in lenient mode
};

std::vector<Dialog> load_corpus(const std::string& path,
                                const std::string& schema_version,
                                bool strict = true,
                                LoadReport* report = nullptr);

// Canonical serialization: fixed key order, compact JSON, one dialog per
// line. save(load(f)) is byte-identical to the canonicalized f.
void save_corpus(const std::vector<Dialog>& dialogs, const std::string& path);
std::string dialog_to_json_line(const Dialog& d);

DatasetSplit split_corpus(const std::vector<Dialog>& dialogs,
                          const std::vector<double>& ratios,
                          std::uint64_t seed);

CorpusStats corpus_stats(const std::vector<Dialog>& dialogs);

void save_split(const DatasetSplit& s, const std::string& path);
DatasetSplit load_split(const std::string& path);

std::vector<const Dialog*> select_dialogs(const std::vector<Dialog>& dialogs,
                                          const std::vector<std::string>& ids);

}  // namespace chateval

#endif  // CHATEVAL_CORPUS_H_
