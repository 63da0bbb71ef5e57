#include "chateval/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

#include "chateval/text.h"

namespace chateval {

using ordered_json = nlohmann::ordered_json;

namespace {

int require_binary(const ordered_json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw std::runtime_error(std::string("missing or non-integer label '") +
                             key + "'");
  int v = j[key].get<int>();
  if (v != 0 && v != 1)
    throw std::runtime_error(std::string("label '") + key +
                             "' must be 0 or 1");
  return v;
}

Dialog parse_dialog(const ordered_json& j, const std::string& schema_version) {
  if (!j.is_object()) throw std::runtime_error("record is not a JSON object");
  if (!j.contains("schema_version"))
    throw std::runtime_error("missing schema_version");
  if (j["schema_version"].get<std::string>() != schema_version)
    throw std::runtime_error("schema version mismatch: expected " +
                             schema_version + ", got " +
                             j["schema_version"].get<std::string>());
  Dialog d;
  if (!j.contains("dialog_id") || !j["dialog_id"].is_string())
    throw std::runtime_error("missing dialog_id");
  d.dialog_id = j["dialog_id"].get<std::string>();
  if (j.contains("rating")) {
    int r = j["rating"].get<int>();
    if (r < 1 || r > 5) throw std::runtime_error("rating out of range [1,5]");
    d.conversation_rating = r;
  }
  if (!j.contains("turns") || !j["turns"].is_array())
    throw std::runtime_error("missing turns array");
  std::vector<TurnAnnotation> anns;
  bool any_labels = false;
  int idx = 0;
  for (const auto& tj : j["turns"]) {
    Turn t;
    t.turn_index = idx++;
    if (!tj.contains("user") || !tj.contains("system"))
      throw std::runtime_error("turn " + std::to_string(t.turn_index) +
                               ": missing field 'user' or 'system'");
    t.user_text = tj["user"].get<std::string>();
    t.system_text = tj["system"].get<std::string>();
    t.user_tokens = tokenize(t.user_text);
    t.system_tokens = tokenize(t.system_text);
    if (tj.contains("da_user")) t.da_user = tj["da_user"].get<std::string>();
    if (tj.contains("da_system"))
      t.da_system = tj["da_system"].get<std::string>();
    if (tj.contains("topic")) t.topic = tj["topic"].get<std::string>();
    if (tj.contains("entities_user")) {
      std::set<std::string> s;
      for (const auto& e : tj["entities_user"]) s.insert(e.get<std::string>());
      t.entities_user = s;
    }
    if (tj.contains("entities_system")) {
      std::set<std::string> s;
      for (const auto& e : tj["entities_system"])
        s.insert(e.get<std::string>());
      t.entities_system = s;
    }
    TurnAnnotation a;
    if (tj.contains("labels")) {
      any_labels = true;
      const auto& lj = tj["labels"];
      a.comprehensible = require_binary(lj, "comprehensible");
      a.on_topic = require_binary(lj, "on_topic");
      a.interesting = require_binary(lj, "interesting");
      a.continue_conversation = require_binary(lj, "continue");
      if (lj.contains("scalar")) {
        int s = lj["scalar"].get<int>();
        if (s < 1 || s > 5)
          throw std::runtime_error("scalar rating out of range [1,5]");
        a.scalar_rating = s;
      }
    } else if (any_labels) {
      throw std::runtime_error(
          "turn " + std::to_string(t.turn_index) +
          ": labels present on some turns but missing here");
    }
    anns.push_back(a);
    d.turns.push_back(std::move(t));
  }
  if (any_labels) {
    std::size_t labeled = 0;
    for (const auto& tj : j["turns"])
      if (tj.contains("labels")) ++labeled;
    if (labeled != d.turns.size())
      throw std::runtime_error("labels must cover every turn or none");
    d.annotations = anns;
  }
  return d;
}

}  // namespace

std::vector<Dialog> load_corpus(const std::string& path,
                                const std::string& schema_version, bool strict,
                                LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus file not found: " + path);
  std::vector<Dialog> dialogs;
  std::string line;
  long lineno = 0;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ordered_json j = ordered_json::parse(line);
      Dialog d = parse_dialog(j, schema_version);
      if (!seen_ids.insert(d.dialog_id).second)
        throw std::runtime_error("duplicate dialog_id " + d.dialog_id);
      dialogs.push_back(std::move(d));
    } catch (const std::exception& e) {
      std::string msg =
          "line " + std::to_string(lineno) + ": " + e.what();
      if (strict) throw std::runtime_error(msg);
      if (report) report->skipped.push_back(msg);
    }
  }
  return dialogs;
}

std::string dialog_to_json_line(const Dialog& d) {
  ordered_json j;
  j["schema_version"] = kCorpusSchemaVersion;
  j["dialog_id"] = d.dialog_id;
  if (d.conversation_rating) j["rating"] = *d.conversation_rating;
  j["turns"] = ordered_json::array();
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& t = d.turns[i];
    ordered_json tj;
    tj["user"] = t.user_text;
    tj["system"] = t.system_text;
    if (t.da_user) tj["da_user"] = *t.da_user;
    if (t.da_system) tj["da_system"] = *t.da_system;
    if (t.topic) tj["topic"] = *t.topic;
    if (t.entities_user)
      tj["entities_user"] =
          std::vector<std::string>(t.entities_user->begin(),
                                   t.entities_user->end());
    if (t.entities_system)
      tj["entities_system"] =
          std::vector<std::string>(t.entities_system->begin(),
                                   t.entities_system->end());
    if (d.annotations) {
      const TurnAnnotation& a = (*d.annotations)[i];
      ordered_json lj;
      lj["comprehensible"] = a.comprehensible;
      lj["on_topic"] = a.on_topic;
      lj["interesting"] = a.interesting;
      lj["continue"] = a.continue_conversation;
      if (a.scalar_rating) lj["scalar"] = *a.scalar_rating;
      tj["labels"] = lj;
    }
    j["turns"].push_back(tj);
  }
  return j.dump();
}

void save_corpus(const std::vector<Dialog>& dialogs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const Dialog& d : dialogs) out << dialog_to_json_line(d) << "\n";
}

DatasetSplit split_corpus(const std::vector<Dialog>& dialogs,
                          const std::vector<double>& ratios,
                          std::uint64_t seed) {
  if (ratios.size() != 3) throw std::invalid_argument("need 3 ratios");
  double sum = 0;
  for (double r : ratios) {
    if (r <= 0) throw std::invalid_argument("ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("ratios must sum to 1");
  const long n = static_cast<long>(dialogs.size());
  if (n < 3) throw std::runtime_error("fewer dialogs than partitions");
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const Dialog& d : dialogs) ids.push_back(d.dialog_id);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  long n_train = std::lround(ratios[0] * n);
  long n_dev = std::lround(ratios[1] * n);
  n_train = std::max(1l, std::min(n_train, n - 2));
  n_dev = std::max(1l, std::min(n_dev, n - n_train - 1));
  DatasetSplit s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.dev.assign(ids.begin() + n_train, ids.begin() + n_train + n_dev);
  s.test.assign(ids.begin() + n_train + n_dev, ids.end());
  return s;
}

CorpusStats corpus_stats(const std::vector<Dialog>& dialogs) {
  if (dialogs.empty()) throw std::runtime_error("empty corpus");
  CorpusStats st;
  std::vector<double> ulens, slens;
  for (const Dialog& d : dialogs) {
    st.dialog_count++;
    for (const Turn& t : d.turns) {
      st.turn_count++;
      ulens.push_back(static_cast<double>(t.user_tokens.size()));
      slens.push_back(static_cast<double>(t.system_tokens.size()));
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
  };
  auto median = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  st.user_mean_tokens = mean(ulens);
  st.user_median_tokens = median(ulens);
  st.system_mean_tokens = mean(slens);
  st.system_median_tokens = median(slens);
  return st;
}

void save_split(const DatasetSplit& s, const std::string& path) {
  ordered_json j;
  j["train"] = s.train;
  j["dev"] = s.dev;
  j["test"] = s.test;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << j.dump() << "\n";
}

DatasetSplit load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("split file not found: " + path);
  ordered_json j;
  in >> j;
  DatasetSplit s;
  s.train = j["train"].get<std::vector<std::string>>();
  s.dev = j["dev"].get<std::vector<std::string>>();
  s.test = j["test"].get<std::vector<std::string>>();
  return s;
}

std::vector<const Dialog*> select_dialogs(const std::vector<Dialog>& dialogs,
                                          const std::vector<std::string>& ids) {
  std::set<std::string> want(ids.begin(), ids.end());
  std::vector<const Dialog*> out;
  for (const Dialog& d : dialogs)
    if (want.count(d.dialog_id)) out.push_back(&d);
  return out;
}

}  // namespace chateval
