#include "chateval/pipeline.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "chateval/corpus.h"
#include "chateval/toy_corpus.h"

namespace chateval {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

template <typename T>
void maybe(const ordered_json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::string path_in(const PipelineConfig& cfg, const std::string& rel) {
  return (fs::path(cfg.work_dir) / rel).string();
}

void require_artifact(const std::string& path, const std::string& stage) {
  if (!fs::exists(path))
    throw std::runtime_error("missing artifact " + path + "; run stage '" +
                             stage + "' first");
}

void write_stage_log(const PipelineConfig& cfg, const std::string& stage,
                     const std::vector<std::string>& artifacts) {
  ordered_json j;
  j["stage"] = stage;
  j["seed"] = cfg.seed;
  ordered_json hashes = ordered_json::object();
  for (const std::string& a : artifacts) {
    if (fs::is_directory(a)) {
      for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) {
          std::string rel = fs::relative(e.path(), cfg.work_dir).string();
          char buf[20];
          std::snprintf(buf, sizeof(buf), "%016llx",
                        static_cast<unsigned long long>(
                            file_hash(e.path().string())));
          hashes[rel] = buf;
        }
    } else if (fs::exists(a)) {
      std::string rel = fs::relative(a, cfg.work_dir).string();
      char buf[20];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(file_hash(a)));
      hashes[rel] = buf;
    }
  }
  // stable key order for hash comparison across reruns
  ordered_json sorted = ordered_json::object();
  std::vector<std::string> keys;
  for (auto& [k, v] : hashes.items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (const std::string& k : keys) sorted[k] = hashes[k];
  j["artifacts"] = sorted;
  write_file(path_in(cfg, "logs/" + stage + ".json"), j.dump(2) + "\n");
}

std::string corpus_file(const PipelineConfig& cfg) {
  return path_in(cfg, "corpus.jsonl");
}

struct LoadedData {
  std::vector<Dialog> corpus;
  DatasetSplit split;
};

LoadedData load_data(const PipelineConfig& cfg) {
  require_artifact(corpus_file(cfg), "prepare-data");
  require_artifact(path_in(cfg, "split.json"), "prepare-data");
  LoadedData d;
  d.corpus = load_corpus(corpus_file(cfg), kCorpusSchemaVersion);
  d.split = load_split(path_in(cfg, "split.json"));
  return d;
}

std::vector<Dialog> dialogs_by_id(const std::vector<Dialog>& corpus,
                                  const std::vector<std::string>& ids) {
  std::vector<Dialog> out;
  for (const Dialog* p : select_dialogs(corpus, ids)) out.push_back(*p);
  return out;
}

Vocabulary build_vocab(const std::vector<const Dialog*>& dialogs,
                       int max_size) {
  std::vector<std::vector<std::string>> texts;
  for (const Dialog* d : dialogs)
    for (const Turn& t : d->turns) {
      texts.push_back(t.user_tokens);
      texts.push_back(t.system_tokens);
    }
  return Vocabulary::build(texts, max_size);
}

std::set<std::string> gazetteer_set(const PipelineConfig& cfg) {
  std::set<std::string> gz(cfg.gazetteer.begin(), cfg.gazetteer.end());
  if (gz.empty() && cfg.toy)
    for (const auto& [topic, ents] : toy_topic_entities())
      for (const std::string& e : ents) gz.insert(e);
  return gz;
}

using Pairs = std::vector<std::pair<std::vector<int>, std::vector<int>>>;

Pairs generation_pairs(const std::vector<const Dialog*>& dialogs,
                       const Vocabulary& vocab) {
  Pairs out;
  for (const Dialog* d : dialogs)
    for (int t = 0; t < static_cast<int>(d->turns.size()); ++t) {
      if (d->turns[t].system_tokens.empty()) continue;
      out.push_back({build_generator_input(*d, t, vocab),
                     vocab.encode(d->turns[t].system_tokens)});
    }
  return out;
}

void stage_prepare_data(const PipelineConfig& cfg) {
  std::vector<Dialog> corpus;
  DatasetSplit split;
  if (cfg.toy) {
    ToySplit toy = make_toy_split(cfg.toy_train, cfg.toy_dev, cfg.toy_test,
                                  cfg.seed);
    for (auto& d : toy.train) {
      split.train.push_back(d.dialog_id);
      corpus.push_back(std::move(d));
    }
    for (auto& d : toy.dev) {
      split.dev.push_back(d.dialog_id);
      corpus.push_back(std::move(d));
    }
    for (auto& d : toy.test) {
      split.test.push_back(d.dialog_id);
      corpus.push_back(std::move(d));
    }
  } else {
    if (cfg.corpus_path.empty())
      throw std::runtime_error("corpus_path required when toy = false");
    corpus = load_corpus(cfg.corpus_path, kCorpusSchemaVersion);
    split = split_corpus(corpus, cfg.split_ratios, cfg.seed);
  }
  fs::create_directories(cfg.work_dir);
  save_corpus(corpus, corpus_file(cfg));
  save_split(split, path_in(cfg, "split.json"));
  CorpusStats st = corpus_stats(corpus);
  ordered_json j;
  j["dialog_count"] = st.dialog_count;
  j["turn_count"] = st.turn_count;
  j["user_mean_tokens"] = st.user_mean_tokens;
  j["user_median_tokens"] = st.user_median_tokens;
  j["system_mean_tokens"] = st.system_mean_tokens;
  j["system_median_tokens"] = st.system_median_tokens;
  write_file(path_in(cfg, "stats.json"), j.dump(2) + "\n");
  write_stage_log(cfg, "prepare-data",
                  {corpus_file(cfg), path_in(cfg, "split.json"),
                   path_in(cfg, "stats.json")});
}

void stage_train_encoder(const PipelineConfig& cfg) {
  LoadedData d = load_data(cfg);
  auto train = dialogs_by_id(d.corpus, d.split.train);
  std::vector<const Dialog*> ptrs;
  for (const Dialog& dd : train) ptrs.push_back(&dd);
  Vocabulary vocab = build_vocab(ptrs, cfg.encoder.vocab_size);
  SentenceEncoderConfig ecfg = cfg.encoder;
  ecfg.seed = cfg.seed;
  SentenceEncoder enc(ecfg, vocab);
  QuickThoughtOptions opts;
  opts.epochs = cfg.encoder_epochs;
  opts.seed = cfg.seed;
  QuickThoughtLog log = train_quick_thought(enc, train, opts);
  enc.save(path_in(cfg, "encoder"));
  ordered_json j;
  j["epoch_loss"] = log.epoch_loss;
  j["final_accuracy"] = log.final_accuracy;
  write_file(path_in(cfg, "encoder/train_log.json"), j.dump(2) + "\n");
  write_stage_log(cfg, "train-encoder", {path_in(cfg, "encoder")});
}

void stage_train_evaluator(const PipelineConfig& cfg) {
  require_artifact(path_in(cfg, "encoder"), "train-encoder");
  LoadedData d = load_data(cfg);
  auto enc = SentenceEncoder::load(path_in(cfg, "encoder"));
  EvaluatorConfig ecfg = cfg.evaluator;
  ecfg.seed = cfg.seed;
  FeatureConfig fcfg;
  fcfg.gazetteer = gazetteer_set(cfg);
  fcfg.context_window = ecfg.context_turns;
  Evaluator ev(ecfg, std::shared_ptr<SentenceEncoder>(std::move(enc)), fcfg);
  auto train = annotated_turns(select_dialogs(d.corpus, d.split.train));
  auto dev = annotated_turns(select_dialogs(d.corpus, d.split.dev));
  Evaluator::TrainLog log = ev.train(train, dev);
  ev.save(path_in(cfg, "evaluator"));
  ordered_json j;
  j["train_loss"] = log.train_loss;
  j["dev_loss"] = log.dev_loss;
  j["stopped_epoch"] = log.stopped_epoch;
  j["warnings"] = log.warnings;
  write_file(path_in(cfg, "evaluator/train_log.json"), j.dump(2) + "\n");
  write_stage_log(cfg, "train-evaluator", {path_in(cfg, "evaluator")});
}

void stage_train_generator(const PipelineConfig& cfg) {
  LoadedData d = load_data(cfg);
  Vocabulary vocab = build_vocab(select_dialogs(d.corpus, d.split.train),
                                 cfg.generator.vocab_size);
  GeneratorConfig gcfg = cfg.generator;
  gcfg.seed = cfg.seed;
  Generator gen(gcfg, vocab);
  Pairs train = generation_pairs(select_dialogs(d.corpus, d.split.train),
                                 vocab);
  Pairs dev = generation_pairs(select_dialogs(d.corpus, d.split.dev), vocab);
  TrainingLog log = gen.train(train, dev);
  gen.save(path_in(cfg, "generator"));
  ordered_json j;
  j["train_loss"] = log.train_loss;
  j["dev_loss"] = log.dev_loss;
  j["stopped_epoch"] = log.stopped_epoch;
  j["dev_perplexity"] = gen.perplexity(dev);
  write_file(path_in(cfg, "generator/train_log.json"), j.dump(2) + "\n");
  write_stage_log(cfg, "train-generator", {path_in(cfg, "generator")});
}

void stage_mine_beams(const PipelineConfig& cfg) {
  require_artifact(path_in(cfg, "generator"), "train-generator");
  require_artifact(path_in(cfg, "evaluator"), "train-evaluator");
  LoadedData d = load_data(cfg);
  auto gen = Generator::load(path_in(cfg, "generator"));
  auto ev = Evaluator::load(path_in(cfg, "evaluator"));
  // pairs are mined against dev references: the training side of the corpus
  // deliberately contains the low-quality turns the reranker must demote,
  // so train references would label them winners
  std::vector<PreferencePair> pairs;
  int mined = 0;
  for (const Dialog* dd : select_dialogs(d.corpus, d.split.dev)) {
    for (int t = 0; t < static_cast<int>(dd->turns.size()); ++t) {
      if (cfg.mine_limit > 0 && mined >= cfg.mine_limit) break;
      const auto& ref = dd->turns[t].system_tokens;
      if (ref.empty()) continue;
      NBestList nbest =
          gen->beam_search(build_generator_input(*dd, t, gen->vocab()));
      if (nbest.candidates.empty()) continue;
      auto mined_pairs = mine_pairs(nbest, ref, *ev, *dd, t, gen->vocab());
      pairs.insert(pairs.end(), mined_pairs.begin(), mined_pairs.end());
      ++mined;
    }
  }
  save_pairs(pairs, path_in(cfg, "pairs.jsonl"));
  write_stage_log(cfg, "mine-beams", {path_in(cfg, "pairs.jsonl")});
}

void stage_train_reranker(const PipelineConfig& cfg) {
  require_artifact(path_in(cfg, "pairs.jsonl"), "mine-beams");
  auto pairs = load_pairs(path_in(cfg, "pairs.jsonl"));
  RerankerConfig rcfg = cfg.reranker;
  rcfg.seed = cfg.seed;
  Reranker r(rcfg);
  Reranker::TrainLog log = r.train(pairs);
  r.save(path_in(cfg, "reranker"));
  ordered_json j;
  j["epoch_loss"] = log.epoch_loss;
  j["pairwise_accuracy"] = log.pairwise_accuracy;
  write_file(path_in(cfg, "reranker/train_log.json"), j.dump(2) + "\n");
  write_stage_log(cfg, "train-reranker", {path_in(cfg, "reranker")});
}

void stage_finetune(const PipelineConfig& cfg) {
  require_artifact(path_in(cfg, "generator"), "train-generator");
  require_artifact(path_in(cfg, "evaluator"), "train-evaluator");
  LoadedData d = load_data(cfg);
  auto gen = Generator::load(path_in(cfg, "generator"));
  auto ev = Evaluator::load(path_in(cfg, "evaluator"));
  auto train = make_finetune_examples(
      select_dialogs(d.corpus, d.split.train), gen->vocab());
  auto dev = make_finetune_examples(select_dialogs(d.corpus, d.split.dev),
                                    gen->vocab());
  FinetuneLog log = finetune_generator(*gen, *ev, train, dev, cfg.finetune);
  gen->save(path_in(cfg, "generator_ft"));
  ordered_json j;
  j["train_total"] = log.train_total;
  j["train_ce"] = log.train_ce;
  j["train_eval_l1"] = log.train_eval_l1;
  j["dev_total"] = log.dev_total;
  j["dev_eval_l1"] = log.dev_eval_l1;
  j["stopped_epoch"] = log.stopped_epoch;
  write_file(path_in(cfg, "generator_ft/train_log.json"), j.dump(2) + "\n");
  write_stage_log(cfg, "finetune", {path_in(cfg, "generator_ft")});
}

void check_variant(const std::string& v) {
  if (v != "s2s" && v != "s2s_rr" && v != "s2s_ft" && v != "s2s_rr_ft")
    throw std::runtime_error("unknown system variant: " + v);
}

void stage_generate(const PipelineConfig& cfg) {
  LoadedData d = load_data(cfg);
  auto test = select_dialogs(d.corpus, d.split.test);
  std::unique_ptr<Generator> base, ft;
  std::unique_ptr<Evaluator> ev;
  std::unique_ptr<Reranker> rr;
  std::vector<std::string> artifacts;
  for (const std::string& variant : cfg.variants) {
    check_variant(variant);
    bool finetuned = variant == "s2s_ft" || variant == "s2s_rr_ft";
    bool reranked = variant == "s2s_rr" || variant == "s2s_rr_ft";
    if (finetuned && !ft) {
      require_artifact(path_in(cfg, "generator_ft"), "finetune");
      ft = Generator::load(path_in(cfg, "generator_ft"));
    }
    if (!finetuned && !base) {
      require_artifact(path_in(cfg, "generator"), "train-generator");
      base = Generator::load(path_in(cfg, "generator"));
    }
    if (reranked) {
      if (!ev) {
        require_artifact(path_in(cfg, "evaluator"), "train-evaluator");
        ev = Evaluator::load(path_in(cfg, "evaluator"));
      }
      if (!rr) {
        require_artifact(path_in(cfg, "reranker"), "train-reranker");
        rr = Reranker::load(path_in(cfg, "reranker"));
      }
    }
    Generator& gen = finetuned ? *ft : *base;
    std::string out_path = path_in(cfg, "responses_" + variant + ".jsonl");
    std::ofstream out(out_path);
    for (const Dialog* dd : test)
      for (int t = 0; t < static_cast<int>(dd->turns.size()); ++t) {
        std::vector<int> ids;
        if (reranked) {
          RerankedDecode rd = generate_reranked(gen, *ev, *rr, *dd, t);
          ids = rd.ids;
        } else {
          ids = gen.decode_greedy(build_generator_input(*dd, t, gen.vocab()));
        }
        ordered_json j;
        j["dialog_id"] = dd->dialog_id;
        j["turn_index"] = t;
        j["tokens"] = gen.vocab().decode(ids);
        out << j.dump() << "\n";
      }
    artifacts.push_back(out_path);
  }
  write_stage_log(cfg, "generate", artifacts);
}

std::vector<TokenSeq> load_responses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<TokenSeq> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = ordered_json::parse(line);
    out.push_back(j["tokens"].get<std::vector<std::string>>());
  }
  return out;
}

void stage_evaluate(const PipelineConfig& cfg) {
  LoadedData d = load_data(cfg);
  auto test = select_dialogs(d.corpus, d.split.test);
  std::vector<TokenSeq> refs;
  for (const Dialog* dd : test)
    for (const Turn& t : dd->turns) refs.push_back(t.system_tokens);
  MetricReport report;
  for (const std::string& variant : cfg.variants) {
    check_variant(variant);
    std::string path = path_in(cfg, "responses_" + variant + ".jsonl");
    require_artifact(path, "generate");
    report.generation.push_back(
        generation_metrics(variant, load_responses(path), refs));
  }
  if (fs::exists(path_in(cfg, "evaluator"))) {
    auto ev = Evaluator::load(path_in(cfg, "evaluator"));
    auto turns = annotated_turns(test);
    if (!turns.empty()) {
      std::vector<EvaluatorOutput> preds;
      std::vector<TurnAnnotation> labels;
      for (const TurnExample& ex : turns) {
        preds.push_back(ev->evaluate_turn(*ex.dialog, ex.turn_index));
        labels.push_back((*ex.dialog->annotations)[ex.turn_index]);
      }
      report.heads =
          evaluator_metrics(preds, labels, ev->config().threshold);
      report.has_evaluator = true;
    }
  }
  write_file(path_in(cfg, "report.json"), report.to_json() + "\n");
  write_file(path_in(cfg, "report.txt"), report.to_text());
  write_stage_log(cfg, "evaluate",
                  {path_in(cfg, "report.json"), path_in(cfg, "report.txt")});
}

void stage_score_turn(const PipelineConfig&) {
  throw std::runtime_error(
      "score-turn needs --context and --response; use the score-turn "
      "command");
}

}  // namespace

std::uint64_t file_hash(const std::string& path) {
  std::string data = read_file(path);
  return nn::fnv1a64(data.data(), data.size());
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  PipelineConfig c;
  maybe(j, "work_dir", c.work_dir);
  maybe(j, "corpus_path", c.corpus_path);
  maybe(j, "seed", c.seed);
  maybe(j, "toy", c.toy);
  maybe(j, "toy_train", c.toy_train);
  maybe(j, "toy_dev", c.toy_dev);
  maybe(j, "toy_test", c.toy_test);
  maybe(j, "split_ratios", c.split_ratios);
  maybe(j, "gazetteer", c.gazetteer);
  maybe(j, "mine_limit", c.mine_limit);
  maybe(j, "variants", c.variants);
  maybe(j, "encoder_epochs", c.encoder_epochs);
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    if (e.contains("kind")) {
      c.encoder = SentenceEncoderConfig::defaults(
          encoder_kind_from_name(e["kind"].get<std::string>()));
    }
    maybe(e, "output_dim", c.encoder.output_dim);
    maybe(e, "layers", c.encoder.layers);
    maybe(e, "heads", c.encoder.heads);
    maybe(e, "max_len", c.encoder.max_len);
    maybe(e, "batch_size", c.encoder.batch_size);
    maybe(e, "learning_rate", c.encoder.learning_rate);
    maybe(e, "vocab_size", c.encoder.vocab_size);
  }
  if (j.contains("evaluator")) {
    const auto& e = j["evaluator"];
    maybe(e, "context_turns", c.evaluator.context_turns);
    maybe(e, "context_rnn_hidden", c.evaluator.context_rnn_hidden);
    maybe(e, "ffnn_layers", c.evaluator.ffnn_layers);
    maybe(e, "ffnn_hidden", c.evaluator.ffnn_hidden);
    maybe(e, "dropout", c.evaluator.dropout);
    maybe(e, "batch_size", c.evaluator.batch_size);
    maybe(e, "learning_rate", c.evaluator.learning_rate);
    maybe(e, "max_epochs", c.evaluator.max_epochs);
    maybe(e, "patience", c.evaluator.patience);
    maybe(e, "threshold", c.evaluator.threshold);
    maybe(e, "use_handcrafted_features",
          c.evaluator.use_handcrafted_features);
  }
  if (j.contains("generator")) {
    const auto& e = j["generator"];
    maybe(e, "hidden", c.generator.hidden);
    maybe(e, "emb_dim", c.generator.emb_dim);
    maybe(e, "vocab_size", c.generator.vocab_size);
    maybe(e, "batch_size", c.generator.batch_size);
    maybe(e, "learning_rate", c.generator.learning_rate);
    maybe(e, "max_decode_len", c.generator.max_decode_len);
    maybe(e, "beam_width", c.generator.beam_width);
    maybe(e, "length_normalize", c.generator.length_normalize);
    maybe(e, "max_epochs", c.generator.max_epochs);
    maybe(e, "patience", c.generator.patience);
  }
  if (j.contains("reranker")) {
    const auto& e = j["reranker"];
    maybe(e, "ffnn_layers", c.reranker.ffnn_layers);
    maybe(e, "hidden", c.reranker.hidden);
    maybe(e, "margin", c.reranker.margin);
    maybe(e, "learning_rate", c.reranker.learning_rate);
    maybe(e, "batch_size", c.reranker.batch_size);
    maybe(e, "max_epochs", c.reranker.max_epochs);
  }
  if (j.contains("finetune")) {
    const auto& e = j["finetune"];
    maybe(e, "lambda", c.finetune.lambda);
    maybe(e, "learning_rate", c.finetune.learning_rate);
    maybe(e, "batch_size", c.finetune.batch_size);
    maybe(e, "max_epochs", c.finetune.max_epochs);
    maybe(e, "patience", c.finetune.patience);
    maybe(e, "teacher_forced", c.finetune.teacher_forced);
  }
  return c;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
  return from_json(read_file(path));
}

std::string PipelineConfig::to_json() const {
  ordered_json j;
  j["work_dir"] = work_dir;
  j["corpus_path"] = corpus_path;
  j["seed"] = seed;
  j["toy"] = toy;
  j["toy_train"] = toy_train;
  j["toy_dev"] = toy_dev;
  j["toy_test"] = toy_test;
  j["split_ratios"] = split_ratios;
  j["gazetteer"] = gazetteer;
  j["mine_limit"] = mine_limit;
  j["variants"] = variants;
  j["encoder_epochs"] = encoder_epochs;
  j["encoder"] = {{"kind", encoder_kind_name(encoder.kind)},
                  {"output_dim", encoder.output_dim},
                  {"layers", encoder.layers},
                  {"heads", encoder.heads},
                  {"max_len", encoder.max_len},
                  {"batch_size", encoder.batch_size},
                  {"learning_rate", encoder.learning_rate},
                  {"vocab_size", encoder.vocab_size}};
  j["evaluator"] = {{"context_turns", evaluator.context_turns},
                    {"context_rnn_hidden", evaluator.context_rnn_hidden},
                    {"ffnn_layers", evaluator.ffnn_layers},
                    {"ffnn_hidden", evaluator.ffnn_hidden},
                    {"dropout", evaluator.dropout},
                    {"batch_size", evaluator.batch_size},
                    {"learning_rate", evaluator.learning_rate},
                    {"max_epochs", evaluator.max_epochs},
                    {"patience", evaluator.patience},
                    {"threshold", evaluator.threshold},
                    {"use_handcrafted_features",
                     evaluator.use_handcrafted_features}};
  j["generator"] = {{"hidden", generator.hidden},
                    {"emb_dim", generator.emb_dim},
                    {"vocab_size", generator.vocab_size},
                    {"batch_size", generator.batch_size},
                    {"learning_rate", generator.learning_rate},
                    {"max_decode_len", generator.max_decode_len},
                    {"beam_width", generator.beam_width},
                    {"length_normalize", generator.length_normalize},
                    {"max_epochs", generator.max_epochs},
                    {"patience", generator.patience}};
  j["reranker"] = {{"ffnn_layers", reranker.ffnn_layers},
                   {"hidden", reranker.hidden},
                   {"margin", reranker.margin},
                   {"learning_rate", reranker.learning_rate},
                   {"batch_size", reranker.batch_size},
                   {"max_epochs", reranker.max_epochs}};
  j["finetune"] = {{"lambda", finetune.lambda},
                   {"learning_rate", finetune.learning_rate},
                   {"batch_size", finetune.batch_size},
                   {"max_epochs", finetune.max_epochs},
                   {"patience", finetune.patience},
                   {"teacher_forced", finetune.teacher_forced}};
  return j.dump(2);
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> kStages = {
      "prepare-data",  "train-encoder", "train-evaluator",
      "train-generator", "mine-beams",  "train-reranker",
      "finetune",      "generate",      "evaluate"};
  return kStages;
}

void run_stage(const PipelineConfig& cfg, const std::string& stage) {
  if (stage == "prepare-data")
    stage_prepare_data(cfg);
  else if (stage == "train-encoder")
    stage_train_encoder(cfg);
  else if (stage == "train-evaluator")
    stage_train_evaluator(cfg);
  else if (stage == "train-generator")
    stage_train_generator(cfg);
  else if (stage == "mine-beams")
    stage_mine_beams(cfg);
  else if (stage == "train-reranker")
    stage_train_reranker(cfg);
  else if (stage == "finetune")
    stage_finetune(cfg);
  else if (stage == "generate")
    stage_generate(cfg);
  else if (stage == "evaluate")
    stage_evaluate(cfg);
  else if (stage == "score-turn")
    stage_score_turn(cfg);
  else
    throw std::runtime_error("unknown stage: " + stage);
}

void run_all(const PipelineConfig& cfg) {
  for (const std::string& s : pipeline_stages()) run_stage(cfg, s);
}

GenerationRow generation_metrics(const std::string& variant,
                                 const std::vector<TokenSeq>& hypotheses,
                                 const std::vector<TokenSeq>& references) {
  GenerationRow row;
  row.variant = variant;
  row.bleu4 = bleu4_corpus(hypotheses, references);
  row.rouge2 = rouge2_corpus(hypotheses, references);
  row.distinct2 = distinct2(hypotheses);
  return row;
}

std::string MetricReport::to_json() const {
  ordered_json j;
  j["generation"] = ordered_json::array();
  for (const GenerationRow& r : generation)
    j["generation"].push_back({{"variant", r.variant},
                               {"BLEU-4", r.bleu4},
                               {"ROUGE-2", r.rouge2},
                               {"Distinct-2", r.distinct2}});
  if (has_evaluator) {
    ordered_json e = ordered_json::object();
    for (int h = 0; h < 4; ++h)
      e[head_names()[h]] = {{"Accuracy", heads[h].accuracy},
                            {"Precision", heads[h].precision},
                            {"Recall", heads[h].recall},
                            {"F-score", heads[h].f_score},
                            {"MCC", heads[h].mcc}};
    j["evaluator"] = e;
  }
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  MetricReport r;
  for (const auto& g : j["generation"]) {
    GenerationRow row;
    row.variant = g["variant"].get<std::string>();
    row.bleu4 = g["BLEU-4"].get<double>();
    row.rouge2 = g["ROUGE-2"].get<double>();
    row.distinct2 = g["Distinct-2"].get<double>();
    r.generation.push_back(row);
  }
  if (j.contains("evaluator")) {
    r.has_evaluator = true;
    for (int h = 0; h < 4; ++h) {
      const auto& e = j["evaluator"][head_names()[h]];
      r.heads[h].accuracy = e["Accuracy"].get<double>();
      r.heads[h].precision = e["Precision"].get<double>();
      r.heads[h].recall = e["Recall"].get<double>();
      r.heads[h].f_score = e["F-score"].get<double>();
      r.heads[h].mcc = e["MCC"].get<double>();
    }
  }
  return r;
}

std::string MetricReport::to_text() const {
  std::ostringstream out;
  out << "Generation\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %10s %10s %10s\n", "variant",
                "BLEU-4", "ROUGE-2", "Distinct-2");
  out << line;
  for (const GenerationRow& r : generation) {
    std::snprintf(line, sizeof(line), "%-12s %10.2f %10.2f %10.4f\n",
                  r.variant.c_str(), r.bleu4, r.rouge2, r.distinct2);
    out << line;
  }
  if (has_evaluator) {
    out << "\nEvaluator\n";
    std::snprintf(line, sizeof(line), "%-16s %9s %10s %8s %8s %8s\n", "head",
                  "Accuracy", "Precision", "Recall", "F-score", "MCC");
    out << line;
    for (int h = 0; h < 4; ++h) {
      std::snprintf(line, sizeof(line),
                    "%-16s %9.3f %10.3f %8.3f %8.3f %8.3f\n", head_names()[h],
                    heads[h].accuracy, heads[h].precision, heads[h].recall,
                    heads[h].f_score, heads[h].mcc);
      out << line;
    }
  }
  return out.str();
}

std::string score_turn_json(const Evaluator& evaluator,
                            const std::string& context_json,
                            const std::string& response_text) {
  ordered_json j = ordered_json::parse(context_json);
  Dialog d;
  d.dialog_id = "score-turn";
  if (j.contains("turns"))
    for (const auto& t : j["turns"]) {
      Turn turn;
      turn.turn_index = static_cast<int>(d.turns.size());
      turn.user_text = t.value("user", std::string());
      turn.system_text = t.value("system", std::string());
      turn.user_tokens = tokenize(turn.user_text);
      turn.system_tokens = tokenize(turn.system_text);
      d.turns.push_back(std::move(turn));
    }
  Turn current;
  current.turn_index = static_cast<int>(d.turns.size());
  current.user_text = j.value("user", std::string());
  current.user_tokens = tokenize(current.user_text);
  d.turns.push_back(std::move(current));
  EvaluatorOutput out = evaluator.evaluate_response(
      d, static_cast<int>(d.turns.size()) - 1, tokenize(response_text));
  ordered_json r;
  for (int h = 0; h < 4; ++h) r[head_names()[h]] = out.heads[h].second;
  return r.dump(2);
}

}  // namespace chateval
