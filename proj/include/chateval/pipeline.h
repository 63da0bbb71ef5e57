// Stage orchestration: each stage reads its dependencies from the work
// directory, writes versioned artifacts plus a machine-readable log with
// content hashes, and is deterministic given identical inputs and seed.

#ifndef CHATEVAL_PIPELINE_H_
#define CHATEVAL_PIPELINE_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chateval/encoders.h"
#include "chateval/evaluator.h"
#include "chateval/finetune.h"
#include "chateval/generator.h"
#include "chateval/metrics.h"
#include "chateval/reranker.h"

namespace chateval {

struct PipelineConfig {
  std::string work_dir = "runs/default";
  std::string corpus_path;  // external JSONL; empty = work_dir/corpus.jsonl
  std::uint64_t seed = 0;

  // synthetic-data generation for prepare-data
  bool toy = false;
  int toy_train = 400;
  int toy_dev = 50;
  int toy_test = 50;
  std::vector<double> split_ratios = {0.8, 0.1, 0.1};

  SentenceEncoderConfig encoder =
      SentenceEncoderConfig::defaults(EncoderKind::kAverage);
  int encoder_epochs = 5;
  EvaluatorConfig evaluator;
  GeneratorConfig generator;
  RerankerConfig reranker;
  FinetuneConfig finetune;
  std::vector<std::string> gazetteer;
  int mine_limit = 0;  // max turns to mine beams from; 0 = all

  std::vector<std::string> variants = {"s2s", "s2s_rr", "s2s_ft",
                                       "s2s_rr_ft"};

  static PipelineConfig from_json(const std::string& text);
  static PipelineConfig from_json_file(const std::string& path);
  std::string to_json() const;
};

// Stage names in dependency order.
const std::vector<std::string>& pipeline_stages();

// Runs one stage; throws on missing dependency artifacts (naming the stage
// that produces them) or invalid configuration.
void run_stage(const PipelineConfig& cfg, const std::string& stage);
void run_all(const PipelineConfig& cfg);

struct GenerationRow {
  std::string variant;
  double bleu4 = 0;     // "BLEU-4"
  double rouge2 = 0;    // "ROUGE-2"
  double distinct2 = 0; // "Distinct-2"
};

struct MetricReport {
  std::vector<GenerationRow> generation;
  bool has_evaluator = false;
  std::array<HeadMetrics, 4> heads;  // Accuracy/Precision/Recall/F-score/MCC
  std::string to_json() const;
  std::string to_text() const;  // aligned plain-text tables
  static MetricReport from_json(const std::string& text);
};

GenerationRow generation_metrics(const std::string& variant,
                                 const std::vector<TokenSeq>& hypotheses,
                                 const std::vector<TokenSeq>& references);

// Context JSON: {"turns": [{"user": ..., "system": ...}, ...],
//                "user": "current user utterance"}.
// Returns {"comprehensible": p, "on_topic": p, "interesting": p,
//          "continue": p}.
std::string score_turn_json(const Evaluator& evaluator,
                            const std::string& context_json,
                            const std::string& response_text);

std::uint64_t file_hash(const std::string& path);

}  // namespace chateval

#endif  // CHATEVAL_PIPELINE_H_
