#pragma once

// Config-driven runs: ingest -> train -> evaluate, with every random choice
// derived from the config seed through named sub-seeds.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prqa/ingest.hpp"
#include "prqa/metrics.hpp"
#include "prqa/model.hpp"
#include "prqa/train.hpp"

namespace prqa {

struct DataSource {
  std::string category;
  std::filesystem::path path;
  InputFormat format = InputFormat::jsonl;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::vector<DataSource> qa;
  std::vector<DataSource> reviews;
  std::optional<std::filesystem::path> gold;

  double neg_ratio = 1.0;
  std::size_t qr_per_question = 5;
  SplitRatios split{0.8, 0.1, 0.1};

  std::optional<std::filesystem::path> embeddings;  // random vectors when absent
  std::size_t min_count = 1;

  ModelConfig model;
  TrainConfig train;  // train.seed mirrors `seed`
};

// Name of the environment variable that overrides output_dir.
inline constexpr const char* output_dir_env = "PRQA_OUTPUT_DIR";

// Parses and validates a JSON config. Relative paths resolve against
// `base_dir`. Unknown keys, missing required keys, wrong types and missing
// input files are config errors.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);
// Reads `path`, then applies the output-directory environment override.
RunConfig load_run_config(const std::filesystem::path& path);

// File names inside output_dir.
namespace files {
inline constexpr const char* qa_train = "qa_train.tsv";
inline constexpr const char* qa_dev = "qa_dev.tsv";
inline constexpr const char* qa_test = "qa_test.tsv";
inline constexpr const char* qr_train = "qr_train.tsv";
inline constexpr const char* stats = "stats.json";
inline constexpr const char* checkpoint = "model.ckpt";
inline constexpr const char* checkpoint_no_adapt = "model_no_adapt.ckpt";
inline constexpr const char* train_log = "train.log";
inline constexpr const char* train_log_no_adapt = "train_no_adapt.log";
inline constexpr const char* ablation = "ablation.txt";
}  // namespace files

struct IngestResult {
  DatasetStats stats;
  std::vector<std::string> warnings;
};

// Parses, joins and pairs the configured dumps, splits QA pairs by question
// and writes the pair files plus stats.json. QR pairs follow their question's
// partition; only the training share is written.
IngestResult run_ingest(const RunConfig& config);

struct TrainSummary {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::size_t best_epoch = 0;
  std::optional<double> best_dev_acc;
};

// Trains on the ingested pair files. `adaptation` overrides train.adaptation;
// the no-adaptation run writes to its own checkpoint and log names.
TrainSummary run_train(const RunConfig& config, std::optional<bool> adaptation = std::nullopt);

// Tokenizes and encodes labeled pairs for `params`. Rows without a label or
// with an empty side are data errors naming the row.
std::vector<LabeledRow> encode_labeled(const std::vector<SentencePair>& pairs,
                                       const ModelParams& params);

enum class EvalSet { source, target };

// Source: a pair file (QA test split by default). Target: a gold QR file.
EvalReport evaluate_file(const ModelParams& params, const std::filesystem::path& path,
                         EvalSet set, std::size_t workers = 1);

// Default evaluation input for a config: qa_test.tsv or the gold file.
std::filesystem::path default_eval_path(const RunConfig& config, EvalSet set);

// Converts a single-quoted upstream dump to strict JSON lines, one record
// per non-blank line. Returns the number of records written; a record that
// cannot be converted is a parse error naming its line.
std::size_t normalize_loose_file(const std::filesystem::path& input,
                                 const std::filesystem::path& output);

// Trains both arms from the same initialization and evaluates each on the
// QA test split and the gold QR set; writes ablation.txt.
AblationResult run_ablation(const RunConfig& config);

}  // namespace prqa
