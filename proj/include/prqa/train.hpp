#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prqa/metrics.hpp"
#include "prqa/model.hpp"

namespace prqa {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t qa_share = 1;  // QA:QR mixing ratio inside a batch
  std::size_t qr_share = 1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool adaptation = true;
  std::size_t eval_every = 1;  // epochs between dev evaluations

  // Throws a config error for inconsistent settings.
  void validate() const;
  // QA rows in each batch. The same with adaptation off, where the QR rows
  // are simply left out, so both arms of an ablation see one QA stream.
  std::size_t qa_rows_per_batch() const;
};

struct LabeledRow {
  EncodedSequence question;
  EncodedSequence candidate;
  int label = 0;
};

struct TrainingData {
  std::vector<PairRow> qa_train;  // labeled QA rows
  std::vector<PairRow> qr_train;  // unlabeled QR rows
  std::vector<LabeledRow> qa_dev;
};

// One epoch of batches. QA rows are visited once in shuffled order; QR rows
// are drawn cyclically from their own shuffle so every batch holds the
// configured QA:QR mix. With adaptation off, batches are QA-only and hold
// the same QA rows as the adapted run.
std::vector<PairBatch> make_batches(std::span<const PairRow> qa, std::span<const PairRow> qr,
                                    const TrainConfig& config, std::uint64_t epoch_seed);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer steps completed
  double lambda = 0.0;    // value used on the epoch's last step
  double qa_loss = 0.0;   // mean over the epoch's batches
  double domain_loss = 0.0;
  double domain_acc = 0.0;
  double train_acc = 0.0;  // QA rows, measured during the epoch
  std::optional<double> dev_acc;

  std::string to_json_line() const;
};

struct TrainResult {
  ModelParams best;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::optional<double> best_dev_acc;
};

// Minimax training: each step backpropagates the masked QA loss plus the
// domain loss through the reversal layer with lambda = lambda_schedule(steps
// done / total steps). Without adaptation only the QA loss is optimized and
// lambda stays 0. Keeps the parameters with the best dev accuracy (the final
// ones when there is no dev set). Throws a numeric error on a non-finite loss.
TrainResult train(const TrainConfig& config, const ModelParams& initial,
                  const TrainingData& data,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Predicts every row; `workers` > 1 shards the rows over threads and merges
// the confusion counts.
EvalReport evaluate(const ModelParams& params, std::span<const LabeledRow> rows,
                    std::string dataset, std::size_t workers = 1);

struct AblationArm {
  EvalReport source;
  EvalReport target;
  TrainResult training;
};

struct AblationResult {
  AblationArm no_adaptation;
  AblationArm adaptation;

  // Four rows: (no adapt | adapt) x (source | target) accuracies.
  std::string table() const;
};

// Trains both arms from the same initial parameters and batching seed.
AblationResult ablation_compare(const TrainConfig& config, const ModelParams& initial,
                                const TrainingData& data, std::span<const LabeledRow> source_test,
                                std::span<const LabeledRow> target_test);

}  // namespace prqa
