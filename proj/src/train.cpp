#include "prqa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "prqa/error.hpp"
#include "prqa/random.hpp"

namespace prqa {

void TrainConfig::validate() const {
  if (epochs == 0) fail(ErrorKind::config, "train.epochs must be >= 1");
  if (batch_size == 0) fail(ErrorKind::config, "train.batch_size must be >= 1");
  if (adaptation && batch_size < 2) {
    fail(ErrorKind::config, "train.batch_size must be >= 2 with adaptation (QA and QR rows)");
  }
  if (qa_share == 0 || (adaptation && qr_share == 0)) {
    fail(ErrorKind::config, "train QA:QR shares must be positive");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorKind::config, "train.learning_rate must be finite and >= 0");
  }
  if (eval_every == 0) fail(ErrorKind::config, "train.eval_every must be >= 1");
}

std::size_t TrainConfig::qa_rows_per_batch() const {
  if (batch_size < 2 || qr_share == 0) return batch_size;
  const std::size_t qa = batch_size * qa_share / (qa_share + qr_share);
  return std::clamp<std::size_t>(qa, 1, batch_size - 1);
}

std::vector<PairBatch> make_batches(std::span<const PairRow> qa, std::span<const PairRow> qr,
                                    const TrainConfig& config, std::uint64_t epoch_seed) {
  config.validate();
  if (qa.empty()) fail(ErrorKind::config, "no labeled QA pairs to train on");
  if (config.adaptation && qr.empty()) {
    fail(ErrorKind::config, "adaptation needs unlabeled QR pairs");
  }
  Rng rng(epoch_seed);
  std::vector<std::size_t> qa_order(qa.size());
  for (std::size_t i = 0; i < qa_order.size(); ++i) qa_order[i] = i;
  std::shuffle(qa_order.begin(), qa_order.end(), rng);
  std::vector<std::size_t> qr_order(config.adaptation ? qr.size() : 0);
  for (std::size_t i = 0; i < qr_order.size(); ++i) qr_order[i] = i;
  std::shuffle(qr_order.begin(), qr_order.end(), rng);

  const std::size_t per_qa = config.qa_rows_per_batch();
  const std::size_t per_qr = config.adaptation ? config.batch_size - per_qa : 0;
  std::vector<PairBatch> batches;
  std::size_t qr_cursor = 0;
  for (std::size_t begin = 0; begin < qa_order.size(); begin += per_qa) {
    PairBatch batch;
    const std::size_t end = std::min(begin + per_qa, qa_order.size());
    for (std::size_t i = begin; i < end; ++i) batch.rows.push_back(qa[qa_order[i]]);
    for (std::size_t k = 0; k < per_qr; ++k) {
      batch.rows.push_back(qr[qr_order[qr_cursor]]);
      qr_cursor = (qr_cursor + 1) % qr_order.size();
    }
    std::shuffle(batch.rows.begin(), batch.rows.end(), rng);
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::string EpochLog::to_json_line() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["lambda"] = lambda;
  j["qa_loss"] = qa_loss;
  j["domain_loss"] = domain_loss;
  j["domain_acc"] = domain_acc;
  j["train_acc"] = train_acc;
  j["dev_acc"] = dev_acc ? nlohmann::ordered_json(*dev_acc) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

namespace {

int argmax2(const Tensor& logits, std::size_t row) {
  return logits.at(row, 1) > logits.at(row, 0) ? 1 : 0;
}

}  // namespace

TrainResult train(const TrainConfig& config, const ModelParams& initial,
                  const TrainingData& data, const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (data.qa_train.empty()) fail(ErrorKind::config, "no labeled QA pairs to train on");
  if (config.adaptation && data.qr_train.empty()) {
    fail(ErrorKind::config, "adaptation needs unlabeled QR pairs");
  }
  ModelParams params = initial.clone();
  const std::vector<NamedTensor> trainable = params.trainable();
  OptimizerState optimizer =
      make_optimizer_state(trainable, AdamConfig{config.learning_rate});

  const std::uint64_t batch_seed = derive_seed(config.seed, "batching");
  const std::size_t per_qa = config.qa_rows_per_batch();
  const std::size_t steps_per_epoch = (data.qa_train.size() + per_qa - 1) / per_qa;
  const std::size_t total_steps = steps_per_epoch * config.epochs;

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches =
        make_batches(data.qa_train, data.qr_train, config,
                     derive_seed(batch_seed, "epoch-" + std::to_string(epoch)));
    EpochLog log;
    log.epoch = epoch;
    double qa_loss_sum = 0.0, domain_loss_sum = 0.0;
    std::size_t domain_hits = 0, domain_rows = 0, qa_hits = 0, qa_rows = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const PairBatch& batch = batches[b];
      batch.validate();
      const double lambda =
          config.adaptation
              ? lambda_schedule(static_cast<double>(step) / static_cast<double>(total_steps))
              : 0.0;
      auto diverged = [&](const std::string& detail) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << " (epoch " << epoch << ", batch " << b
            << ", lambda " << lambda << "): " << detail;
        fail(ErrorKind::numeric, msg.str());
      };
      Graph g;
      PairOutputs out;
      Tensor qa_loss, dom_loss, loss;
      try {
        out = forward_pair(g, batch, params, lambda);
        qa_loss = masked_qa_loss(g, out.qa_logits, batch);
        dom_loss = domain_loss(g, out.domain_logits, batch);
        loss = config.adaptation ? add(g, qa_loss, dom_loss) : qa_loss;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        diverged(e.what());
      }
      if (!std::isfinite(loss.item())) diverged("loss is " + std::to_string(loss.item()));
      g.backward(loss);
      adam_step(trainable, optimizer);

      qa_loss_sum += qa_loss.item();
      domain_loss_sum += dom_loss.item();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const PairRow& r = batch.rows[i];
        domain_hits += argmax2(out.domain_logits, i) == r.domain_label();
        ++domain_rows;
        if (r.kind == PairKind::qa) {
          qa_hits += argmax2(out.qa_logits, i) == *r.qa_label;
          ++qa_rows;
        }
      }
      log.lambda = lambda;
      ++step;
    }
    log.step = step;
    log.qa_loss = qa_loss_sum / static_cast<double>(batches.size());
    log.domain_loss = domain_loss_sum / static_cast<double>(batches.size());
    log.domain_acc = static_cast<double>(domain_hits) / static_cast<double>(domain_rows);
    log.train_acc = static_cast<double>(qa_hits) / static_cast<double>(qa_rows);

    const bool evaluate_now = epoch % config.eval_every == 0 || epoch == config.epochs;
    if (!data.qa_dev.empty() && evaluate_now) {
      log.dev_acc = evaluate(params, data.qa_dev, "dev").accuracy;
      if (!result.best_dev_acc || *log.dev_acc > *result.best_dev_acc) {
        result.best_dev_acc = log.dev_acc;
        result.best_epoch = epoch;
        result.best = params.clone();
      }
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  if (data.qa_dev.empty()) {
    result.best = params.clone();
    result.best_epoch = config.epochs;
  }
  return result;
}

EvalReport evaluate(const ModelParams& params, std::span<const LabeledRow> rows,
                    std::string dataset, std::size_t workers) {
  if (rows.empty()) fail(ErrorKind::usage, "cannot evaluate an empty set");
  workers = std::clamp<std::size_t>(workers, 1, rows.size());
  std::vector<ConfusionCounts> shards(workers);
  auto run_shard = [&](std::size_t w) {
    for (std::size_t i = w; i < rows.size(); i += workers) {
      const LabeledRow& r = rows[i];
      shards[w].add(r.label, predict(r.question, r.candidate, params).label);
    }
  };
  if (workers == 1) {
    run_shard(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run_shard, w);
    for (std::thread& t : threads) t.join();
  }
  ConfusionCounts total;
  for (const ConfusionCounts& c : shards) total += c;
  return make_report(std::move(dataset), total);
}

std::string AblationResult::table() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-18s %-8s %9s\n", "model", "eval", "accuracy");
  out << line;
  const std::pair<const char*, const AblationArm*> arms[] = {
      {"No domain-adapt", &no_adaptation}, {"Domain-adapt", &adaptation}};
  for (const auto& [name, arm] : arms) {
    std::snprintf(line, sizeof line, "%-18s %-8s %8.2f%%\n", name, "source",
                  100.0 * arm->source.accuracy);
    out << line;
    std::snprintf(line, sizeof line, "%-18s %-8s %8.2f%%\n", name, "target",
                  100.0 * arm->target.accuracy);
    out << line;
  }
  return out.str();
}

AblationResult ablation_compare(const TrainConfig& config, const ModelParams& initial,
                                const TrainingData& data, std::span<const LabeledRow> source_test,
                                std::span<const LabeledRow> target_test) {
  AblationResult result;
  auto run_arm = [&](bool adaptation) {
    TrainConfig c = config;
    c.adaptation = adaptation;
    AblationArm arm;
    arm.training = train(c, initial, data);
    arm.source = evaluate(arm.training.best, source_test, "source");
    arm.target = evaluate(arm.training.best, target_test, "target");
    return arm;
  };
  result.no_adaptation = run_arm(false);
  result.adaptation = run_arm(true);
  return result;
}

}  // namespace prqa
