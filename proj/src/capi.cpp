#include "prqa/prqa.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "json.hpp"
#include "prqa/checkpoint.hpp"
#include "prqa/error.hpp"
#include "prqa/pipeline.hpp"

struct prqa_config {
  prqa::RunConfig config;
};

struct prqa_model {
  prqa::ModelParams params;
};

namespace {

thread_local std::string last_error;

prqa_status status_for(prqa::ErrorKind kind) {
  using prqa::ErrorKind;
  switch (kind) {
    case ErrorKind::numeric:
      return PRQA_ERR_NUMERIC;
    case ErrorKind::usage:
      return PRQA_ERR_USAGE;
    case ErrorKind::parameter:
    case ErrorKind::parse:
    case ErrorKind::io:
    case ErrorKind::data:
    case ErrorKind::config:
      return PRQA_ERR_INPUT;
    case ErrorKind::dimension:
    case ErrorKind::internal:
      break;
  }
  return PRQA_ERR_INTERNAL;
}

template <typename Body>
prqa_status guarded(Body&& body) {
  try {
    body();
    return PRQA_OK;
  } catch (const prqa::Error& e) {
    last_error = std::string(prqa::to_string(e.kind())) + " error: " + e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = std::string("internal error: ") + e.what();
  } catch (...) {
    last_error = "internal error: unknown exception";
  }
  return PRQA_ERR_INTERNAL;
}

prqa_status usage(const char* message) {
  last_error = std::string("usage error: ") + message;
  return PRQA_ERR_USAGE;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

prqa::EvalReport from_c(const prqa_eval_report& r) {
  prqa::EvalReport out;
  out.dataset = std::string(r.dataset, strnlen(r.dataset, sizeof r.dataset));
  out.n = r.n;
  out.accuracy = r.accuracy;
  out.precision = r.precision;
  out.recall = r.recall;
  out.f1 = r.f1;
  out.counts = {r.tp, r.fp, r.tn, r.fn};
  return out;
}

void to_c(const prqa::EvalReport& r, prqa_eval_report* out) {
  std::memset(out, 0, sizeof *out);
  std::strncpy(out->dataset, r.dataset.c_str(), sizeof out->dataset - 1);
  out->n = r.n;
  out->tp = r.counts.tp;
  out->fp = r.counts.fp;
  out->tn = r.counts.tn;
  out->fn = r.counts.fn;
  out->accuracy = r.accuracy;
  out->precision = r.precision;
  out->recall = r.recall;
  out->f1 = r.f1;
}

}  // namespace

extern "C" {

const char* prqa_version(void) { return "1.0.0"; }

const char* prqa_last_error(void) { return last_error.c_str(); }

void prqa_string_free(char* s) { std::free(s); }

prqa_status prqa_config_load(const char* path, prqa_config** out) {
  if (!path || !out) return usage("prqa_config_load needs a path and an output handle");
  *out = nullptr;
  return guarded([&] { *out = new prqa_config{prqa::load_run_config(path)}; });
}

void prqa_config_free(prqa_config* config) { delete config; }

prqa_status prqa_config_output_dir(const prqa_config* config, char** out) {
  if (!config || !out) return usage("prqa_config_output_dir needs a config and an output");
  return guarded([&] { *out = copy_string(config->config.output_dir.string()); });
}

prqa_status prqa_ingest(const prqa_config* config, char** stats_json, char** warnings) {
  if (!config) return usage("prqa_ingest needs a config");
  return guarded([&] {
    const prqa::IngestResult result = prqa::run_ingest(config->config);
    std::string joined;
    for (const std::string& w : result.warnings) joined += w + "\n";
    if (stats_json) *stats_json = copy_string(prqa::to_json(result.stats));
    if (warnings) *warnings = copy_string(joined);
  });
}

prqa_status prqa_train(const prqa_config* config, prqa_adaptation adaptation,
                       char** summary_json) {
  if (!config) return usage("prqa_train needs a config");
  return guarded([&] {
    std::optional<bool> override;
    if (adaptation != PRQA_ADAPT_CONFIG) override = adaptation == PRQA_ADAPT_ON;
    const prqa::TrainSummary s = prqa::run_train(config->config, override);
    if (summary_json) {
      nlohmann::ordered_json j;
      j["checkpoint"] = s.checkpoint.string();
      j["log"] = s.log.string();
      j["best_epoch"] = s.best_epoch;
      j["best_dev_acc"] = s.best_dev_acc ? nlohmann::ordered_json(*s.best_dev_acc) : nullptr;
      *summary_json = copy_string(j.dump(2) + "\n");
    }
  });
}

prqa_status prqa_ablation(const prqa_config* config, char** table) {
  if (!config || !table) return usage("prqa_ablation needs a config and an output");
  return guarded([&] { *table = copy_string(prqa::run_ablation(config->config).table()); });
}

prqa_status prqa_model_load(const char* checkpoint_path, prqa_model** out) {
  if (!checkpoint_path || !out) return usage("prqa_model_load needs a path and an output");
  *out = nullptr;
  return guarded([&] {
    *out = new prqa_model{prqa::load_checkpoint(checkpoint_path).params};
  });
}

void prqa_model_free(prqa_model* model) { delete model; }

prqa_status prqa_predict(const prqa_model* model, const char* question, const char* candidate,
                         int* label, double* confidence) {
  if (!model || !question || !candidate || !label) {
    return usage("prqa_predict needs a model, both texts and a label output");
  }
  return guarded([&] {
    const prqa::Prediction p = prqa::predict(question, candidate, model->params);
    *label = p.label;
    if (confidence) *confidence = p.confidence;
  });
}

prqa_status prqa_evaluate(const prqa_model* model, const prqa_config* config, const char* path,
                          prqa_eval_set set, unsigned workers, prqa_eval_report* out) {
  if (!model || !out) return usage("prqa_evaluate needs a model and a report output");
  if (!path && !config) return usage("prqa_evaluate needs a dataset path or a config");
  if (set != PRQA_EVAL_SOURCE && set != PRQA_EVAL_TARGET) return usage("unknown evaluation set");
  return guarded([&] {
    const auto which = set == PRQA_EVAL_SOURCE ? prqa::EvalSet::source : prqa::EvalSet::target;
    const std::filesystem::path file =
        path ? std::filesystem::path(path) : prqa::default_eval_path(config->config, which);
    to_c(prqa::evaluate_file(model->params, file, which, workers ? workers : 1), out);
  });
}

prqa_status prqa_report_to_json(const prqa_eval_report* report, char** json) {
  if (!report || !json) return usage("prqa_report_to_json needs a report and an output");
  return guarded([&] { *json = copy_string(prqa::to_json(from_c(*report))); });
}

prqa_status prqa_normalize_file(const char* input_path, const char* output_path,
                                size_t* records) {
  if (!input_path || !output_path) return usage("prqa_normalize_file needs two paths");
  return guarded([&] {
    const std::size_t n = prqa::normalize_loose_file(input_path, output_path);
    if (records) *records = n;
  });
}

}  // extern "C"
