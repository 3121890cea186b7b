// Command-line front end. Everything goes through the C library.

#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "prqa/prqa.h"

namespace {

enum Exit { exit_ok = 0, exit_internal = 1, exit_input = 2, exit_numeric = 3 };

int exit_code(prqa_status s) {
  switch (s) {
    case PRQA_OK: return exit_ok;
    case PRQA_ERR_INPUT:
    case PRQA_ERR_USAGE: return exit_input;
    case PRQA_ERR_NUMERIC: return exit_numeric;
    default: return exit_internal;
  }
}

// Thrown to unwind out of a subcommand with a status already reported.
struct Failed {
  int code;
};

void check(prqa_status s) {
  if (s == PRQA_OK) return;
  std::fprintf(stderr, "error: %s\n", prqa_last_error());
  throw Failed{exit_code(s)};
}

struct StringDeleter {
  void operator()(char* s) const { prqa_string_free(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

struct ConfigDeleter {
  void operator()(prqa_config* c) const { prqa_config_free(c); }
};
struct ModelDeleter {
  void operator()(prqa_model* m) const { prqa_model_free(m); }
};

std::unique_ptr<prqa_config, ConfigDeleter> load_config(const std::string& path) {
  prqa_config* c = nullptr;
  check(prqa_config_load(path.c_str(), &c));
  return std::unique_ptr<prqa_config, ConfigDeleter>(c);
}

std::unique_ptr<prqa_model, ModelDeleter> load_model(const std::string& path) {
  prqa_model* m = nullptr;
  check(prqa_model_load(path.c_str(), &m));
  return std::unique_ptr<prqa_model, ModelDeleter>(m);
}

void print(const OwnedString& s) {
  std::fputs(s.get(), stdout);
  const std::string text = s.get();
  if (text.empty() || text.back() != '\n') std::fputc('\n', stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Answer selection for product questions with review-domain adaptation"};
  app.set_version_flag("--version", std::string(prqa_version()));
  app.require_subcommand(1);

  std::string config_path, checkpoint, data_path, report_path, question, candidate;
  std::string input_path, output_path;
  bool no_adaptation = false, source = false, target = false;
  unsigned workers = 1;

  auto* ingest = app.add_subcommand("ingest", "Parse raw dumps into pair files and stats.json");
  ingest->add_option("-c,--config", config_path, "Run config (JSON)")->required();

  auto* train = app.add_subcommand("train", "Train on ingested pairs; writes checkpoint and log");
  train->add_option("-c,--config", config_path, "Run config (JSON)")->required();
  train->add_flag("--no-adaptation", no_adaptation, "Train the QA branch only (ablation arm)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on labeled pairs");
  eval->add_option("-c,--config", config_path, "Run config; supplies default datasets");
  eval->add_option("-k,--checkpoint", checkpoint, "Model checkpoint")->required();
  auto* src_flag = eval->add_flag("--source", source, "QA test pairs (pair-file format)");
  auto* tgt_flag = eval->add_flag("--target", target, "Gold question-review pairs");
  src_flag->excludes(tgt_flag);
  eval->add_option("-d,--data", data_path, "Dataset file instead of the config default");
  eval->add_option("-r,--report", report_path, "Also write the report JSON here");
  eval->add_option("-j,--workers", workers, "Prediction threads")->check(CLI::Range(1u, 256u));

  auto* infer = app.add_subcommand("infer", "Score one question/candidate pair");
  infer->add_option("-k,--checkpoint", checkpoint, "Model checkpoint")->required();
  infer->add_option("-q,--question", question, "Question text")->required();
  infer->add_option("-a,--candidate", candidate, "Answer or review sentence")->required();

  auto* normalize =
      app.add_subcommand("normalize", "Convert a single-quoted upstream dump to JSON lines");
  normalize->add_option("-i,--input", input_path, "Loose input file")->required();
  normalize->add_option("-o,--output", output_path, "JSON-lines output file")->required();

  auto* ablate = app.add_subcommand("ablate", "Train with and without adaptation, compare");
  ablate->add_option("-c,--config", config_path, "Run config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_input;
  }

  try {
    if (*ingest) {
      auto config = load_config(config_path);
      char* stats = nullptr;
      char* warnings = nullptr;
      check(prqa_ingest(config.get(), &stats, &warnings));
      OwnedString owned_stats(stats), owned_warnings(warnings);
      if (*owned_warnings) std::fputs(owned_warnings.get(), stderr);
      print(owned_stats);
    } else if (*train) {
      auto config = load_config(config_path);
      char* summary = nullptr;
      check(prqa_train(config.get(), no_adaptation ? PRQA_ADAPT_OFF : PRQA_ADAPT_CONFIG,
                       &summary));
      print(OwnedString(summary));
    } else if (*eval) {
      if (!source && !target) {
        std::fprintf(stderr, "error: eval needs --source or --target\n");
        return exit_input;
      }
      if (data_path.empty() && config_path.empty()) {
        std::fprintf(stderr, "error: eval needs --data or --config\n");
        return exit_input;
      }
      auto config = config_path.empty() ? nullptr : load_config(config_path);
      auto model = load_model(checkpoint);
      prqa_eval_report report{};
      check(prqa_evaluate(model.get(), config.get(), data_path.empty() ? nullptr : data_path.c_str(),
                          source ? PRQA_EVAL_SOURCE : PRQA_EVAL_TARGET, workers, &report));
      char* json = nullptr;
      check(prqa_report_to_json(&report, &json));
      OwnedString owned(json);
      print(owned);
      if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary);
        out << owned.get();
        if (!out) {
          std::fprintf(stderr, "error: cannot write %s\n", report_path.c_str());
          return exit_input;
        }
      }
    } else if (*infer) {
      auto model = load_model(checkpoint);
      int label = 0;
      double confidence = 0.0;
      check(prqa_predict(model.get(), question.c_str(), candidate.c_str(), &label, &confidence));
      std::printf("label=%d confidence=%.6f\n", label, confidence);
    } else if (*normalize) {
      std::size_t records = 0;
      check(prqa_normalize_file(input_path.c_str(), output_path.c_str(), &records));
      std::fprintf(stderr, "%zu records written to %s\n", records, output_path.c_str());
    } else if (*ablate) {
      auto config = load_config(config_path);
      char* table = nullptr;
      check(prqa_ablation(config.get(), &table));
      print(OwnedString(table));
    }
  } catch (const Failed& f) {
    return f.code;
  }
  return exit_ok;
}
