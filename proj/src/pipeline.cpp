#include "prqa/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "prqa/checkpoint.hpp"
#include "prqa/error.hpp"
#include "prqa/random.hpp"
#include "prqa/text.hpp"

namespace prqa {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// A JSON object whose keys must all be consumed; leftovers are rejected.
class Section {
 public:
  Section(const json& value, std::string where) : value_(value), where_(std::move(where)) {
    if (!value_.is_object()) fail(ErrorKind::config, where_ + " must be an object");
  }

  bool has(const std::string& key) const { return value_.contains(key); }

  const json& at(const std::string& key) {
    seen_.insert(key);
    if (!value_.contains(key)) fail(ErrorKind::config, "missing required key " + name(key));
    return value_.at(key);
  }

  std::string name(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

  std::uint64_t unsigned_int(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number_unsigned()) {
      fail(ErrorKind::config, name(key) + " must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::size_t count(const std::string& key, std::size_t fallback, std::size_t min = 1) {
    if (!has(key)) return fallback;
    const std::uint64_t v = unsigned_int(key);
    if (v < min) fail(ErrorKind::config, name(key) + " must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }
  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number()) fail(ErrorKind::config, name(key) + " must be a number");
    return v.get<double>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) fail(ErrorKind::config, name(key) + " must be true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string() || v.get<std::string>().empty()) {
      fail(ErrorKind::config, name(key) + " must be a non-empty string");
    }
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& [key, _] : value_.items()) {
      if (!seen_.count(key)) fail(ErrorKind::config, "unknown config key " + name(key));
    }
  }

 private:
  const json& value_;
  std::string where_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path existing_file(const fs::path& base, const std::string& p, const std::string& key) {
  fs::path path = resolve(base, p);
  if (!fs::is_regular_file(path)) {
    fail(ErrorKind::config, key + ": input file not found: " + path.string());
  }
  return path;
}

std::vector<DataSource> read_sources(Section& data, const std::string& key,
                                     const fs::path& base) {
  const json& list = data.at(key);
  if (!list.is_array() || list.empty()) {
    fail(ErrorKind::config, data.name(key) + " must be a non-empty array");
  }
  std::vector<DataSource> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    Section s(list[i], data.name(key) + "[" + std::to_string(i) + "]");
    DataSource src;
    src.category = s.string("category");
    src.path = existing_file(base, s.string("path"), s.name("path"));
    if (s.has("format")) {
      const std::string f = s.string("format");
      if (f == "jsonl") {
        src.format = InputFormat::jsonl;
      } else if (f == "loose") {
        src.format = InputFormat::loose;
      } else {
        fail(ErrorKind::config, s.name("format") + " must be \"jsonl\" or \"loose\"");
      }
    }
    s.finish();
    out.push_back(std::move(src));
  }
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
}

void require_ingested(const RunConfig& config) {
  for (const char* name : {files::qa_train, files::qa_dev, files::qr_train}) {
    if (!fs::is_regular_file(config.output_dir / name)) {
      fail(ErrorKind::config, "missing ingested file " + (config.output_dir / name).string() +
                                  " (run ingest first)");
    }
  }
}

EncodedSequence encode_side(const std::string& text, const Vocabulary& vocab,
                            std::size_t max_len, const char* side, std::size_t row) {
  const TokenList tokens = tokenize(text);
  if (tokens.empty()) {
    fail(ErrorKind::data, "row " + std::to_string(row) + ": empty " + side);
  }
  return encode_sequence(tokens, vocab, max_len);
}

std::vector<PairRow> encode_rows(const std::vector<SentencePair>& pairs,
                                 const ModelParams& params) {
  std::vector<PairRow> rows;
  rows.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const SentencePair& p = pairs[i];
    PairRow r;
    r.question = encode_side(p.question, params.vocab, params.config.max_question_len,
                             "question", i + 1);
    r.candidate = encode_side(p.candidate, params.vocab, params.config.max_candidate_len,
                              "candidate", i + 1);
    r.kind = p.kind;
    if (p.kind == PairKind::qa) r.qa_label = p.label;
    rows.push_back(std::move(r));
  }
  return rows;
}

struct Prepared {
  ModelParams initial;
  TrainingData data;
};

Prepared prepare_training(const RunConfig& config) {
  require_ingested(config);
  const auto qa_train = read_pairs(config.output_dir / files::qa_train);
  const auto qa_dev = read_pairs(config.output_dir / files::qa_dev);
  const auto qr_train = read_pairs(config.output_dir / files::qr_train);

  std::vector<TokenList> corpus;
  for (const auto* set : {&qa_train, &qr_train}) {
    for (const SentencePair& p : *set) {
      corpus.push_back(tokenize(p.question));
      corpus.push_back(tokenize(p.candidate));
    }
  }
  Vocabulary vocab = build_vocab(corpus, static_cast<int>(config.min_count));
  const std::uint64_t emb_seed = derive_seed(config.seed, "embeddings");
  EmbeddingTable emb =
      config.embeddings
          ? load_embeddings(*config.embeddings, vocab, emb_seed, config.model.embedding_dim)
          : random_embeddings(vocab, emb_seed, config.model.embedding_dim);

  Prepared out;
  out.initial = init_model(config.model, std::move(vocab), std::move(emb),
                           derive_seed(config.seed, "init"));
  out.data.qa_train = encode_rows(qa_train, out.initial);
  out.data.qr_train = encode_rows(qr_train, out.initial);
  out.data.qa_dev = encode_labeled(qa_dev, out.initial);
  for (const PairRow& r : out.data.qa_train) {
    if (r.kind != PairKind::qa || !r.qa_label) {
      fail(ErrorKind::data, std::string(files::qa_train) + " must hold labeled QA rows");
    }
  }
  for (const PairRow& r : out.data.qr_train) {
    if (r.kind != PairKind::qr) {
      fail(ErrorKind::data, std::string(files::qr_train) + " must hold QR rows");
    }
  }
  return out;
}

std::string metadata(const RunConfig& config, const TrainConfig& train,
                     const TrainResult& result) {
  nlohmann::ordered_json j;
  j["seed"] = config.seed;
  j["adaptation"] = train.adaptation;
  j["epochs"] = train.epochs;
  j["best_epoch"] = result.best_epoch;
  j["best_dev_acc"] =
      result.best_dev_acc ? nlohmann::ordered_json(*result.best_dev_acc) : nullptr;
  return j.dump();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  Section top(root, "");
  RunConfig c;
  c.seed = top.unsigned_int("seed");
  c.output_dir = resolve(base_dir, top.string("output_dir"));

  Section data(top.at("data"), "data");
  c.qa = read_sources(data, "qa", base_dir);
  c.reviews = read_sources(data, "reviews", base_dir);
  if (data.has("gold")) c.gold = existing_file(base_dir, data.string("gold"), "data.gold");
  data.finish();

  if (top.has("ingest")) {
    Section s(top.at("ingest"), "ingest");
    c.neg_ratio = s.number("neg_ratio", c.neg_ratio);
    if (!(c.neg_ratio > 0.0) || !std::isfinite(c.neg_ratio)) {
      fail(ErrorKind::config, "ingest.neg_ratio must be > 0");
    }
    c.qr_per_question = s.count("qr_per_question", c.qr_per_question);
    if (s.has("split")) {
      const json& r = s.at("split");
      if (!r.is_array() || r.size() != 3) {
        fail(ErrorKind::config, "ingest.split must be [train, dev, test]");
      }
      for (std::size_t i = 0; i < 3; ++i) {
        if (!r[i].is_number() || !(r[i].get<double>() >= 0.0)) {
          fail(ErrorKind::config, "ingest.split entries must be numbers >= 0");
        }
        c.split[i] = r[i].get<double>();
      }
      if (std::abs(c.split[0] + c.split[1] + c.split[2] - 1.0) > 1e-9) {
        fail(ErrorKind::config, "ingest.split must sum to 1");
      }
    }
    s.finish();
  }

  if (top.has("embeddings")) {
    Section s(top.at("embeddings"), "embeddings");
    if (s.has("path")) c.embeddings = existing_file(base_dir, s.string("path"), "embeddings.path");
    c.min_count = s.count("min_count", c.min_count);
    s.finish();
  }

  if (top.has("model")) {
    Section s(top.at("model"), "model");
    ModelConfig& m = c.model;
    m.embedding_dim = s.count("embedding_dim", m.embedding_dim);
    m.hidden = s.count("hidden", m.hidden);
    m.head_hidden1 = s.count("head_hidden1", m.head_hidden1);
    m.head_hidden2 = s.count("head_hidden2", m.head_hidden2);
    m.max_question_len = s.count("max_question_len", m.max_question_len);
    m.max_candidate_len = s.count("max_candidate_len", m.max_candidate_len);
    s.finish();
  }

  if (top.has("train")) {
    Section s(top.at("train"), "train");
    TrainConfig& t = c.train;
    t.epochs = s.count("epochs", t.epochs);
    t.batch_size = s.count("batch_size", t.batch_size);
    t.qa_share = s.count("qa_share", t.qa_share);
    t.qr_share = s.count("qr_share", t.qr_share);
    t.learning_rate = s.number("learning_rate", t.learning_rate);
    if (!(t.learning_rate > 0.0)) fail(ErrorKind::config, "train.learning_rate must be > 0");
    t.adaptation = s.boolean("adaptation", t.adaptation);
    t.eval_every = s.count("eval_every", t.eval_every);
    s.finish();
  }
  top.finish();
  c.train.seed = c.seed;
  c.train.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) fail(ErrorKind::config, "config file not found: " + path.string());
  RunConfig c = parse_run_config(read_text(path), path.parent_path());
  if (const char* dir = std::getenv(output_dir_env); dir && *dir) c.output_dir = dir;
  return c;
}

IngestResult run_ingest(const RunConfig& config) {
  IngestResult result;
  auto note = [&](const ParseReport& report) {
    for (const std::string& w : report.warnings) result.warnings.push_back(w);
  };
  std::vector<QARecord> qa;
  for (const DataSource& src : config.qa) {
    QAParseResult parsed = parse_qa(src.path, src.category, src.format);
    note(parsed.report);
    for (QARecord& r : parsed.records) qa.push_back(std::move(r));
  }
  std::vector<ReviewRecord> reviews;
  for (const DataSource& src : config.reviews) {
    ReviewParseResult parsed = parse_reviews(src.path, src.category, src.format);
    note(parsed.report);
    for (ReviewRecord& r : parsed.records) reviews.push_back(std::move(r));
  }
  const MatchedSet matched = join_by_asin(std::move(qa), std::move(reviews));
  if (matched.products.empty()) {
    fail(ErrorKind::data, "no product appears in both the QA and the review inputs");
  }

  const std::uint64_t seed = derive_seed(config.seed, "ingest");
  const auto qa_pairs =
      build_qa_pairs(matched, config.neg_ratio, derive_seed(seed, "qa-negatives"),
                     &result.warnings);
  const auto qr_pairs =
      build_qr_pairs(matched, config.qr_per_question, derive_seed(seed, "qr-sampling"));

  std::vector<std::string> ids;
  for (const SentencePair& p : qa_pairs) ids.push_back(p.question_id);
  const auto assignment = assign_partitions(ids, config.split, derive_seed(seed, "split"));
  const Splits qa_splits = apply_partitions(qa_pairs, assignment);
  const Splits qr_splits = apply_partitions(qr_pairs, assignment);

  fs::create_directories(config.output_dir);
  write_pairs(config.output_dir / files::qa_train, qa_splits.train);
  write_pairs(config.output_dir / files::qa_dev, qa_splits.dev);
  write_pairs(config.output_dir / files::qa_test, qa_splits.test);
  write_pairs(config.output_dir / files::qr_train, qr_splits.train);

  result.stats = compute_stats(matched);
  result.stats.splits["qa_train"] = label_proportions(qa_splits.train);
  result.stats.splits["qa_dev"] = label_proportions(qa_splits.dev);
  result.stats.splits["qa_test"] = label_proportions(qa_splits.test);
  if (config.gold) result.stats.splits["gold"] = label_proportions(load_gold_qr(*config.gold));
  result.stats.unlabeled["qr_train"] = qr_splits.train.size();
  write_text(config.output_dir / files::stats, to_json(result.stats));
  return result;
}

TrainSummary run_train(const RunConfig& config, std::optional<bool> adaptation) {
  TrainConfig train_config = config.train;
  if (adaptation) train_config.adaptation = *adaptation;
  train_config.validate();
  const Prepared prepared = prepare_training(config);

  TrainSummary summary;
  summary.checkpoint = config.output_dir / (train_config.adaptation ? files::checkpoint
                                                                    : files::checkpoint_no_adapt);
  summary.log = config.output_dir / (train_config.adaptation ? files::train_log
                                                             : files::train_log_no_adapt);
  std::ofstream log(summary.log, std::ios::binary | std::ios::trunc);
  if (!log) fail(ErrorKind::io, "cannot write " + summary.log.string());
  const TrainResult result =
      train(train_config, prepared.initial, prepared.data,
            [&](const EpochLog& e) { log << e.to_json_line() << '\n' << std::flush; });
  save_checkpoint(summary.checkpoint, result.best, metadata(config, train_config, result));
  summary.best_epoch = result.best_epoch;
  summary.best_dev_acc = result.best_dev_acc;
  return summary;
}

std::vector<LabeledRow> encode_labeled(const std::vector<SentencePair>& pairs,
                                       const ModelParams& params) {
  std::vector<LabeledRow> rows;
  rows.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const SentencePair& p = pairs[i];
    if (!p.label) fail(ErrorKind::data, "row " + std::to_string(i + 1) + ": missing label");
    rows.push_back(LabeledRow{
        encode_side(p.question, params.vocab, params.config.max_question_len, "question", i + 1),
        encode_side(p.candidate, params.vocab, params.config.max_candidate_len, "candidate",
                    i + 1),
        *p.label});
  }
  return rows;
}

EvalReport evaluate_file(const ModelParams& params, const fs::path& path, EvalSet set,
                         std::size_t workers) {
  const auto pairs = set == EvalSet::source ? read_pairs(path) : load_gold_qr(path);
  return evaluate(params, encode_labeled(pairs, params),
                  set == EvalSet::source ? "source" : "target", workers);
}

fs::path default_eval_path(const RunConfig& config, EvalSet set) {
  if (set == EvalSet::source) return config.output_dir / files::qa_test;
  if (!config.gold) fail(ErrorKind::config, "target evaluation needs data.gold in the config");
  return *config.gold;
}

std::size_t normalize_loose_file(const fs::path& input, const fs::path& output) {
  std::ifstream in(input, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + input.string());
  std::ostringstream converted;
  std::string line;
  std::size_t line_no = 0, records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      converted << nlohmann::ordered_json::parse(normalize_loose_record(line)).dump() << '\n';
    } catch (const std::exception& e) {
      fail(ErrorKind::parse, input.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    ++records;
  }
  write_text(output, converted.str());
  return records;
}

AblationResult run_ablation(const RunConfig& config) {
  const fs::path gold = default_eval_path(config, EvalSet::target);
  const Prepared prepared = prepare_training(config);
  const auto source = encode_labeled(read_pairs(config.output_dir / files::qa_test),
                                     prepared.initial);
  const auto target = encode_labeled(load_gold_qr(gold), prepared.initial);
  AblationResult result =
      ablation_compare(config.train, prepared.initial, prepared.data, source, target);
  write_text(config.output_dir / files::ablation, result.table());
  return result;
}

}  // namespace prqa
