#pragma once

// Product Q&A / review ingestion: parse the JSON-lines dumps, join them on
// ASIN, split reviews into sentences, and build labeled question-answer
// pairs plus unlabeled question-review pairs.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prqa/model.hpp"

namespace prqa {

enum class QuestionType { open_ended, binary };

struct QARecord {
  std::string asin;
  std::string category;
  std::string question;
  std::vector<std::string> answers;
  QuestionType type = QuestionType::open_ended;
};

struct ReviewRecord {
  std::string asin;
  std::string category;
  std::string text;
  std::vector<std::string> sentences;
};

struct ParseReport {
  std::size_t lines = 0;      // non-blank lines
  std::size_t malformed = 0;  // skipped with a warning
  std::size_t filtered = 0;   // well-formed but dropped (type, empty, duplicate)
  std::vector<std::string> warnings;
};

struct QAParseResult {
  std::vector<QARecord> records;
  ParseReport report;
};

struct ReviewParseResult {
  std::vector<ReviewRecord> records;
  ParseReport report;
};

// Share of malformed lines above which parsing aborts.
inline constexpr double max_malformed_fraction = 0.10;

enum class InputFormat {
  jsonl,  // one strict JSON object per line
  loose,  // upstream dump with single-quoted, Python-literal records
};

// Rewrites one Python-literal record ('...' strings, True/False/None) as
// strict JSON. Throws a parse error on unterminated strings.
std::string normalize_loose_record(std::string_view line);

// Records carry asin, question, answers[] (strings or {"answerText": ...})
// and questionType; the nested upstream layout {"asin", "questions": [...]}
// is expanded. Only open-ended questions with at least one answer are kept.
QAParseResult parse_qa(const std::filesystem::path& path, const std::string& category,
                       InputFormat format = InputFormat::jsonl);

// Keeps asin and reviewText; drops repeated (asin, text) pairs.
ReviewParseResult parse_reviews(const std::filesystem::path& path,
                                const std::string& category,
                                InputFormat format = InputFormat::jsonl);

// Splits on '.', '!' or '?' runs followed by whitespace, except after a
// known abbreviation. Sentences are trimmed; empty ones are dropped.
std::vector<std::string> split_sentences(std::string_view text);

struct MatchedProduct {
  std::string asin;
  std::string category;
  std::vector<QARecord> questions;
  std::vector<ReviewRecord> reviews;
};

struct MatchedSet {
  std::vector<MatchedProduct> products;  // sorted by ASIN

  std::size_t question_count() const;
  std::size_t qa_pair_count() const;
  std::size_t review_count() const;
};

// Products present in both streams. Duplicate reviews across streams are
// dropped as well.
MatchedSet join_by_asin(std::vector<QARecord> qa, std::vector<ReviewRecord> reviews);

struct SentencePair {
  PairKind kind = PairKind::qa;
  std::optional<int> label;
  std::string question;
  std::string candidate;
  std::string asin;            // the question's product
  std::string question_id;     // "<asin>#<n>", groups pairs for splitting
  std::string candidate_asin;  // product the candidate was taken from
};

// Positives: every (question, own answer). Negatives: round(neg_ratio *
// answers) answers of other products in the same category, drawn without
// replacement while possible. A category with no other product falls back to
// the whole dataset (with a warning).
std::vector<SentencePair> build_qa_pairs(const MatchedSet& matched, double neg_ratio,
                                         std::uint64_t seed,
                                         std::vector<std::string>* warnings = nullptr);

// Each question paired with up to `per_question_cap` review sentences of its
// own product, sampled without replacement.
std::vector<SentencePair> build_qr_pairs(const MatchedSet& matched,
                                         std::size_t per_question_cap,
                                         std::uint64_t seed);

// Gold file rows: question \t review sentence \t label (0/1).
std::vector<SentencePair> load_gold_qr(const std::filesystem::path& path);

enum class Partition { train = 0, dev = 1, test = 2 };

using SplitRatios = std::array<double, 3>;

// Question-level assignment: ids are shuffled under `seed`, then the first
// round(r_train * n) go to train, the next round(r_dev * n) to dev.
std::map<std::string, Partition> assign_partitions(std::vector<std::string> question_ids,
                                                   const SplitRatios& ratios,
                                                   std::uint64_t seed);

struct Splits {
  std::vector<SentencePair> train;
  std::vector<SentencePair> dev;
  std::vector<SentencePair> test;
};

Splits split(const std::vector<SentencePair>& pairs, const SplitRatios& ratios,
             std::uint64_t seed);
Splits apply_partitions(const std::vector<SentencePair>& pairs,
                        const std::map<std::string, Partition>& assignment);

struct LabelProportions {
  std::size_t n = 0;
  std::size_t label0 = 0;
  std::size_t label1 = 0;
  double fraction0() const { return n ? static_cast<double>(label0) / n : 0.0; }
  double fraction1() const { return n ? static_cast<double>(label1) / n : 0.0; }
};

LabelProportions label_proportions(const std::vector<SentencePair>& pairs);

struct CategoryStats {
  std::size_t products = 0;
  std::size_t questions = 0;
  std::size_t qa_pairs = 0;  // question-answer pairs (positives)
  std::size_t reviews = 0;
  std::size_t review_sentences = 0;
};

struct DatasetStats {
  std::map<std::string, CategoryStats> categories;
  CategoryStats total;
  std::size_t unique_asins = 0;
  std::map<std::string, LabelProportions> splits;  // labeled pair sets
  std::map<std::string, std::size_t> unlabeled;    // QR pair sets
};

DatasetStats compute_stats(const MatchedSet& matched);
std::string to_json(const DatasetStats& stats);

// Pair files: kind \t label-or-dash \t question \t candidate \t asin.
void write_pairs(const std::filesystem::path& path, const std::vector<SentencePair>& pairs);
std::vector<SentencePair> read_pairs(const std::filesystem::path& path);

}  // namespace prqa
