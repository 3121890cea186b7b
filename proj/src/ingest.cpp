#include "prqa/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "prqa/error.hpp"
#include "prqa/random.hpp"

namespace prqa {

using nlohmann::json;

// ---- loose record normalization --------------------------------------------

namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

void append_hex_escape(std::string& out, std::string_view hex) {
  out += "\\u00";
  out += hex;
}

}  // namespace

std::string normalize_loose_record(std::string_view line) {
  std::string out;
  out.reserve(line.size() + 16);
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == '\'' || c == '"') {
      const char quote = c;
      out.push_back('"');
      ++i;
      bool closed = false;
      while (i < line.size()) {
        const char s = line[i];
        if (s == '\\' && i + 1 < line.size()) {
          const char e = line[i + 1];
          if (e == '\'') {
            out.push_back('\'');
          } else if (e == 'x' && i + 3 < line.size()) {
            append_hex_escape(out, line.substr(i + 2, 2));
            i += 4;
            continue;
          } else {
            out.push_back('\\');
            out.push_back(e);
          }
          i += 2;
          continue;
        }
        if (s == quote) {
          closed = true;
          ++i;
          break;
        }
        if (s == '"') {
          out += "\\\"";
        } else {
          out.push_back(s);
        }
        ++i;
      }
      if (!closed) fail(ErrorKind::parse, "unterminated string in loose record");
      out.push_back('"');
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) &&
        (i == 0 || !is_ident_char(line[i - 1]))) {
      std::size_t j = i;
      while (j < line.size() && is_ident_char(line[j])) ++j;
      const std::string_view word = line.substr(i, j - i);
      if (word == "True") out += "true";
      else if (word == "False") out += "false";
      else if (word == "None") out += "null";
      else out += word;
      i = j;
      continue;
    }
    out.push_back(c);
    ++i;
  }
  return out;
}

// ---- line-oriented parsing -------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Calls `handle(json, line_no)` for every non-blank line; a throw from the
// parser or handler counts the line as malformed.
template <typename Handle>
ParseReport for_each_record(const std::filesystem::path& path, InputFormat format,
                            Handle&& handle) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  ParseReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++report.lines;
    try {
      const std::string text = format == InputFormat::loose ? normalize_loose_record(line) : line;
      const json record = json::parse(text);
      if (!record.is_object()) throw std::runtime_error("record is not an object");
      handle(record, line_no, report);
    } catch (const std::exception& e) {
      ++report.malformed;
      report.warnings.push_back(path.string() + ":" + std::to_string(line_no) +
                                ": skipped malformed record (" + e.what() + ")");
    }
  }
  if (report.lines > 0 &&
      static_cast<double>(report.malformed) / static_cast<double>(report.lines) >
          max_malformed_fraction) {
    fail(ErrorKind::parse, path.string() + ": " + std::to_string(report.malformed) + " of " +
                               std::to_string(report.lines) +
                               " records malformed; aborting");
  }
  return report;
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw std::runtime_error(std::string("missing field '") + key + "'");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) throw std::runtime_error(std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

std::vector<std::string> read_answers(const json& q) {
  const json& arr = require(q, "answers");
  if (!arr.is_array()) throw std::runtime_error("field 'answers' is not an array");
  std::vector<std::string> answers;
  for (const json& a : arr) {
    std::string text;
    if (a.is_string()) {
      text = a.get<std::string>();
    } else if (a.is_object()) {
      text = require_string(a, "answerText");
    } else {
      throw std::runtime_error("answer is neither a string nor an object");
    }
    text = trim(text);
    if (!text.empty()) answers.push_back(std::move(text));
  }
  return answers;
}

QARecord read_question(const json& q, const std::string& asin, const std::string& category) {
  QARecord r;
  r.asin = asin;
  r.category = category;
  r.question = trim(q.contains("questionText") ? require_string(q, "questionText")
                                               : require_string(q, "question"));
  const std::string type = require_string(q, "questionType");
  r.type = type == "open-ended" ? QuestionType::open_ended : QuestionType::binary;
  r.answers = read_answers(q);
  return r;
}

}  // namespace

QAParseResult parse_qa(const std::filesystem::path& path, const std::string& category,
                       InputFormat format) {
  QAParseResult result;
  result.report = for_each_record(path, format, [&](const json& rec, std::size_t line_no,
                                                    ParseReport& report) {
    const std::string asin = trim(require_string(rec, "asin"));
    if (asin.empty()) throw std::runtime_error("empty asin");
    std::vector<QARecord> found;
    if (rec.contains("questions")) {
      const json& qs = require(rec, "questions");
      if (!qs.is_array()) throw std::runtime_error("field 'questions' is not an array");
      for (const json& q : qs) found.push_back(read_question(q, asin, category));
    } else {
      found.push_back(read_question(rec, asin, category));
    }
    for (QARecord& r : found) {
      if (r.type != QuestionType::open_ended || r.question.empty() || r.answers.empty()) {
        ++report.filtered;
        continue;
      }
      result.records.push_back(std::move(r));
    }
    (void)line_no;
  });
  return result;
}

ReviewParseResult parse_reviews(const std::filesystem::path& path, const std::string& category,
                                InputFormat format) {
  ReviewParseResult result;
  std::set<std::pair<std::string, std::string>> seen;
  result.report = for_each_record(path, format, [&](const json& rec, std::size_t line_no,
                                                    ParseReport& report) {
    ReviewRecord r;
    r.asin = trim(require_string(rec, "asin"));
    if (r.asin.empty()) throw std::runtime_error("empty asin");
    r.text = trim(require_string(rec, "reviewText"));
    r.category = category;
    if (r.text.empty()) {
      ++report.filtered;
      return;
    }
    if (!seen.emplace(r.asin, r.text).second) {
      ++report.filtered;
      report.warnings.push_back(path.string() + ":" + std::to_string(line_no) +
                                ": duplicate review dropped");
      return;
    }
    r.sentences = split_sentences(r.text);
    result.records.push_back(std::move(r));
  });
  return result;
}

// ---- sentence splitting ----------------------------------------------------

namespace {

const std::set<std::string, std::less<>>& abbreviations() {
  static const std::set<std::string, std::less<>> list{
      "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e",
      "approx", "no", "inc", "ltd", "co", "fig", "u.s", "a.m", "p.m", "oz", "lbs", "ft"};
  return list;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < text.size() && (text[end] == '.' || text[end] == '!' || text[end] == '?')) ++end;
    const bool boundary = end == text.size() || is_space(text[end]);
    bool guarded = false;
    if (boundary && end - i == 1 && c == '.') {
      std::size_t w = i;
      while (w > start && !is_space(text[w - 1])) --w;
      std::string word(text.substr(w, i - w));
      std::transform(word.begin(), word.end(), word.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      guarded = abbreviations().count(word) > 0;
    }
    if (boundary && !guarded) {
      std::string s = trim(text.substr(start, end - start));
      if (!s.empty()) sentences.push_back(std::move(s));
      start = end;
    }
    i = end;
  }
  std::string tail = trim(text.substr(start));
  if (!tail.empty()) sentences.push_back(std::move(tail));
  return sentences;
}

// ---- join ------------------------------------------------------------------

std::size_t MatchedSet::question_count() const {
  std::size_t n = 0;
  for (const auto& p : products) n += p.questions.size();
  return n;
}

std::size_t MatchedSet::qa_pair_count() const {
  std::size_t n = 0;
  for (const auto& p : products)
    for (const auto& q : p.questions) n += q.answers.size();
  return n;
}

std::size_t MatchedSet::review_count() const {
  std::size_t n = 0;
  for (const auto& p : products) n += p.reviews.size();
  return n;
}

MatchedSet join_by_asin(std::vector<QARecord> qa, std::vector<ReviewRecord> reviews) {
  std::map<std::string, MatchedProduct> by_asin;
  for (QARecord& q : qa) {
    MatchedProduct& p = by_asin[q.asin];
    if (p.asin.empty()) {
      p.asin = q.asin;
      p.category = q.category;
    }
    p.questions.push_back(std::move(q));
  }
  std::set<std::pair<std::string, std::string>> seen;
  for (ReviewRecord& r : reviews) {
    auto it = by_asin.find(r.asin);
    if (it == by_asin.end()) continue;
    if (!seen.emplace(r.asin, r.text).second) continue;
    it->second.reviews.push_back(std::move(r));
  }
  MatchedSet out;
  for (auto& [asin, product] : by_asin) {
    if (!product.reviews.empty()) out.products.push_back(std::move(product));
  }
  return out;
}

// ---- pair construction -----------------------------------------------------

namespace {

std::string question_id(const MatchedProduct& p, std::size_t qi) {
  return p.asin + "#" + std::to_string(qi);
}

struct AnswerRef {
  std::size_t product;
  std::size_t question;
  std::size_t answer;
};

// Answers grouped so that each product's entries are contiguous.
struct AnswerPool {
  std::vector<AnswerRef> refs;
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> product_range;

  void add_product(const MatchedSet& m, std::size_t pi) {
    const std::size_t lo = refs.size();
    const auto& qs = m.products[pi].questions;
    for (std::size_t qi = 0; qi < qs.size(); ++qi)
      for (std::size_t ai = 0; ai < qs[qi].answers.size(); ++ai) refs.push_back({pi, qi, ai});
    product_range[pi] = {lo, refs.size()};
  }
  std::pair<std::size_t, std::size_t> range_of(std::size_t pi) const {
    auto it = product_range.find(pi);
    return it == product_range.end() ? std::pair<std::size_t, std::size_t>{0, 0} : it->second;
  }
};

// k draws from the pool excluding the half-open range [lo, hi); distinct
// while the eligible set allows it.
std::vector<std::size_t> sample_excluding(std::size_t pool_size, std::size_t lo, std::size_t hi,
                                          std::size_t k, Rng& rng) {
  const std::size_t eligible = pool_size - (hi - lo);
  std::vector<std::size_t> picks;
  if (eligible == 0 || k == 0) return picks;
  auto map_index = [&](std::size_t r) { return r < lo ? r : r + (hi - lo); };
  std::uniform_int_distribution<std::size_t> dist(0, eligible - 1);
  if (k >= eligible) {
    for (std::size_t r = 0; r < eligible; ++r) picks.push_back(map_index(r));
    while (picks.size() < k) picks.push_back(map_index(dist(rng)));
    return picks;
  }
  std::unordered_set<std::size_t> used;
  while (picks.size() < k) {
    const std::size_t r = dist(rng);
    if (used.insert(r).second) picks.push_back(map_index(r));
  }
  return picks;
}

}  // namespace

std::vector<SentencePair> build_qa_pairs(const MatchedSet& matched, double neg_ratio,
                                         std::uint64_t seed, std::vector<std::string>* warnings) {
  if (!(neg_ratio > 0.0) || !std::isfinite(neg_ratio)) {
    fail(ErrorKind::parameter, "build_qa_pairs: neg_ratio must be > 0");
  }
  std::map<std::string, AnswerPool> by_category;
  AnswerPool global;
  for (std::size_t pi = 0; pi < matched.products.size(); ++pi) {
    by_category[matched.products[pi].category].add_product(matched, pi);
    global.add_product(matched, pi);
  }

  Rng rng(seed);
  std::set<std::string> warned;
  std::vector<SentencePair> pairs;
  for (std::size_t pi = 0; pi < matched.products.size(); ++pi) {
    const MatchedProduct& p = matched.products[pi];
    const AnswerPool& cat_pool = by_category.at(p.category);
    const auto [clo, chi] = cat_pool.range_of(pi);
    const bool category_exhausted = cat_pool.refs.size() == chi - clo;
    const AnswerPool& pool = category_exhausted ? global : cat_pool;
    if (category_exhausted && warnings && warned.insert(p.category).second) {
      warnings->push_back("category '" + p.category +
                          "' has no other product; negatives drawn dataset-wide");
    }
    const auto [lo, hi] = pool.range_of(pi);
    for (std::size_t qi = 0; qi < p.questions.size(); ++qi) {
      const QARecord& q = p.questions[qi];
      const std::string qid = question_id(p, qi);
      for (const std::string& a : q.answers) {
        pairs.push_back({PairKind::qa, 1, q.question, a, p.asin, qid, p.asin});
      }
      const auto k = static_cast<std::size_t>(
          std::llround(neg_ratio * static_cast<double>(q.answers.size())));
      const auto picks = sample_excluding(pool.refs.size(), lo, hi, k, rng);
      if (picks.size() < k && warnings) {
        warnings->push_back("question " + qid + ": no answers from other products available");
      }
      for (std::size_t idx : picks) {
        const AnswerRef& ref = pool.refs[idx];
        const MatchedProduct& other = matched.products[ref.product];
        pairs.push_back({PairKind::qa, 0, q.question,
                         other.questions[ref.question].answers[ref.answer], p.asin, qid,
                         other.asin});
      }
    }
  }
  return pairs;
}

std::vector<SentencePair> build_qr_pairs(const MatchedSet& matched, std::size_t per_question_cap,
                                         std::uint64_t seed) {
  if (per_question_cap < 1) fail(ErrorKind::parameter, "build_qr_pairs: cap must be >= 1");
  Rng rng(seed);
  std::vector<SentencePair> pairs;
  for (const MatchedProduct& p : matched.products) {
    std::vector<const std::string*> sentences;
    for (const ReviewRecord& r : p.reviews)
      for (const std::string& s : r.sentences) sentences.push_back(&s);
    if (sentences.empty()) continue;
    std::vector<std::size_t> order(sentences.size());
    for (std::size_t qi = 0; qi < p.questions.size(); ++qi) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      const std::size_t take = std::min(per_question_cap, order.size());
      for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> dist(i, order.size() - 1);
        std::swap(order[i], order[dist(rng)]);
        pairs.push_back({PairKind::qr, std::nullopt, p.questions[qi].question,
                         *sentences[order[i]], p.asin, question_id(p, qi), p.asin});
      }
    }
  }
  return pairs;
}

// ---- TSV files -------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::optional<int> parse_label(const std::string& field) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  return std::nullopt;
}

}  // namespace

void write_pairs(const std::filesystem::path& path, const std::vector<SentencePair>& pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  for (const SentencePair& p : pairs) {
    out << to_string(p.kind) << '\t' << (p.label ? std::to_string(*p.label) : "-") << '\t'
        << sanitize(p.question) << '\t' << sanitize(p.candidate) << '\t' << sanitize(p.asin)
        << '\n';
  }
  if (!out) fail(ErrorKind::io, "error writing " + path.string());
}

std::vector<SentencePair> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::vector<SentencePair> pairs;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ": row " + std::to_string(row) + ": ";
    auto f = split_tabs(line);
    if (f.size() != 5) {
      fail(ErrorKind::parse, where + "expected 5 tab-separated fields, found " +
                                 std::to_string(f.size()));
    }
    SentencePair p;
    if (f[0] == "QA") p.kind = PairKind::qa;
    else if (f[0] == "QR") p.kind = PairKind::qr;
    else fail(ErrorKind::parse, where + "pair kind must be QA or QR");
    if (f[1] != "-") {
      p.label = parse_label(f[1]);
      if (!p.label) fail(ErrorKind::parse, where + "label must be 0, 1 or -");
    }
    if (p.kind == PairKind::qa && !p.label) fail(ErrorKind::parse, where + "QA pair without label");
    p.question = std::move(f[2]);
    p.candidate = std::move(f[3]);
    p.asin = std::move(f[4]);
    if (trim(p.question).empty() || trim(p.candidate).empty()) {
      fail(ErrorKind::parse, where + "empty question or candidate");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<SentencePair> load_gold_qr(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::vector<SentencePair> pairs;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ": row " + std::to_string(row) + ": ";
    auto f = split_tabs(line);
    if (row == 1 && f.size() == 3 && f[2] == "label") continue;  // header
    if (f.size() != 3) {
      fail(ErrorKind::parse, where + "expected question, sentence, label; found " +
                                 std::to_string(f.size()) + " fields");
    }
    SentencePair p;
    p.kind = PairKind::qr;
    p.label = parse_label(trim(f[2]));
    if (!p.label) fail(ErrorKind::parse, where + "missing or invalid label '" + f[2] + "'");
    p.question = trim(f[0]);
    p.candidate = trim(f[1]);
    if (p.question.empty() || p.candidate.empty()) {
      fail(ErrorKind::parse, where + "empty question or sentence");
    }
    p.question_id = "gold#" + std::to_string(row);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// ---- splitting -------------------------------------------------------------

std::map<std::string, Partition> assign_partitions(std::vector<std::string> ids,
                                                   const SplitRatios& ratios,
                                                   std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) fail(ErrorKind::parameter, "split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    fail(ErrorKind::parameter, "split ratios must sum to 1, got " + std::to_string(total));
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<double>(ids.size());
  const std::size_t n_train = std::min<std::size_t>(ids.size(), std::llround(ratios[0] * n));
  const std::size_t n_dev =
      std::min<std::size_t>(ids.size() - n_train, std::llround(ratios[1] * n));
  std::map<std::string, Partition> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[ids[i]] = i < n_train ? Partition::train
                              : (i < n_train + n_dev ? Partition::dev : Partition::test);
  }
  return out;
}

Splits apply_partitions(const std::vector<SentencePair>& pairs,
                        const std::map<std::string, Partition>& assignment) {
  Splits s;
  for (const SentencePair& p : pairs) {
    auto it = assignment.find(p.question_id);
    if (it == assignment.end()) {
      fail(ErrorKind::internal, "no partition for question " + p.question_id);
    }
    switch (it->second) {
      case Partition::train: s.train.push_back(p); break;
      case Partition::dev: s.dev.push_back(p); break;
      case Partition::test: s.test.push_back(p); break;
    }
  }
  return s;
}

Splits split(const std::vector<SentencePair>& pairs, const SplitRatios& ratios,
             std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(pairs.size());
  for (const SentencePair& p : pairs) ids.push_back(p.question_id);
  return apply_partitions(pairs, assign_partitions(std::move(ids), ratios, seed));
}

// ---- statistics ------------------------------------------------------------

LabelProportions label_proportions(const std::vector<SentencePair>& pairs) {
  LabelProportions lp;
  for (const SentencePair& p : pairs) {
    if (!p.label) continue;
    ++lp.n;
    ++(*p.label == 1 ? lp.label1 : lp.label0);
  }
  return lp;
}

DatasetStats compute_stats(const MatchedSet& matched) {
  DatasetStats stats;
  for (const MatchedProduct& p : matched.products) {
    CategoryStats& c = stats.categories[p.category];
    for (CategoryStats* s : {&c, &stats.total}) {
      ++s->products;
      s->questions += p.questions.size();
      for (const QARecord& q : p.questions) s->qa_pairs += q.answers.size();
      s->reviews += p.reviews.size();
      for (const ReviewRecord& r : p.reviews) s->review_sentences += r.sentences.size();
    }
  }
  stats.unique_asins = matched.products.size();
  return stats;
}

std::string to_json(const DatasetStats& stats) {
  auto category = [](const CategoryStats& c) {
    nlohmann::ordered_json j;
    j["products"] = c.products;
    j["questions"] = c.questions;
    j["qa_pairs"] = c.qa_pairs;
    j["reviews"] = c.reviews;
    j["review_sentences"] = c.review_sentences;
    return j;
  };
  nlohmann::ordered_json j;
  j["unique_asins"] = stats.unique_asins;
  j["total"] = category(stats.total);
  j["categories"] = nlohmann::ordered_json::object();
  for (const auto& [name, c] : stats.categories) j["categories"][name] = category(c);
  j["label_proportions"] = nlohmann::ordered_json::object();
  for (const auto& [name, lp] : stats.splits) {
    j["label_proportions"][name] = {{"n", lp.n},
                                    {"label0", lp.label0},
                                    {"label1", lp.label1},
                                    {"fraction0", lp.fraction0()},
                                    {"fraction1", lp.fraction1()}};
  }
  j["unlabeled_pairs"] = nlohmann::ordered_json::object();
  for (const auto& [name, n] : stats.unlabeled) j["unlabeled_pairs"][name] = n;
  return j.dump(2) + "\n";
}

}  // namespace prqa
