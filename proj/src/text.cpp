#include "prqa/text.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "prqa/error.hpp"
#include "prqa/random.hpp"

namespace prqa {

namespace {

// Decodes one UTF-8 code point starting at text[i]; advances i. Invalid
// sequences are consumed one byte at a time.
char32_t next_code_point(std::string_view text, std::size_t& i) {
  const auto lead = static_cast<unsigned char>(text[i]);
  std::size_t extra = 0;
  char32_t cp = lead;
  if (lead >= 0xF0 && lead < 0xF8) {
    extra = 3;
    cp = lead & 0x07;
  } else if (lead >= 0xE0) {
    extra = 2;
    cp = lead & 0x0F;
  } else if (lead >= 0xC0) {
    extra = 1;
    cp = lead & 0x1F;
  }
  if (extra == 0 || i + extra >= text.size()) {
    ++i;
    return lead;
  }
  for (std::size_t k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return lead;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += extra + 1;
  return cp;
}

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_ascii_punct(char32_t cp) {
  return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
         (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
}

}  // namespace

TokenList tokenize(std::string_view text) {
  TokenList tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = next_code_point(text, i);
    if (is_unicode_space(cp)) {
      flush();
    } else if (is_ascii_punct(cp)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(cp));
    } else if (cp >= U'A' && cp <= U'Z') {
      current.push_back(static_cast<char>(cp - U'A' + U'a'));
    } else {
      current.append(text.substr(start, i - start));
    }
  }
  flush();
  return tokens;
}

// ---- Vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() {
  append(std::string(pad_token));
  append(std::string(unk_token));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != pad_token || tokens[1] != unk_token) {
    fail(ErrorKind::parse, "vocabulary must start with <pad>, <unk>");
  }
  Vocabulary vocab;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) {
      fail(ErrorKind::parse, "duplicate vocabulary token '" + tokens[i] + "'");
    }
    vocab.append(std::move(tokens[i]));
  }
  return vocab;
}

int Vocabulary::append(std::string token) {
  const int idx = static_cast<int>(tokens_.size());
  index_.emplace(token, idx);
  tokens_.push_back(std::move(token));
  return idx;
}

int Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end() || it->second < 2) return unk;
  return it->second;
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= tokens_.size()) {
    fail(ErrorKind::parameter, "vocabulary index " + std::to_string(index) +
                                   " out of range");
  }
  return tokens_[static_cast<std::size_t>(index)];
}

bool Vocabulary::contains(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it != index_.end() && it->second >= 2;
}

void VocabularyBuilder::add(std::span<const std::string> tokens) {
  for (const std::string& t : tokens) ++counts_[t];
}

Vocabulary VocabularyBuilder::build(int min_count) const {
  if (min_count < 1) fail(ErrorKind::parameter, "build_vocab: min_count must be >= 1");
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [token, count] : counts_) {
    if (count >= static_cast<std::uint64_t>(min_count) && token != Vocabulary::pad_token &&
        token != Vocabulary::unk_token) {
      kept.emplace_back(token, count);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  Vocabulary vocab;
  for (auto& [token, count] : kept) vocab.append(token);
  return vocab;
}

Vocabulary build_vocab(std::span<const TokenList> corpus, int min_count) {
  VocabularyBuilder builder;
  for (const TokenList& tokens : corpus) builder.add(tokens);
  return builder.build(min_count);
}

// ---- embeddings ------------------------------------------------------------

namespace {

void fill_uniform(std::span<double> row, Rng& rng) {
  std::uniform_real_distribution<double> dist(-unknown_embedding_range,
                                              unknown_embedding_range);
  for (double& v : row) v = dist(rng);
}

}  // namespace

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::uint64_t seed,
                               std::size_t dim) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read embedding file " + path.string());

  EmbeddingTable table{Tensor(Shape{vocab.size(), dim}),
                       std::vector<bool>(vocab.size(), false)};
  auto values = table.matrix.values();
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fields.clear();
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(' ');
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto end = rest.find(' ');
      fields.push_back(rest.substr(0, end));
      rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    }
    if (fields.size() != dim + 1) {
      fail(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) +
                                 ": expected token and " + std::to_string(dim) +
                                 " values, found " + std::to_string(fields.size()) +
                                 " fields");
    }
    if (!vocab.contains(fields[0])) continue;
    const auto row = static_cast<std::size_t>(vocab.index(fields[0]));
    if (table.pretrained[row]) continue;  // first occurrence wins
    for (std::size_t j = 0; j < dim; ++j) {
      const std::string_view f = fields[j + 1];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        fail(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) +
                                   ": bad number '" + std::string(f) + "'");
      }
      values[row * dim + j] = v;
    }
    table.pretrained[row] = true;
  }
  if (in.bad()) fail(ErrorKind::io, "error reading " + path.string());

  Rng rng(seed);
  for (std::size_t r = 1; r < vocab.size(); ++r) {
    if (!table.pretrained[r]) fill_uniform(values.subspan(r * dim, dim), rng);
  }
  return table;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::uint64_t seed,
                                 std::size_t dim) {
  EmbeddingTable table{Tensor(Shape{vocab.size(), dim}),
                       std::vector<bool>(vocab.size(), false)};
  Rng rng(seed);
  auto values = table.matrix.values();
  for (std::size_t r = 1; r < vocab.size(); ++r) {
    fill_uniform(values.subspan(r * dim, dim), rng);
  }
  return table;
}

// ---- sequences -------------------------------------------------------------

EncodedSequence encode_sequence(std::span<const std::string> tokens,
                                const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 1) fail(ErrorKind::parameter, "encode_sequence: max_len must be >= 1");
  EncodedSequence seq;
  seq.indices.assign(max_len, Vocabulary::pad);
  seq.length = std::min(tokens.size(), max_len);
  for (std::size_t i = 0; i < seq.length; ++i) seq.indices[i] = vocab.index(tokens[i]);
  return seq;
}

TokenList decode_sequence(const EncodedSequence& seq, const Vocabulary& vocab) {
  TokenList tokens;
  for (std::size_t i = 0; i < seq.length && i < seq.indices.size(); ++i) {
    const int idx = seq.indices[i];
    if (idx == Vocabulary::pad || idx == Vocabulary::unk) continue;
    tokens.push_back(vocab.token(idx));
  }
  return tokens;
}

}  // namespace prqa
