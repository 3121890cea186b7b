#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prqa/tensor.hpp"

namespace prqa {

using TokenList = std::vector<std::string>;

// Lowercases ASCII letters, splits on Unicode whitespace and emits every
// ASCII punctuation character as its own token.
TokenList tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int pad = 0;
  static constexpr int unk = 1;
  static constexpr std::string_view pad_token = "<pad>";
  static constexpr std::string_view unk_token = "<unk>";

  Vocabulary();

  // Rebuilds a vocabulary from its index-ordered token list (checkpoints).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int index(std::string_view token) const;
  const std::string& token(int index) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  int append(std::string token);

  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;

  friend class VocabularyBuilder;
};

class VocabularyBuilder {
 public:
  void add(std::span<const std::string> tokens);
  // Tokens seen at least `min_count` times, most frequent first, ties in
  // lexicographic order.
  Vocabulary build(int min_count) const;

 private:
  std::map<std::string, std::uint64_t> counts_;
};

Vocabulary build_vocab(std::span<const TokenList> corpus, int min_count);

struct EmbeddingTable {
  Tensor matrix;                // [vocab_size, dim], never trained
  std::vector<bool> pretrained; // row came from the embedding file

  std::size_t dim() const { return matrix.cols(); }
  std::size_t rows() const { return matrix.rows(); }
};

inline constexpr std::size_t default_embedding_dim = 300;
inline constexpr double unknown_embedding_range = 0.1;

// Reads `token f1 ... f<dim>` lines. Vocabulary tokens missing from the file
// (and UNK) get rows uniform on [-0.1, 0.1] from `seed`; PAD is all zeros.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::uint64_t seed,
                               std::size_t dim = default_embedding_dim);

// Every row except PAD drawn uniform on [-0.1, 0.1].
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::uint64_t seed,
                                 std::size_t dim);

struct EncodedSequence {
  std::vector<int> indices;  // max_len entries, PAD-filled
  std::size_t length = 0;    // tokens before padding
};

EncodedSequence encode_sequence(std::span<const std::string> tokens,
                                const Vocabulary& vocab, std::size_t max_len);

TokenList decode_sequence(const EncodedSequence& seq, const Vocabulary& vocab);

}  // namespace prqa
