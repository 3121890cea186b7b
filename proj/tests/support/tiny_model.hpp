#pragma once

#include <random>
#include <string>

#include "prqa/model.hpp"

namespace prqa::testing {

// Vocabulary of PAD, UNK and t0..t7 (10 rows).
inline Vocabulary tiny_vocab() {
  std::vector<std::string> tokens{"<pad>", "<unk>"};
  for (int i = 0; i < 8; ++i) tokens.push_back("t" + std::to_string(i));
  return Vocabulary::from_tokens(tokens);
}

inline ModelConfig tiny_config(std::size_t hidden = 4) {
  ModelConfig c;
  c.embedding_dim = 3;
  c.hidden = hidden;
  c.head_hidden1 = 5;
  c.head_hidden2 = 3;
  c.max_question_len = 3;
  c.max_candidate_len = 3;
  return c;
}

// Tiny model whose every trainable value is redrawn on [-spread, spread] so
// that biases and gates are all exercised.
inline ModelParams tiny_model(std::uint64_t seed, double spread = 0.5,
                              std::size_t hidden = 4) {
  Vocabulary vocab = tiny_vocab();
  EmbeddingTable emb = random_embeddings(vocab, seed + 1, 3);
  for (double& v : emb.matrix.values()) v *= 8.0;  // roughly unit scale
  for (std::size_t j = 0; j < 3; ++j) emb.matrix.values()[j] = 0.0;
  ModelParams p = init_model(tiny_config(hidden), vocab, emb, seed);
  std::mt19937_64 rng(seed + 2);
  std::uniform_real_distribution<double> u(-spread, spread);
  for (NamedTensor& t : p.trainable()) {
    for (double& v : t.tensor.values()) v = u(rng);
  }
  return p;
}

inline EncodedSequence seq(std::vector<int> indices, std::size_t length) {
  return EncodedSequence{std::move(indices), length};
}

inline PairRow qa_row(std::vector<int> q, std::vector<int> c, int label) {
  const std::size_t lq = q.size(), lc = c.size();
  q.resize(3, 0);
  c.resize(3, 0);
  return PairRow{seq(q, lq), seq(c, lc), PairKind::qa, label};
}

inline PairRow qr_row(std::vector<int> q, std::vector<int> c) {
  const std::size_t lq = q.size(), lc = c.size();
  q.resize(3, 0);
  c.resize(3, 0);
  return PairRow{seq(q, lq), seq(c, lc), PairKind::qr, std::nullopt};
}

inline std::vector<double> copy_values(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

inline std::vector<double> copy_grad(const Tensor& t) {
  return {t.grad().begin(), t.grad().end()};
}

}  // namespace prqa::testing
