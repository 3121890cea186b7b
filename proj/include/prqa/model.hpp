#pragma once

// Domain-adversarial sentence-pair classifier.
//
// Question and candidate (answer or review sentence) are encoded by two
// disjoint BiLSTMs; the concatenated pair vector feeds a QA head directly and
// a domain head through a gradient-reversal layer.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prqa/tensor.hpp"
#include "prqa/text.hpp"

namespace prqa {

struct ModelConfig {
  std::size_t embedding_dim = 300;
  std::size_t hidden = 300;  // per direction
  std::size_t head_hidden1 = 512;
  std::size_t head_hidden2 = 256;
  std::size_t max_question_len = 50;
  std::size_t max_candidate_len = 65;

  std::size_t encoder_dim() const { return 2 * hidden; }
  std::size_t pair_dim() const { return 4 * hidden; }
  bool operator==(const ModelConfig&) const = default;
};

// One LSTM direction. Gate blocks are laid out (input, forget, cell, output)
// along the 4*hidden axis.
struct LstmDirection {
  Tensor input_weights;      // [embedding_dim, 4h]
  Tensor recurrent_weights;  // [h, 4h]
  Tensor bias;               // [4h]
};

struct BiLstmParams {
  LstmDirection forward;
  LstmDirection backward;
};

struct HeadParams {
  Tensor w1, b1;  // [in, h1]
  Tensor w2, b2;  // [h1, h2]
  Tensor w3, b3;  // [h2, 2]
};

struct ModelParams {
  ModelConfig config;
  Vocabulary vocab;
  EmbeddingTable embeddings;  // frozen
  BiLstmParams question_encoder;
  BiLstmParams candidate_encoder;
  HeadParams qa_head;
  HeadParams domain_head;

  // Parameters updated by the optimizer, in a fixed order.
  std::vector<NamedTensor> trainable() const;
  // trainable() plus the embedding matrix.
  std::vector<NamedTensor> all() const;

  // Deep copy; the copy shares no storage with this instance.
  ModelParams clone() const;
};

inline constexpr double init_range = 0.08;
inline constexpr double forget_bias_init = 1.0;

// Weights uniform on [-0.08, 0.08], biases zero except the forget gate (1.0).
ModelParams init_model(const ModelConfig& config, Vocabulary vocab,
                       EmbeddingTable embeddings, std::uint64_t seed);

enum class PairKind { qa, qr };

const char* to_string(PairKind kind);

struct PairRow {
  EncodedSequence question;
  EncodedSequence candidate;
  PairKind kind = PairKind::qa;
  std::optional<int> qa_label;  // required for QA rows, absent for QR

  int domain_label() const { return kind == PairKind::qa ? 0 : 1; }
};

struct PairBatch {
  std::vector<PairRow> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t count(PairKind kind) const;
  // Throws a data error when a QA row lacks a label or a QR row carries one.
  void validate() const;
};

// Final forward state concatenated with final backward state, [2h].
Tensor bilstm_encode(Graph& g, std::span<const int> indices, std::size_t length,
                     const EmbeddingTable& embeddings, const BiLstmParams& params);

struct PairOutputs {
  Tensor pairs;          // [n, 4h] = [V_q ; V_c] per row
  Tensor qa_logits;      // [n, 2]
  Tensor domain_logits;  // [n, 2]
};

// When `reverse_domain_gradient` is false the reversal layer is replaced by
// the identity; this exists for checking the adversarial sign.
PairOutputs forward_pair(Graph& g, const PairBatch& batch, const ModelParams& params,
                         double lambda, bool reverse_domain_gradient = true);

Tensor head_forward(Graph& g, const Tensor& x, const HeadParams& head);

// Mean cross-entropy over QA rows; a constant zero when there are none.
Tensor masked_qa_loss(Graph& g, const Tensor& qa_logits, const PairBatch& batch);
// Mean cross-entropy over all rows against answer(0)/review(1).
Tensor domain_loss(Graph& g, const Tensor& domain_logits, const PairBatch& batch);

struct LossTerms {
  Tensor total;
  Tensor qa;
  Tensor domain;
  PairOutputs outputs;
};

LossTerms total_loss(Graph& g, const PairBatch& batch, const ModelParams& params,
                     double lambda);

// 2 / (1 + exp(-10 p)) - 1 for p in [0, 1].
double lambda_schedule(double progress);

struct Prediction {
  int label = 0;
  double confidence = 0.5;
};

// Label 1 only when its probability strictly exceeds label 0's.
Prediction predict_from_logits(std::span<const double> logits);

Prediction predict(const EncodedSequence& question, const EncodedSequence& candidate,
                   const ModelParams& params);
Prediction predict(std::string_view question, std::string_view candidate,
                   const ModelParams& params);

}  // namespace prqa
