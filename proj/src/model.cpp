#include "prqa/model.hpp"

#include <cmath>

#include "prqa/error.hpp"
#include "prqa/random.hpp"

namespace prqa {

namespace {

void add_direction(std::vector<NamedTensor>& out, const std::string& prefix,
                   const LstmDirection& d) {
  out.push_back({prefix + ".input_weights", d.input_weights});
  out.push_back({prefix + ".recurrent_weights", d.recurrent_weights});
  out.push_back({prefix + ".bias", d.bias});
}

void add_head(std::vector<NamedTensor>& out, const std::string& prefix,
              const HeadParams& h) {
  out.push_back({prefix + ".w1", h.w1});
  out.push_back({prefix + ".b1", h.b1});
  out.push_back({prefix + ".w2", h.w2});
  out.push_back({prefix + ".b2", h.b2});
  out.push_back({prefix + ".w3", h.w3});
  out.push_back({prefix + ".b3", h.b3});
}

Tensor uniform(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> dist(-init_range, init_range);
  Tensor t(std::move(shape), true);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

LstmDirection init_direction(std::size_t input, std::size_t hidden, Rng& rng) {
  LstmDirection d{uniform({input, 4 * hidden}, rng), uniform({hidden, 4 * hidden}, rng),
                  Tensor(Shape{4 * hidden}, true)};
  auto bias = d.bias.values();
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = forget_bias_init;
  return d;
}

HeadParams init_head(const ModelConfig& c, Rng& rng) {
  return HeadParams{uniform({c.pair_dim(), c.head_hidden1}, rng),
                    Tensor(Shape{c.head_hidden1}, true),
                    uniform({c.head_hidden1, c.head_hidden2}, rng),
                    Tensor(Shape{c.head_hidden2}, true),
                    uniform({c.head_hidden2, 2}, rng),
                    Tensor(Shape{2}, true)};
}

LstmDirection clone(const LstmDirection& d) {
  return {d.input_weights.clone(), d.recurrent_weights.clone(), d.bias.clone()};
}

HeadParams clone(const HeadParams& h) {
  return {h.w1.clone(), h.b1.clone(), h.w2.clone(), h.b2.clone(), h.w3.clone(), h.b3.clone()};
}

// Runs one direction over the already projected inputs (rows of `projected`
// in the order given by `steps`) and returns the final hidden state.
Tensor run_direction(Graph& g, const Tensor& projected, const LstmDirection& d,
                     std::size_t hidden, std::size_t length, bool reverse) {
  Tensor h(Shape{hidden});
  Tensor c(Shape{hidden});
  for (std::size_t step = 0; step < length; ++step) {
    const std::size_t t = reverse ? length - 1 - step : step;
    Tensor gates = add(g, row(g, projected, t), matmul(g, h, d.recurrent_weights));
    Tensor in_gate = sigmoid(g, slice(g, gates, 0, hidden));
    Tensor forget_gate = sigmoid(g, slice(g, gates, hidden, hidden));
    Tensor cell_input = tanh(g, slice(g, gates, 2 * hidden, hidden));
    Tensor out_gate = sigmoid(g, slice(g, gates, 3 * hidden, hidden));
    c = add(g, mul(g, forget_gate, c), mul(g, in_gate, cell_input));
    h = mul(g, out_gate, tanh(g, c));
  }
  return h;
}

}  // namespace

std::vector<NamedTensor> ModelParams::trainable() const {
  std::vector<NamedTensor> out;
  add_direction(out, "question_encoder.forward", question_encoder.forward);
  add_direction(out, "question_encoder.backward", question_encoder.backward);
  add_direction(out, "candidate_encoder.forward", candidate_encoder.forward);
  add_direction(out, "candidate_encoder.backward", candidate_encoder.backward);
  add_head(out, "qa_head", qa_head);
  add_head(out, "domain_head", domain_head);
  return out;
}

std::vector<NamedTensor> ModelParams::all() const {
  std::vector<NamedTensor> out{{"embeddings", embeddings.matrix}};
  for (NamedTensor& t : trainable()) out.push_back(std::move(t));
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams copy{config,
                   vocab,
                   EmbeddingTable{embeddings.matrix.clone(), embeddings.pretrained},
                   {prqa::clone(question_encoder.forward), prqa::clone(question_encoder.backward)},
                   {prqa::clone(candidate_encoder.forward), prqa::clone(candidate_encoder.backward)},
                   prqa::clone(qa_head),
                   prqa::clone(domain_head)};
  return copy;
}

ModelParams init_model(const ModelConfig& config, Vocabulary vocab,
                       EmbeddingTable embeddings, std::uint64_t seed) {
  if (config.hidden == 0 || config.embedding_dim == 0 || config.head_hidden1 == 0 ||
      config.head_hidden2 == 0 || config.max_question_len == 0 ||
      config.max_candidate_len == 0) {
    fail(ErrorKind::parameter, "model dimensions must be positive");
  }
  if (embeddings.rows() != vocab.size() || embeddings.dim() != config.embedding_dim) {
    fail(ErrorKind::dimension,
         "embedding table " + to_string(embeddings.matrix.shape()) +
             " does not match vocabulary size " + std::to_string(vocab.size()) +
             " and embedding_dim " + std::to_string(config.embedding_dim));
  }
  embeddings.matrix.set_requires_grad(false);
  Rng rng(seed);
  ModelParams p{config, std::move(vocab), std::move(embeddings), {}, {}, {}, {}};
  p.question_encoder.forward = init_direction(config.embedding_dim, config.hidden, rng);
  p.question_encoder.backward = init_direction(config.embedding_dim, config.hidden, rng);
  p.candidate_encoder.forward = init_direction(config.embedding_dim, config.hidden, rng);
  p.candidate_encoder.backward = init_direction(config.embedding_dim, config.hidden, rng);
  p.qa_head = init_head(config, rng);
  p.domain_head = init_head(config, rng);
  return p;
}

const char* to_string(PairKind kind) { return kind == PairKind::qa ? "QA" : "QR"; }

std::size_t PairBatch::count(PairKind kind) const {
  std::size_t n = 0;
  for (const PairRow& r : rows) n += r.kind == kind;
  return n;
}

void PairBatch::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const PairRow& r = rows[i];
    if (r.kind == PairKind::qa && !r.qa_label) {
      fail(ErrorKind::data, "batch row " + std::to_string(i) + ": QA row without a label");
    }
    if (r.kind == PairKind::qr && r.qa_label) {
      fail(ErrorKind::data, "batch row " + std::to_string(i) + ": QR row carries a label");
    }
    if (r.qa_label && *r.qa_label != 0 && *r.qa_label != 1) {
      fail(ErrorKind::data, "batch row " + std::to_string(i) + ": label must be 0 or 1");
    }
  }
}

Tensor bilstm_encode(Graph& g, std::span<const int> indices, std::size_t length,
                     const EmbeddingTable& embeddings, const BiLstmParams& params) {
  if (length == 0) fail(ErrorKind::usage, "bilstm_encode: empty sequence");
  if (length > indices.size()) {
    fail(ErrorKind::usage, "bilstm_encode: length " + std::to_string(length) +
                               " exceeds index array of " +
                               std::to_string(indices.size()));
  }
  const std::size_t hidden = params.forward.recurrent_weights.rows();
  Tensor x = gather_rows(g, embeddings.matrix, indices.first(length));
  Tensor fwd_in = add_bias(g, matmul(g, x, params.forward.input_weights),
                           params.forward.bias);
  Tensor bwd_in = add_bias(g, matmul(g, x, params.backward.input_weights),
                           params.backward.bias);
  Tensor h_fwd = run_direction(g, fwd_in, params.forward, hidden, length, false);
  Tensor h_bwd = run_direction(g, bwd_in, params.backward, hidden, length, true);
  return concat(g, h_fwd, h_bwd);
}

Tensor head_forward(Graph& g, const Tensor& x, const HeadParams& head) {
  Tensor a1 = tanh(g, add_bias(g, matmul(g, x, head.w1), head.b1));
  Tensor a2 = tanh(g, add_bias(g, matmul(g, a1, head.w2), head.b2));
  return add_bias(g, matmul(g, a2, head.w3), head.b3);
}

PairOutputs forward_pair(Graph& g, const PairBatch& batch, const ModelParams& params,
                         double lambda, bool reverse_domain_gradient) {
  if (batch.rows.empty()) fail(ErrorKind::usage, "forward_pair: empty batch");
  std::vector<Tensor> pair_rows;
  pair_rows.reserve(batch.size());
  for (const PairRow& r : batch.rows) {
    Tensor vq = bilstm_encode(g, r.question.indices, r.question.length,
                              params.embeddings, params.question_encoder);
    Tensor vc = bilstm_encode(g, r.candidate.indices, r.candidate.length,
                              params.embeddings, params.candidate_encoder);
    pair_rows.push_back(concat(g, vq, vc));
  }
  PairOutputs out;
  out.pairs = stack_rows(g, pair_rows);
  out.qa_logits = head_forward(g, out.pairs, params.qa_head);
  Tensor domain_in = reverse_domain_gradient ? grad_reverse(g, out.pairs, lambda)
                                             : out.pairs;
  out.domain_logits = head_forward(g, domain_in, params.domain_head);
  return out;
}

Tensor masked_qa_loss(Graph& g, const Tensor& qa_logits, const PairBatch& batch) {
  if (qa_logits.rank() != 2 || qa_logits.rows() != batch.size()) {
    fail(ErrorKind::dimension, "masked_qa_loss: logits " + to_string(qa_logits.shape()) +
                                   " for batch of " + std::to_string(batch.size()));
  }
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PairRow& r = batch.rows[i];
    if (r.kind != PairKind::qa) continue;
    if (!r.qa_label) {
      fail(ErrorKind::data, "masked_qa_loss: QA row " + std::to_string(i) + " has no label");
    }
    terms.push_back(softmax_cross_entropy(g, row(g, qa_logits, i), *r.qa_label));
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  return scale(g, add_n(g, terms), 1.0 / static_cast<double>(terms.size()));
}

Tensor domain_loss(Graph& g, const Tensor& domain_logits, const PairBatch& batch) {
  if (domain_logits.rank() != 2 || domain_logits.rows() != batch.size() ||
      batch.size() == 0) {
    fail(ErrorKind::dimension, "domain_loss: logits " + to_string(domain_logits.shape()) +
                                   " for batch of " + std::to_string(batch.size()));
  }
  std::vector<Tensor> terms;
  terms.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    terms.push_back(softmax_cross_entropy(g, row(g, domain_logits, i),
                                          batch.rows[i].domain_label()));
  }
  return scale(g, add_n(g, terms), 1.0 / static_cast<double>(terms.size()));
}

LossTerms total_loss(Graph& g, const PairBatch& batch, const ModelParams& params,
                     double lambda) {
  batch.validate();
  LossTerms terms;
  terms.outputs = forward_pair(g, batch, params, lambda);
  terms.qa = masked_qa_loss(g, terms.outputs.qa_logits, batch);
  terms.domain = domain_loss(g, terms.outputs.domain_logits, batch);
  terms.total = add(g, terms.qa, terms.domain);
  return terms;
}

double lambda_schedule(double progress) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    fail(ErrorKind::parameter,
         "lambda_schedule: progress must lie in [0,1], got " + std::to_string(progress));
  }
  return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

Prediction predict_from_logits(std::span<const double> logits) {
  std::vector<double> p = softmax(logits);
  if (p.size() != 2) fail(ErrorKind::dimension, "predict: expected 2 logits");
  if (p[1] > p[0]) return {1, p[1]};
  return {0, p[0]};
}

Prediction predict(const EncodedSequence& question, const EncodedSequence& candidate,
                   const ModelParams& params) {
  Graph g(false);
  Tensor vq = bilstm_encode(g, question.indices, question.length, params.embeddings,
                            params.question_encoder);
  Tensor vc = bilstm_encode(g, candidate.indices, candidate.length, params.embeddings,
                            params.candidate_encoder);
  Tensor logits = head_forward(g, concat(g, vq, vc), params.qa_head);
  return predict_from_logits(logits.values());
}

Prediction predict(std::string_view question, std::string_view candidate,
                   const ModelParams& params) {
  const TokenList q = tokenize(question);
  const TokenList c = tokenize(candidate);
  if (q.empty()) fail(ErrorKind::usage, "predict: question has no tokens");
  if (c.empty()) fail(ErrorKind::usage, "predict: candidate has no tokens");
  return predict(encode_sequence(q, params.vocab, params.config.max_question_len),
                 encode_sequence(c, params.vocab, params.config.max_candidate_len),
                 params);
}

}  // namespace prqa
