#include <cmath>
#include <random>

#include "doctest.h"
#include "prqa/error.hpp"
#include "prqa/model.hpp"
#include "support/finite_diff.hpp"
#include "support/tiny_model.hpp"

using namespace prqa;
using namespace prqa::testing;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line LSTM recurrence over plain arrays, written independently of
// the graph operations.
std::vector<double> reference_direction(const std::vector<std::vector<double>>& xs,
                                        const LstmDirection& d, bool reverse) {
  const std::size_t h = d.recurrent_weights.rows();
  const std::size_t e = d.input_weights.rows();
  std::vector<double> hs(h, 0.0), cs(h, 0.0);
  for (std::size_t step = 0; step < xs.size(); ++step) {
    const auto& x = xs[reverse ? xs.size() - 1 - step : step];
    std::vector<double> z(4 * h);
    for (std::size_t j = 0; j < 4 * h; ++j) {
      double acc = d.bias.at(j);
      for (std::size_t i = 0; i < e; ++i) acc += x[i] * d.input_weights.at(i, j);
      for (std::size_t i = 0; i < h; ++i) acc += hs[i] * d.recurrent_weights.at(i, j);
      z[j] = acc;
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sigm(z[j]);
      const double fg = sigm(z[h + j]);
      const double gg = std::tanh(z[2 * h + j]);
      const double og = sigm(z[3 * h + j]);
      cs[j] = fg * cs[j] + ig * gg;
      hs[j] = og * std::tanh(cs[j]);
    }
  }
  return hs;
}

std::vector<double> reference_bilstm(const std::vector<int>& idx, std::size_t len,
                                     const EmbeddingTable& emb, const BiLstmParams& p) {
  std::vector<std::vector<double>> xs;
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> x(emb.dim());
    for (std::size_t j = 0; j < emb.dim(); ++j) x[j] = emb.matrix.at(static_cast<std::size_t>(idx[t]), j);
    xs.push_back(x);
  }
  auto f = reference_direction(xs, p.forward, false);
  auto b = reference_direction(xs, p.backward, true);
  f.insert(f.end(), b.begin(), b.end());
  return f;
}

PairBatch mixed_batch() {
  PairBatch b;
  b.rows.push_back(qa_row({2, 3, 4}, {5, 6, 7}, 1));
  b.rows.push_back(qr_row({3, 8, 9}, {9, 2, 5}));
  return b;
}

void zero_all(const ModelParams& p) { zero_grad(p.trainable()); }

}  // namespace

TEST_CASE("init_model shapes and forget bias") {
  ModelParams p = init_model(tiny_config(), tiny_vocab(),
                             random_embeddings(tiny_vocab(), 1, 3), 9);
  CHECK(p.question_encoder.forward.input_weights.shape() == Shape{3, 16});
  CHECK(p.question_encoder.forward.recurrent_weights.shape() == Shape{4, 16});
  CHECK(p.qa_head.w1.shape() == Shape{16, 5});
  CHECK(p.domain_head.w3.shape() == Shape{3, 2});
  for (std::size_t j = 0; j < 16; ++j) {
    CHECK(p.candidate_encoder.backward.bias.at(j) == (j >= 4 && j < 8 ? 1.0 : 0.0));
  }
  for (const NamedTensor& t : p.trainable()) {
    CHECK(t.tensor.requires_grad());
    for (double v : t.tensor.values()) CHECK(std::abs(v) <= 1.0);
  }
  CHECK_FALSE(p.embeddings.matrix.requires_grad());
  CHECK_FALSE(p.qa_head.w1.aliases(p.domain_head.w1));
  CHECK(p.trainable().size() == 24);
}

TEST_CASE("default model config sizes") {
  ModelConfig c;
  CHECK(c.embedding_dim == 300);
  CHECK(c.hidden == 300);
  CHECK(c.encoder_dim() == 600);
  CHECK(c.pair_dim() == 1200);
  CHECK(c.head_hidden1 == 512);
  CHECK(c.head_hidden2 == 256);
}

TEST_CASE("bilstm_encode") {
  SUBCASE("all-zero parameters give a zero vector") {
    ModelParams p = tiny_model(1);
    for (NamedTensor& t : p.trainable()) for (double& v : t.tensor.values()) v = 0.0;
    Graph g;
    Tensor out = bilstm_encode(g, std::vector<int>{2, 5, 7}, 3, p.embeddings, p.question_encoder);
    CHECK(out.shape() == Shape{8});
    for (double v : out.values()) CHECK(v == 0.0);
  }
  SUBCASE("single token: both directions see one step") {
    ModelParams p = tiny_model(2);
    Graph g;
    Tensor out = bilstm_encode(g, std::vector<int>{4, 0, 0}, 1, p.embeddings, p.question_encoder);
    std::vector<std::vector<double>> xs{{p.embeddings.matrix.at(4, 0), p.embeddings.matrix.at(4, 1),
                                         p.embeddings.matrix.at(4, 2)}};
    auto f = reference_direction(xs, p.question_encoder.forward, false);
    auto b = reference_direction(xs, p.question_encoder.backward, false);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(out.at(j) == doctest::Approx(f[j]).epsilon(1e-12));
      CHECK(out.at(4 + j) == doctest::Approx(b[j]).epsilon(1e-12));
    }
  }
  SUBCASE("matches the straight-line recurrence oracle") {
    for (std::uint64_t seed = 10; seed < 20; ++seed) {
      ModelParams p = tiny_model(seed);
      std::vector<int> idx{static_cast<int>(2 + seed % 8), 7, 3};
      Graph g;
      Tensor out = bilstm_encode(g, idx, 3, p.embeddings, p.candidate_encoder);
      auto ref = reference_bilstm(idx, 3, p.embeddings, p.candidate_encoder);
      for (std::size_t j = 0; j < ref.size(); ++j) CHECK(std::abs(out.at(j) - ref[j]) < 1e-10);
    }
  }
  SUBCASE("padding is never processed") {
    ModelParams p = tiny_model(3);
    Graph g;
    Tensor a = bilstm_encode(g, std::vector<int>{2, 3, 0}, 2, p.embeddings, p.question_encoder);
    Tensor b = bilstm_encode(g, std::vector<int>{2, 3, 9}, 2, p.embeddings, p.question_encoder);
    CHECK(copy_values(a) == copy_values(b));
  }
  SUBCASE("length errors") {
    ModelParams p = tiny_model(4);
    Graph g;
    CHECK_THROWS_AS(bilstm_encode(g, std::vector<int>{2, 3}, 0, p.embeddings, p.question_encoder), Error);
    CHECK_THROWS_AS(bilstm_encode(g, std::vector<int>{2, 3}, 3, p.embeddings, p.question_encoder), Error);
  }
}

TEST_CASE("forward_pair") {
  ModelParams p = tiny_model(5);
  SUBCASE("shapes for a single QA row") {
    PairBatch b;
    b.rows.push_back(qa_row({2}, {3, 4}, 0));
    Graph g;
    PairOutputs out = forward_pair(g, b, p, 1.0);
    CHECK(out.qa_logits.shape() == Shape{1, 2});
    CHECK(out.domain_logits.shape() == Shape{1, 2});
    CHECK(out.pairs.shape() == Shape{1, 16});
  }
  SUBCASE("pair vector is [V_q ; V_c]") {
    PairBatch b = mixed_batch();
    Graph g;
    PairOutputs out = forward_pair(g, b, p, 1.0);
    auto vq = reference_bilstm(b.rows[1].question.indices, 3, p.embeddings, p.question_encoder);
    auto vc = reference_bilstm(b.rows[1].candidate.indices, 3, p.embeddings, p.candidate_encoder);
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(std::abs(out.pairs.at(1, j) - vq[j]) < 1e-12);
      CHECK(std::abs(out.pairs.at(1, 8 + j) - vc[j]) < 1e-12);
    }
  }
  SUBCASE("duplicated rows give identical logits") {
    PairBatch b;
    b.rows.push_back(qa_row({2, 3}, {4}, 1));
    b.rows.push_back(qa_row({2, 3}, {4}, 1));
    Graph g;
    PairOutputs out = forward_pair(g, b, p, 0.3);
    CHECK(out.qa_logits.at(0, 0) == out.qa_logits.at(1, 0));
    CHECK(out.qa_logits.at(0, 1) == out.qa_logits.at(1, 1));
    CHECK(out.domain_logits.at(0, 1) == out.domain_logits.at(1, 1));
  }
  SUBCASE("lambda never changes forward values") {
    PairBatch b = mixed_batch();
    Graph g0, g1;
    PairOutputs a = forward_pair(g0, b, p, 0.0);
    PairOutputs c = forward_pair(g1, b, p, 1.0);
    CHECK(copy_values(a.qa_logits) == copy_values(c.qa_logits));
    CHECK(copy_values(a.domain_logits) == copy_values(c.domain_logits));
  }
  SUBCASE("lambda zero: domain branch adds nothing to encoder gradients") {
    PairBatch b = mixed_batch();
    zero_all(p);
    Graph g1;
    PairOutputs o1 = forward_pair(g1, b, p, 0.0);
    g1.backward(add(g1, masked_qa_loss(g1, o1.qa_logits, b), domain_loss(g1, o1.domain_logits, b)));
    auto with_domain = copy_grad(p.question_encoder.forward.input_weights);
    zero_all(p);
    Graph g2;
    PairOutputs o2 = forward_pair(g2, b, p, 0.0);
    g2.backward(masked_qa_loss(g2, o2.qa_logits, b));
    CHECK(with_domain == copy_grad(p.question_encoder.forward.input_weights));
  }
}

TEST_CASE("masked_qa_loss") {
  PairBatch one;
  one.rows.push_back(qa_row({2}, {3}, 1));
  Graph g;
  Tensor zero_logits = Tensor::matrix(1, 2, {0, 0});
  CHECK(masked_qa_loss(g, zero_logits, one).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  PairBatch qr;
  qr.rows.push_back(qr_row({2}, {3}));
  qr.rows.push_back(qr_row({4}, {5}));
  Tensor logits = Tensor::matrix(2, 2, {1, -1, 3, 0}, true);
  Tensor l = masked_qa_loss(g, logits, qr);
  CHECK(l.item() == 0.0);
  CHECK_FALSE(l.requires_grad());

  PairBatch two;
  two.rows.push_back(qa_row({2}, {3}, 0));
  two.rows.push_back(qr_row({2}, {3}));
  two.rows.push_back(qa_row({2}, {3}, 1));
  Tensor z = Tensor::matrix(3, 2, {2, 0, 9, 9, 0.5, -0.5});
  const double l1 = std::log(1 + std::exp(-2.0));
  const double l2 = std::log(1 + std::exp(1.0));
  CHECK(masked_qa_loss(g, z, two).item() == doctest::Approx((l1 + l2) / 2).epsilon(1e-12));

  PairBatch broken;
  broken.rows.push_back(PairRow{seq({2}, 1), seq({3}, 1), PairKind::qa, std::nullopt});
  try {
    masked_qa_loss(g, zero_logits, broken);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("domain_loss") {
  Graph g;
  PairBatch one;
  one.rows.push_back(qr_row({2}, {3}));
  CHECK(domain_loss(g, Tensor::matrix(1, 2, {0, 0}), one).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(domain_loss(g, Tensor::matrix(1, 2, {0, 20}), one).item() < 1e-8);

  PairBatch mixed = mixed_batch();  // QA (domain 0), QR (domain 1)
  Tensor z = Tensor::matrix(2, 2, {1, 0, 1, 0});
  const double a = std::log(1 + std::exp(-1.0));
  const double b = std::log(1 + std::exp(1.0));
  CHECK(domain_loss(g, z, mixed).item() == doctest::Approx((a + b) / 2).epsilon(1e-12));
}

TEST_CASE("total_loss") {
  ModelParams p = tiny_model(6);
  SUBCASE("all-QR batch equals the domain loss") {
    PairBatch b;
    b.rows.push_back(qr_row({2, 3}, {4}));
    b.rows.push_back(qr_row({5}, {6, 7}));
    Graph g;
    LossTerms t = total_loss(g, b, p, 0.7);
    CHECK(t.total.item() == t.domain.item());
    zero_all(p);
    g.backward(t.total);
    for (const NamedTensor& n : p.trainable()) {
      if (n.name.rfind("qa_head", 0) != 0) continue;
      for (double v : n.tensor.grad()) CHECK(v == 0.0);
    }
  }
  SUBCASE("encoder gradient = QA gradient - lambda * domain gradient") {
    PairBatch b = mixed_batch();
    for (double lambda : {0.0, 0.35, 1.0}) {
      zero_all(p);
      Graph gq;
      PairOutputs oq = forward_pair(gq, b, p, lambda);
      gq.backward(masked_qa_loss(gq, oq.qa_logits, b));
      std::vector<std::vector<double>> qa_grads;
      for (const NamedTensor& n : p.trainable()) qa_grads.push_back(copy_grad(n.tensor));

      zero_all(p);
      Graph gd;
      PairOutputs od = forward_pair(gd, b, p, lambda, false);
      gd.backward(domain_loss(gd, od.domain_logits, b));
      std::vector<std::vector<double>> dom_grads;
      for (const NamedTensor& n : p.trainable()) dom_grads.push_back(copy_grad(n.tensor));

      zero_all(p);
      Graph gt;
      gt.backward(total_loss(gt, b, p, lambda).total);
      auto params = p.trainable();
      for (std::size_t k = 0; k < params.size(); ++k) {
        const bool encoder = params[k].name.find("encoder") != std::string::npos;
        const double sign = encoder ? -lambda : 1.0;
        auto got = params[k].tensor.grad();
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(std::abs(got[i] - (qa_grads[k][i] + sign * dom_grads[k][i])) < 1e-10);
        }
      }
    }
  }
  SUBCASE("full-model gradients match central differences") {
    PairBatch b = mixed_batch();
    for (double lambda : {0.0, 0.6}) {
      zero_all(p);
      Graph g;
      g.backward(total_loss(g, b, p, lambda).total);
      // Heads descend qa + domain; encoders descend qa - lambda * domain.
      auto objective = [&](double domain_weight) {
        return [&, domain_weight] {
          Graph fg(false);
          PairOutputs o = forward_pair(fg, b, p, lambda);
          return masked_qa_loss(fg, o.qa_logits, b).item() +
                 domain_weight * domain_loss(fg, o.domain_logits, b).item();
        };
      };
      for (const NamedTensor& n : p.trainable()) {
        const bool encoder = n.name.find("encoder") != std::string::npos;
        auto numeric = numeric_gradient(n.tensor, objective(encoder ? -lambda : 1.0));
        for (std::size_t i = 0; i < numeric.size(); ++i) {
          CHECK(relative_error(n.tensor.grad()[i], numeric[i]) < 1e-3);
        }
      }
    }
  }
}

TEST_CASE("permuting batch rows permutes logits and keeps losses") {
  ModelParams p = tiny_model(7);
  PairBatch b;
  b.rows.push_back(qa_row({2, 3}, {4, 5, 6}, 1));
  b.rows.push_back(qr_row({7}, {8, 9}));
  b.rows.push_back(qa_row({9, 9}, {2}, 0));
  b.rows.push_back(qr_row({3, 4, 5}, {6}));
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  PairBatch q;
  for (std::size_t i : perm) q.rows.push_back(b.rows[i]);
  Graph g1, g2;
  LossTerms a = total_loss(g1, b, p, 0.5);
  LossTerms c = total_loss(g2, q, p, 0.5);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(c.outputs.qa_logits.at(i, j) == a.outputs.qa_logits.at(perm[i], j));
      CHECK(c.outputs.domain_logits.at(i, j) == a.outputs.domain_logits.at(perm[i], j));
    }
  }
  CHECK(std::abs(a.qa.item() - c.qa.item()) < 1e-12);
  CHECK(std::abs(a.domain.item() - c.domain.item()) < 1e-12);
}

TEST_CASE("lambda_schedule") {
  CHECK(lambda_schedule(0.0) == 0.0);
  // 2 / (1 + e^-5) - 1 and 2 / (1 + e^-10) - 1
  CHECK(lambda_schedule(0.5) == doctest::Approx(0.98661429815143).epsilon(1e-12));
  CHECK(lambda_schedule(1.0) == doctest::Approx(0.99990920426259).epsilon(1e-12));
  CHECK_THROWS_AS(lambda_schedule(-0.01), Error);
  CHECK_THROWS_AS(lambda_schedule(1.5), Error);
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double l = lambda_schedule(i / 100.0);
    CHECK(l >= prev);
    CHECK(l < 1.0);
    prev = l;
  }
}

TEST_CASE("predict") {
  Prediction tie = predict_from_logits(std::vector<double>{0, 0});
  CHECK(tie.label == 0);
  CHECK(tie.confidence == 0.5);
  Prediction clear = predict_from_logits(std::vector<double>{2, 0});
  CHECK(clear.label == 0);
  CHECK(clear.confidence == doctest::Approx(0.8807970779778823).epsilon(1e-12));
  CHECK(predict_from_logits(std::vector<double>{-1, 1}).label == 1);

  ModelParams p = tiny_model(8);
  Prediction a = predict("t0 t1", "t2 t3 t4", p);
  Prediction b = predict("t0 t1", "t2 t3 t4", p);
  CHECK(a.label == b.label);
  CHECK(a.confidence == b.confidence);
  CHECK(a.confidence >= 0.5);
  CHECK_THROWS_AS(predict("t0", "", p), Error);

  // agrees with the batched forward pass
  PairBatch batch;
  batch.rows.push_back(qa_row({2, 3}, {4, 5, 6}, 1));
  Graph g;
  PairOutputs out = forward_pair(g, batch, p, 1.0);
  Prediction direct = predict(batch.rows[0].question, batch.rows[0].candidate, p);
  CHECK(direct.label == a.label);
  CHECK(direct.confidence == doctest::Approx(
                                 predict_from_logits(out.qa_logits.values()).confidence)
                                 .epsilon(1e-14));
}

TEST_CASE("clone shares no storage") {
  ModelParams p = tiny_model(9);
  ModelParams c = p.clone();
  auto a = p.all();
  auto b = c.all();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK_FALSE(a[i].tensor.aliases(b[i].tensor));
    CHECK(copy_values(a[i].tensor) == copy_values(b[i].tensor));
  }
}
