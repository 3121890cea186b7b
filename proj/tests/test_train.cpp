#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "doctest.h"
#include "prqa/checkpoint.hpp"
#include "prqa/error.hpp"
#include "prqa/train.hpp"
#include "support/tiny_model.hpp"
#include "support/toy_tasks.hpp"

using namespace prqa;
using namespace prqa::testing;

namespace {

std::vector<PairRow> numbered_qa(int n) {
  std::vector<PairRow> rows;
  for (int i = 0; i < n; ++i) rows.push_back(qa_row({2 + i % 8, 3 + i % 5}, {4, 2 + i % 7}, i % 2));
  return rows;
}

std::vector<PairRow> numbered_qr(int n) {
  std::vector<PairRow> rows;
  for (int i = 0; i < n; ++i) rows.push_back(qr_row({2 + i % 8}, {5, 2 + i % 3, 7}));
  return rows;
}

bool same_rows(const PairBatch& a, const PairBatch& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const PairRow& x = a.rows[i];
    const PairRow& y = b.rows[i];
    if (x.question.indices != y.question.indices || x.candidate.indices != y.candidate.indices ||
        x.kind != y.kind || x.qa_label != y.qa_label) {
      return false;
    }
  }
  return true;
}

bool params_bit_equal(const ModelParams& a, const ModelParams& b) {
  const auto x = a.all();
  const auto y = b.all();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].tensor.shape() != y[i].tensor.shape()) return false;
    if (std::memcmp(x[i].tensor.values().data(), y[i].tensor.values().data(),
                    x[i].tensor.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

TrainingData small_data() {
  TrainingData d;
  d.qa_train = numbered_qa(12);
  d.qr_train = numbered_qr(7);
  for (int i = 0; i < 6; ++i) {
    d.qa_dev.push_back(LabeledRow{seq({2 + i, 4, 0}, 2), seq({3, 2 + i, 0}, 2), i % 2});
  }
  return d;
}

}  // namespace

TEST_CASE("TrainConfig validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c.adaptation = false;
  CHECK_NOTHROW(c.validate());
  c = TrainConfig{};
  c.learning_rate = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("make_batches") {
  const auto qa = numbered_qa(10);
  const auto qr = numbered_qr(3);
  TrainConfig c;
  c.batch_size = 4;

  SUBCASE("1:1 mix gives 2 QA and 2 QR rows per batch") {
    const auto batches = make_batches(qa, qr, c, 11);
    REQUIRE(batches.size() == 5);
    for (const PairBatch& b : batches) {
      CHECK(b.count(PairKind::qa) == 2);
      CHECK(b.count(PairKind::qr) == 2);
    }
  }
  SUBCASE("3:1 mix") {
    c.batch_size = 8;
    c.qa_share = 3;
    const auto batches = make_batches(qa, qr, c, 11);
    CHECK(batches[0].count(PairKind::qa) == 6);
    CHECK(batches[0].count(PairKind::qr) == 2);
  }
  SUBCASE("every QA row appears exactly once per epoch") {
    std::size_t total = 0;
    for (const PairBatch& b : make_batches(qa, qr, c, 3)) total += b.count(PairKind::qa);
    CHECK(total == qa.size());
  }
  SUBCASE("adaptation off has no QR rows and the same QA rows per batch") {
    TrainConfig off = c;
    off.adaptation = false;
    const auto with = make_batches(qa, qr, c, 5);
    const auto without = make_batches(qa, qr, off, 5);
    REQUIRE(with.size() == without.size());
    for (std::size_t i = 0; i < with.size(); ++i) {
      CHECK(without[i].count(PairKind::qr) == 0);
      CHECK(without[i].count(PairKind::qa) == with[i].count(PairKind::qa));
    }
    CHECK_NOTHROW(make_batches(qa, {}, off, 5));
  }
  SUBCASE("same seed, same batches; different seed, different order") {
    const auto a = make_batches(qa, qr, c, 42);
    const auto b = make_batches(qa, qr, c, 42);
    const auto other = make_batches(qa, qr, c, 43);
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      all_same = all_same && same_rows(a[i], b[i]);
      any_diff = any_diff || !same_rows(a[i], other[i]);
    }
    CHECK(all_same);
    CHECK(any_diff);
  }
  SUBCASE("missing required stream is a config error") {
    try {
      make_batches(qa, {}, c, 1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
    CHECK_THROWS_AS(make_batches({}, qr, c, 1), Error);
  }
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  const ModelParams p = tiny_model(3);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.learning_rate = 0.0;
  const TrainResult r = train(c, p, small_data());
  CHECK(params_bit_equal(r.best, p));
}

TEST_CASE("training is deterministic for a seed") {
  const ModelParams p = tiny_model(4);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.learning_rate = 1e-2;
  c.seed = 17;
  auto run = [&] {
    std::string lines;
    const TrainResult r = train(c, p, small_data(),
                                [&](const EpochLog& l) { lines += l.to_json_line() + "\n"; });
    return std::pair{lines, serialize_checkpoint(r.best)};
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);

  c.seed = 18;
  CHECK(run().first != a.first);
}

TEST_CASE("training log and model selection") {
  const ModelParams p = tiny_model(6);
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 4;
  c.learning_rate = 1e-2;
  const TrainResult r = train(c, p, small_data());
  REQUIRE(r.log.size() == 4);
  CHECK(r.log[0].step == 6);  // 12 QA rows, 2 per batch
  CHECK(r.log[3].step == 24);
  double best = -1.0;
  for (const EpochLog& l : r.log) {
    REQUIRE(l.dev_acc.has_value());
    best = std::max(best, *l.dev_acc);
    CHECK(l.lambda > 0.0);
    CHECK(l.lambda < 1.0);
    CHECK(std::isfinite(l.qa_loss));
    CHECK(std::isfinite(l.domain_loss));
  }
  for (std::size_t i = 1; i < r.log.size(); ++i) CHECK(r.log[i].lambda > r.log[i - 1].lambda);
  REQUIRE(r.best_dev_acc.has_value());
  CHECK(*r.best_dev_acc == best);
  CHECK(r.log[r.best_epoch - 1].dev_acc == r.best_dev_acc);
  CHECK(evaluate(r.best, small_data().qa_dev, "dev").accuracy == best);

  const std::string line = r.log[0].to_json_line();
  for (const char* key : {"\"epoch\"", "\"step\"", "\"lambda\"", "\"qa_loss\"",
                          "\"domain_loss\"", "\"domain_acc\""}) {
    CHECK(line.find(key) != std::string::npos);
  }
}

TEST_CASE("adaptation off: domain head never moves") {
  const ModelParams p = tiny_model(9);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.learning_rate = 1e-2;
  c.adaptation = false;
  const TrainResult r = train(c, p, small_data());
  // Adam moves a parameter only if some step produced a non-zero gradient.
  const HeadParams& before = p.domain_head;
  const HeadParams& after = r.best.domain_head;
  for (auto [x, y] : {std::pair{&before.w1, &after.w1}, std::pair{&before.b1, &after.b1},
                      std::pair{&before.w2, &after.w2}, std::pair{&before.b2, &after.b2},
                      std::pair{&before.w3, &after.w3}, std::pair{&before.b3, &after.b3}}) {
    CHECK(copy_values(*x) == copy_values(*y));
  }
  CHECK(copy_values(p.question_encoder.forward.bias) !=
        copy_values(r.best.question_encoder.forward.bias));
  CHECK(copy_values(p.qa_head.w3) != copy_values(r.best.qa_head.w3));
  for (const EpochLog& l : r.log) CHECK(l.lambda == 0.0);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  ModelParams p = tiny_model(2);
  p.qa_head.b3.values()[0] = std::numeric_limits<double>::infinity();
  TrainConfig c;
  c.batch_size = 4;
  try {
    train(c, p, small_data());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    const std::string what = e.what();
    CHECK(what.find("step 0") != std::string::npos);
    CHECK(what.find("batch 0") != std::string::npos);
    CHECK(what.find("lambda") != std::string::npos);
  }
}

TEST_CASE("evaluate shards across workers without changing the report") {
  const ModelParams p = tiny_model(12);
  std::vector<LabeledRow> rows;
  for (int i = 0; i < 37; ++i) {
    rows.push_back(LabeledRow{seq({2 + i % 8, 3, 0}, 2), seq({4, 2 + (i * 5) % 8, 0}, 2), i % 3 == 0});
  }
  const EvalReport one = evaluate(p, rows, "x");
  CHECK(one.n == 37);
  for (std::size_t w : {2u, 3u, 8u, 100u}) CHECK(evaluate(p, rows, "x", w) == one);
  try {
    evaluate(p, std::span<const LabeledRow>{}, "x");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
  }
}

TEST_CASE("memorization of 32 toy pairs with adaptation off") {
  const auto start = std::chrono::steady_clock::now();
  const MemorizationTask task = make_memorization_task(1);
  const TrainResult r = train(memorization_config(1), task.initial, task.data);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(evaluate(r.best, task.rows, "train").accuracy >= 0.95);
  CHECK(seconds < 60.0);

  // QA loss keeps falling after epoch 5, allowing brief upticks of at most 5%.
  for (std::size_t e = 5; e < r.log.size(); ++e) {
    CAPTURE(e);
    CHECK(r.log[e].qa_loss <= 1.05 * r.log[e - 1].qa_loss);
  }
  CHECK(r.log.back().qa_loss < 0.5 * r.log[4].qa_loss);
}

TEST_CASE("ablation table has four rows") {
  const ModelParams p = tiny_model(13);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 4;
  std::vector<LabeledRow> test;
  for (int i = 0; i < 4; ++i) test.push_back(LabeledRow{seq({2 + i, 0, 0}, 1), seq({3, 0, 0}, 1), i % 2});
  const AblationResult a = ablation_compare(c, p, small_data(), test, test);
  const std::string t = a.table();
  CHECK(std::count(t.begin(), t.end(), '\n') == 5);
  CHECK(t.find("No domain-adapt") != std::string::npos);
  CHECK(t.find("Domain-adapt") != std::string::npos);
  CHECK(a.no_adaptation.training.log[0].lambda == 0.0);
  CHECK(a.adaptation.training.log[0].lambda > 0.0);
}
