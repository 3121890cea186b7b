#include "prqa/metrics.hpp"

#include "json.hpp"

#include "prqa/error.hpp"

namespace prqa {

void ConfusionCounts::add(int truth, int predicted) {
  if (truth == 1) {
    ++(predicted == 1 ? tp : fn);
  } else {
    ++(predicted == 1 ? fp : tn);
  }
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  tn += other.tn;
  fn += other.fn;
  return *this;
}

EvalReport make_report(std::string dataset, const ConfusionCounts& c) {
  if (c.total() == 0) fail(ErrorKind::usage, "cannot evaluate an empty set");
  EvalReport r;
  r.dataset = std::move(dataset);
  r.counts = c;
  r.n = c.total();
  const auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = ratio(c.tp + c.tn, r.n);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.f1 = r.precision + r.recall == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::string to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["n"] = r.n;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["tn"] = r.counts.tn;
  j["fn"] = r.counts.fn;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.n = j.at("n").get<std::uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.counts = {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(),
                j.at("tn").get<std::uint64_t>(), j.at("fn").get<std::uint64_t>()};
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("eval report: ") + e.what());
  }
}

}  // namespace prqa
