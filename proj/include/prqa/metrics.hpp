#pragma once

#include <cstdint>
#include <string>

namespace prqa {

// Binary confusion counts with label 1 ("answers the question") as positive.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  void add(int truth, int predicted);
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

struct EvalReport {
  std::string dataset;
  std::uint64_t n = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing was predicted positive
  double recall = 0.0;     // 0 when there are no positives
  double f1 = 0.0;         // 0 when precision + recall == 0
  ConfusionCounts counts;

  bool operator==(const EvalReport&) const = default;
};

// Throws a usage error for an empty confusion matrix.
EvalReport make_report(std::string dataset, const ConfusionCounts& counts);

std::string to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace prqa
