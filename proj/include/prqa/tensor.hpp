#pragma once

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tensor is a shared handle: copies alias the same storage, so parameters
// held by a model and the handles captured by a Graph refer to one buffer.
// A Graph records every differentiable operation executed against it and
// replays the backward rules in exact reverse order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace prqa {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t size() const { return storage_->values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return storage_->values; }
  std::span<const double> values() const { return storage_->values; }
  std::span<double> grad() { return storage_->grad; }
  std::span<const double> grad() const { return storage_->grad; }

  double item() const;
  double& at(std::size_t i) { return storage_->values[i]; }
  double at(std::size_t i) const { return storage_->values[i]; }
  double at(std::size_t r, std::size_t c) const {
    return storage_->values[r * cols() + c];
  }

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool on) { storage_->requires_grad = on; }
  void zero_grad();

  // Deep copy of values; the copy has a fresh zero gradient.
  Tensor clone() const;
  bool aliases(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Graph {
 public:
  using BackwardRule =
      std::function<void(const Tensor& output, std::vector<Tensor>& inputs)>;

  // A non-recording graph evaluates forward values only (inference).
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Registers `output` as produced from `inputs`. Nothing is stored when no
  // input requires a gradient or the graph is not recording.
  Tensor record(Tensor output, std::vector<Tensor> inputs, BackwardRule rule);

  // Seeds d(loss)/d(loss) = 1 and runs every backward rule once, newest
  // first. Intermediate gradients are reset first so that repeated calls
  // are deterministic; leaf gradients accumulate.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardRule rule;
  };
  bool recording_;
  std::vector<Node> nodes_;
};

// ---- differentiable operations ------------------------------------------

// [m,k]x[k,n] -> [m,n]; a rank-1 left operand [k] yields a rank-1 [n].
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
// x [n,k] (or [k]) plus bias [k] broadcast over rows.
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias);
Tensor scale(Graph& g, const Tensor& x, double factor);
Tensor tanh(Graph& g, const Tensor& x);
Tensor sigmoid(Graph& g, const Tensor& x);
// Vectors end to end, or matrices with equal row count along columns.
Tensor concat(Graph& g, const Tensor& a, const Tensor& b);
Tensor slice(Graph& g, const Tensor& x, std::size_t begin, std::size_t count);
Tensor row(Graph& g, const Tensor& x, std::size_t index);
Tensor stack_rows(Graph& g, std::span<const Tensor> rows);
Tensor gather_rows(Graph& g, const Tensor& table, std::span<const int> indices);
Tensor sum(Graph& g, const Tensor& x);
Tensor add_n(Graph& g, std::span<const Tensor> terms);
// Identity forward; backward multiplies the upstream gradient by -lambda.
Tensor grad_reverse(Graph& g, const Tensor& x, double lambda);
// -log softmax(logits)[label] for a rank-1 logit vector.
Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, int label);

std::vector<double> softmax(std::span<const double> logits);

// ---- optimizer -----------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Moments> moments;
};

OptimizerState make_optimizer_state(std::span<const NamedTensor> params,
                                    AdamConfig config = {});

// Bias-corrected Adam update of every parameter, then zeroes its gradient.
void adam_step(std::span<const NamedTensor> params, OptimizerState& state);

void zero_grad(std::span<const NamedTensor> params);

}  // namespace prqa
