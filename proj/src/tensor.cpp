#include "prqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "prqa/error.hpp"

namespace prqa {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{}, false) {}

Tensor::Tensor(Shape shape, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
  const std::size_t n = element_count(shape);
  storage_->shape = std::move(shape);
  storage_->values.assign(n, 0.0);
  storage_->grad.assign(n, 0.0);
  storage_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
  if (element_count(shape) != values.size()) {
    fail(ErrorKind::dimension, "tensor of shape " + to_string(shape) +
                                   " cannot hold " +
                                   std::to_string(values.size()) + " values");
  }
  storage_->grad.assign(values.size(), 0.0);
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
  storage_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
  return rank() == 2 ? shape()[0] : 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 0) return 1;
  return shape().back();
}

double Tensor::item() const {
  if (size() != 1) {
    fail(ErrorKind::usage,
         "item() on tensor of shape " + to_string(shape()));
  }
  return storage_->values[0];
}

void Tensor::zero_grad() {
  std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(shape(), storage_->values, requires_grad());
}

// ---- Graph -----------------------------------------------------------------

Tensor Graph::record(Tensor output, std::vector<Tensor> inputs,
                     BackwardRule rule) {
  const bool needs = recording_ &&
                     std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  output.set_requires_grad(needs);
  if (needs) {
    nodes_.push_back(Node{std::move(inputs), output, std::move(rule)});
  }
  return output;
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    fail(ErrorKind::usage, "backward() requires a scalar loss, got shape " +
                               to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  for (Node& node : nodes_) node.output.zero_grad();
  Tensor seed = loss;
  seed.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto og = it->output.grad();
    // Nodes off the loss path would only add zeros.
    if (std::all_of(og.begin(), og.end(), [](double v) { return v == 0.0; })) continue;
    it->rule(it->output, it->inputs);
  }
}

// ---- operations ------------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::dimension, std::string(op) + ": shape mismatch " +
                                   to_string(a.shape()) + " vs " +
                                   to_string(b.shape()));
  }
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  const bool vec = a.rank() == 1;
  if ((a.rank() != 2 && !vec) || b.rank() != 2) {
    fail(ErrorKind::dimension, "matmul: unsupported ranks " +
                                   to_string(a.shape()) + " x " +
                                   to_string(b.shape()));
  }
  const std::size_t m = vec ? 1 : a.shape()[0];
  const std::size_t k = vec ? a.shape()[0] : a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) {
    fail(ErrorKind::dimension, "matmul: inner dimensions disagree " +
                                   to_string(a.shape()) + " x " +
                                   to_string(b.shape()));
  }
  Tensor out(vec ? Shape{n} : Shape{m, n});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &ov[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return g.record(out, {a, b}, [m, k, n](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    Tensor& a = in[0];
    Tensor& b = in[1];
    if (a.requires_grad()) {
      auto bv = b.values();
      auto ag = a.grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gv[i * n + j] * bv[p * n + j];
          ag[i * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      auto av = a.values();
      auto bg = b.grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) bg[p * n + j] += aip * gv[i * n + j];
        }
      }
    }
  });
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  return g.record(out, {a, b}, [](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    for (Tensor& t : in) {
      if (!t.requires_grad()) continue;
      auto tg = t.grad();
      for (std::size_t i = 0; i < gv.size(); ++i) tg[i] += gv[i];
    }
  });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  return g.record(out, {a, b}, [](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    Tensor& a = in[0];
    Tensor& b = in[1];
    if (a.requires_grad()) {
      auto ag = a.grad();
      auto bv = b.values();
      for (std::size_t i = 0; i < gv.size(); ++i) ag[i] += gv[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto bg = b.grad();
      auto av = a.values();
      for (std::size_t i = 0; i < gv.size(); ++i) bg[i] += gv[i] * av[i];
    }
  });
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.cols() != bias.size()) {
    fail(ErrorKind::dimension, "add_bias: cannot broadcast " +
                                   to_string(bias.shape()) + " over " +
                                   to_string(x.shape()));
  }
  const std::size_t n = x.rows();
  const std::size_t k = x.cols();
  Tensor out(x.shape());
  auto xv = x.values();
  auto bv = bias.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) ov[i * k + j] = xv[i * k + j] + bv[j];
  return g.record(out, {x, bias}, [n, k](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    if (in[0].requires_grad()) {
      auto xg = in[0].grad();
      for (std::size_t i = 0; i < gv.size(); ++i) xg[i] += gv[i];
    }
    if (in[1].requires_grad()) {
      auto bg = in[1].grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) bg[j] += gv[i * k + j];
    }
  });
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = factor * xv[i];
  return g.record(out, {x}, [factor](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    auto xg = in[0].grad();
    for (std::size_t i = 0; i < gv.size(); ++i) xg[i] += factor * gv[i];
  });
}

Tensor tanh(Graph& g, const Tensor& x) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
  return g.record(out, {x}, [](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    auto ov = o.values();
    auto xg = in[0].grad();
    for (std::size_t i = 0; i < gv.size(); ++i) xg[i] += gv[i] * (1.0 - ov[i] * ov[i]);
  });
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return g.record(out, {x}, [](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    auto ov = o.values();
    auto xg = in[0].grad();
    for (std::size_t i = 0; i < gv.size(); ++i) xg[i] += gv[i] * ov[i] * (1.0 - ov[i]);
  });
}

Tensor concat(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() == 0 || a.rank() > 2 ||
      (a.rank() == 2 && a.rows() != b.rows())) {
    fail(ErrorKind::dimension, "concat: incompatible operands " +
                                   to_string(a.shape()) + " and " +
                                   to_string(b.shape()));
  }
  const std::size_t n = a.rows();
  const std::size_t ka = a.cols();
  const std::size_t kb = b.cols();
  Tensor out(a.rank() == 1 ? Shape{ka + kb} : Shape{n, ka + kb});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(&av[i * ka], ka, &ov[i * (ka + kb)]);
    std::copy_n(&bv[i * kb], kb, &ov[i * (ka + kb) + ka]);
  }
  return g.record(out, {a, b}, [n, ka, kb](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    const std::size_t w = ka + kb;
    if (in[0].requires_grad()) {
      auto ag = in[0].grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ka; ++j) ag[i * ka + j] += gv[i * w + j];
    }
    if (in[1].requires_grad()) {
      auto bg = in[1].grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < kb; ++j) bg[i * kb + j] += gv[i * w + ka + j];
    }
  });
}

Tensor slice(Graph& g, const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.rank() != 1 || begin + count > x.size()) {
    fail(ErrorKind::dimension, "slice: range [" + std::to_string(begin) + "," +
                                   std::to_string(begin + count) +
                                   ") outside " + to_string(x.shape()));
  }
  auto xv = x.values();
  Tensor out(Shape{count},
             std::vector<double>(xv.begin() + static_cast<std::ptrdiff_t>(begin),
                                 xv.begin() + static_cast<std::ptrdiff_t>(begin + count)));
  return g.record(out, {x}, [begin](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    auto xg = in[0].grad();
    for (std::size_t i = 0; i < gv.size(); ++i) xg[begin + i] += gv[i];
  });
}

Tensor row(Graph& g, const Tensor& x, std::size_t index) {
  if (x.rank() != 2 || index >= x.rows()) {
    fail(ErrorKind::dimension, "row: index " + std::to_string(index) +
                                   " outside " + to_string(x.shape()));
  }
  const std::size_t k = x.cols();
  auto xv = x.values();
  Tensor out(Shape{k}, std::vector<double>(&xv[index * k], &xv[index * k] + k));
  return g.record(out, {x}, [index, k](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    auto xg = in[0].grad();
    for (std::size_t j = 0; j < k; ++j) xg[index * k + j] += gv[j];
  });
}

Tensor stack_rows(Graph& g, std::span<const Tensor> rows) {
  if (rows.empty()) fail(ErrorKind::dimension, "stack_rows: no rows");
  const std::size_t k = rows[0].size();
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.size() != k) {
      fail(ErrorKind::dimension, "stack_rows: row of shape " +
                                     to_string(r.shape()) + ", expected [" +
                                     std::to_string(k) + "]");
    }
  }
  Tensor out(Shape{rows.size(), k});
  auto ov = out.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto rv = rows[i].values();
    std::copy(rv.begin(), rv.end(), &ov[i * k]);
  }
  return g.record(out, {rows.begin(), rows.end()},
                  [k](const Tensor& o, std::vector<Tensor>& in) {
                    auto gv = o.grad();
                    for (std::size_t i = 0; i < in.size(); ++i) {
                      if (!in[i].requires_grad()) continue;
                      auto rg = in[i].grad();
                      for (std::size_t j = 0; j < k; ++j) rg[j] += gv[i * k + j];
                    }
                  });
}

Tensor gather_rows(Graph& g, const Tensor& table, std::span<const int> indices) {
  if (table.rank() != 2) {
    fail(ErrorKind::dimension,
         "gather_rows: table must be a matrix, got " + to_string(table.shape()));
  }
  const std::size_t k = table.cols();
  for (int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= table.rows()) {
      fail(ErrorKind::dimension, "gather_rows: index " + std::to_string(idx) +
                                     " outside table " + to_string(table.shape()));
    }
  }
  Tensor out(Shape{indices.size(), k});
  auto tv = table.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(&tv[static_cast<std::size_t>(indices[i]) * k], k, &ov[i * k]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return g.record(out, {table}, [k, idx = std::move(idx)](const Tensor& o,
                                                          std::vector<Tensor>& in) {
    auto gv = o.grad();
    auto tg = in[0].grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < k; ++j)
        tg[static_cast<std::size_t>(idx[i]) * k + j] += gv[i * k + j];
  });
}

Tensor sum(Graph& g, const Tensor& x) {
  auto xv = x.values();
  Tensor out = Tensor::scalar(std::accumulate(xv.begin(), xv.end(), 0.0));
  return g.record(out, {x}, [](const Tensor& o, std::vector<Tensor>& in) {
    const double go = o.grad()[0];
    for (double& v : in[0].grad()) v += go;
  });
}

Tensor add_n(Graph& g, std::span<const Tensor> terms) {
  if (terms.empty()) fail(ErrorKind::dimension, "add_n: no terms");
  for (const Tensor& t : terms) require_same_shape("add_n", terms[0], t);
  Tensor out(terms[0].shape());
  auto ov = out.values();
  for (const Tensor& t : terms) {
    auto tv = t.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += tv[i];
  }
  return g.record(out, {terms.begin(), terms.end()},
                  [](const Tensor& o, std::vector<Tensor>& in) {
                    auto gv = o.grad();
                    for (Tensor& t : in) {
                      if (!t.requires_grad()) continue;
                      auto tg = t.grad();
                      for (std::size_t i = 0; i < gv.size(); ++i) tg[i] += gv[i];
                    }
                  });
}

Tensor grad_reverse(Graph& g, const Tensor& x, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    fail(ErrorKind::parameter,
         "grad_reverse: lambda must be finite and >= 0, got " + std::to_string(lambda));
  }
  auto xv = x.values();
  Tensor out(x.shape(), std::vector<double>(xv.begin(), xv.end()));
  return g.record(out, {x}, [lambda](const Tensor& o, std::vector<Tensor>& in) {
    auto gv = o.grad();
    auto xg = in[0].grad();
    for (std::size_t i = 0; i < gv.size(); ++i) xg[i] += -lambda * gv[i];
  });
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double top = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - top);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, int label) {
  if (logits.rank() != 1 || logits.size() < 2) {
    fail(ErrorKind::parameter, "softmax_cross_entropy: need a vector of at least "
                               "2 logits, got " + to_string(logits.shape()));
  }
  const std::size_t c = logits.size();
  if (label < 0 || static_cast<std::size_t>(label) >= c) {
    fail(ErrorKind::parameter, "softmax_cross_entropy: label " +
                                   std::to_string(label) + " outside [0," +
                                   std::to_string(c) + ")");
  }
  auto lv = logits.values();
  for (double v : lv) {
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "softmax_cross_entropy: non-finite logit");
  }
  const double top = *std::max_element(lv.begin(), lv.end());
  double z = 0.0;
  for (double v : lv) z += std::exp(v - top);
  const double loss = std::log(std::max(z, 1e-12)) - (lv[label] - top);
  Tensor out = Tensor::scalar(std::max(loss, 0.0));
  return g.record(out, {logits}, [label](const Tensor& o, std::vector<Tensor>& in) {
    const double go = o.grad()[0];
    std::vector<double> p = softmax(in[0].values());
    p[label] -= 1.0;
    auto lg = in[0].grad();
    for (std::size_t i = 0; i < p.size(); ++i) lg[i] += go * p[i];
  });
}

// ---- optimizer -------------------------------------------------------------

OptimizerState make_optimizer_state(std::span<const NamedTensor> params,
                                    AdamConfig config) {
  if (!(config.learning_rate >= 0.0)) {
    fail(ErrorKind::parameter, "adam: learning rate must be >= 0");
  }
  OptimizerState state;
  state.config = config;
  for (const NamedTensor& p : params) {
    auto [it, inserted] = state.moments.emplace(
        p.name, OptimizerState::Moments{std::vector<double>(p.tensor.size(), 0.0),
                                        std::vector<double>(p.tensor.size(), 0.0)});
    if (!inserted) fail(ErrorKind::internal, "adam: duplicate parameter " + p.name);
  }
  return state;
}

void adam_step(std::span<const NamedTensor> params, OptimizerState& state) {
  if (params.size() != state.moments.size()) {
    fail(ErrorKind::internal, "adam: optimizer tracks " +
                                  std::to_string(state.moments.size()) +
                                  " parameters, step given " +
                                  std::to_string(params.size()));
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (const NamedTensor& p : params) {
    auto it = state.moments.find(p.name);
    if (it == state.moments.end() || it->second.first.size() != p.tensor.size()) {
      fail(ErrorKind::internal, "adam: no optimizer state for parameter " + p.name);
    }
    Tensor tensor = p.tensor;
    auto values = tensor.values();
    auto grad = tensor.grad();
    auto& m = it->second.first;
    auto& v = it->second.second;
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    tensor.zero_grad();
  }
}

void zero_grad(std::span<const NamedTensor> params) {
  for (const NamedTensor& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace prqa
