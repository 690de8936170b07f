#include "ebjdat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "ebjdat/errors.hpp"

namespace ebjdat {

namespace {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_finite(std::string_view what, std::span<const double> data) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(what) + ": non-finite value");
    }
  }
}

void require_same_graph(Var a, Var b, std::string_view op) {
  if (&a.graph() != &b.graph()) {
    throw UsageError(std::string(op) + ": operands from different graphs");
  }
}

void require_same_shape(Var a, Var b, std::string_view op) {
  require_same_graph(a, b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_matrix(Var a, std::string_view op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_str(a.shape()));
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (std::size_t e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape_));
  }
  data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape_));
  }
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
  check_finite("tensor", data_);
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw DimensionError("from_rows: no rows");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::filled(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

std::size_t Tensor::cols() const {
  if (shape_.size() <= 1) return 1;
  return data_.size() / shape_[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw UsageError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::gather_rows(std::span<const std::size_t> idx) const {
  if (idx.empty()) throw DimensionError("gather_rows: no rows selected");
  const std::size_t c = cols();
  Shape shape = shape_;
  shape[0] = idx.size();
  std::vector<double> out;
  out.reserve(idx.size() * c);
  for (std::size_t i : idx) {
    if (i >= rows()) throw DimensionError("gather_rows: index out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor(std::move(shape), std::move(out));
}

Activation parse_activation(std::string_view name) {
  if (name == "swish") return Activation::kSwish;
  if (name == "leaky-relu" || name == "leaky_relu") return Activation::kLeakyRelu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
  return a == Activation::kSwish ? "swish" : "leaky-relu";
}

// ---------------------------------------------------------------------------
// Graph

const Tensor& Var::value() const { return graph_->value(*this); }

Graph::Node& Graph::node(Var v) {
  if (&v.graph() != this || v.id() >= nodes_.size()) throw UsageError("foreign Var");
  return *nodes_[v.id()];
}

const Graph::Node& Graph::node(Var v) const {
  if (&v.graph() != this || v.id() >= nodes_.size()) throw UsageError("foreign Var");
  return *nodes_[v.id()];
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  if (consumed_) throw UsageError("graph already consumed by backward()");
  check_finite("leaf", value.data());
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                  BackwardFn backward) {
  if (consumed_) throw UsageError("graph already consumed by backward()");
  check_finite(op, value.data());
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  for (Var in : inputs) {
    if (&in.graph() != this) throw UsageError(std::string(op) + ": foreign input");
    n->requires_grad = n->requires_grad || node(in).requires_grad;
  }
  if (n->requires_grad) n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Graph::grad(Var v) const {
  if (!consumed_) throw UsageError("grad() before backward()");
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

double* Graph::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

void Graph::accumulate(Var target, std::span<const double> grad) {
  double* buf = grad_buffer(target);
  if (buf == nullptr) return;
  for (std::size_t i = 0; i < grad.size(); ++i) buf[i] += grad[i];
}

void Graph::backward(Var loss) {
  if (consumed_) throw UsageError("backward() called twice on one recorded pass");
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got " + shape_str(root.value.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad) return;
  for (auto& n : nodes_) {
    if (!n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = *nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    check_finite("backward", n.grad);
    Tensor g(n.value.shape(), n.grad);
    n.backward(g);
  }
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b,
          bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
  if (!trans_b) {
    // i-p-j order keeps the inner loop contiguous in B and C.
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = trans_a ? a[p * m + i] : a[i * k + p];
        if (aip == 0.0) continue;
        const double* bp = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      if (trans_a) {
        for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * bj[p];
      } else {
        const double* ai = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      }
      ci[j] += s;
    }
  }
}

double logsumexp(std::span<const double> row) {
  if (row.empty()) throw DimensionError("logsumexp of an empty row");
  const double mx = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (double v : row) s += std::exp(v - mx);
  return mx + std::log(s);
}

double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::kSwish:
      return x * sigmoid(x);
    case Activation::kLeakyRelu:
      return x > 0 ? x : 0.01 * x;
  }
  return x;
}

double activate_grad(double x, Activation kind) {
  switch (kind) {
    case Activation::kSwish: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::kLeakyRelu:
      return x > 0 ? 1.0 : 0.01;
  }
  return 1.0;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dims " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(a.value().data(), b.value().data(), out, m, k, n, false, false, false);
  Graph& g = a.graph();
  return g.record("matmul", Tensor({m, n}, std::move(out)), {a, b},
                  [&g, a, b, m, k, n](const Tensor& go) {
                    if (double* ga = g.grad_buffer(a)) {
                      // dA = G * B^T
                      kernels::gemm(go.data(), b.value().data(), {ga, m * k}, m, n, k,
                                    false, true, true);
                    }
                    if (double* gb = g.grad_buffer(b)) {
                      // dB = A^T * G
                      kernels::gemm(a.value().data(), go.data(), {gb, k * n}, k, m, n,
                                    true, false, true);
                    }
                  });
}

Var add_bias(Var a, Var bias) {
  require_same_graph(a, bias, "add_bias");
  require_matrix(a, "add_bias");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (bias.value().size() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " for " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.value().values());
  const auto bv = bias.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  Graph& g = a.graph();
  return g.record("add_bias", Tensor(a.shape(), std::move(out)), {a, bias},
                  [&g, a, bias, m, n](const Tensor& go) {
                    g.accumulate(a, go.data());
                    if (double* gb = g.grad_buffer(bias)) {
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
                      }
                    }
                  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.value().values());
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Graph& g = a.graph();
  return g.record("add", Tensor(a.shape(), std::move(out)), {a, b},
                  [&g, a, b](const Tensor& go) {
                    g.accumulate(a, go.data());
                    g.accumulate(b, go.data());
                  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.value().values());
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Graph& g = a.graph();
  return g.record("sub", Tensor(a.shape(), std::move(out)), {a, b},
                  [&g, a, b](const Tensor& go) {
                    g.accumulate(a, go.data());
                    if (double* gb = g.grad_buffer(b)) {
                      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
                    }
                  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.value().values());
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Graph& g = a.graph();
  return g.record("mul", Tensor(a.shape(), std::move(out)), {a, b},
                  [&g, a, b](const Tensor& go) {
                    if (double* ga = g.grad_buffer(a)) {
                      const auto bv = b.value().data();
                      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
                    }
                    if (double* gb = g.grad_buffer(b)) {
                      const auto av = a.value().data();
                      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
                    }
                  });
}

Var scale(Var a, double s) {
  std::vector<double> out(a.value().values());
  for (double& v : out) v *= s;
  Graph& g = a.graph();
  return g.record("scale", Tensor(a.shape(), std::move(out)), {a},
                  [&g, a, s](const Tensor& go) {
                    if (double* ga = g.grad_buffer(a)) {
                      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
                    }
                  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var activation(Var a, Activation kind) {
  std::vector<double> out(a.value().size());
  const auto av = a.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernels::activate(av[i], kind);
  Graph& g = a.graph();
  return g.record("activation", Tensor(a.shape(), std::move(out)), {a},
                  [&g, a, kind](const Tensor& go) {
                    if (double* ga = g.grad_buffer(a)) {
                      const auto av = a.value().data();
                      for (std::size_t i = 0; i < go.size(); ++i) {
                        ga[i] += go[i] * kernels::activate_grad(av[i], kind);
                      }
                    }
                  });
}

Var logsumexp_rows(Var a) {
  require_matrix(a, "logsumexp_rows");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = kernels::logsumexp(a.value().row(i));
  Graph& g = a.graph();
  Tensor result({m}, std::move(out));
  return g.record("logsumexp_rows", result, {a},
                  [&g, a, m, k, result](const Tensor& go) {
                    if (double* ga = g.grad_buffer(a)) {
                      const auto av = a.value().data();
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < k; ++j) {
                          ga[i * k + j] += go[i] * std::exp(av[i * k + j] - result[i]);
                        }
                      }
                    }
                  });
}

Var pick(Var a, std::span<const int> cols) {
  require_matrix(a, "pick");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  if (cols.size() != m) throw DimensionError("pick: one label per row required");
  std::vector<std::size_t> idx(m);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= k) {
      throw DomainError("label " + std::to_string(cols[i]) + " outside [0," +
                        std::to_string(k) + ")");
    }
    idx[i] = i * k + static_cast<std::size_t>(cols[i]);
    out[i] = a.value()[idx[i]];
  }
  Graph& g = a.graph();
  return g.record("pick", Tensor({m}, std::move(out)), {a},
                  [&g, a, idx = std::move(idx)](const Tensor& go) {
                    if (double* ga = g.grad_buffer(a)) {
                      for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += go[i];
                    }
                  });
}

Var sum(Var a) {
  const auto av = a.value().data();
  const double s = std::accumulate(av.begin(), av.end(), 0.0);
  Graph& g = a.graph();
  return g.record("sum", Tensor::scalar(s), {a}, [&g, a](const Tensor& go) {
    if (double* ga = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < a.value().size(); ++i) ga[i] += go[0];
    }
  });
}

Var mean(Var a) {
  const auto av = a.value().data();
  const double n = static_cast<double>(av.size());
  const double s = std::accumulate(av.begin(), av.end(), 0.0) / n;
  Graph& g = a.graph();
  return g.record("mean", Tensor::scalar(s), {a}, [&g, a, n](const Tensor& go) {
    if (double* ga = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < a.value().size(); ++i) ga[i] += go[0] / n;
    }
  });
}

}  // namespace ebjdat
