#ifndef EBJDAT_TENSOR_HPP_
#define EBJDAT_TENSOR_HPP_

// Dense row-major tensors and a reverse-mode tape.
//
// A Graph records one forward pass. Leaves are copied in; every op appends a
// node whose inputs precede it, so a single reverse sweep yields gradients.
// After backward() the graph is consumed: values and grads stay readable but
// no further ops or backward passes are accepted.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ebjdat {

using Shape = std::vector<std::size_t>;
using Labels = std::vector<int>;

std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor filled(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  // Leading extent; for rank-1 tensors this is the length.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  // Product of trailing extents.
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  // Value of a single-element tensor.
  double item() const;
  bool all_finite() const;

  // Rows selected by index, in order.
  Tensor gather_rows(std::span<const std::size_t> idx) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class Activation { kSwish, kLeakyRelu };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  // Receives dL/d(output); accumulates into inputs via Graph::accumulate.
  using BackwardFn = std::function<void(const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient of the last backward() loss w.r.t. v (zeros if v did not
  // influence the loss).
  Tensor grad(Var v) const;

  void backward(Var loss);
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Op authoring interface. The node requires grad iff any input does; the
  // backward function is dropped otherwise.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  void accumulate(Var target, std::span<const double> grad);
  // Mutable grad buffer of v (allocated on first use); nullptr if v does not
  // require grad.
  double* grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<std::unique_ptr<Node>> nodes_;
  bool consumed_ = false;
};

// Primitive differentiable ops. All operands must share a graph.
Var matmul(Var a, Var b);                   // [m,k]x[k,n]
Var add_bias(Var a, Var bias);              // [m,n] + [n] broadcast over rows
Var add(Var a, Var b);                      // same shape
Var sub(Var a, Var b);                      // same shape
Var mul(Var a, Var b);                      // elementwise, same shape
Var scale(Var a, double s);
Var neg(Var a);
Var activation(Var a, Activation kind);
Var logsumexp_rows(Var a);                  // [m,K] -> [m]
Var pick(Var a, std::span<const int> cols);  // [m,K] -> [m], a[i, cols[i]]
Var sum(Var a);                             // -> [1]
Var mean(Var a);                            // -> [1]

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// Plain (non-recorded) kernels, shared by ops and callers that do not need a
// tape.
namespace kernels {
// C = op(A) * op(B) (+ C if accumulate). op transposes when the flag is set.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b,
          bool accumulate);
double logsumexp(std::span<const double> row);
double activate(double x, Activation kind);
double activate_grad(double x, Activation kind);
}  // namespace kernels

}  // namespace ebjdat

#endif  // EBJDAT_TENSOR_HPP_
