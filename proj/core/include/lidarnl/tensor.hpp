#ifndef LIDARNL_TENSOR_HPP_
#define LIDARNL_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lidarnl::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major float64 array. Rank 0 (shape {}) is a scalar.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  // Leading extent; 1 for scalars.
  std::size_t rows() const { return shape_.empty() ? 1 : shape_.front(); }
  // Trailing extent; 1 for scalars.
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives and
// has not been cleared.
class Var {
 public:
  Var() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  // Zero tensor when backward() never reached this node.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node
// vector is already a topological order and backward() is a reverse sweep.
// A Graph is single-threaded; independent graphs may run concurrently.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value);      // differentiable input
  Var constant(Tensor value);  // excluded from differentiation

  // Records an op result. fn is dropped when no parent requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);

  // Resets all gradients, seeds d(loss)/d(loss) = 1 and sweeps backwards.
  // Throws NotScalar unless loss holds exactly one element.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id);
  // Gradient accumulator for node id, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t parent(std::size_t id, std::size_t k) const { return nodes_[id].parents[k]; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void zero_grad();

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

// ---- ops -----------------------------------------------------------------
// Unless stated otherwise operands must have identical shapes; violations
// throw ShapeError. "Matrix" means rank 2, [rows, cols].

Var matmul(Var a, Var b);              // [n,k] x [k,m]
Var transpose(Var a);                  // matrix
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // elementwise
Var div(Var a, Var b);                 // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var scale_by(Var a, Var s);            // s holds one element
Var neg(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);  // zero gradient where clamped

Var softmax(Var a);      // last axis, max-subtracted
Var log_softmax(Var a);  // last axis
// Per row log(sum_{c: mask[r*C+c]} exp(a[r,c])); rows with an empty mask
// yield 0 and no gradient.
Var logsumexp_masked(Var a, std::span<const std::uint8_t> mask);

Var sum(Var a);         // scalar
Var mean(Var a);        // scalar
Var sum_last(Var a);    // [n,m] -> [n]
Var sum_rows(Var a);    // [n,m] -> [m]
Var broadcast_rows(Var v, std::size_t n);  // [m] -> [n,m]

// Row i of the result is row idx[i] of a, or zeros when idx[i] < 0.
Var gather_rows(Var a, std::span<const std::int64_t> idx);
// out[b] = mean of rows i with idx[i] == b; empty buckets are zero.
Var scatter_mean(Var a, std::span<const std::size_t> idx, std::size_t buckets);
// out[r] = mean of rows in neighbors[offsets[r] .. offsets[r+1]); empty lists
// give zero rows. offsets has a.rows()+1 entries.
Var neighbor_mean(Var a, std::span<const std::size_t> offsets,
                  std::span<const std::size_t> neighbors);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var select_cols(Var a, std::span<const std::size_t> cols);  // [n,C] -> [n]

Var l1_distance(Var a, Var b);     // [n,m] x [n,m] -> [n]
Var sq_l2_distance(Var a, Var b);  // [n,m] x [n,m] -> [n]
// Rows divided by their L2 norm. Rows with norm <= eps map to zero and pass
// no gradient, so empty prototype rows stay zero.
Var l2_normalize_rows(Var a, double eps = 1e-12);

}  // namespace lidarnl::ad

#endif  // LIDARNL_TENSOR_HPP_
