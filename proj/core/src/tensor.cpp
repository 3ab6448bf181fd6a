#include "lidarnl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "lidarnl/errors.hpp"

namespace lidarnl::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
  }
}

// Matrices and vectors (treated as one row) for last-axis ops.
void require_rows(const Tensor& a, const char* op) {
  if (a.rank() != 1 && a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " + to_string(a.shape()));
  }
}

std::size_t row_count(const Tensor& a) { return a.rank() == 2 ? a.shape()[0] : 1; }

// Gradient accumulator of parent k, or nullptr if it does not need one.
Tensor* parent_grad(Graph& g, std::size_t self, std::size_t k) {
  const std::size_t p = g.parent(self, k);
  return g.requires_grad(p) ? &g.grad_buffer(p) : nullptr;
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return a.graph().record(std::move(y), {a}, [deriv](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& x = g.value(g.parent(self, 0));
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += gy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor(Shape{rows, cols}, std::move(v));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw NotScalar("item() on a tensor of shape " + to_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

// ---- Var / Graph ----------------------------------------------------------

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (p.graph_ != this) throw ShapeError("operands belong to different graphs");
    node.parents.push_back(p.id_);
    node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::grad(std::size_t id) { return grad_buffer(id); }

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

void Graph::zero_grad() {
  for (Node& n : nodes_) n.grad = Tensor();
}

void Graph::backward(Var loss) {
  if (loss.graph_ != this) throw ShapeError("backward: loss belongs to another graph");
  if (value(loss.id_).size() != 1) {
    throw NotScalar("backward: loss has shape " + to_string(value(loss.id_).shape()));
  }
  zero_grad();
  grad_buffer(loss.id_)[0] = 1.0;
  for (std::size_t k = loss.id_ + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.requires_grad || !n.backward || n.grad.size() != n.value.size()) continue;
    n.backward(*this, k);
  }
}

// ---- ops ------------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  require_matrix(x, "matmul");
  require_matrix(w, "matmul");
  const std::size_t n = x.shape()[0], k = x.shape()[1], m = w.shape()[1];
  if (w.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions of " + to_string(x.shape()) + " and " +
                     to_string(w.shape()) + " differ");
  }
  Tensor y(Shape{n, m});
  if (n > 0 && m > 0) {
    MutMap(y.ptr(), n, m).noalias() = ConstMap(x.ptr(), n, k) * ConstMap(w.ptr(), k, m);
  }
  return a.graph().record(std::move(y), {a, b}, [n, k, m](Graph& g, std::size_t self) {
    if (n == 0 || m == 0 || k == 0) return;
    const ConstMap gy(g.grad_buffer(self).ptr(), n, m);
    if (Tensor* ga = parent_grad(g, self, 0)) {
      const Tensor& w = g.value(g.parent(self, 1));
      MutMap(ga->ptr(), n, k).noalias() += gy * ConstMap(w.ptr(), k, m).transpose();
    }
    if (Tensor* gb = parent_grad(g, self, 1)) {
      const Tensor& x = g.value(g.parent(self, 0));
      MutMap(gb->ptr(), k, m).noalias() += ConstMap(x.ptr(), n, k).transpose() * gy;
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "transpose");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  Tensor y(Shape{m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y.at(j, i) = x.at(i, j);
  return a.graph().record(std::move(y), {a}, [n, m](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga->at(i, j) += gy.at(j, i);
  });
}

namespace {

template <typename Fwd, typename GradA, typename GradB>
Var binary(Var a, Var b, const char* op, Fwd fwd, GradA da, GradB db) {
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  require_same(x, z, op);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i], z[i]);
  return a.graph().record(std::move(y), {a, b}, [da, db](Graph& g, std::size_t self) {
    const Tensor& x = g.value(g.parent(self, 0));
    const Tensor& z = g.value(g.parent(self, 1));
    const Tensor& gy = g.grad_buffer(self);
    if (Tensor* ga = parent_grad(g, self, 0)) {
      for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += gy[i] * da(x[i], z[i]);
    }
    if (Tensor* gb = parent_grad(g, self, 1)) {
      for (std::size_t i = 0; i < x.size(); ++i) (*gb)[i] += gy[i] * db(x[i], z[i]);
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double z) { return x + z; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double z) { return x - z; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double z) { return x * z; },
      [](double, double z) { return z; }, [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double z) { return x / z; },
      [](double, double z) { return 1.0 / z; },
      [](double x, double z) { return -x / (z * z); });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var scale_by(Var a, Var s) {
  if (s.value().size() != 1) {
    throw ShapeError("scale_by: factor must hold one element, got " + to_string(s.shape()));
  }
  const Tensor& x = a.value();
  const double f = s.value()[0];
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f * x[i];
  return a.graph().record(std::move(y), {a, s}, [](Graph& g, std::size_t self) {
    const Tensor& x = g.value(g.parent(self, 0));
    const double f = g.value(g.parent(self, 1))[0];
    const Tensor& gy = g.grad_buffer(self);
    if (Tensor* ga = parent_grad(g, self, 0)) {
      for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += f * gy[i];
    }
    if (Tensor* gs = parent_grad(g, self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * gy[i];
      (*gs)[0] += acc;
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  require_rows(x, "softmax");
  const std::size_t n = row_count(x), c = x.cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.ptr() + r * c;
    double* yr = y.ptr() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) yr[j] /= z;
  }
  return a.graph().record(std::move(y), {a}, [n, c](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t r = 0; r < n; ++r) {
      const double* yr = y.ptr() + r * c;
      const double* gr = gy.ptr() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += yr[j] * gr[j];
      for (std::size_t j = 0; j < c; ++j) ga->ptr()[r * c + j] += yr[j] * (gr[j] - dot);
    }
  });
}

Var log_softmax(Var a) {
  const Tensor& x = a.value();
  require_rows(x, "log_softmax");
  const std::size_t n = row_count(x), c = x.cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.ptr() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(xr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) y.ptr()[r * c + j] = xr[j] - lse;
  }
  return a.graph().record(std::move(y), {a}, [n, c](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t r = 0; r < n; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) total += gy.ptr()[r * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        ga->ptr()[r * c + j] += gy.ptr()[r * c + j] - std::exp(y.ptr()[r * c + j]) * total;
      }
    }
  });
}

Var logsumexp_masked(Var a, std::span<const std::uint8_t> mask) {
  const Tensor& x = a.value();
  require_rows(x, "logsumexp_masked");
  const std::size_t n = row_count(x), c = x.cols();
  if (mask.size() != n * c) throw ShapeError("logsumexp_masked: mask size mismatch");
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  Tensor y(Shape{n});
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (m[r * c + j]) mx = std::max(mx, x.ptr()[r * c + j]);
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (m[r * c + j]) z += std::exp(x.ptr()[r * c + j] - mx);
    y[r] = mx + std::log(z);
  }
  return a.graph().record(std::move(y), {a}, [n, c, m = std::move(m)](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& x = g.value(g.parent(self, 0));
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        if (m[r * c + j]) ga->ptr()[r * c + j] += gy[r] * std::exp(x.ptr()[r * c + j] - y[r]);
      }
    }
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  return a.graph().record(Tensor::scalar(s), {a}, [](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const double gy = g.grad_buffer(self)[0];
    for (double& v : ga->data()) v += gy;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_last(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "sum_last");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  Tensor y(Shape{n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y[i] += x.at(i, j);
  return a.graph().record(std::move(y), {a}, [n, m](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga->at(i, j) += gy[i];
  });
}

Var sum_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "sum_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  Tensor y(Shape{m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y[j] += x.at(i, j);
  return a.graph().record(std::move(y), {a}, [n, m](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga->at(i, j) += gy[j];
  });
}

Var broadcast_rows(Var v, std::size_t n) {
  const Tensor& x = v.value();
  if (x.rank() != 1) throw ShapeError("broadcast_rows: expected a vector, got " + to_string(x.shape()));
  const std::size_t m = x.size();
  Tensor y(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(x.ptr(), m, y.ptr() + i * m);
  return v.graph().record(std::move(y), {v}, [n, m](Graph& g, std::size_t self) {
    Tensor* gv = parent_grad(g, self, 0);
    if (gv == nullptr) return;
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) (*gv)[j] += gy.at(i, j);
  });
}

Var gather_rows(Var a, std::span<const std::int64_t> idx) {
  const Tensor& x = a.value();
  require_matrix(x, "gather_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<std::int64_t> rows(idx.begin(), idx.end());
  Tensor y(Shape{rows.size(), m});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0) continue;
    if (static_cast<std::size_t>(rows[i]) >= n) {
      throw ShapeError("gather_rows: index " + std::to_string(rows[i]) + " >= " + std::to_string(n));
    }
    std::copy_n(x.ptr() + static_cast<std::size_t>(rows[i]) * m, m, y.ptr() + i * m);
  }
  return a.graph().record(std::move(y), {a}, [m, rows = std::move(rows)](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0) continue;
      double* dst = ga->ptr() + static_cast<std::size_t>(rows[i]) * m;
      const double* src = gy.ptr() + i * m;
      for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
    }
  });
}

Var scatter_mean(Var a, std::span<const std::size_t> idx, std::size_t buckets) {
  const Tensor& x = a.value();
  require_matrix(x, "scatter_mean");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (idx.size() != n) throw ShapeError("scatter_mean: one bucket index per row required");
  std::vector<std::size_t> bucket(idx.begin(), idx.end());
  std::vector<double> inv_count(buckets, 0.0);
  for (std::size_t b : bucket) {
    if (b >= buckets) throw ShapeError("scatter_mean: bucket index out of range");
    inv_count[b] += 1.0;
  }
  for (double& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;
  Tensor y(Shape{buckets, m});
  for (std::size_t i = 0; i < n; ++i) {
    const double w = inv_count[bucket[i]];
    double* dst = y.ptr() + bucket[i] * m;
    const double* src = x.ptr() + i * m;
    for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
  }
  return a.graph().record(
      std::move(y), {a},
      [m, bucket = std::move(bucket), inv_count = std::move(inv_count)](Graph& g, std::size_t self) {
        Tensor* ga = parent_grad(g, self, 0);
        if (ga == nullptr) return;
        const Tensor& gy = g.grad_buffer(self);
        for (std::size_t i = 0; i < bucket.size(); ++i) {
          const double w = inv_count[bucket[i]];
          const double* src = gy.ptr() + bucket[i] * m;
          double* dst = ga->ptr() + i * m;
          for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
        }
      });
}

Var neighbor_mean(Var a, std::span<const std::size_t> offsets,
                  std::span<const std::size_t> neighbors) {
  const Tensor& x = a.value();
  require_matrix(x, "neighbor_mean");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (offsets.size() != n + 1 || offsets.back() != neighbors.size()) {
    throw ShapeError("neighbor_mean: adjacency does not match row count");
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  std::vector<std::size_t> nbr(neighbors.begin(), neighbors.end());
  for (std::size_t v : nbr) {
    if (v >= n) throw ShapeError("neighbor_mean: neighbor index out of range");
  }
  Tensor y(Shape{n, m});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t cnt = off[r + 1] - off[r];
    if (cnt == 0) continue;
    const double w = 1.0 / static_cast<double>(cnt);
    double* dst = y.ptr() + r * m;
    for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
      const double* src = x.ptr() + nbr[k] * m;
      for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
    }
  }
  return a.graph().record(
      std::move(y), {a}, [n, m, off = std::move(off), nbr = std::move(nbr)](Graph& g, std::size_t self) {
        Tensor* ga = parent_grad(g, self, 0);
        if (ga == nullptr) return;
        const Tensor& gy = g.grad_buffer(self);
        for (std::size_t r = 0; r < n; ++r) {
          const std::size_t cnt = off[r + 1] - off[r];
          if (cnt == 0) continue;
          const double w = 1.0 / static_cast<double>(cnt);
          const double* src = gy.ptr() + r * m;
          for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
            double* dst = ga->ptr() + nbr[k] * m;
            for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
          }
        }
      });
}

Var concat_cols(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  require_matrix(x, "concat_cols");
  require_matrix(z, "concat_cols");
  const std::size_t n = x.shape()[0], p = x.shape()[1], q = z.shape()[1];
  if (z.shape()[0] != n) {
    throw ShapeError("concat_cols: row counts " + std::to_string(n) + " and " +
                     std::to_string(z.shape()[0]) + " differ");
  }
  Tensor y(Shape{n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.ptr() + i * p, p, y.ptr() + i * (p + q));
    std::copy_n(z.ptr() + i * q, q, y.ptr() + i * (p + q) + p);
  }
  return a.graph().record(std::move(y), {a, b}, [n, p, q](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad_buffer(self);
    if (Tensor* ga = parent_grad(g, self, 0)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) ga->at(i, j) += gy.ptr()[i * (p + q) + j];
    }
    if (Tensor* gb = parent_grad(g, self, 1)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) gb->at(i, j) += gy.ptr()[i * (p + q) + p + j];
    }
  });
}

Var concat_rows(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  require_matrix(x, "concat_rows");
  require_matrix(z, "concat_rows");
  const std::size_t n1 = x.shape()[0], n2 = z.shape()[0], m = x.shape()[1];
  if (z.shape()[1] != m) throw ShapeError("concat_rows: column counts differ");
  Tensor y(Shape{n1 + n2, m});
  std::copy_n(x.ptr(), n1 * m, y.ptr());
  std::copy_n(z.ptr(), n2 * m, y.ptr() + n1 * m);
  return a.graph().record(std::move(y), {a, b}, [n1, n2, m](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad_buffer(self);
    if (Tensor* ga = parent_grad(g, self, 0)) {
      for (std::size_t i = 0; i < n1 * m; ++i) (*ga)[i] += gy[i];
    }
    if (Tensor* gb = parent_grad(g, self, 1)) {
      for (std::size_t i = 0; i < n2 * m; ++i) (*gb)[i] += gy[n1 * m + i];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (begin > end || end > n) throw ShapeError("slice_rows: range out of bounds");
  Tensor y(Shape{end - begin, m});
  std::copy_n(x.ptr() + begin * m, (end - begin) * m, y.ptr());
  return a.graph().record(std::move(y), {a}, [begin, end, m](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t i = 0; i < (end - begin) * m; ++i) (*ga)[begin * m + i] += gy[i];
  });
}

Var select_cols(Var a, std::span<const std::size_t> cols) {
  const Tensor& x = a.value();
  require_matrix(x, "select_cols");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  if (cols.size() != n) throw ShapeError("select_cols: one column per row required");
  std::vector<std::size_t> pick(cols.begin(), cols.end());
  Tensor y(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    if (pick[i] >= c) throw ShapeError("select_cols: column out of range");
    y[i] = x.at(i, pick[i]);
  }
  return a.graph().record(std::move(y), {a}, [pick = std::move(pick)](Graph& g, std::size_t self) {
    Tensor* ga = parent_grad(g, self, 0);
    if (ga == nullptr) return;
    const Tensor& gy = g.grad_buffer(self);
    for (std::size_t i = 0; i < pick.size(); ++i) ga->at(i, pick[i]) += gy[i];
  });
}

Var l1_distance(Var a, Var b) {
  require_matrix(a.value(), "l1_distance");
  return sum_last(abs(sub(a, b)));
}

Var sq_l2_distance(Var a, Var b) {
  require_matrix(a.value(), "sq_l2_distance");
  return sum_last(square(sub(a, b)));
}

Var l2_normalize_rows(Var a, double eps) {
  const Tensor& x = a.value();
  require_matrix(x, "l2_normalize_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<double> denom(n);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += x.at(i, j) * x.at(i, j);
    denom[i] = std::sqrt(s);
    if (denom[i] <= eps) continue;
    for (std::size_t j = 0; j < m; ++j) y.at(i, j) = x.at(i, j) / denom[i];
  }
  return a.graph().record(
      std::move(y), {a}, [n, m, eps, denom = std::move(denom)](Graph& g, std::size_t self) {
        Tensor* ga = parent_grad(g, self, 0);
        if (ga == nullptr) return;
        const Tensor& y = g.value(self);
        const Tensor& gy = g.grad_buffer(self);
        for (std::size_t i = 0; i < n; ++i) {
          if (denom[i] <= eps) continue;
          double dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) dot += y.at(i, j) * gy.at(i, j);
          for (std::size_t j = 0; j < m; ++j) {
            ga->at(i, j) += (gy.at(i, j) - y.at(i, j) * dot) / denom[i];
          }
        }
      });
}

}  // namespace lidarnl::ad
