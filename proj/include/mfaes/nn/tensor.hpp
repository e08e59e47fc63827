#pragma once

// Minimal reverse-mode automatic differentiation over dense real tensors.
//
// Every op builds a node holding its value and a closure that pushes the
// node's gradient into its parents. Ops are coarse (a whole GRU layer is one
// node) so graphs stay small even for long sequences. Complex quantities are
// carried as separate real and imaginary columns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace mfaes::nn {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor constant(Shape shape, std::vector<double> values) { return make(std::move(shape), std::move(values), false); }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = nn::numel(shape);
    return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor parameter(Shape shape, std::vector<double> values) { return make(std::move(shape), std::move(values), true); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& value() const { return node_->value; }
  double item() const {
    if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  double operator[](std::size_t i) const { return node_->value[i]; }

  /// Gradient after backward(); zeros if nothing reached this tensor.
  const std::vector<double>& grad() const { return node_->grad_buffer(); }
  std::vector<double>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  const NodePtr& node() const { return node_; }

 private:
  static Tensor make(Shape shape, std::vector<double> values, bool requires_grad) {
    if (nn::numel(shape) != values.size())
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  NodePtr node_;
};

/// Builds an op result. The backward closure is kept only if some input needs
/// a gradient.
inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& t : inputs) n->requires_grad = n->requires_grad || t.requires_grad();
  if (n->requires_grad) {
    for (const auto& t : inputs) n->parents.push_back(t.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

/// Runs reverse accumulation from a scalar. Gradients add into every reachable
/// tensor that requires one; call zero_grad() on parameters between steps.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_map<Node*, int> state;  // 1 = on stack, 2 = done
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  state[loss.node().get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (!p->requires_grad) continue;
      auto it = state.find(p);
      if (it == state.end()) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      } else if (it->second == 1) {
        throw std::logic_error("backward: cycle in graph");
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Eigen views

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline ConstMatMap as_mat(const std::vector<double>& v, int rows, int cols) { return {v.data(), rows, cols}; }
inline MatMap as_mat(std::vector<double>& v, int rows, int cols) { return {v.data(), rows, cols}; }

inline void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("sub: shape mismatch");
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return make_op(a.shape(), std::move(v), {a, b}, [ra, rb](Node& self) {
    std::size_t idx = 0;
    for (bool r : {ra, rb}) {
      if (r) {
        auto& p = self.parents[idx];
        auto& g = p->grad_buffer();
        const double sign = idx == 0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
      }
      ++idx;
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * a[i];
  return make_op(a.shape(), std::move(v), {a}, [c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  return make_op({1}, {s}, {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (double& x : g) x += self.grad[0];
  });
}

inline double sigmoid_scalar(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sigmoid_scalar(a[i]);
  return make_op(a.shape(), std::move(v), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
  });
}

inline Tensor tanh(const Tensor& a) {
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a[i]);
  return make_op(a.shape(), std::move(v), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
  });
}

/// Parametric rectifier with one learnable slope.
inline Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.numel() != 1) throw std::invalid_argument("prelu: slope must be a scalar");
  const double a = slope[0];
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] > 0.0 ? x[i] : a * x[i];
  return make_op(x.shape(), std::move(v), {x, slope}, [](Node& self) {
    Node& px = *self.parents[0];
    Node& ps = *self.parents[1];
    const double a = ps.value[0];
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += px.value[i] > 0.0 ? self.grad[i] : a * self.grad[i];
    }
    if (ps.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < px.value.size(); ++i)
        if (!(px.value[i] > 0.0)) acc += self.grad[i] * px.value[i];
      ps.grad_buffer()[0] += acc;
    }
  });
}

// ---------------------------------------------------------------------------
// Column manipulation on [T x C] tensors

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  if (a.dim(0) != b.dim(0)) throw std::invalid_argument("concat_cols: row count mismatch");
  const int T = a.dim(0), A = a.dim(1), B = b.dim(1);
  std::vector<double> v(static_cast<std::size_t>(T) * (A + B));
  for (int t = 0; t < T; ++t) {
    std::copy_n(a.value().data() + static_cast<std::size_t>(t) * A, A, v.data() + static_cast<std::size_t>(t) * (A + B));
    std::copy_n(b.value().data() + static_cast<std::size_t>(t) * B, B, v.data() + static_cast<std::size_t>(t) * (A + B) + A);
  }
  return make_op({T, A + B}, std::move(v), {a, b}, [T, A, B](Node& self) {
    for (int which = 0; which < 2; ++which) {
      Node& p = *self.parents[which];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      const int w = which == 0 ? A : B, off = which == 0 ? 0 : A;
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < w; ++c) g[static_cast<std::size_t>(t) * w + c] += self.grad[static_cast<std::size_t>(t) * (A + B) + off + c];
    }
  });
}

inline Tensor slice_cols(const Tensor& a, int begin, int count) {
  require_2d(a, "slice_cols");
  const int T = a.dim(0), C = a.dim(1);
  if (begin < 0 || count < 0 || begin + count > C) throw std::invalid_argument("slice_cols: range out of bounds");
  std::vector<double> v(static_cast<std::size_t>(T) * count);
  for (int t = 0; t < T; ++t)
    std::copy_n(a.value().data() + static_cast<std::size_t>(t) * C + begin, count, v.data() + static_cast<std::size_t>(t) * count);
  return make_op({T, count}, std::move(v), {a}, [T, C, begin, count](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < count; ++c) g[static_cast<std::size_t>(t) * C + begin + c] += self.grad[static_cast<std::size_t>(t) * count + c];
  });
}

/// First `rows` rows of a [T x C] tensor.
inline Tensor slice_rows(const Tensor& a, int rows) {
  require_2d(a, "slice_rows");
  const int C = a.dim(1);
  if (rows < 0 || rows > a.dim(0)) throw std::invalid_argument("slice_rows: range out of bounds");
  std::vector<double> v(a.value().begin(), a.value().begin() + static_cast<std::ptrdiff_t>(rows) * C);
  return make_op({rows, C}, std::move(v), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace mfaes::nn
