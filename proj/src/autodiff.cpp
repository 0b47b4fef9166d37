#include "vqr/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "vqr/error.hpp"
#include "vqr/kernels.hpp"

namespace vqr::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

namespace {

std::atomic<std::uint64_t> next_order{1};

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                   shape_string(b));
}

[[noreturn]] void shape_fail(const char* op, const std::string& what, const Shape& a) {
  throw ShapeError(std::string(op) + ": " + what + " (shape " + shape_string(a) + ")");
}

template <typename T>
void check_finite(const char* op, std::span<const T> values) {
  for (T v : values)
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
}

template <typename T>
Var<T> make_node(const char* op, Shape shape, std::vector<T> value,
                 std::vector<std::shared_ptr<Node<T>>> parents,
                 std::function<void(Node<T>&)> backward_fn) {
  check_finite<T>(op, value);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->order = next_order.fetch_add(1);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const auto& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void require_same(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

template <typename T>
void require_rank(const char* op, const Var<T>& x, std::size_t rank) {
  if (x.rank() != rank)
    shape_fail(op, "expected rank " + std::to_string(rank), x.shape());
}

template <typename T>
void require_nonscalar(const char* op, const Var<T>& x) {
  if (x.rank() == 0) shape_fail(op, "needs at least one axis", x.shape());
}

// Applies f elementwise with local derivative df(x, y) on the way back.
template <typename T, typename F, typename DF>
Var<T> unary(const char* op, const Var<T>& x, F f, DF df) {
  std::vector<T> out(x.size());
  const auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_node<T>(op, x.shape(), std::move(out), {x.ptr()}, [df](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

}  // namespace

// ------------------------------------------------------------------ Node/Var

template <typename T>
std::span<T> Node<T>::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), T(0));
  return grad;
}

template <typename T>
Var<T> Var<T>::constant(Shape shape, std::vector<T> values) {
  if (numel(shape) != values.size())
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                     shape_string(shape));
  check_finite<T>("constant", values);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->order = next_order.fetch_add(1);
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> Var<T>::parameter(Shape shape, std::vector<T> values) {
  Var v = constant(std::move(shape), std::move(values));
  v.node_->requires_grad = true;
  return v;
}

template <typename T>
Var<T> Var<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel(shape);
  Var v = constant(std::move(shape), std::vector<T>(n, T(0)));
  v.node_->requires_grad = requires_grad;
  return v;
}

template <typename T>
Var<T> Var<T>::scalar(T value) {
  return constant({}, {value});
}

template <typename T>
std::span<T> Var<T>::mutable_values() {
  if (!node_->is_leaf()) throw Error("mutable_values: only leaves may be written in place");
  return node_->value;
}

template <typename T>
T Var<T>::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
std::span<const T> Var<T>::grad() const {
  return node_->grad_buffer();
}

template <typename T>
void Var<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

// ------------------------------------------------------------------ Tape

template <typename T>
Tape<T> Tape<T>::record(const Var<T>& root) {
  Tape tape;
  tape.root_ = root;
  if (!root.requires_grad()) return tape;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{&root.node()};
  seen.insert(&root.node());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    tape.nodes_.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->order < b->order; });
  return tape;
}

template <typename T>
void Tape<T>::run_backward() {
  if (nodes_.empty()) return;
  for (Node<T>* n : nodes_)
    if (!n->is_leaf()) std::fill(n->grad.begin(), n->grad.end(), T(0));
  Node<T>& root = root_.node();
  root.grad_buffer()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>* n = *it;
    if (n->is_leaf()) continue;
    n->grad_buffer();
    n->backward_fn(*n);
  }
  for (Node<T>* n : nodes_) {
    if (!n->is_leaf()) continue;
    for (T g : n->grad)
      if (!std::isfinite(g)) throw NumericError("backward: non-finite gradient on a leaf");
  }
}

template <typename T>
void backward(const Var<T>& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  Tape<T>::record(loss).run_backward();
}

// ------------------------------------------------------------------ elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_node<T>("add", a.shape(), std::move(out), {a.ptr(), b.ptr()}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_node<T>("sub", a.shape(), std::move(out), {a.ptr(), b.ptr()}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_node<T>("mul", a.shape(), std::move(out), {a.ptr(), b.ptr()}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
  return make_node<T>("scale", a.shape(), std::move(out), {a.ptr()}, [factor](Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Var<T> broadcast_add(const Var<T>& x, const Var<T>& v) {
  require_nonscalar("broadcast_add", x);
  if (v.rank() != 1 || v.dim(0) != x.shape().back()) shape_fail("broadcast_add", x.shape(), v.shape());
  const std::size_t width = v.size();
  const std::size_t rows = x.size() / width;
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j)
      out[r * width + j] = x.values()[r * width + j] + v.values()[j];
  return make_node<T>("broadcast_add", x.shape(), std::move(out), {x.ptr(), v.ptr()},
                      [rows, width](Node<T>& self) {
                        if (self.parents[0]->requires_grad) {
                          auto g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                        }
                        if (self.parents[1]->requires_grad) {
                          auto g = self.parents[1]->grad_buffer();
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < width; ++j)
                              g[j] += self.grad[r * width + j];
                        }
                      });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// ------------------------------------------------------------------ structure

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) shape_fail("matmul", a.shape(), b.shape());
  std::vector<T> out(n * m);
  kernels::matmul<T>(a.values(), b.values(), out, n, k, m);
  return make_node<T>("matmul", {n, m}, std::move(out), {a.ptr(), b.ptr()},
                      [n, k, m](Node<T>& self) {
                        auto& pa = *self.parents[0];
                        auto& pb = *self.parents[1];
                        if (pa.requires_grad) {
                          std::vector<T> tmp(n * k);
                          kernels::matmul_nt<T>(self.grad, pb.value, tmp, n, m, k);
                          auto g = pa.grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += tmp[i];
                        }
                        if (pb.requires_grad) {
                          std::vector<T> tmp(k * m);
                          kernels::matmul_tn<T>(pa.value, self.grad, tmp, n, k, m);
                          auto g = pb.grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += tmp[i];
                        }
                      });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (numel(shape) != x.size()) shape_fail("reshape", x.shape(), shape);
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_node<T>("reshape", std::move(shape), std::move(out), {x.ptr()}, [](Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.values()[i * c + j];
  return make_node<T>("transpose", {c, r}, std::move(out), {x.ptr()}, [r, c](Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank()) shape_fail("slice", "axis " + std::to_string(axis) + " out of range", x.shape());
  if (begin >= end || end > x.dim(axis))
    shape_fail("slice",
               "range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                   std::to_string(axis),
               x.shape());
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t full = s[axis], part = end - begin;
  Shape out_shape = s;
  out_shape[axis] = part;
  std::vector<T> out(outer * part * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.values().begin() + (o * full + begin) * inner, part * inner,
                out.begin() + o * part * inner);
  return make_node<T>("slice", std::move(out_shape), std::move(out), {x.ptr()},
                      [outer, inner, full, part, begin](Node<T>& self) {
                        auto g = self.parents[0]->grad_buffer();
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t i = 0; i < part * inner; ++i)
                            g[(o * full + begin) * inner + i] += self.grad[o * part * inner + i];
                      });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) shape_fail("concat", "axis " + std::to_string(axis) + " out of range", s0);
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = s0;
    if (a.size() != b.size()) shape_fail("concat", s0, p.shape());
    a[axis] = b[axis] = 0;
    if (a != b) shape_fail("concat", s0, p.shape());
    widths.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::size_t offset = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = widths[k];
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(parts[k].values().begin() + o * w * inner, w * inner,
                  out.begin() + (o * total + offset) * inner);
    offset += w;
    parents.push_back(parts[k].ptr());
  }
  return make_node<T>("concat", std::move(out_shape), std::move(out), std::move(parents),
                      [outer, inner, total, widths](Node<T>& self) {
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < widths.size(); ++k) {
                          const std::size_t w = widths[k];
                          if (self.parents[k]->requires_grad) {
                            auto g = self.parents[k]->grad_buffer();
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t i = 0; i < w * inner; ++i)
                                g[o * w * inner + i] += self.grad[(o * total + off) * inner + i];
                          }
                          off += w;
                        }
                      });
}

template <typename T>
Var<T> gather(const Var<T>& x, std::span<const std::size_t> index, Shape out_shape) {
  if (numel(out_shape) != index.size()) shape_fail("gather", "index count differs from output", out_shape);
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.size()) shape_fail("gather", "index out of range", x.shape());
    out[i] = x.values()[index[i]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_node<T>("gather", std::move(out_shape), std::move(out), {x.ptr()},
                      [idx = std::move(idx)](Node<T>& self) {
                        auto g = self.parents[0]->grad_buffer();
                        for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
                      });
}

template <typename T>
Var<T> take_rows(const Var<T>& table, std::span<const std::int32_t> rows) {
  require_rank("take_rows", table, 2);
  const std::size_t k = table.dim(0), d = table.dim(1);
  std::vector<T> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= k)
      shape_fail("take_rows", "row " + std::to_string(rows[i]) + " out of range", table.shape());
    std::copy_n(table.values().begin() + rows[i] * d, d, out.begin() + i * d);
  }
  std::vector<std::int32_t> r(rows.begin(), rows.end());
  return make_node<T>("take_rows", {rows.size(), d}, std::move(out), {table.ptr()},
                      [r = std::move(r), d](Node<T>& self) {
                        auto g = self.parents[0]->grad_buffer();
                        for (std::size_t i = 0; i < r.size(); ++i)
                          for (std::size_t j = 0; j < d; ++j)
                            g[static_cast<std::size_t>(r[i]) * d + j] += self.grad[i * d + j];
                      });
}

// ------------------------------------------------------------------ last-axis

template <typename T>
Var<T> softmax(const Var<T>& x) {
  require_nonscalar("softmax", x);
  const std::size_t w = x.shape().back(), rows = x.size() / w;
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.values().data() + r * w;
    T* o = out.data() + r * w;
    const T mx = *std::max_element(in, in + w);
    T z = 0;
    for (std::size_t j = 0; j < w; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < w; ++j) o[j] /= z;
  }
  return make_node<T>("softmax", x.shape(), std::move(out), {x.ptr()}, [rows, w](Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * w;
      const T* gy = self.grad.data() + r * w;
      T dot = 0;
      for (std::size_t j = 0; j < w; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < w; ++j) g[r * w + j] += y[j] * (gy[j] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, T eps) {
  require_nonscalar("layer_norm", x);
  const std::size_t w = x.shape().back(), rows = x.size() / w;
  std::vector<T> out(x.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.values().data() + r * w;
    T mu = 0;
    for (std::size_t j = 0; j < w; ++j) mu += in[j];
    mu /= T(w);
    T var = 0;
    for (std::size_t j = 0; j < w; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= T(w);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = (in[j] - mu) * inv_std[r];
  }
  return make_node<T>("layer_norm", x.shape(), std::move(out), {x.ptr()},
                      [rows, w, inv_std = std::move(inv_std)](Node<T>& self) {
                        auto g = self.parents[0]->grad_buffer();
                        for (std::size_t r = 0; r < rows; ++r) {
                          const T* y = self.value.data() + r * w;
                          const T* gy = self.grad.data() + r * w;
                          T mean_g = 0, mean_gy = 0;
                          for (std::size_t j = 0; j < w; ++j) {
                            mean_g += gy[j];
                            mean_gy += gy[j] * y[j];
                          }
                          mean_g /= T(w);
                          mean_gy /= T(w);
                          for (std::size_t j = 0; j < w; ++j)
                            g[r * w + j] += inv_std[r] * (gy[j] - mean_g - y[j] * mean_gy);
                        }
                      });
}

template <typename T>
Var<T> sq_norm_last(const Var<T>& x) {
  require_nonscalar("sq_norm_last", x);
  const std::size_t w = x.shape().back(), rows = x.size() / w;
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t j = 0; j < w; ++j) acc += x.values()[r * w + j] * x.values()[r * w + j];
    out[r] = acc;
  }
  return make_node<T>("sq_norm_last", drop_last(x.shape()), std::move(out), {x.ptr()},
                      [rows, w](Node<T>& self) {
                        auto& p = *self.parents[0];
                        auto g = p.grad_buffer();
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t j = 0; j < w; ++j)
                            g[r * w + j] += T(2) * p.value[r * w + j] * self.grad[r];
                      });
}

template <typename T>
Var<T> sum_last(const Var<T>& x) {
  require_nonscalar("sum_last", x);
  const std::size_t w = x.shape().back(), rows = x.size() / w;
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t j = 0; j < w; ++j) acc += x.values()[r * w + j];
    out[r] = acc;
  }
  return make_node<T>("sum_last", drop_last(x.shape()), std::move(out), {x.ptr()},
                      [rows, w](Node<T>& self) {
                        auto g = self.parents[0]->grad_buffer();
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t j = 0; j < w; ++j) g[r * w + j] += self.grad[r];
                      });
}

// ------------------------------------------------------------------ reductions

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.values()) acc += v;
  return make_node<T>("sum", {}, {acc}, {x.ptr()}, [](Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  T acc = 0;
  for (T v : x.values()) acc += v;
  const T inv = T(1) / T(x.size());
  return make_node<T>("mean", {}, {acc * inv}, {x.ptr()}, [inv](Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0] * inv;
  });
}

template <typename T>
Var<T> cross_entropy_rows(const Var<T>& logits, std::span<const std::int32_t> labels) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b)
    shape_fail("cross_entropy", "expected " + std::to_string(b) + " labels, got " +
                                    std::to_string(labels.size()),
               logits.shape());
  std::vector<T> out(b);
  std::vector<T> probs(b * c);
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c)
      shape_fail("cross_entropy", "label " + std::to_string(labels[r]) + " out of range",
                 logits.shape());
    const T* z = logits.values().data() + r * c;
    const T mx = *std::max_element(z, z + c);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += (probs[r * c + j] = std::exp(z[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= s;
    out[r] = std::log(s) + mx - z[labels[r]];
  }
  std::vector<std::int32_t> y(labels.begin(), labels.end());
  return make_node<T>("cross_entropy", {b}, std::move(out), {logits.ptr()},
                      [b, c, y = std::move(y), probs = std::move(probs)](Node<T>& self) {
                        auto g = self.parents[0]->grad_buffer();
                        for (std::size_t r = 0; r < b; ++r)
                          for (std::size_t j = 0; j < c; ++j) {
                            const T onehot = static_cast<std::size_t>(y[r]) == j ? T(1) : T(0);
                            g[r * c + j] += self.grad[r] * (probs[r * c + j] - onehot);
                          }
                      });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const std::int32_t> labels) {
  return mean(cross_entropy_rows(logits, labels));
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same("mse", a, b);
  if (a.size() == 0) throw ShapeError("mse: empty tensor");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a.values()[i] - b.values()[i];
    acc += d * d;
  }
  const T inv = T(1) / T(a.size());
  return make_node<T>("mse", {}, {acc * inv}, {a.ptr(), b.ptr()}, [inv](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const T s = T(2) * inv * self.grad[0];
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * (pa.value[i] - pb.value[i]);
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= s * (pa.value[i] - pb.value[i]);
    }
  });
}

// ------------------------------------------------------------------ gradient flow

template <typename T>
Var<T> stop_gradient(const Var<T>& x) {
  return Var<T>::constant(x.shape(), std::vector<T>(x.values().begin(), x.values().end()));
}

template <typename T>
Var<T> straight_through(const Var<T>& x, std::vector<T> forward_values) {
  if (forward_values.size() != x.size())
    shape_fail("straight_through", "forward values do not match input", x.shape());
  return make_node<T>("straight_through", x.shape(), std::move(forward_values), {x.ptr()},
                      [](Node<T>& self) {
                        auto g = self.parents[0]->grad_buffer();
                        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                      });
}

template <typename To, typename From>
Var<To> cast(const Var<From>& x, bool requires_grad) {
  std::vector<To> out(x.values().begin(), x.values().end());
  return requires_grad ? Var<To>::parameter(x.shape(), std::move(out))
                       : Var<To>::constant(x.shape(), std::move(out));
}

// ------------------------------------------------------------------ instantiation

#define VQR_INSTANTIATE_AD(T)                                                               \
  template struct Node<T>;                                                                  \
  template class Var<T>;                                                                    \
  template class Tape<T>;                                                                   \
  template void backward<T>(const Var<T>&);                                                 \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> scale<T>(const Var<T>&, T);                                               \
  template Var<T> broadcast_add<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> relu<T>(const Var<T>&);                                                   \
  template Var<T> tanh<T>(const Var<T>&);                                                   \
  template Var<T> sigmoid<T>(const Var<T>&);                                                \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                         \
  template Var<T> transpose<T>(const Var<T>&);                                              \
  template Var<T> slice<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);           \
  template Var<T> concat<T>(const std::vector<Var<T>>&, std::size_t);                       \
  template Var<T> gather<T>(const Var<T>&, std::span<const std::size_t>, Shape);            \
  template Var<T> take_rows<T>(const Var<T>&, std::span<const std::int32_t>);               \
  template Var<T> softmax<T>(const Var<T>&);                                                \
  template Var<T> layer_norm<T>(const Var<T>&, T);                                          \
  template Var<T> sq_norm_last<T>(const Var<T>&);                                           \
  template Var<T> sum_last<T>(const Var<T>&);                                               \
  template Var<T> sum<T>(const Var<T>&);                                                    \
  template Var<T> mean<T>(const Var<T>&);                                                   \
  template Var<T> cross_entropy_rows<T>(const Var<T>&, std::span<const std::int32_t>);      \
  template Var<T> cross_entropy<T>(const Var<T>&, std::span<const std::int32_t>);           \
  template Var<T> mse<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> stop_gradient<T>(const Var<T>&);                                          \
  template Var<T> straight_through<T>(const Var<T>&, std::vector<T>);

VQR_INSTANTIATE_AD(float)
VQR_INSTANTIATE_AD(double)

template Var<float> cast<float, float>(const Var<float>&, bool);
template Var<float> cast<float, double>(const Var<double>&, bool);
template Var<double> cast<double, float>(const Var<float>&, bool);
template Var<double> cast<double, double>(const Var<double>&, bool);

#undef VQR_INSTANTIATE_AD

}  // namespace vqr::ad
