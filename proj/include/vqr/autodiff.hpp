#pragma once

// Minimal define-by-run reverse-mode differentiation over dense row-major
// arrays. Every op records its parents and a backward rule on the node it
// returns; `backward(loss)` orders the reachable graph into a Tape and
// replays it in reverse. The engine is instantiated for float (training and
// attacks) and double (gradient checking).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vqr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::uint64_t order = 0;  // creation sequence; parents always have smaller values
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  /// Grad buffer, zero-allocated on first use.
  std::span<T> grad_buffer();
};

/// Handle to a graph node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<T> values);
  static Var parameter(Shape shape, std::vector<T> values);
  static Var zeros(Shape shape, bool requires_grad = false);
  static Var scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  /// Writable view of a leaf's values (optimizer updates, attack iterates).
  std::span<T> mutable_values();
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; all zeros if nothing has flowed in yet.
  std::span<const T> grad() const;
  void zero_grad();

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Reverse-topological schedule of the nodes reachable from a root that take
/// part in differentiation.
template <typename T>
class Tape {
 public:
  static Tape record(const Var<T>& root);

  std::span<Node<T>* const> nodes() const { return nodes_; }
  /// Seeds d(root)/d(root) = 1 and runs every backward rule once, last node
  /// first. Intermediate grads are reset first; leaf grads accumulate.
  void run_backward();

 private:
  std::vector<Node<T>*> nodes_;  // ascending creation order
  Var<T> root_;
};

template <typename T>
void backward(const Var<T>& loss);

// ---------------------------------------------------------------- elementwise

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
/// x[..., D] + v[D], the vector broadcast over every leading index.
template <typename T> Var<T> broadcast_add(const Var<T>& x, const Var<T>& v);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);

// ---------------------------------------------------------------- structure

/// a[N×K] · b[K×M].
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
/// 2-D transpose.
template <typename T> Var<T> transpose(const Var<T>& x);
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
/// out.flat[i] = x.flat[index[i]]; backward scatter-adds.
template <typename T>
Var<T> gather(const Var<T>& x, std::span<const std::size_t> index, Shape out_shape);
/// Rows of table[K×D] selected by `rows`; result is [rows.size() × D].
template <typename T>
Var<T> take_rows(const Var<T>& table, std::span<const std::int32_t> rows);

// ---------------------------------------------------------------- last-axis

template <typename T> Var<T> softmax(const Var<T>& x);
/// Normalizes each last-axis row to zero mean and unit variance.
template <typename T> Var<T> layer_norm(const Var<T>& x, T eps = T(1e-5));
/// Σ over the last axis of x². Drops that axis.
template <typename T> Var<T> sq_norm_last(const Var<T>& x);
/// Σ over the last axis. Drops that axis.
template <typename T> Var<T> sum_last(const Var<T>& x);

// ---------------------------------------------------------------- reductions

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Per-row softmax cross-entropy of logits[B×C] against integer labels → [B].
template <typename T>
Var<T> cross_entropy_rows(const Var<T>& logits, std::span<const std::int32_t> labels);
/// Mean of cross_entropy_rows.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const std::int32_t> labels);
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);

// ---------------------------------------------------------------- gradient flow

/// Same values, no parents.
template <typename T> Var<T> stop_gradient(const Var<T>& x);
/// Forward yields `forward_values` (shape of x); backward passes the incoming
/// gradient to x unchanged.
template <typename T>
Var<T> straight_through(const Var<T>& x, std::vector<T> forward_values);

/// Copies values (and nothing else) into a fresh leaf of another precision.
template <typename To, typename From>
Var<To> cast(const Var<From>& x, bool requires_grad);

}  // namespace vqr::ad
