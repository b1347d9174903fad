#pragma once

// Minimal reverse-mode differentiable arrays. Every op records itself on the
// graph when any input requires grad (and recording is enabled on the
// calling thread); backward() then visits the recorded nodes once each in
// reverse execution order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "polytx/rng.hpp"

namespace polytx::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

inline constexpr int kIgnoreIndex = -100;
inline constexpr double kLayerNormEps = 1e-12;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty means absent
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // empty for leaves
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Leaf copy of the values, off the graph.
  Tensor detach() const;
  /// Deep copy preserving requires_grad, without graph history or grad.
  Tensor clone() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// The nodes reachable from a root that take part in differentiation, in
/// execution (topological) order.
template <typename T>
class ComputeGraph {
 public:
  static ComputeGraph trace(const Tensor<T>& root);
  const std::vector<Node<T>*>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<Node<T>*> nodes_;
};

/// Accumulates d(loss)/d(leaf) into every requires-grad leaf. Repeated calls
/// without zero_grad() accumulate.
template <typename T>
void backward(const Tensor<T>& loss);

// ---- primitive ops -------------------------------------------------------

/// (M,K)x(K,N), (B,M,K)x(K,N) and batched (B,M,K)x(B,K,N).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise add; b may also match a trailing suffix of a's shape (bias).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Rows of a (V,H) table -> (n,H).
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids);

/// Normalizes over the last axis, then applies gain and shift.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                     double eps = kLayerNormEps);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Inverted dropout. Identity when !train or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng);

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, std::uint64_t seed) {
  Rng rng(seed);
  return dropout(x, p, train, rng);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Swaps two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis0, std::size_t axis1);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Mean negative log-softmax over rows whose target is not kIgnoreIndex.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

/// Mean absolute error over entries with observed[i] != 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target, std::span<const std::uint8_t> observed);

}  // namespace polytx::ad
