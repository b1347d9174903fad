#include "polytx/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "polytx/error.hpp"

namespace polytx::ad {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool g_grad_enabled = true;

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const MatR<T>>;
template <typename T>
using MMap = Eigen::Map<MatR<T>>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  fail(ErrorCode::ShapeMismatch, std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<const Tensor<T>*> inputs, const char* op,
                      std::function<void(Node<T>&)> bw) {
  if (numel(shape) != data.size()) {
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": result shape " + shape_str(shape) + " holds " +
                                       std::to_string(numel(shape)) + " values, got " + std::to_string(data.size()));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  node->op = op;
  bool track = false;
  if (g_grad_enabled) {
    for (const auto* in : inputs) track = track || in->requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->parents.push_back(in->node_ptr());
    node->backward = std::move(bw);
  }
  return Tensor<T>(std::move(node));
}

// Gradient buffer of a parent, allocated on first use; null when the parent
// does not take part in differentiation.
template <typename T>
T* grad_of(Node<T>& parent) {
  if (!parent.requires_grad) return nullptr;
  if (parent.grad.empty()) parent.grad.assign(parent.data.size(), T(0));
  return parent.grad.data();
}

template <typename T>
void check_defined(const Tensor<T>& t, const char* op) {
  if (!t.defined()) fail(ErrorCode::ShapeMismatch, std::string(op) + ": undefined tensor");
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) fail(ErrorCode::ShapeMismatch, "tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape.empty() || ad::numel(shape) != values.size()) {
    fail(ErrorCode::ShapeMismatch, "data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) fail(ErrorCode::NotScalar, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from(shape(), node_->data, node_->requires_grad);
}

template <typename T>
ComputeGraph<T> ComputeGraph<T>::trace(const Tensor<T>& root) {
  ComputeGraph g;
  if (!root.defined() || !root.requires_grad()) return g;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{root.node()};
  seen.insert(root.node());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    g.nodes_.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(g.nodes_.begin(), g.nodes_.end(), [](const Node<T>* a, const Node<T>* b) { return a->seq < b->seq; });
  return g;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    fail(ErrorCode::NotScalar, "backward() needs a scalar loss, got shape " + (loss.defined() ? shape_str(loss.shape()) : "()"));
  }
  if (!loss.requires_grad()) fail(ErrorCode::NotOnGraph, "backward() on a tensor that is not on the compute graph");
  const auto graph = ComputeGraph<T>::trace(loss);
  for (auto* n : graph.nodes()) {
    if (n->backward) n->grad.assign(n->data.size(), T(0));
  }
  Node<T>* root = loss.node();
  if (root->grad.empty()) root->grad.assign(1, T(0));
  root->grad[0] += T(1);
  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
  for (auto* n : nodes) {
    if (n->backward) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

// ---- matmul --------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  bool batched_b = false;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) shape_fail("matmul", sa, sb);
    out_shape = {m, n};
  } else if (sa.size() == 3 && sb.size() == 2) {
    m = sa[0] * sa[1], k = sa[2], n = sb[1];
    if (sb[0] != k) shape_fail("matmul", sa, sb);
    out_shape = {sa[0], sa[1], n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    batch = sa[0], m = sa[1], k = sa[2], n = sb[2];
    if (sb[0] != batch || sb[1] != k) shape_fail("matmul", sa, sb);
    batched_b = true;
    out_shape = {batch, m, n};
  } else {
    shape_fail("matmul", sa, sb);
  }
  std::vector<T> out(batch * m * n);
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    MMap<T>(out.data() + i * m * n, m, n).noalias() =
        CMap<T>(pa + i * m * k, m, k) * CMap<T>(pb + (batched_b ? i * k * n : 0), k, n);
  }
  return make_result<T>(std::move(out_shape), std::move(out), {&a, &b}, "matmul",
                        [batch, m, k, n, batched_b](Node<T>& o) {
                          Node<T>& na = *o.parents[0];
                          Node<T>& nb = *o.parents[1];
                          T* ga = grad_of(na);
                          T* gb = grad_of(nb);
                          for (std::size_t i = 0; i < batch; ++i) {
                            CMap<T> gout(o.grad.data() + i * m * n, m, n);
                            const std::size_t boff = batched_b ? i * k * n : 0;
                            if (ga) {
                              MMap<T>(ga + i * m * k, m, k).noalias() += gout * CMap<T>(nb.data.data() + boff, k, n).transpose();
                            }
                            if (gb) {
                              MMap<T>(gb + boff, k, n).noalias() += CMap<T>(na.data.data() + i * m * k, m, k).transpose() * gout;
                            }
                          }
                        });
}

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool suffix = sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!suffix) shape_fail("add", sa, sb);
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  std::vector<T> out(a.data().begin(), a.data().end());
  const T* pb = b.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* row = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] += pb[i];
  }
  return make_result<T>(sa, std::move(out), {&a, &b}, "add", [outer, inner](Node<T>& o) {
    if (T* ga = grad_of(*o.parents[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (T* gb = grad_of(*o.parents[1])) {
      for (std::size_t r = 0; r < outer; ++r) {
        const T* row = o.grad.data() + r * inner;
        for (std::size_t i = 0; i < inner; ++i) gb[i] += row[i];
      }
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  check_defined(a, "scale");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(a.shape(), std::move(out), {&a}, "scale", [factor](Node<T>& o) {
    if (T* ga = grad_of(*o.parents[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += factor * o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  check_defined(x, "gelu");
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = px[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, "gelu", [](Node<T>& o) {
    Node<T>& in = *o.parents[0];
    if (T* gx = grad_of(in)) {
      constexpr double kInvSqrt2Pi = 0.39894228040143267794;
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double v = in.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        gx[i] += static_cast<T>(o.grad[i] * (cdf + v * pdf));
      }
    }
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng) {
  check_defined(x, "dropout");
  if (p < 0.0 || p >= 1.0) fail(ErrorCode::BadConfig, "dropout probability must be in [0,1), got " + std::to_string(p));
  if (!train || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * mask[i];
  return make_result<T>(x.shape(), std::move(out), {&x}, "dropout", [mask = std::move(mask)](Node<T>& o) {
    if (T* gx = grad_of(*o.parents[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * mask[i];
    }
  });
}

// ---- lookup / normalization ------------------------------------------------

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids) {
  check_defined(table, "embedding_lookup");
  if (table.rank() != 2) fail(ErrorCode::ShapeMismatch, "embedding_lookup: table must be 2-D, got " + shape_str(table.shape()));
  const std::size_t rows = table.dim(0);
  const std::size_t width = table.dim(1);
  if (ids.empty()) fail(ErrorCode::ShapeMismatch, "embedding_lookup: empty id list");
  std::vector<int> idv(ids.begin(), ids.end());
  for (int id : idv) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      fail(ErrorCode::ShapeMismatch, "embedding_lookup: id " + std::to_string(id) + " outside table " + shape_str(table.shape()));
    }
  }
  std::vector<T> out(idv.size() * width);
  const T* pt = table.data().data();
  for (std::size_t r = 0; r < idv.size(); ++r) {
    std::copy_n(pt + static_cast<std::size_t>(idv[r]) * width, width, out.data() + r * width);
  }
  const std::size_t n = idv.size();
  return make_result<T>({n, width}, std::move(out), {&table}, "embedding_lookup",
                        [idv = std::move(idv), width](Node<T>& o) {
                          if (T* gt = grad_of(*o.parents[0])) {
                            for (std::size_t r = 0; r < idv.size(); ++r) {
                              T* dst = gt + static_cast<std::size_t>(idv[r]) * width;
                              const T* src = o.grad.data() + r * width;
                              for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, double eps) {
  check_defined(x, "layer_norm");
  const std::size_t width = x.shape().back();
  if (gain.shape() != Shape{width}) shape_fail("layer_norm", x.shape(), gain.shape());
  if (shift.shape() != Shape{width}) shape_fail("layer_norm", x.shape(), shift.shape());
  const std::size_t rows = x.numel() / width;
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  const T* pg = gain.data().data();
  const T* ps = shift.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * width;
    double mu = 0.0;
    for (std::size_t c = 0; c < width; ++c) mu += row[c];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<T>(is);
    for (std::size_t c = 0; c < width; ++c) {
      const T h = static_cast<T>((row[c] - mu) * is);
      xhat[r * width + c] = h;
      out[r * width + c] = pg[c] * h + ps[c];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x, &gain, &shift}, "layer_norm",
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, width](Node<T>& o) {
                          const T* gain_data = o.parents[1]->data.data();
                          T* gx = grad_of(*o.parents[0]);
                          T* gg = grad_of(*o.parents[1]);
                          T* gs = grad_of(*o.parents[2]);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* dy = o.grad.data() + r * width;
                            const T* h = xhat.data() + r * width;
                            if (gg || gs) {
                              for (std::size_t c = 0; c < width; ++c) {
                                if (gg) gg[c] += dy[c] * h[c];
                                if (gs) gs[c] += dy[c];
                              }
                            }
                            if (gx) {
                              double mean_d = 0.0, mean_dh = 0.0;
                              for (std::size_t c = 0; c < width; ++c) {
                                const double d = static_cast<double>(dy[c]) * gain_data[c];
                                mean_d += d;
                                mean_dh += d * h[c];
                              }
                              mean_d /= static_cast<double>(width);
                              mean_dh /= static_cast<double>(width);
                              for (std::size_t c = 0; c < width; ++c) {
                                const double d = static_cast<double>(dy[c]) * gain_data[c];
                                gx[r * width + c] += static_cast<T>(inv_std[r] * (d - mean_d - h[c] * mean_dh));
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  check_defined(x, "softmax");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * width;
    T* y = out.data() + r * width;
    const T mx = *std::max_element(row, row + width);
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(y, y + width, T(0));  // fully masked row
      continue;
    }
    T total = 0;
    for (std::size_t c = 0; c < width; ++c) {
      y[c] = std::exp(row[c] - mx);
      total += y[c];
    }
    for (std::size_t c = 0; c < width; ++c) y[c] /= total;
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, "softmax", [rows, width](Node<T>& o) {
    if (T* gx = grad_of(*o.parents[0])) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = o.data.data() + r * width;
        const T* dy = o.grad.data() + r * width;
        T dot = 0;
        for (std::size_t c = 0; c < width; ++c) dot += dy[c] * y[c];
        for (std::size_t c = 0; c < width; ++c) gx[r * width + c] += y[c] * (dy[c] - dot);
      }
    }
  });
}

// ---- shape ops -------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  check_defined(x, "reshape");
  if (ad::numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
  for (auto d : shape) {
    if (d == 0) shape_fail("reshape", x.shape(), shape);
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {&x}, "reshape", [](Node<T>& o) {
    if (T* gx = grad_of(*o.parents[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis0, std::size_t axis1) {
  check_defined(x, "transpose");
  const Shape& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (axis0 >= rank || axis1 >= rank) {
    fail(ErrorCode::ShapeMismatch, "transpose: axes " + std::to_string(axis0) + "," + std::to_string(axis1) +
                                       " invalid for shape " + shape_str(in_shape));
  }
  Shape out_shape = in_shape;
  std::swap(out_shape[axis0], out_shape[axis1]);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank - 1; d > 0; --d) in_strides[d - 1] = in_strides[d] * in_shape[d];
  std::vector<std::size_t> strides = in_strides;  // input stride for each output axis
  std::swap(strides[axis0], strides[axis1]);

  const std::size_t n = x.numel();
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    src[i] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offset += strides[d];
      if (idx[d] < out_shape[d]) break;
      offset -= strides[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  std::vector<T> out(n);
  const T* px = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = px[src[i]];
  return make_result<T>(std::move(out_shape), std::move(out), {&x}, "transpose", [src = std::move(src)](Node<T>& o) {
    if (T* gx = grad_of(*o.parents[0])) {
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  check_defined(x, "sum");
  T total = 0;
  for (auto v : x.data()) total += v;
  return make_result<T>({1}, {total}, {&x}, "sum", [](Node<T>& o) {
    if (T* gx = grad_of(*o.parents[0])) {
      const std::size_t n = o.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += o.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  check_defined(x, "mean");
  T total = 0;
  for (auto v : x.data()) total += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  return make_result<T>({1}, {total * inv}, {&x}, "mean", [inv](Node<T>& o) {
    if (T* gx = grad_of(*o.parents[0])) {
      const std::size_t n = o.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += o.grad[0] * inv;
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "concat: no inputs");
  for (const auto& p : parts) check_defined(p, "concat");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) fail(ErrorCode::ShapeMismatch, "concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_fail("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) shape_fail("concat", first, s);
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * inner);
  const std::size_t out_width = out_shape[axis] * inner;
  std::vector<T> out(outer * out_width);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].data().data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * widths[k], widths[k], out.data() + o * out_width + col);
    col += widths[k];
  }

  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(out_shape);
  node->data = std::move(out);
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  node->op = "concat";
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& p : parts) track = track || p.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node_ptr());
    node->backward = [widths, outer, out_width](Node<T>& o) {
      std::size_t c0 = 0;
      for (std::size_t k = 0; k < o.parents.size(); ++k) {
        if (T* g = grad_of(*o.parents[k])) {
          for (std::size_t r = 0; r < outer; ++r) {
            const T* src = o.grad.data() + r * out_width + c0;
            T* dst = g + r * widths[k];
            for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
          }
        }
        c0 += widths[k];
      }
    };
  }
  return Tensor<T>(std::move(node));
}

// ---- losses ----------------------------------------------------------------

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  check_defined(logits, "cross_entropy");
  if (logits.rank() < 2) fail(ErrorCode::ShapeMismatch, "cross_entropy: logits must have rank >= 2, got " + shape_str(logits.shape()));
  const std::size_t vocab = logits.shape().back();
  const std::size_t rows = logits.numel() / vocab;
  if (targets.size() != rows) {
    fail(ErrorCode::ShapeMismatch, "cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                                       shape_str(logits.shape()));
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::size_t count = 0;
  for (int t : tgt) {
    if (t == kIgnoreIndex) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      fail(ErrorCode::ShapeMismatch, "cross_entropy: target " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab));
    }
    ++count;
  }
  if (count == 0) fail(ErrorCode::AllIgnored, "cross_entropy: every target position is ignored");
  const T* px = logits.data().data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == kIgnoreIndex) continue;
    const T* row = px + r * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) z += std::exp(row[c] - mx);
    total += mx + std::log(z) - row[tgt[r]];
  }
  const double inv = 1.0 / static_cast<double>(count);
  return make_result<T>({1}, {static_cast<T>(total * inv)}, {&logits}, "cross_entropy",
                        [tgt = std::move(tgt), rows, vocab, inv](Node<T>& o) {
                          Node<T>& in = *o.parents[0];
                          T* gx = grad_of(in);
                          if (!gx) return;
                          const double g = o.grad[0] * inv;
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (tgt[r] == kIgnoreIndex) continue;
                            const T* row = in.data.data() + r * vocab;
                            const double mx = *std::max_element(row, row + vocab);
                            double z = 0.0;
                            for (std::size_t c = 0; c < vocab; ++c) z += std::exp(row[c] - mx);
                            for (std::size_t c = 0; c < vocab; ++c) {
                              const double p = std::exp(row[c] - mx) / z;
                              gx[r * vocab + c] += static_cast<T>(g * (p - (static_cast<int>(c) == tgt[r] ? 1.0 : 0.0)));
                            }
                          }
                        });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target, std::span<const std::uint8_t> observed) {
  check_defined(pred, "l1_loss");
  check_defined(target, "l1_loss");
  if (pred.shape() != target.shape()) shape_fail("l1_loss", pred.shape(), target.shape());
  if (observed.size() != pred.numel()) {
    fail(ErrorCode::ShapeMismatch, "l1_loss: observed mask of " + std::to_string(observed.size()) + " entries for shape " +
                                       shape_str(pred.shape()));
  }
  std::vector<std::uint8_t> mask(observed.begin(), observed.end());
  std::size_t count = 0;
  double total = 0.0;
  const T* pp = pred.data().data();
  const T* pt = target.data().data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++count;
    total += std::abs(static_cast<double>(pp[i]) - static_cast<double>(pt[i]));
  }
  if (count == 0) fail(ErrorCode::AllUnobserved, "l1_loss: no observed entries");
  const double inv = 1.0 / static_cast<double>(count);
  return make_result<T>({1}, {static_cast<T>(total * inv)}, {&pred, &target}, "l1_loss",
                        [mask = std::move(mask), inv](Node<T>& o) {
                          const T* p = o.parents[0]->data.data();
                          const T* t = o.parents[1]->data.data();
                          const T g = static_cast<T>(o.grad[0] * inv);
                          T* gp = grad_of(*o.parents[0]);
                          T* gt = grad_of(*o.parents[1]);
                          for (std::size_t i = 0; i < mask.size(); ++i) {
                            if (!mask[i]) continue;
                            const T s = p[i] > t[i] ? T(1) : (p[i] < t[i] ? T(-1) : T(0));
                            if (gp) gp[i] += g * s;
                            if (gt) gt[i] -= g * s;
                          }
                        });
}

#define POLYTX_INSTANTIATE(T)                                                                          \
  template class Tensor<T>;                                                                            \
  template class ComputeGraph<T>;                                                                      \
  template void backward<T>(const Tensor<T>&);                                                         \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                    \
  template Tensor<T> embedding_lookup<T>(const Tensor<T>&, std::span<const int>);                      \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);      \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                     \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                        \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, bool, Rng&);                                 \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                              \
  template Tensor<T> transpose<T>(const Tensor<T>&, std::size_t, std::size_t);                         \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                        \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                         \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                            \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, std::span<const int>);                         \
  template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>);

POLYTX_INSTANTIATE(float)
POLYTX_INSTANTIATE(double)

#undef POLYTX_INSTANTIATE

}  // namespace polytx::ad
