#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"

namespace rmae {

class Rng;

// Additive attention-mask sentinel standing in for -inf. exp(x - 1e30)
// underflows to exactly 0.0 in double precision, and masked weights are
// additionally forced to exact zero after normalization.
inline constexpr double kNegInf = -1e30;
inline constexpr double kMaskedThreshold = -1e29;

class Tensor;

namespace detail {

struct TensorNode {
  std::vector<int64_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backprop;  // set only while the tape is alive

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

Tensor wrap(std::shared_ptr<TensorNode> n);

}  // namespace detail

// Dense tensor of 64-bit floats, row-major, rank 1 or 2, with optional
// reverse-mode gradient tracking. Tensor is a cheap shared handle; ops on
// tracked tensors record a tape node per result. backward() consumes the
// tape: after it returns, the graph edges are released and a new forward
// pass builds a fresh tape. Leaf gradients accumulate across backward
// calls until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value);
  // i.i.d. normal(0, stddev) entries
  static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int64_t>& shape() const { return node_->shape; }
  int64_t ndim() const { return static_cast<int64_t>(node_->shape.size()); }
  int64_t numel() const { return node_->numel(); }
  int64_t rows() const;  // rank-2 only
  int64_t cols() const;

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& data() { return node_->data; }
  double value() const;              // scalar tensors
  double at(int64_t i, int64_t j) const;  // rank-2 accessor

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  // Deep copy: fresh storage, no tape edges, no gradient.
  Tensor clone() const;
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();
  double grad_norm() const;
  bool all_finite() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;
  friend Tensor detail::wrap(std::shared_ptr<detail::TensorNode> n);
};

// Scoped switch for gradient recording; pure-inference paths disable the
// tape to skip graph construction.
class GradGuard {
 public:
  explicit GradGuard(bool enabled);
  ~GradGuard();
  static bool enabled();

 private:
  bool prev_;
};

// ---- ops ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);           // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);           // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& a, const Tensor& b);    // a[m,n] + b[n] per row
Tensor matmul(const Tensor& a, const Tensor& b);        // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);     // a @ b^T, [m,k]x[n,k]
Tensor lookup(const Tensor& table, const std::vector<int32_t>& ids);  // gather rows
Tensor repeat_row(const Tensor& row, int64_t m);        // [1,n] -> [m,n]
Tensor slice_rows(const Tensor& a, int64_t start, int64_t len);
Tensor slice_cols(const Tensor& a, int64_t start, int64_t len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-12);
Tensor gelu(const Tensor& x);
Tensor sum_all(const Tensor& x);  // scalar

// Row-wise softmax over (scores + mask). Mask entries must be 0 or the
// kNegInf sentinel; masked positions come out exactly 0. A fully masked
// row raises an error instead of producing NaN.
Tensor softmax_masked(const Tensor& scores, const Tensor& mask);

// Mean negative log-softmax over rows whose target != ignore_marker.
// With every row ignored, returns 0 and sets *all_ignored.
Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& targets,
                     int32_t ignore_marker, bool* all_ignored = nullptr);

// Rows scaled to unit L2 norm.
Tensor l2_normalize_rows(const Tensor& x);

// Reverse-mode sweep from a scalar loss. Populates grad on every reachable
// tensor with requires_grad, then releases the tape.
void backward(const Tensor& loss);

}  // namespace rmae
