#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "rng.hpp"

namespace rmae {

namespace detail {
Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }
}  // namespace detail

using detail::TensorNode;

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

std::shared_ptr<TensorNode> make_node(std::vector<int64_t> shape,
                                      std::vector<double> data) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 1) throw ShapeError("tensor dimensions must be >= 1, got " + shape_str(shape));
    n *= d;
  }
  if (n != static_cast<int64_t>(data.size()))
    throw ShapeError("shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

void require_2d(const Tensor& t, const char* what) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(what) + " requires a rank-2 tensor, got " +
                     shape_str(t.shape()));
}

bool any_requires(std::initializer_list<const Tensor*> ts) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

// ---- Tensor basics --------------------------------------------------------

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  auto node = make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
  node->requires_grad = requires_grad;
  return detail::wrap(node);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  auto node = make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
  node->requires_grad = requires_grad;
  return detail::wrap(node);
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data,
                    bool requires_grad) {
  auto node = make_node(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return detail::wrap(node);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  std::vector<double> data(static_cast<size_t>(n));
  for (double& v : data) v = rng.normal(0.0, stddev);
  auto node = make_node(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return detail::wrap(node);
}

Tensor Tensor::clone() const {
  auto node = make_node(node_->shape, node_->data);
  node->requires_grad = node_->requires_grad;
  return detail::wrap(node);
}

int64_t Tensor::rows() const {
  require_2d(*this, "rows()");
  return node_->shape[0];
}

int64_t Tensor::cols() const {
  require_2d(*this, "cols()");
  return node_->shape[1];
}

double Tensor::value() const {
  if (numel() != 1)
    throw ShapeError("value() requires a scalar tensor, got " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(int64_t i, int64_t j) const {
  require_2d(*this, "at()");
  return node_->data[static_cast<size_t>(i * cols() + j)];
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty())
    throw ContractError("tensor has no gradient (backward not run or not tracked)");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

double Tensor::grad_norm() const {
  double s = 0.0;
  for (double g : node_->grad) s += g * g;
  return std::sqrt(s);
}

bool Tensor::all_finite() const {
  for (double v : node_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

GradGuard::GradGuard(bool enabled) : prev_(g_grad_enabled) { g_grad_enabled = enabled; }
GradGuard::~GradGuard() { g_grad_enabled = prev_; }
bool GradGuard::enabled() { return g_grad_enabled; }

// ---- ops ------------------------------------------------------------------

namespace {

// Attach tape metadata to `out` when any input is tracked.
void attach(const std::shared_ptr<TensorNode>& out,
            std::vector<std::shared_ptr<TensorNode>> parents,
            std::function<void()> backprop) {
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backprop = std::move(backprop);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> data(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < data.size(); ++i) data[i] += bd[i];
  auto out = make_node(a.shape(), std::move(data));
  if (any_requires({&a, &b})) {
    TensorNode *A = a.node().get(), *B = b.node().get(), *O = out.get();
    attach(out, {a.node(), b.node()}, [A, B, O] {
      if (A->requires_grad) {
        A->ensure_grad();
        for (size_t i = 0; i < O->grad.size(); ++i) A->grad[i] += O->grad[i];
      }
      if (B->requires_grad) {
        B->ensure_grad();
        for (size_t i = 0; i < O->grad.size(); ++i) B->grad[i] += O->grad[i];
      }
    });
  }
  return detail::wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> data(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < data.size(); ++i) data[i] -= bd[i];
  auto out = make_node(a.shape(), std::move(data));
  if (any_requires({&a, &b})) {
    TensorNode *A = a.node().get(), *B = b.node().get(), *O = out.get();
    attach(out, {a.node(), b.node()}, [A, B, O] {
      if (A->requires_grad) {
        A->ensure_grad();
        for (size_t i = 0; i < O->grad.size(); ++i) A->grad[i] += O->grad[i];
      }
      if (B->requires_grad) {
        B->ensure_grad();
        for (size_t i = 0; i < O->grad.size(); ++i) B->grad[i] -= O->grad[i];
      }
    });
  }
  return detail::wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> data(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < data.size(); ++i) data[i] *= bd[i];
  auto out = make_node(a.shape(), std::move(data));
  if (any_requires({&a, &b})) {
    TensorNode *A = a.node().get(), *B = b.node().get(), *O = out.get();
    attach(out, {a.node(), b.node()}, [A, B, O] {
      if (A->requires_grad) {
        A->ensure_grad();
        for (size_t i = 0; i < O->grad.size(); ++i) A->grad[i] += O->grad[i] * B->data[i];
      }
      if (B->requires_grad) {
        B->ensure_grad();
        for (size_t i = 0; i < O->grad.size(); ++i) B->grad[i] += O->grad[i] * A->data[i];
      }
    });
  }
  return detail::wrap(out);
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> data(a.data());
  for (double& v : data) v *= c;
  auto out = make_node(a.shape(), std::move(data));
  if (any_requires({&a})) {
    TensorNode *A = a.node().get(), *O = out.get();
    attach(out, {a.node()}, [A, O, c] {
      A->ensure_grad();
      for (size_t i = 0; i < O->grad.size(); ++i) A->grad[i] += c * O->grad[i];
    });
  }
  return detail::wrap(out);
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  require_2d(a, "add_rowvec");
  const int64_t m = a.rows(), n = a.cols();
  if (b.numel() != n)
    throw ShapeError("add_rowvec: vector length " + std::to_string(b.numel()) +
                     " != column count " + std::to_string(n));
  std::vector<double> data(a.data());
  const auto& bd = b.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) data[static_cast<size_t>(i * n + j)] += bd[static_cast<size_t>(j)];
  auto out = make_node(a.shape(), std::move(data));
  if (any_requires({&a, &b})) {
    TensorNode *A = a.node().get(), *B = b.node().get(), *O = out.get();
    attach(out, {a.node(), b.node()}, [A, B, O, m, n] {
      if (A->requires_grad) {
        A->ensure_grad();
        for (size_t i = 0; i < O->grad.size(); ++i) A->grad[i] += O->grad[i];
      }
      if (B->requires_grad) {
        B->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            B->grad[static_cast<size_t>(j)] += O->grad[static_cast<size_t>(i * n + j)];
      }
    });
  }
  return detail::wrap(out);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int64_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  std::vector<double> data(static_cast<size_t>(m * n), 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const double av = ad[static_cast<size_t>(i * k + p)];
      if (av == 0.0) continue;
      const double* brow = &bd[static_cast<size_t>(p * n)];
      double* orow = &data[static_cast<size_t>(i * n)];
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  auto out = make_node({m, n}, std::move(data));
  if (any_requires({&a, &b})) {
    TensorNode *A = a.node().get(), *B = b.node().get(), *O = out.get();
    attach(out, {a.node(), b.node()}, [A, B, O, m, k, n] {
      if (A->requires_grad) {
        A->ensure_grad();
        // dA = dO @ B^T
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) {
            const double g = O->grad[static_cast<size_t>(i * n + j)];
            if (g == 0.0) continue;
            for (int64_t p = 0; p < k; ++p)
              A->grad[static_cast<size_t>(i * k + p)] += g * B->data[static_cast<size_t>(p * n + j)];
          }
      }
      if (B->requires_grad) {
        B->ensure_grad();
        // dB = A^T @ dO
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            const double av = A->data[static_cast<size_t>(i * k + p)];
            if (av == 0.0) continue;
            for (int64_t j = 0; j < n; ++j)
              B->grad[static_cast<size_t>(p * n + j)] += av * O->grad[static_cast<size_t>(i * n + j)];
          }
      }
    });
  }
  return detail::wrap(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const int64_t m = a.rows(), k = a.cols(), n = b.rows();
  if (k != b.cols())
    throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()) + "^T");
  std::vector<double> data(static_cast<size_t>(m * n), 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      const double* arow = &ad[static_cast<size_t>(i * k)];
      const double* brow = &bd[static_cast<size_t>(j * k)];
      for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      data[static_cast<size_t>(i * n + j)] = s;
    }
  auto out = make_node({m, n}, std::move(data));
  if (any_requires({&a, &b})) {
    TensorNode *A = a.node().get(), *B = b.node().get(), *O = out.get();
    attach(out, {a.node(), b.node()}, [A, B, O, m, k, n] {
      if (A->requires_grad) {
        A->ensure_grad();
        // dA = dO @ B
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) {
            const double g = O->grad[static_cast<size_t>(i * n + j)];
            if (g == 0.0) continue;
            for (int64_t p = 0; p < k; ++p)
              A->grad[static_cast<size_t>(i * k + p)] += g * B->data[static_cast<size_t>(j * k + p)];
          }
      }
      if (B->requires_grad) {
        B->ensure_grad();
        // dB = dO^T @ A
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) {
            const double g = O->grad[static_cast<size_t>(i * n + j)];
            if (g == 0.0) continue;
            for (int64_t p = 0; p < k; ++p)
              B->grad[static_cast<size_t>(j * k + p)] += g * A->data[static_cast<size_t>(i * k + p)];
          }
      }
    });
  }
  return detail::wrap(out);
}

Tensor lookup(const Tensor& table, const std::vector<int32_t>& ids) {
  require_2d(table, "lookup");
  const int64_t v = table.rows(), d = table.cols();
  const int64_t l = static_cast<int64_t>(ids.size());
  if (l == 0) throw ContractError("lookup: empty id list");
  std::vector<double> data(static_cast<size_t>(l * d));
  for (int64_t i = 0; i < l; ++i) {
    const int32_t id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= v)
      throw ContractError("lookup: id " + std::to_string(id) + " out of range [0, " +
                          std::to_string(v) + ")");
    std::copy_n(table.data().begin() + static_cast<size_t>(id) * static_cast<size_t>(d),
                static_cast<size_t>(d), data.begin() + static_cast<size_t>(i * d));
  }
  auto out = make_node({l, d}, std::move(data));
  if (any_requires({&table})) {
    TensorNode *T = table.node().get(), *O = out.get();
    std::vector<int32_t> ids_copy = ids;
    attach(out, {table.node()}, [T, O, ids_copy, d] {
      T->ensure_grad();
      for (size_t i = 0; i < ids_copy.size(); ++i) {
        double* dst = &T->grad[static_cast<size_t>(ids_copy[i]) * static_cast<size_t>(d)];
        const double* src = &O->grad[i * static_cast<size_t>(d)];
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return detail::wrap(out);
}

Tensor repeat_row(const Tensor& row, int64_t m) {
  require_2d(row, "repeat_row");
  if (row.rows() != 1)
    throw ShapeError("repeat_row: expected a [1xN] tensor, got " + shape_str(row.shape()));
  if (m < 1) throw ShapeError("repeat_row: m must be >= 1");
  const int64_t n = row.cols();
  std::vector<double> data(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    std::copy_n(row.data().begin(), static_cast<size_t>(n),
                data.begin() + static_cast<size_t>(i * n));
  auto out = make_node({m, n}, std::move(data));
  if (any_requires({&row})) {
    TensorNode *R = row.node().get(), *O = out.get();
    attach(out, {row.node()}, [R, O, m, n] {
      R->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          R->grad[static_cast<size_t>(j)] += O->grad[static_cast<size_t>(i * n + j)];
    });
  }
  return detail::wrap(out);
}

Tensor slice_rows(const Tensor& a, int64_t start, int64_t len) {
  require_2d(a, "slice_rows");
  const int64_t m = a.rows(), n = a.cols();
  if (start < 0 || len < 1 || start + len > m)
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for " +
                     shape_str(a.shape()));
  std::vector<double> data(a.data().begin() + static_cast<size_t>(start * n),
                           a.data().begin() + static_cast<size_t>((start + len) * n));
  auto out = make_node({len, n}, std::move(data));
  if (any_requires({&a})) {
    TensorNode *A = a.node().get(), *O = out.get();
    attach(out, {a.node()}, [A, O, start, len, n] {
      A->ensure_grad();
      for (int64_t i = 0; i < len; ++i)
        for (int64_t j = 0; j < n; ++j)
          A->grad[static_cast<size_t>((start + i) * n + j)] +=
              O->grad[static_cast<size_t>(i * n + j)];
    });
  }
  return detail::wrap(out);
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t len) {
  require_2d(a, "slice_cols");
  const int64_t m = a.rows(), n = a.cols();
  if (start < 0 || len < 1 || start + len > n)
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for " +
                     shape_str(a.shape()));
  std::vector<double> data(static_cast<size_t>(m * len));
  for (int64_t i = 0; i < m; ++i)
    std::copy_n(a.data().begin() + static_cast<size_t>(i * n + start), static_cast<size_t>(len),
                data.begin() + static_cast<size_t>(i * len));
  auto out = make_node({m, len}, std::move(data));
  if (any_requires({&a})) {
    TensorNode *A = a.node().get(), *O = out.get();
    attach(out, {a.node()}, [A, O, start, len, m, n] {
      A->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < len; ++j)
          A->grad[static_cast<size_t>(i * n + start + j)] +=
              O->grad[static_cast<size_t>(i * len + j)];
    });
  }
  return detail::wrap(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty part list");
  const int64_t n = parts[0].cols();
  int64_t m = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != n)
      throw ShapeError("concat_rows: column mismatch " + std::to_string(p.cols()) +
                       " vs " + std::to_string(n));
    m += p.rows();
  }
  std::vector<double> data;
  data.reserve(static_cast<size_t>(m * n));
  for (const Tensor& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  auto out = make_node({m, n}, std::move(data));
  bool tracked = false;
  for (const Tensor& p : parts) tracked = tracked || p.requires_grad();
  if (tracked && GradGuard::enabled()) {
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::vector<TensorNode*> raw;
    for (const Tensor& p : parts) {
      parents.push_back(p.node());
      raw.push_back(p.node().get());
    }
    TensorNode* O = out.get();
    attach(out, std::move(parents), [raw, O] {
      size_t off = 0;
      for (TensorNode* p : raw) {
        if (p->requires_grad) {
          p->ensure_grad();
          for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += O->grad[off + i];
        }
        off += p->data.size();
      }
    });
  }
  return detail::wrap(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty part list");
  const int64_t m = parts[0].rows();
  int64_t n = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m)
      throw ShapeError("concat_cols: row mismatch " + std::to_string(p.rows()) + " vs " +
                       std::to_string(m));
    n += p.cols();
  }
  std::vector<double> data(static_cast<size_t>(m * n));
  int64_t coff = 0;
  for (const Tensor& p : parts) {
    const int64_t w = p.cols();
    for (int64_t i = 0; i < m; ++i)
      std::copy_n(p.data().begin() + static_cast<size_t>(i * w), static_cast<size_t>(w),
                  data.begin() + static_cast<size_t>(i * n + coff));
    coff += w;
  }
  auto out = make_node({m, n}, std::move(data));
  bool tracked = false;
  for (const Tensor& p : parts) tracked = tracked || p.requires_grad();
  if (tracked && GradGuard::enabled()) {
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::vector<TensorNode*> raw;
    std::vector<int64_t> widths;
    for (const Tensor& p : parts) {
      parents.push_back(p.node());
      raw.push_back(p.node().get());
      widths.push_back(p.cols());
    }
    TensorNode* O = out.get();
    attach(out, std::move(parents), [raw, widths, O, m, n] {
      int64_t off = 0;
      for (size_t pi = 0; pi < raw.size(); ++pi) {
        TensorNode* p = raw[pi];
        const int64_t w = widths[pi];
        if (p->requires_grad) {
          p->ensure_grad();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j)
              p->grad[static_cast<size_t>(i * w + j)] +=
                  O->grad[static_cast<size_t>(i * n + off + j)];
        }
        off += w;
      }
    });
  }
  return detail::wrap(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(x, "layer_norm");
  const int64_t m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n)
    throw ShapeError("layer_norm: gain/bias length must equal column count " +
                     std::to_string(n));
  std::vector<double> data(static_cast<size_t>(m * n));
  std::vector<double> xhat(static_cast<size_t>(m * n));
  std::vector<double> inv_sigma(static_cast<size_t>(m));
  const auto& xd = x.data();
  const auto& gd = gain.data();
  const auto& bd = bias.data();
  for (int64_t i = 0; i < m; ++i) {
    const double* row = &xd[static_cast<size_t>(i * n)];
    double mean = 0.0;
    for (int64_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = is;
    for (int64_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[static_cast<size_t>(i * n + j)] = h;
      data[static_cast<size_t>(i * n + j)] = gd[static_cast<size_t>(j)] * h + bd[static_cast<size_t>(j)];
    }
  }
  auto out = make_node({m, n}, std::move(data));
  if (any_requires({&x, &gain, &bias})) {
    TensorNode *X = x.node().get(), *G = gain.node().get(), *B = bias.node().get(),
               *O = out.get();
    attach(out, {x.node(), gain.node(), bias.node()},
           [X, G, B, O, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), m, n] {
             for (int64_t i = 0; i < m; ++i) {
               const double* go = &O->grad[static_cast<size_t>(i * n)];
               const double* xh = &xhat[static_cast<size_t>(i * n)];
               const double is = inv_sigma[static_cast<size_t>(i)];
               if (G->requires_grad) {
                 G->ensure_grad();
                 for (int64_t j = 0; j < n; ++j)
                   G->grad[static_cast<size_t>(j)] += go[j] * xh[j];
               }
               if (B->requires_grad) {
                 B->ensure_grad();
                 for (int64_t j = 0; j < n; ++j) B->grad[static_cast<size_t>(j)] += go[j];
               }
               if (X->requires_grad) {
                 X->ensure_grad();
                 double mean_q = 0.0, mean_qx = 0.0;
                 for (int64_t j = 0; j < n; ++j) {
                   const double q = go[j] * G->data[static_cast<size_t>(j)];
                   mean_q += q;
                   mean_qx += q * xh[j];
                 }
                 mean_q /= static_cast<double>(n);
                 mean_qx /= static_cast<double>(n);
                 for (int64_t j = 0; j < n; ++j) {
                   const double q = go[j] * G->data[static_cast<size_t>(j)];
                   X->grad[static_cast<size_t>(i * n + j)] +=
                       (q - mean_q - xh[j] * mean_qx) * is;
                 }
               }
             }
           });
  }
  return detail::wrap(out);
}

Tensor gelu(const Tensor& x) {
  std::vector<double> data(x.data());
  for (double& v : data) v = 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244));
  auto out = make_node(x.shape(), std::move(data));
  if (any_requires({&x})) {
    TensorNode *X = x.node().get(), *O = out.get();
    attach(out, {x.node()}, [X, O] {
      X->ensure_grad();
      constexpr double inv_sqrt2 = 0.7071067811865475244;
      constexpr double inv_sqrt2pi = 0.3989422804014326779;
      for (size_t i = 0; i < O->grad.size(); ++i) {
        const double v = X->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        X->grad[i] += O->grad[i] * (cdf + v * pdf);
      }
    });
  }
  return detail::wrap(out);
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto out = make_node({1}, {s});
  if (any_requires({&x})) {
    TensorNode *X = x.node().get(), *O = out.get();
    attach(out, {x.node()}, [X, O] {
      X->ensure_grad();
      const double g = O->grad[0];
      for (size_t i = 0; i < X->grad.size(); ++i) X->grad[i] += g;
    });
  }
  return detail::wrap(out);
}

Tensor softmax_masked(const Tensor& scores, const Tensor& mask) {
  require_2d(scores, "softmax_masked");
  if (scores.shape() != mask.shape())
    throw ShapeError("softmax_masked: scores " + shape_str(scores.shape()) +
                     " vs mask " + shape_str(mask.shape()));
  const int64_t m = scores.rows(), n = scores.cols();
  const auto& sd = scores.data();
  const auto& md = mask.data();
  std::vector<double> data(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any_visible = false;
    for (int64_t j = 0; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i * n + j);
      if (md[idx] > kMaskedThreshold) {
        any_visible = true;
        mx = std::max(mx, sd[idx] + md[idx]);
      }
    }
    if (!any_visible)
      throw ContractError("softmax_masked: fully masked row " + std::to_string(i));
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i * n + j);
      if (md[idx] > kMaskedThreshold) {
        const double e = std::exp(sd[idx] + md[idx] - mx);
        data[idx] = e;
        sum += e;
      }
    }
    for (int64_t j = 0; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i * n + j);
      // masked entries stay exactly 0
      if (md[idx] > kMaskedThreshold) data[idx] /= sum;
    }
  }
  auto out = make_node({m, n}, std::move(data));
  if (any_requires({&scores})) {
    TensorNode *S = scores.node().get(), *O = out.get();
    attach(out, {scores.node(), mask.node()}, [S, O, m, n] {
      S->ensure_grad();
      for (int64_t i = 0; i < m; ++i) {
        const double* a = &O->data[static_cast<size_t>(i * n)];
        const double* g = &O->grad[static_cast<size_t>(i * n)];
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += a[j] * g[j];
        for (int64_t j = 0; j < n; ++j)
          S->grad[static_cast<size_t>(i * n + j)] += a[j] * (g[j] - dot);
      }
    });
  }
  return detail::wrap(out);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& targets,
                     int32_t ignore_marker, bool* all_ignored) {
  require_2d(logits, "cross_entropy");
  const int64_t t = logits.rows(), v = logits.cols();
  if (static_cast<int64_t>(targets.size()) != t)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(t) + " logit rows");
  int64_t count = 0;
  double total = 0.0;
  const auto& ld = logits.data();
  for (int64_t i = 0; i < t; ++i) {
    const int32_t y = targets[static_cast<size_t>(i)];
    if (y == ignore_marker) continue;
    if (y < 0 || y >= v)
      throw ContractError("cross_entropy: target " + std::to_string(y) +
                          " out of range [0, " + std::to_string(v) + ") at row " +
                          std::to_string(i));
    const double* row = &ld[static_cast<size_t>(i * v)];
    double mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (int64_t j = 0; j < v; ++j) lse += std::exp(row[j] - mx);
    lse = std::log(lse) + mx;
    total += lse - row[y];
    ++count;
  }
  if (all_ignored) *all_ignored = (count == 0);
  const double loss = count > 0 ? total / static_cast<double>(count) : 0.0;
  auto out = make_node({1}, {loss});
  if (count > 0 && any_requires({&logits})) {
    TensorNode *L = logits.node().get(), *O = out.get();
    std::vector<int32_t> tg = targets;
    attach(out, {logits.node()}, [L, O, tg, ignore_marker, t, v, count] {
      L->ensure_grad();
      const double gscale = O->grad[0] / static_cast<double>(count);
      for (int64_t i = 0; i < t; ++i) {
        const int32_t y = tg[static_cast<size_t>(i)];
        if (y == ignore_marker) continue;
        const double* row = &L->data[static_cast<size_t>(i * v)];
        double mx = row[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
        double* gr = &L->grad[static_cast<size_t>(i * v)];
        for (int64_t j = 0; j < v; ++j) {
          const double p = std::exp(row[j] - mx) / sum;
          gr[j] += gscale * (p - (j == y ? 1.0 : 0.0));
        }
      }
    });
  }
  return detail::wrap(out);
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_2d(x, "l2_normalize_rows");
  const int64_t m = x.rows(), n = x.cols();
  std::vector<double> data(static_cast<size_t>(m * n));
  std::vector<double> norms(static_cast<size_t>(m));
  const auto& xd = x.data();
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double v = xd[static_cast<size_t>(i * n + j)];
      s += v * v;
    }
    const double nrm = std::sqrt(s);
    if (nrm == 0.0)
      throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(i));
    norms[static_cast<size_t>(i)] = nrm;
    for (int64_t j = 0; j < n; ++j)
      data[static_cast<size_t>(i * n + j)] = xd[static_cast<size_t>(i * n + j)] / nrm;
  }
  auto out = make_node({m, n}, std::move(data));
  if (any_requires({&x})) {
    TensorNode *X = x.node().get(), *O = out.get();
    attach(out, {x.node()}, [X, O, norms = std::move(norms), m, n] {
      X->ensure_grad();
      for (int64_t i = 0; i < m; ++i) {
        const double* y = &O->data[static_cast<size_t>(i * n)];
        const double* g = &O->grad[static_cast<size_t>(i * n)];
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
        const double inv = 1.0 / norms[static_cast<size_t>(i)];
        for (int64_t j = 0; j < n; ++j)
          X->grad[static_cast<size_t>(i * n + j)] += (g[j] - y[j] * dot) * inv;
      }
    });
  }
  return detail::wrap(out);
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  auto root = loss.node();

  // iterative post-order DFS; cycles are impossible by construction (every
  // op creates a fresh node) but parents may be shared
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx].get();
      ++idx;
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop();
  }
  // release the tape; a new forward pass starts a fresh graph
  for (TensorNode* node : order) {
    node->backprop = nullptr;
    node->parents.clear();
  }
}

}  // namespace rmae
