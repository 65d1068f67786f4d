#pragma once

// Minimal dense-tensor reverse-mode autodiff. Tensors are 2-D (vectors are
// n-by-1, scalars 1-by-1), double precision, row-major. A Tape records the
// backward rule of every op executed while it is active; backward() replays
// the tape in reverse. Tapes are rebuilt per training sentence and are
// confined to one thread.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace beamstop {

namespace detail {

struct TensorData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;  // values, row-major
  std::vector<double> g;  // adjoints, same layout; empty until needed
  bool requires_grad = false;
  bool grad_touched = false;  // any nonzero adjoint accumulated so far

  std::size_t size() const { return rows * cols; }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : d_(std::make_shared<detail::TensorData>()) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("tensor extents must be positive, got " +
                                  detail::shape_str(rows, cols));
    d_->rows = rows;
    d_->cols = cols;
    d_->v.assign(rows * cols, fill);
  }

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.d_->v[0] = x;
    return t;
  }

  static Tensor from(std::size_t rows, std::size_t cols,
                     std::vector<double> vals) {
    Tensor t(rows, cols);
    if (vals.size() != rows * cols)
      throw std::invalid_argument(
          "tensor data length " + std::to_string(vals.size()) +
          " does not match shape " + detail::shape_str(rows, cols));
    t.d_->v = std::move(vals);
    return t;
  }

  bool defined() const { return d_ != nullptr; }
  std::size_t rows() const { return d_->rows; }
  std::size_t cols() const { return d_->cols; }
  std::size_t size() const { return d_->size(); }
  bool is_scalar() const { return d_->size() == 1; }

  std::string shape_str() const { return detail::shape_str(rows(), cols()); }

  const std::vector<double>& values() const { return d_->v; }
  std::vector<double>& values() { return d_->v; }

  double operator()(std::size_t i, std::size_t j) const {
    return d_->v[i * d_->cols + j];
  }
  double& at(std::size_t i, std::size_t j) { return d_->v[i * d_->cols + j]; }
  double operator[](std::size_t i) const { return d_->v[i]; }

  double item() const {
    if (!is_scalar())
      throw std::logic_error("item() on non-scalar tensor " + shape_str());
    return d_->v[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    d_->requires_grad = b;
    if (b) d_->ensure_grad();
    return *this;
  }

  const std::vector<double>& grad() const { return d_->g; }
  std::vector<double>& grad() { return d_->g; }
  bool has_grad() const { return !d_->g.empty(); }

  void zero_grad() {
    if (!d_->g.empty()) std::fill(d_->g.begin(), d_->g.end(), 0.0);
    d_->grad_touched = false;
  }

  // Identity of the underlying buffer; two handles may alias one tensor.
  bool same_as(const Tensor& other) const { return d_ == other.d_; }

  std::shared_ptr<detail::TensorData> data_ptr() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<detail::TensorData> d_;

  friend class Tape;
  friend struct OpBuilder;
};

// Define-by-run tape. Constructing a Tape makes it the active tape for the
// current thread; destruction restores the previous one.
class Tape {
 public:
  Tape() : prev_(current_) { current_ = this; }
  ~Tape() { current_ = prev_; }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return current_; }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  std::size_t node_count() const { return nodes_.size(); }

  // Runs all recorded backward rules in reverse recording order.
  void run_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  Tape* prev_ = nullptr;
  static thread_local Tape* current_;
};

inline thread_local Tape* Tape::current_ = nullptr;

namespace detail {

inline bool tracked(const Tensor& t) {
  return Tape::active() != nullptr && t.requires_grad();
}

// Adds `val` into the adjoint buffer of `d` at flat index `i`.
inline void accum(TensorData& d, std::size_t i, double val) {
  d.ensure_grad();
  d.g[i] += val;
  d.grad_touched = true;
}

inline void mark_output(Tensor& out) {
  if (Tape::active() != nullptr) out.set_requires_grad(true);
}

}  // namespace detail

// Seeds the adjoint of a scalar loss with 1 and runs the active tape
// backwards. Every requires_grad tensor reachable from the loss ends up with
// its grad populated (accumulated additively across uses).
inline void backward(Tensor& loss) {
  if (!loss.is_scalar())
    throw std::logic_error("backward() requires a scalar loss, got " +
                           loss.shape_str());
  Tape* tape = Tape::active();
  if (tape == nullptr)
    throw std::logic_error("backward() called with no active tape");
  auto d = loss.data_ptr();
  d->ensure_grad();
  d->g[0] += 1.0;
  d->grad_touched = true;
  tape->run_backward();
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {

// Dot product with four independent accumulators: instruction-level
// parallelism without changing the (fixed, deterministic) summation order.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner extents disagree: " +
                                a.shape_str() + " vs " + b.shape_str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  if (n == 1) {
    // matrix-vector fast path: one dot product per row
    for (std::size_t i = 0; i < m; ++i) ov[i] = detail::dot(av + i * k, bv, k);
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = av[i * k + kk];
        if (aik == 0.0) continue;
        detail::axpy(aik, bv + kk * n, ov + i * n, n);
      }
    }
  }
  if (detail::tracked(a) || detail::tracked(b)) {
    detail::mark_output(out);
    auto ad = a.data_ptr(), bd = b.data_ptr(), od = out.data_ptr();
    Tape::active()->record([ad, bd, od, m, k, n] {
      if (!od->grad_touched) return;
      const double* gv = od->g.data();
      if (ad->requires_grad) {
        ad->ensure_grad();
        // dA = G * B^T
        if (n == 1) {
          for (std::size_t i = 0; i < m; ++i)
            if (gv[i] != 0.0)
              detail::axpy(gv[i], bd->v.data(), ad->g.data() + i * k, k);
        } else {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk)
              ad->g[i * k + kk] +=
                  detail::dot(gv + i * n, bd->v.data() + kk * n, n);
        }
        ad->grad_touched = true;
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        // dB = A^T * G, accumulated row by row of A to stay contiguous
        if (n == 1) {
          for (std::size_t i = 0; i < m; ++i)
            if (gv[i] != 0.0)
              detail::axpy(gv[i], ad->v.data() + i * k, bd->g.data(), k);
        } else {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double aik = ad->v[i * k + kk];
              if (aik != 0.0)
                detail::axpy(aik, gv + i * n, bd->g.data() + kk * n, n);
            }
        }
        bd->grad_touched = true;
      }
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a(i, j);
  if (detail::tracked(a)) {
    detail::mark_output(out);
    auto ad = a.data_ptr(), od = out.data_ptr();
    Tape::active()->record([ad, od, m, n] {
      if (!od->grad_touched || !ad->requires_grad) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          ad->g[i * n + j] += od->g[j * m + i];
      ad->grad_touched = true;
    });
  }
  return out;
}

namespace detail {

// Shared plumbing for binary elementwise ops. Supports same-shape operands
// and scalar-with-tensor broadcasting (either side), nothing else.
enum class BinKind { add, sub, mul };

inline Tensor binary_ew(const Tensor& a, const Tensor& b, BinKind kind) {
  const bool a_scalar = a.is_scalar(), b_scalar = b.is_scalar();
  if (!a_scalar && !b_scalar &&
      (a.rows() != b.rows() || a.cols() != b.cols()))
    throw std::invalid_argument(
        "elementwise op: incompatible shapes " + a.shape_str() + " vs " +
        b.shape_str() + " (only scalar broadcasting supported)");
  const Tensor& big = a_scalar ? b : a;
  Tensor out(big.rows(), big.cols());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a_scalar ? a[0] : a[i];
    const double y = b_scalar ? b[0] : b[i];
    switch (kind) {
      case BinKind::add: out.values()[i] = x + y; break;
      case BinKind::sub: out.values()[i] = x - y; break;
      case BinKind::mul: out.values()[i] = x * y; break;
    }
  }
  if (tracked(a) || tracked(b)) {
    mark_output(out);
    auto ad = a.data_ptr(), bd = b.data_ptr(), od = out.data_ptr();
    Tape::active()->record([ad, bd, od, kind, a_scalar, b_scalar, n] {
      if (!od->grad_touched) return;
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = od->g[i];
        if (gi == 0.0) continue;
        const double x = a_scalar ? ad->v[0] : ad->v[i];
        const double y = b_scalar ? bd->v[0] : bd->v[i];
        double da = 0.0, db = 0.0;
        switch (kind) {
          case BinKind::add: da = gi; db = gi; break;
          case BinKind::sub: da = gi; db = -gi; break;
          case BinKind::mul: da = gi * y; db = gi * x; break;
        }
        if (ad->requires_grad) accum(*ad, a_scalar ? 0 : i, da);
        if (bd->requires_grad) accum(*bd, b_scalar ? 0 : i, db);
      }
    });
  }
  return out;
}

// Unary elementwise op: forward maps x->y, backward needs dy/dx as a
// function of (x, y).
template <class Fwd, class Bwd>
Tensor unary_ew(const Tensor& a, Fwd fwd, Bwd bwd) {
  Tensor out(a.rows(), a.cols());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = fwd(a[i]);
  if (tracked(a)) {
    mark_output(out);
    auto ad = a.data_ptr(), od = out.data_ptr();
    Tape::active()->record([ad, od, bwd, n] {
      if (!od->grad_touched || !ad->requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = od->g[i];
        if (gi != 0.0) accum(*ad, i, gi * bwd(ad->v[i], od->v[i]));
      }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(a, b, detail::BinKind::add);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(a, b, detail::BinKind::sub);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(a, b, detail::BinKind::mul);
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary_ew(
      a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}
inline Tensor mul_scalar(const Tensor& a, double c) {
  return detail::unary_ew(
      a, [c](double x) { return x * c; },
      [c](double, double) { return c; });
}
inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

inline Tensor tanh(const Tensor& a) {
  return detail::unary_ew(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_ew(
      a,
      [](double x) {
        // evaluate on the non-overflowing branch
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

// max(0, x) with subgradient 0 at x == 0 (the hinge is inactive when the
// margin is exactly met).
inline Tensor relu_plus(const Tensor& a) {
  return detail::unary_ew(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// log(1 + e^x), overflow-safe.
inline Tensor softplus(const Tensor& a) {
  return detail::unary_ew(
      a,
      [](double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x))
                       : std::log1p(std::exp(x));
      },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
      });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_ew(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

// log softmax over all entries (used on column vectors of logits).
// Max-subtraction keeps it finite for any finite input.
inline Tensor log_softmax(const Tensor& a) {
  const std::size_t n = a.size();
  if (n == 0) throw std::invalid_argument("log_softmax: empty input");
  double mx = a[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, a[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(a[i] - mx);
  const double lz = std::log(z) + mx;
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a[i] - lz;
  if (detail::tracked(a)) {
    detail::mark_output(out);
    auto ad = a.data_ptr(), od = out.data_ptr();
    Tape::active()->record([ad, od, n] {
      if (!od->grad_touched || !ad->requires_grad) return;
      double gsum = 0.0;
      for (std::size_t i = 0; i < n; ++i) gsum += od->g[i];
      ad->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        ad->g[i] += od->g[i] - std::exp(od->v[i]) * gsum;
      ad->grad_touched = true;
    });
  }
  return out;
}

inline Tensor softmax(const Tensor& a) { return exp(log_softmax(a)); }

// Scalar tensor holding element `idx` (flat index) of `a`.
inline Tensor pick(const Tensor& a, std::size_t idx) {
  if (idx >= a.size())
    throw std::out_of_range("pick: index " + std::to_string(idx) +
                            " out of range for " + a.shape_str());
  Tensor out = Tensor::scalar(a[idx]);
  if (detail::tracked(a)) {
    detail::mark_output(out);
    auto ad = a.data_ptr(), od = out.data_ptr();
    Tape::active()->record([ad, od, idx] {
      if (!od->grad_touched || !ad->requires_grad) return;
      if (od->g[0] != 0.0) detail::accum(*ad, idx, od->g[0]);
    });
  }
  return out;
}

// Row `r` of `a` as a column vector (embedding lookup).
inline Tensor lookup_col(const Tensor& a, std::size_t r) {
  if (r >= a.rows())
    throw std::out_of_range("lookup_col: row " + std::to_string(r) +
                            " out of range for " + a.shape_str());
  const std::size_t n = a.cols();
  Tensor out(n, 1);
  for (std::size_t j = 0; j < n; ++j) out.values()[j] = a(r, j);
  if (detail::tracked(a)) {
    detail::mark_output(out);
    auto ad = a.data_ptr(), od = out.data_ptr();
    Tape::active()->record([ad, od, r, n] {
      if (!od->grad_touched || !ad->requires_grad) return;
      ad->ensure_grad();
      for (std::size_t j = 0; j < n; ++j) ad->g[r * n + j] += od->g[j];
      ad->grad_touched = true;
    });
  }
  return out;
}

// Stacks N column vectors of length D into an N-by-D matrix (one per row).
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  const std::size_t d = rows[0].size();
  Tensor out(rows.size(), d);
  bool any_tracked = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d)
      throw std::invalid_argument("stack_rows: ragged input, " +
                                  rows[i].shape_str() + " vs length " +
                                  std::to_string(d));
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = rows[i][j];
    any_tracked = any_tracked || detail::tracked(rows[i]);
  }
  if (any_tracked) {
    detail::mark_output(out);
    std::vector<std::shared_ptr<detail::TensorData>> rds;
    rds.reserve(rows.size());
    for (const auto& r : rows) rds.push_back(r.data_ptr());
    auto od = out.data_ptr();
    Tape::active()->record([rds, od, d] {
      if (!od->grad_touched) return;
      for (std::size_t i = 0; i < rds.size(); ++i) {
        if (!rds[i]->requires_grad) continue;
        rds[i]->ensure_grad();
        for (std::size_t j = 0; j < d; ++j)
          rds[i]->g[j] += od->g[i * d + j];
        rds[i]->grad_touched = true;
      }
    });
  }
  return out;
}

// Vertical concatenation of two column vectors.
inline Tensor vconcat(const Tensor& a, const Tensor& b) {
  if (a.cols() != 1 || b.cols() != 1)
    throw std::invalid_argument("vconcat: expects column vectors, got " +
                                a.shape_str() + " and " + b.shape_str());
  Tensor out(a.rows() + b.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) out.values()[i] = a[i];
  for (std::size_t i = 0; i < b.rows(); ++i) out.values()[a.rows() + i] = b[i];
  if (detail::tracked(a) || detail::tracked(b)) {
    detail::mark_output(out);
    auto ad = a.data_ptr(), bd = b.data_ptr(), od = out.data_ptr();
    const std::size_t na = a.rows(), nb = b.rows();
    Tape::active()->record([ad, bd, od, na, nb] {
      if (!od->grad_touched) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < na; ++i) ad->g[i] += od->g[i];
        ad->grad_touched = true;
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < nb; ++i) bd->g[i] += od->g[na + i];
        bd->grad_touched = true;
      }
    });
  }
  return out;
}

// Inverted dropout: zeroes each entry with probability p and scales the
// survivors by 1/(1-p). `uniform` supplies draws in [0,1).
template <class Uniform>
Tensor dropout(const Tensor& a, double p, Uniform&& uniform) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must lie in [0,1), got " +
                                std::to_string(p));
  if (p == 0.0) return a;
  const std::size_t n = a.size();
  auto mask = std::make_shared<std::vector<double>>(n);
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i)
    (*mask)[i] = uniform() < p ? 0.0 : keep;
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a[i] * (*mask)[i];
  if (detail::tracked(a)) {
    detail::mark_output(out);
    auto ad = a.data_ptr(), od = out.data_ptr();
    Tape::active()->record([ad, od, mask, n] {
      if (!od->grad_touched || !ad->requires_grad) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) ad->g[i] += od->g[i] * (*mask)[i];
      ad->grad_touched = true;
    });
  }
  return out;
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  Tensor out = Tensor::scalar(s);
  if (detail::tracked(a)) {
    detail::mark_output(out);
    auto ad = a.data_ptr(), od = out.data_ptr();
    const std::size_t n = a.size();
    Tape::active()->record([ad, od, n] {
      if (!od->grad_touched || !ad->requires_grad) return;
      const double g0 = od->g[0];
      if (g0 == 0.0) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) ad->g[i] += g0;
      ad->grad_touched = true;
    });
  }
  return out;
}

}  // namespace beamstop
