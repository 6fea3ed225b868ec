#include "passt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace passt {

namespace {

thread_local GradTape* g_active_tape = nullptr;

std::string shape_str(const std::vector<size_t>& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

std::string input_stats(const std::vector<Tensor>& inputs) {
  std::ostringstream os;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const auto& d = inputs[i].data();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    for (double v : d) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    os << " in" << i << shape_str(inputs[i].shape()) << "[min=" << lo
       << ",max=" << hi << ",mean=" << (d.empty() ? 0.0 : sum / d.size())
       << ']';
  }
  return os.str();
}

// Every primitive funnels its output through here: non-finite values are an
// error, and the application is recorded when gradients may be needed.
Tensor finalize(const char* op, std::vector<Tensor> inputs, Tensor out,
                std::function<void()> backward) {
  for (double v : out.data()) {
    if (!std::isfinite(v)) {
      throw Error("nonfinite", std::string(op) +
                                   ": non-finite output;" + input_stats(inputs));
    }
  }
  GradTape* tape = GradTape::active();
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (tape != nullptr && needs) {
    out.set_requires_grad(true);
    tape->record(op, std::move(inputs), out, std::move(backward));
  } else {
    out.set_requires_grad(false);
  }
  return out;
}

// ---- raw matmul kernels (row-major, accumulate into c) ----

void mm_nn(const double* a, const double* b, double* c, size_t m, size_t k,
           size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c(m,n) += a(m,k) . b(n,k)^T
void mm_nt(const double* a, const double* b, double* c, size_t m, size_t k,
           size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c(m,n) += a(k,m)^T . b(k,n)
void mm_tn(const double* a, const double* b, double* c, size_t m, size_t k,
           size_t n) {
  for (size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + i * n;
      for (size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

// c(m,n) += a(k,m)^T . b(n,k)^T
void mm_tt(const double* a, const double* b, double* c, size_t m, size_t k,
           size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += a[p * m + i] * bj[p];
      ci[j] += acc;
    }
  }
}

void softmax_rows_inplace(double* x, size_t rows, size_t cols) {
  for (size_t i = 0; i < rows; ++i) {
    double* r = x + i * cols;
    double mx = r[0];
    for (size_t j = 1; j < cols; ++j) mx = std::max(mx, r[j]);
    double denom = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      denom += r[j];
    }
    for (size_t j = 0; j < cols; ++j) r[j] /= denom;
  }
}

void require_2d(const char* op, const Tensor& t) {
  if (t.rank() != 2)
    throw Error("shape", std::string(op) + ": expected rank-2 tensor, got " +
                             shape_str(t.shape()));
}

// Rows/cols of a tensor viewed as a matrix: 1-D counts as a single row.
std::pair<size_t, size_t> as_rows_cols(const Tensor& t) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw Error("shape", "expected rank 1 or 2, got " + shape_str(t.shape()));
}

}  // namespace

// ---- Tensor ----

Tensor::Tensor(std::vector<size_t> shape, double fill) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  impl_ = std::make_shared<detail::TensorData>();
  impl_->shape = std::move(shape);
  impl_->data.assign(n, fill);
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  if (n != data.size())
    throw Error("shape", "tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
  impl_ = std::make_shared<detail::TensorData>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorData> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

double Tensor::value() const {
  if (numel() != 1)
    throw Error("shape", "scalar expected, got " + shape_str(shape()));
  return impl_->data[0];
}

// ---- GradTape ----

GradTape::Scope::Scope(GradTape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}
GradTape::Scope::~Scope() { g_active_tape = prev_; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(const char* op, std::vector<Tensor> inputs,
                      const Tensor& output, std::function<void()> backward) {
  Node n;
  n.op = op;
  n.inputs.reserve(inputs.size());
  for (auto& t : inputs) n.inputs.push_back(t.impl());
  n.output = output.impl();
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
}

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw Error("shape",
                "backward: loss must be scalar, got " + shape_str(loss.shape()));
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no path to the loss
    it->backward();
  }
}

// ---- primitives ----

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  size_t m = trans_a ? a.dim(1) : a.dim(0);
  size_t k = trans_a ? a.dim(0) : a.dim(1);
  size_t kb = trans_b ? b.dim(1) : b.dim(0);
  size_t n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb)
    throw Error("shape", "matmul: inner dims differ, " + shape_str(a.shape()) +
                             (trans_a ? "^T" : "") + " x " +
                             shape_str(b.shape()) + (trans_b ? "^T" : ""));
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.data().data();
  if (!trans_a && !trans_b) mm_nn(pa, pb, pc, m, k, n);
  else if (!trans_a && trans_b) mm_nt(pa, pb, pc, m, k, n);
  else if (trans_a && !trans_b) mm_tn(pa, pb, pc, m, k, n);
  else mm_tt(pa, pb, pc, m, k, n);

  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  return finalize("matmul", {a, b}, out, [ai, bi, oi, m, k, n, trans_a, trans_b] {
    const double* dc = oi->grad.data();
    if (ai->requires_grad) {
      ai->ensure_grad();
      double* da = ai->grad.data();
      const double* pb2 = bi->data.data();
      if (!trans_a && !trans_b) mm_nt(dc, pb2, da, m, n, k);       // dA = dC.B^T
      else if (!trans_a && trans_b) mm_nn(dc, pb2, da, m, n, k);   // dA = dC.B
      else if (trans_a && !trans_b) mm_nt(pb2, dc, da, k, n, m);   // dA = B.dC^T
      else {                                                        // dA = (dC.B)^T
        std::vector<double> scratch(m * k, 0.0);
        mm_nn(dc, pb2, scratch.data(), m, n, k);
        for (size_t i = 0; i < m; ++i)
          for (size_t p = 0; p < k; ++p) da[p * m + i] += scratch[i * k + p];
      }
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      double* db = bi->grad.data();
      const double* pa2 = ai->data.data();
      if (!trans_a && !trans_b) mm_tn(pa2, dc, db, k, m, n);       // dB = A^T.dC
      else if (!trans_a && trans_b) mm_tn(dc, pa2, db, n, m, k);   // dB = dC^T.A
      else if (trans_a && !trans_b) mm_nn(pa2, dc, db, k, m, n);   // dB = A.dC
      else {                                                        // dB = (A.dC)^T
        std::vector<double> scratch(k * n, 0.0);
        mm_nn(pa2, dc, scratch.data(), k, m, n);
        for (size_t p = 0; p < k; ++p)
          for (size_t j = 0; j < n; ++j) db[j * k + p] += scratch[p * n + j];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw Error("shape", "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  Tensor out(a.shape());
  const auto& da = a.data();
  const auto& db = b.data();
  auto& do_ = out.data();
  for (size_t i = 0; i < do_.size(); ++i) do_[i] = da[i] + db[i];
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  return finalize("add", {a, b}, out, [ai, bi, oi] {
    for (auto& in : {ai, bi}) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) in->grad[i] += oi->grad[i];
    }
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_2d("add_rowvec", m);
  if (v.rank() != 1 || v.dim(0) != m.dim(1))
    throw Error("shape", "add_rowvec: vector " + shape_str(v.shape()) +
                             " does not match matrix " + shape_str(m.shape()));
  size_t rows = m.dim(0), cols = m.dim(1);
  Tensor out({rows, cols});
  const auto& dm = m.data();
  const auto& dv = v.data();
  auto& dout = out.data();
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) dout[i * cols + j] = dm[i * cols + j] + dv[j];
  auto mi = m.impl(), vi = v.impl(), oi = out.impl();
  return finalize("add_rowvec", {m, v}, out, [mi, vi, oi, rows, cols] {
    if (mi->requires_grad) {
      mi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) mi->grad[i] += oi->grad[i];
    }
    if (vi->requires_grad) {
      vi->ensure_grad();
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) vi->grad[j] += oi->grad[i * cols + j];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw Error("shape", "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  Tensor out(a.shape());
  const auto& da = a.data();
  const auto& db = b.data();
  auto& dout = out.data();
  for (size_t i = 0; i < dout.size(); ++i) dout[i] = da[i] * db[i];
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  return finalize("mul", {a, b}, out, [ai, bi, oi] {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i)
        ai->grad[i] += oi->grad[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i)
        bi->grad[i] += oi->grad[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  const auto& da = a.data();
  auto& dout = out.data();
  for (size_t i = 0; i < dout.size(); ++i) dout[i] = da[i] * c;
  auto ai = a.impl(), oi = out.impl();
  return finalize("scale", {a}, out, [ai, oi, c] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += c * oi->grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  auto ai = a.impl(), oi = out.impl();
  return finalize("sum", {a}, out, [ai, oi] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    double g = oi->grad[0];
    for (double& v : ai->grad) v += g;
  });
}

Tensor mean_axis(const Tensor& a, int axis) {
  require_2d("mean_axis", a);
  if (axis != 0 && axis != 1) throw Error("bounds", "mean_axis: axis must be 0 or 1");
  size_t rows = a.dim(0), cols = a.dim(1);
  size_t out_len = axis == 0 ? cols : rows;
  Tensor out({out_len});
  const auto& da = a.data();
  auto& dout = out.data();
  if (axis == 0) {
    for (size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (size_t i = 0; i < rows; ++i) s += da[i * cols + j];
      dout[j] = s / static_cast<double>(rows);
    }
  } else {
    for (size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (size_t j = 0; j < cols; ++j) s += da[i * cols + j];
      dout[i] = s / static_cast<double>(cols);
    }
  }
  auto ai = a.impl(), oi = out.impl();
  return finalize("mean_axis", {a}, out, [ai, oi, rows, cols, axis] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    if (axis == 0) {
      double inv = 1.0 / static_cast<double>(rows);
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) ai->grad[i * cols + j] += oi->grad[j] * inv;
    } else {
      double inv = 1.0 / static_cast<double>(cols);
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) ai->grad[i * cols + j] += oi->grad[i] * inv;
    }
  });
}

Tensor softmax(const Tensor& a) {
  auto [rows, cols] = as_rows_cols(a);
  if (cols == 0) throw Error("shape", "softmax: empty rows");
  Tensor out(a.shape(), a.data());
  softmax_rows_inplace(out.data().data(), rows, cols);
  auto ai = a.impl(), oi = out.impl();
  return finalize("softmax", {a}, out, [ai, oi, rows, cols] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    const double* y = oi->data.data();
    const double* dy = oi->grad.data();
    double* dx = ai->grad.data();
    for (size_t i = 0; i < rows; ++i) {
      const double* yr = y + i * cols;
      const double* dyr = dy + i * cols;
      double dot = 0.0;
      for (size_t j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
      double* dxr = dx + i * cols;
      for (size_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  auto [rows, cols] = as_rows_cols(x);
  if (gamma.numel() != cols || beta.numel() != cols)
    throw Error("shape", "layer_norm: gamma/beta must have length " +
                             std::to_string(cols));
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(rows * cols);
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* px = x.data().data();
  const double* pg = gamma.data().data();
  const double* pb = beta.data().data();
  double* po = out.data().data();
  for (size_t i = 0; i < rows; ++i) {
    const double* xr = px + i * cols;
    double mean = 0.0;
    for (size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (size_t j = 0; j < cols; ++j) {
      double xh = (xr[j] - mean) * inv;
      (*xhat)[i * cols + j] = xh;
      po[i * cols + j] = pg[j] * xh + pb[j];
    }
  }
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
  return finalize("layer_norm", {x, gamma, beta}, out,
                  [xi, gi, bi, oi, xhat, inv_std, rows, cols] {
    const double* dy = oi->grad.data();
    if (gi->requires_grad) {
      gi->ensure_grad();
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j)
          gi->grad[j] += dy[i * cols + j] * (*xhat)[i * cols + j];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) bi->grad[j] += dy[i * cols + j];
    }
    if (xi->requires_grad) {
      xi->ensure_grad();
      const double* pg2 = gi->data.data();
      for (size_t i = 0; i < rows; ++i) {
        const double* dyr = dy + i * cols;
        const double* xhr = xhat->data() + i * cols;
        double m1 = 0.0, m2 = 0.0;
        for (size_t j = 0; j < cols; ++j) {
          double dxh = dyr[j] * pg2[j];
          m1 += dxh;
          m2 += dxh * xhr[j];
        }
        m1 /= static_cast<double>(cols);
        m2 /= static_cast<double>(cols);
        double inv = (*inv_std)[i];
        double* dxr = xi->grad.data() + i * cols;
        for (size_t j = 0; j < cols; ++j) {
          double dxh = dyr[j] * pg2[j];
          dxr[j] += inv * (dxh - m1 - xhr[j] * m2);
        }
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  const auto& dx = x.data();
  auto& dout = out.data();
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  for (size_t i = 0; i < dout.size(); ++i) {
    double v = dx[i];
    dout[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  auto xi = x.impl(), oi = out.impl();
  return finalize("gelu", {x}, out, [xi, oi] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (size_t i = 0; i < oi->grad.size(); ++i) {
      double v = xi->data[i];
      double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      xi->grad[i] += oi->grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const auto& dx = x.data();
  auto& dout = out.data();
  for (size_t i = 0; i < dout.size(); ++i) dout[i] = std::max(0.0, dx[i]);
  auto xi = x.impl(), oi = out.impl();
  return finalize("relu", {x}, out, [xi, oi] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (size_t i = 0; i < oi->grad.size(); ++i)
      if (xi->data[i] > 0.0) xi->grad[i] += oi->grad[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("shape", "concat_rows: no inputs");
  size_t cols = parts.front().rank() == 2 ? parts.front().dim(1)
                                          : parts.front().dim(0);
  size_t rows = 0;
  for (const auto& p : parts) {
    auto [r, c] = as_rows_cols(p);
    if (c != cols) throw Error("shape", "concat_rows: column count mismatch");
    rows += r;
  }
  Tensor out({rows, cols});
  auto& dout = out.data();
  size_t off = 0;
  for (const auto& p : parts) {
    const auto& dp = p.data();
    std::copy(dp.begin(), dp.end(), dout.begin() + off);
    off += dp.size();
  }
  std::vector<std::shared_ptr<detail::TensorData>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  auto oi = out.impl();
  return finalize("concat_rows", parts, out, [impls, oi] {
    size_t off2 = 0;
    for (auto& in : impls) {
      size_t len = in->data.size();
      if (in->requires_grad) {
        in->ensure_grad();
        for (size_t i = 0; i < len; ++i) in->grad[i] += oi->grad[off2 + i];
      }
      off2 += len;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("shape", "concat_cols: no inputs");
  size_t rows = parts.front().dim(0);
  size_t cols = 0;
  for (const auto& p : parts) {
    require_2d("concat_cols", p);
    if (p.dim(0) != rows) throw Error("shape", "concat_cols: row count mismatch");
    cols += p.dim(1);
  }
  Tensor out({rows, cols});
  auto& dout = out.data();
  size_t off = 0;
  for (const auto& p : parts) {
    size_t pc = p.dim(1);
    const auto& dp = p.data();
    for (size_t i = 0; i < rows; ++i)
      std::copy(dp.begin() + i * pc, dp.begin() + (i + 1) * pc,
                dout.begin() + i * cols + off);
    off += pc;
  }
  std::vector<std::shared_ptr<detail::TensorData>> impls;
  std::vector<size_t> widths;
  for (const auto& p : parts) {
    impls.push_back(p.impl());
    widths.push_back(p.dim(1));
  }
  auto oi = out.impl();
  return finalize("concat_cols", parts, out, [impls, widths, oi, rows, cols] {
    size_t off2 = 0;
    for (size_t k = 0; k < impls.size(); ++k) {
      auto& in = impls[k];
      size_t pc = widths[k];
      if (in->requires_grad) {
        in->ensure_grad();
        for (size_t i = 0; i < rows; ++i)
          for (size_t j = 0; j < pc; ++j)
            in->grad[i * pc + j] += oi->grad[i * cols + off2 + j];
      }
      off2 += pc;
    }
  });
}

Tensor slice_rows(const Tensor& x, size_t start, size_t len) {
  require_2d("slice_rows", x);
  size_t rows = x.dim(0), cols = x.dim(1);
  if (start + len > rows)
    throw Error("bounds", "slice_rows: range [" + std::to_string(start) + "," +
                              std::to_string(start + len) + ") exceeds " +
                              std::to_string(rows) + " rows");
  Tensor out({len, cols});
  const auto& dx = x.data();
  std::copy(dx.begin() + start * cols, dx.begin() + (start + len) * cols,
            out.data().begin());
  auto xi = x.impl(), oi = out.impl();
  return finalize("slice_rows", {x}, out, [xi, oi, start, cols, len] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (size_t i = 0; i < len * cols; ++i)
      xi->grad[start * cols + i] += oi->grad[i];
  });
}

Tensor slice_cols(const Tensor& x, size_t start, size_t len) {
  require_2d("slice_cols", x);
  size_t rows = x.dim(0), cols = x.dim(1);
  if (start + len > cols)
    throw Error("bounds", "slice_cols: range exceeds " + std::to_string(cols) +
                              " columns");
  Tensor out({rows, len});
  const auto& dx = x.data();
  auto& dout = out.data();
  for (size_t i = 0; i < rows; ++i)
    std::copy(dx.begin() + i * cols + start, dx.begin() + i * cols + start + len,
              dout.begin() + i * len);
  auto xi = x.impl(), oi = out.impl();
  return finalize("slice_cols", {x}, out, [xi, oi, rows, cols, start, len] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < len; ++j)
        xi->grad[i * cols + start + j] += oi->grad[i * len + j];
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<size_t>& idx) {
  require_2d("gather_rows", table);
  size_t rows = table.dim(0), cols = table.dim(1);
  for (size_t i : idx)
    if (i >= rows)
      throw Error("bounds", "gather_rows: index " + std::to_string(i) +
                                " out of " + std::to_string(rows) + " rows");
  Tensor out({idx.size(), cols});
  const auto& dt = table.data();
  auto& dout = out.data();
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(dt.begin() + idx[i] * cols, dt.begin() + (idx[i] + 1) * cols,
              dout.begin() + i * cols);
  auto ti = table.impl(), oi = out.impl();
  return finalize("gather_rows", {table}, out, [ti, oi, idx, cols] {
    if (!ti->requires_grad) return;
    ti->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (size_t j = 0; j < cols; ++j)
        ti->grad[idx[i] * cols + j] += oi->grad[i * cols + j];
  });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            size_t n_heads,
                            std::vector<std::vector<double>>* attn_rowsums) {
  require_2d("multi_head_attention", q);
  if (q.shape() != k.shape() || q.shape() != v.shape())
    throw Error("shape", "multi_head_attention: q/k/v shapes differ");
  size_t n = q.dim(0), d = q.dim(1);
  if (n_heads == 0 || d % n_heads != 0)
    throw Error("shape", "multi_head_attention: dim " + std::to_string(d) +
                             " not divisible by " + std::to_string(n_heads) +
                             " heads");
  size_t dh = d / n_heads;
  double alpha = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out({n, d});
  std::vector<double> qh(n * dh), kh(n * dh), vh(n * dh), attn(n * n),
      ctx(n * dh);
  const double* pq = q.data().data();
  const double* pk = k.data().data();
  const double* pv = v.data().data();
  double* po = out.data().data();
  if (attn_rowsums) attn_rowsums->assign(n_heads, std::vector<double>(n));

  auto copy_head = [&](const double* src, double* dst, size_t h) {
    for (size_t i = 0; i < n; ++i)
      std::copy(src + i * d + h * dh, src + i * d + (h + 1) * dh, dst + i * dh);
  };

  for (size_t h = 0; h < n_heads; ++h) {
    copy_head(pq, qh.data(), h);
    copy_head(pk, kh.data(), h);
    copy_head(pv, vh.data(), h);
    std::fill(attn.begin(), attn.end(), 0.0);
    mm_nt(qh.data(), kh.data(), attn.data(), n, dh, n);
    for (double& s : attn) s *= alpha;
    softmax_rows_inplace(attn.data(), n, n);
    if (attn_rowsums) {
      for (size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (size_t j = 0; j < n; ++j) s += attn[i * n + j];
        (*attn_rowsums)[h][i] = s;
      }
    }
    std::fill(ctx.begin(), ctx.end(), 0.0);
    mm_nn(attn.data(), vh.data(), ctx.data(), n, n, dh);
    for (size_t i = 0; i < n; ++i)
      std::copy(ctx.begin() + i * dh, ctx.begin() + (i + 1) * dh,
                po + i * d + h * dh);
  }

  auto qi = q.impl(), ki = k.impl(), vi = v.impl(), oi = out.impl();
  return finalize("multi_head_attention", {q, k, v}, out,
                  [qi, ki, vi, oi, n, d, dh, n_heads, alpha] {
    // Recompute attention per head from q and k rather than saving n^2
    // matrices across the whole tape.
    std::vector<double> qh(n * dh), kh(n * dh), vh(n * dh), attn(n * n),
        dattn(n * n), dslice(n * dh);
    qi->ensure_grad();
    ki->ensure_grad();
    vi->ensure_grad();
    const double* pq = qi->data.data();
    const double* pk = ki->data.data();
    const double* pv = vi->data.data();
    const double* dout = oi->grad.data();
    auto copy_head = [&](const double* src, double* dst, size_t h) {
      for (size_t i = 0; i < n; ++i)
        std::copy(src + i * d + h * dh, src + i * d + (h + 1) * dh,
                  dst + i * dh);
    };
    auto scatter_head = [&](const double* src, double* dst, size_t h) {
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < dh; ++j) dst[i * d + h * dh + j] += src[i * dh + j];
    };
    for (size_t h = 0; h < n_heads; ++h) {
      copy_head(pq, qh.data(), h);
      copy_head(pk, kh.data(), h);
      copy_head(pv, vh.data(), h);
      std::fill(attn.begin(), attn.end(), 0.0);
      mm_nt(qh.data(), kh.data(), attn.data(), n, dh, n);
      for (double& s : attn) s *= alpha;
      softmax_rows_inplace(attn.data(), n, n);

      // dO slice for this head
      for (size_t i = 0; i < n; ++i)
        std::copy(dout + i * d + h * dh, dout + i * d + (h + 1) * dh,
                  dslice.begin() + i * dh);
      // dV_h = A^T . dO_h
      std::vector<double> dvh(n * dh, 0.0);
      mm_tn(attn.data(), dslice.data(), dvh.data(), n, n, dh);
      scatter_head(dvh.data(), vi->grad.data(), h);
      // dA = dO_h . V_h^T
      std::fill(dattn.begin(), dattn.end(), 0.0);
      mm_nt(dslice.data(), vh.data(), dattn.data(), n, dh, n);
      // softmax backward, then fold in the 1/sqrt(dh) scale
      for (size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        const double* ar = attn.data() + i * n;
        double* dr = dattn.data() + i * n;
        for (size_t j = 0; j < n; ++j) dot += ar[j] * dr[j];
        for (size_t j = 0; j < n; ++j) dr[j] = alpha * ar[j] * (dr[j] - dot);
      }
      // dQ_h = dS . K_h ; dK_h = dS^T . Q_h
      std::vector<double> dqh(n * dh, 0.0), dkh(n * dh, 0.0);
      mm_nn(dattn.data(), kh.data(), dqh.data(), n, n, dh);
      mm_tn(dattn.data(), qh.data(), dkh.data(), n, n, dh);
      scatter_head(dqh.data(), qi->grad.data(), h);
      scatter_head(dkh.data(), ki->grad.data(), h);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, const Tensor& targets) {
  require_2d("cross_entropy", logits);
  if (logits.shape() != targets.shape())
    throw Error("shape", "cross_entropy: logits " + shape_str(logits.shape()) +
                             " vs targets " + shape_str(targets.shape()));
  size_t rows = logits.dim(0), cols = logits.dim(1);
  auto probs = std::make_shared<std::vector<double>>(rows * cols);
  auto logp = std::make_shared<std::vector<double>>(rows * cols);
  const double* pl = logits.data().data();
  const double* pt = targets.data().data();
  double total = 0.0;
  for (size_t i = 0; i < rows; ++i) {
    const double* lr = pl + i * cols;
    double mx = lr[0];
    for (size_t j = 1; j < cols; ++j) mx = std::max(mx, lr[j]);
    double denom = 0.0;
    for (size_t j = 0; j < cols; ++j) denom += std::exp(lr[j] - mx);
    double lse = mx + std::log(denom);
    for (size_t j = 0; j < cols; ++j) {
      (*logp)[i * cols + j] = lr[j] - lse;
      (*probs)[i * cols + j] = std::exp(lr[j] - lse);
      total -= pt[i * cols + j] * (lr[j] - lse);
    }
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(rows));
  auto li = logits.impl(), ti = targets.impl(), oi = out.impl();
  return finalize("cross_entropy", {logits, targets}, out,
                  [li, ti, oi, probs, logp, rows, cols] {
    double g = oi->grad[0] / static_cast<double>(rows);
    if (li->requires_grad) {
      li->ensure_grad();
      for (size_t i = 0; i < rows * cols; ++i)
        li->grad[i] += g * ((*probs)[i] - ti->data[i]);
    }
    if (ti->requires_grad) {
      ti->ensure_grad();
      for (size_t i = 0; i < rows * cols; ++i) ti->grad[i] -= g * (*logp)[i];
    }
  });
}

Tensor binary_cross_entropy(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    throw Error("shape", "binary_cross_entropy: shape mismatch");
  size_t n = logits.numel();
  if (n == 0) throw Error("shape", "binary_cross_entropy: empty input");
  const double* pz = logits.data().data();
  const double* py = targets.data().data();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double z = pz[i];
    total += std::max(z, 0.0) - z * py[i] + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  auto li = logits.impl(), ti = targets.impl(), oi = out.impl();
  return finalize("binary_cross_entropy", {logits, targets}, out,
                  [li, ti, oi, n] {
    double g = oi->grad[0] / static_cast<double>(n);
    if (li->requires_grad) {
      li->ensure_grad();
      for (size_t i = 0; i < n; ++i) {
        double z = li->data[i];
        double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                            : std::exp(z) / (1.0 + std::exp(z));
        li->grad[i] += g * (sig - ti->data[i]);
      }
    }
    if (ti->requires_grad) {
      ti->ensure_grad();
      for (size_t i = 0; i < n; ++i) ti->grad[i] -= g * li->data[i];
    }
  });
}

}  // namespace ops

// ---- gradient oracle ----

double finite_diff_check(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double eps) {
  if (eps <= 0.0) throw Error("bounds", "finite_diff_check: eps must be > 0");
  for (const auto& p : params)
    if (!p.requires_grad())
      throw Error("usage", "finite_diff_check: all params must require grad");

  double l1 = f().value();
  double l2 = f().value();
  if (std::memcmp(&l1, &l2, sizeof(double)) != 0)
    throw Error("state", "finite_diff_check: function is not deterministic");

  for (Tensor p : params) p.zero_grad();
  GradTape tape;
  {
    GradTape::Scope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  double max_err = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];  // handle copy, shared storage
    auto& data = p.data();
    for (size_t i = 0; i < data.size(); ++i) {
      double saved = data[i];
      data[i] = saved + eps;
      double lp = f().value();
      data[i] = saved - eps;
      double lm = f().value();
      data[i] = saved;
      double fd = (lp - lm) / (2.0 * eps);
      double err = std::abs(analytic[pi][i] - fd) / std::max(1e-8, std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& point, double eps) {
  Tensor p = point;
  p.set_requires_grad(true);
  return finite_diff_check([&f, &p]() { return f(p); }, {p}, eps);
}

}  // namespace passt
