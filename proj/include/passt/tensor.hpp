#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "passt/common.hpp"

namespace passt {

namespace detail {

struct TensorData {
  std::vector<size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until touched; treated as zeros
  bool requires_grad = false;

  size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats. Value-semantics handle onto
// shared storage; copies alias. All primitives verify their outputs are
// finite and record themselves on the active GradTape when any input
// requires gradients.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape, double fill = 0.0);
  Tensor(std::vector<size_t> shape, std::vector<double> data);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<size_t>& shape() const { return impl_->shape; }
  size_t rank() const { return impl_->shape.size(); }
  size_t dim(size_t i) const { return impl_->shape.at(i); }
  size_t numel() const { return impl_->numel(); }
  size_t rows() const { return impl_->shape.at(0); }
  size_t cols() const { return impl_->shape.at(1); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  double value() const;                    // scalar fetch, throws if numel != 1
  double at(size_t i, size_t j) const {    // 2-D convenience
    return impl_->data[i * cols() + j];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }
  // Gradient accumulated by the last backward pass; zeros if untouched
  // (a parameter with no path to the loss keeps a zero gradient).
  const std::vector<double>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    if (impl_) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  std::shared_ptr<detail::TensorData> impl() const { return impl_; }
  static Tensor wrap(std::shared_ptr<detail::TensorData> impl);

 private:
  std::shared_ptr<detail::TensorData> impl_;
};

// Linear record of primitive applications in execution order (inputs always
// precede consumers). backward() replays the record once, in reverse.
class GradTape {
 public:
  struct Node {
    const char* op;
    std::vector<std::shared_ptr<detail::TensorData>> inputs;
    std::shared_ptr<detail::TensorData> output;
    std::function<void()> backward;
  };

  // RAII activation; primitives record onto the innermost active tape.
  class Scope {
   public:
    explicit Scope(GradTape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* prev_;
  };

  static GradTape* active();

  void record(const char* op, std::vector<Tensor> inputs, const Tensor& output,
              std::function<void()> backward);
  // Seeds d(loss)/d(loss) = 1 and sweeps the record backwards, accumulating
  // gradients into every requires_grad tensor. loss must be scalar.
  void backward(const Tensor& loss);
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

namespace ops {

// C = op(A) . op(B) with optional transposes; 2-D only.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
              bool trans_b = false);
Tensor add(const Tensor& a, const Tensor& b);         // same shape
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // (R,C) + (C,)
Tensor mul(const Tensor& a, const Tensor& b);         // elementwise
Tensor scale(const Tensor& a, double c);
Tensor sum(const Tensor& a);  // -> scalar
Tensor mean_axis(const Tensor& a, int axis);  // 2-D; axis 0 -> (C,), 1 -> (R,)
Tensor softmax(const Tensor& a);  // last axis, max-subtracted
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);  // last axis, population variance
Tensor gelu(const Tensor& x);         // exact erf form
Tensor relu(const Tensor& x);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, size_t start, size_t len);
Tensor slice_cols(const Tensor& x, size_t start, size_t len);
// Embedding lookup / row subset selection: out[i, :] = table[idx[i], :].
// Rows never selected receive zero gradient.
Tensor gather_rows(const Tensor& table, const std::vector<size_t>& idx);

// Fused scaled-dot-product attention over all heads: q, k, v are (n, d) with
// d divisible by n_heads; per head A = softmax(Q K^T / sqrt(d_head)), output
// packs A V back into (n, d). The backward pass recomputes A from q and k
// instead of keeping n^2 buffers alive on the tape. If attn_rowsums is given,
// per-head attention row sums are written there (one vector per head).
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            size_t n_heads,
                            std::vector<std::vector<double>>* attn_rowsums = nullptr);

// Softmax cross-entropy with probability targets, mean over rows. Target
// rows must sum to 1 (one-hot or mixup-blended).
Tensor cross_entropy(const Tensor& logits, const Tensor& targets);
// Sigmoid + binary cross-entropy (numerically fused), mean over all entries.
Tensor binary_cross_entropy(const Tensor& logits, const Tensor& targets);

}  // namespace ops

// Max over parameter coordinates of |g_analytic - g_central_diff| relative
// error. f() evaluates the scalar loss from the current parameter values;
// it is run twice up front and must agree bit-for-bit (else "state" error).
double finite_diff_check(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double eps = 1e-5);
// Single-point form: f maps a point tensor to a scalar loss.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& point, double eps = 1e-5);

}  // namespace passt
