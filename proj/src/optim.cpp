#include "passt/optim.hpp"

#include <cmath>

namespace passt {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    auto& p = params_[pi].data();
    const auto& g = params_[pi].grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw Error("nonfinite", "adamw_step: non-finite gradient");
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                         cfg_.weight_decay * p[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace passt
