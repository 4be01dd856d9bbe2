/**
 * @file optim.hpp
 * @brief Adaptive-moment optimizer with decoupled weight decay.
 *
 * Decay is applied to the parameter before the moment-based update term,
 * p <- p - lr*wd*p, then p <- p - lr * mhat / (sqrt(vhat) + eps).
 */
#pragma once

#include <string>
#include <vector>

#include "wwm/autodiff.hpp"
#include "wwm/tensor.hpp"

namespace wwm {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.04;
};

template <typename T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<ad::Var<T>> params, AdamWConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.push_back(Tensor<T>::zeros(p->val.shape));
      v_.push_back(Tensor<T>::zeros(p->val.shape));
    }
  }

  std::size_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  std::vector<ad::Var<T>>& params() { return params_; }
  std::vector<Tensor<T>>& moment1() { return m_; }
  std::vector<Tensor<T>>& moment2() { return v_; }
  void set_step_count(std::size_t s) { step_ = s; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  /// One update with the given learning rate. Throws if any gradient has a
  /// NaN; the step is aborted before touching parameters.
  void step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (!params_[i]->grad.v.empty() && ad::has_nan(params_[i]->grad))
        throw std::runtime_error("optimizer_step: NaN gradient in param " +
                                 std::to_string(i));
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const std::size_t n = p->val.numel();
      T* w = p->val.v.data();
      T* m = m_[i].v.data();
      T* v = v_[i].v.data();
      const bool has_grad = !p->grad.v.empty();
      const T* g = has_grad ? p->grad.v.data() : nullptr;
      const T decay = static_cast<T>(1.0 - lr * cfg_.weight_decay);
      for (std::size_t j = 0; j < n; ++j) {
        const double gj = has_grad ? static_cast<double>(g[j]) : 0.0;
        w[j] *= decay;
        m[j] = static_cast<T>(cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj);
        v[j] = static_cast<T>(cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj);
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  std::vector<ad::Var<T>> params_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  AdamWConfig cfg_;
  std::size_t step_ = 0;
};

}  // namespace wwm
