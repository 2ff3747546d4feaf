#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bood/tensor.hpp"

namespace bood {

/// Adam with bias correction. Defaults beta1=0.9, beta2=0.999, eps=1e-8;
/// only the learning rate is task-specific.
template <class T>
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  long long step_count() const { return t_; }
  double lr() const { return lr_; }

  /// One update over a parameter list; shapes must match step to step.
  /// A non-finite gradient aborts, naming the offending parameter.
  void step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
            const std::vector<std::string>& names) {
    detail::require(params.size() == grads.size() && params.size() == names.size(),
                    "adam: list size mismatch");
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->shape);
        v_.emplace_back(p->shape);
      }
    }
    detail::require(m_.size() == params.size(), "adam: parameter count changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor<T>& p = *params[pi];
      const Tensor<T>& g = *grads[pi];
      detail::require(p.same_shape(g) && p.same_shape(m_[pi]), "adam: shape mismatch for " + names[pi]);
      T* pd = p.data.data();
      const T* gd = g.data.data();
      T* md = m_[pi].data.data();
      T* vd = v_[pi].data.data();
      const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
      const T one_m_b1 = T(1) - b1, one_m_b2 = T(1) - b2;
      const T lr_t = static_cast<T>(lr_), eps = static_cast<T>(eps_);
      const T ibc1 = static_cast<T>(1.0 / bc1), ibc2 = static_cast<T>(1.0 / bc2);
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        if (!std::isfinite(static_cast<double>(gd[i])))
          throw std::runtime_error("NaN gradient in parameter " + names[pi] + " at index " +
                                   std::to_string(i));
        md[i] = b1 * md[i] + one_m_b1 * gd[i];
        vd[i] = b2 * vd[i] + one_m_b2 * gd[i] * gd[i];
        const T mhat = md[i] * ibc1;
        const T vhat = vd[i] * ibc2;
        pd[i] -= lr_t * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace bood
