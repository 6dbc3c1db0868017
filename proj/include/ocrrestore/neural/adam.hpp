#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ocrrestore/error.hpp"
#include "ocrrestore/neural/params.hpp"
#include "ocrrestore/neural/tensor.hpp"

namespace ocrrestore {
namespace neural {

// Adam with bias correction and a static learning rate. Moment buffers are
// laid out parallel to the store's entry order, so the same optimizer must
// be reused with the same store throughout a run.
template <typename T>
class Adam {
 public:
  explicit Adam(T lr = static_cast<T>(5e-4), T beta1 = static_cast<T>(0.9),
                T beta2 = static_cast<T>(0.999), T eps = static_cast<T>(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  T learning_rate() const { return lr_; }
  std::int64_t steps() const { return t_; }

  void step(ParamStore<T>& store) {
    auto& entries = store.entries();
    if (m_.empty()) {
      m_.reserve(entries.size());
      v_.reserve(entries.size());
      for (const auto& e : entries) {
        m_.push_back(Tensor<T>::zeros(e.value.shape));
        v_.push_back(Tensor<T>::zeros(e.value.shape));
      }
    }
    require(m_.size() == entries.size(), "optimizer state does not match parameter store");
    ++t_;
    const T bc1 = T{1} - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T{1} - std::pow(beta2_, static_cast<T>(t_));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& e = entries[i];
      check_finite(e.grad, ("gradient of " + e.name).c_str());
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (Index j = 0; j < e.value.numel(); ++j) {
        const T g = e.grad.at(j);
        m.at(j) = beta1_ * m.at(j) + (T{1} - beta1_) * g;
        v.at(j) = beta2_ * v.at(j) + (T{1} - beta2_) * g * g;
        const T mhat = m.at(j) / bc1;
        const T vhat = v.at(j) / bc2;
        e.value.at(j) -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      check_finite(e.value, ("updated " + e.name).c_str());
    }
  }

 private:
  T lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

}  // namespace neural
}  // namespace ocrrestore
