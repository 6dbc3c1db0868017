#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "ocrrestore/error.hpp"

namespace ocrrestore {
namespace neural {

using Index = std::int64_t;

// Dense row-major tensor. Instantiated with double for gradient checking
// and float for training.
template <typename T>
struct Tensor {
  std::vector<Index> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<Index> dims, T fill = T{0})
      : shape(std::move(dims)), data(static_cast<std::size_t>(count(shape)), fill) {}

  static Index count(const std::vector<Index>& dims) {
    Index n = 1;
    for (Index d : dims) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<Index> dims) { return Tensor(std::move(dims)); }

  Index numel() const { return static_cast<Index>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  Index dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  T& at(Index i) { return data[static_cast<std::size_t>(i)]; }
  const T& at(Index i) const { return data[static_cast<std::size_t>(i)]; }
  T& at(Index i, Index j) { return data[static_cast<std::size_t>(i * shape[1] + j)]; }
  const T& at(Index i, Index j) const { return data[static_cast<std::size_t>(i * shape[1] + j)]; }
  T& at(Index i, Index j, Index k) {
    return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  const T& at(Index i, Index j, Index k) const {
    return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i > 0) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* context) {
  if (!all_finite(t)) {
    throw NumericError(std::string("non-finite value produced by ") + context);
  }
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw NumericError("shape mismatch: " + msg);
}

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, Index m, Index k, Index n) {
  for (Index i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (Index l = 0; l < k; ++l) {
      const T av = ai[l];
      if (av == T{0}) continue;
      const T* bl = b + l * n;
      for (Index j = 0; j < n; ++j) ci[j] += av * bl[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, Index m, Index k, Index n) {
  for (Index i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (Index j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc{0};
      for (Index l = 0; l < k; ++l) acc += ai[l] * bj[l];
      ci[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, Index m, Index k, Index n) {
  for (Index i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * n;
    for (Index l = 0; l < k; ++l) {
      const T av = ai[l];
      if (av == T{0}) continue;
      T* cl = c + l * n;
      for (Index j = 0; j < n; ++j) cl[j] += av * bi[j];
    }
  }
}

}  // namespace neural
}  // namespace ocrrestore
