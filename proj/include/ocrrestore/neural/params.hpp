#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "ocrrestore/error.hpp"
#include "ocrrestore/neural/tensor.hpp"
#include "ocrrestore/rng.hpp"

namespace ocrrestore {
namespace neural {

// Named parameters with gradients, kept in insertion order so iteration,
// serialization and Adam state stay deterministic.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> init) {
    if (index_.count(name) > 0) throw DataError("duplicate parameter name: " + name);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(Entry{name, std::move(init), Tensor<T>()});
    Entry& e = entries_.back();
    e.grad = Tensor<T>::zeros(e.value.shape);
    return e.value;
  }

  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  Tensor<T>& add_uniform(const std::string& name, std::vector<Index> dims, Index fan_in,
                         RandomSource& rng) {
    Tensor<T> t(std::move(dims));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (T& v : t.data) v = static_cast<T>((rng.uniform() * 2.0 - 1.0) * bound);
    return add(name, std::move(t));
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Entry& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter: " + name);
    return entries_[static_cast<std::size_t>(it->second)];
  }
  const Entry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter: " + name);
    return entries_[static_cast<std::size_t>(it->second)];
  }

  Tensor<T>& value(const std::string& name) { return at(name).value; }
  const Tensor<T>& value(const std::string& name) const { return at(name).value; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads() {
    for (Entry& e : entries_) e.grad.fill(T{0});
  }

  Index total_params() const {
    Index n = 0;
    for (const Entry& e : entries_) n += e.value.numel();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace neural
}  // namespace ocrrestore
