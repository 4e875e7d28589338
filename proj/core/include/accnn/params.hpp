#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "accnn/tensor.hpp"

namespace accnn {

/// Ordered registry of named parameter tensors. Insertion order is the
/// canonical order for checkpointing and optimizer updates, so identical
/// construction sequences give identical on-disk layouts and update order.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown name " + name);
    return items_[it->second].second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown name " + name);
    return items_[it->second].second;
  }

  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& [n, t] : items_) out.push_back(n);
    return out;
  }

  void zero_grad() {
    for (auto& [n, t] : items_) {
      if (t.requires_grad()) t.zero_grad();
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Zero-mean Gaussian fill, the initialization used for every learned layer.
template <typename T>
void fill_gaussian(Tensor<T>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
Tensor<T>& add_gaussian_param(ParamStore<T>& store, const std::string& name, Shape shape,
                              double stddev, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape), true);
  fill_gaussian(t, stddev, rng);
  return store.add(name, std::move(t));
}

template <typename T>
Tensor<T>& add_zero_param(ParamStore<T>& store, const std::string& name, Shape shape) {
  return store.add(name, Tensor<T>(std::move(shape), true));
}

}  // namespace accnn
