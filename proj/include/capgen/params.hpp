#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capgen/tensor.hpp"

namespace capgen {

// Named parameter registry. Insertion order is the traversal order for the
// optimizer and checkpoints, so it must be deterministic.
class ParamMap {
 public:
  void add(std::string name, Tensor t) { items_.emplace_back(std::move(name), std::move(t)); }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace capgen
