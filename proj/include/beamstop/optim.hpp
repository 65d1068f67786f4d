#pragma once

// Named parameter collections and the Adagrad update.

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "beamstop/tensor.hpp"

namespace beamstop {

// Ordered list of named parameters. Registration order is the iteration and
// checkpoint order, so it must be deterministic.
class Params {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    for (const auto& [n, unused] : items_)
      if (n == name)
        throw std::logic_error("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  void zero_grad() {
    for (auto& [n, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// p <- p - lr * g / sqrt(G + eps), with G the per-coordinate running sum of
// squared gradients (accumulated before the update). Gradients are cleared
// after the step.
class Adagrad {
 public:
  explicit Adagrad(Params& params, double lr, double eps = 1e-10)
      : params_(&params), lr_(lr), eps_(eps) {
    for (auto& [name, t] : params) accum_.emplace_back(t.size(), 0.0);
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  void decay_lr(double factor) { lr_ *= factor; }

  void step() {
    std::size_t idx = 0;
    for (auto& [name, t] : *params_) {
      auto& G = accum_[idx++];
      if (!t.has_grad()) continue;
      auto& g = t.grad();
      auto& v = t.values();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double gi = g[i];
        G[i] += gi * gi;
        v[i] -= lr_ * gi / std::sqrt(G[i] + eps_);
      }
    }
    params_->zero_grad();
  }

 private:
  Params* params_;
  double lr_;
  double eps_;
  std::vector<std::vector<double>> accum_;
};

}  // namespace beamstop
