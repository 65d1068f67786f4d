#pragma once

// Shared test helpers: random tensors and the central-finite-difference
// gradient oracle the autodiff checks compare against. The oracle evaluates
// the loss without any tape, so it is independent of the backward path it
// verifies.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "beamstop/rng.hpp"
#include "beamstop/tensor.hpp"

namespace testsupport {

inline beamstop::Tensor rand_tensor(beamstop::Rng& rng, std::size_t r,
                                    std::size_t c, double lo = -1.0,
                                    double hi = 1.0) {
  beamstop::Tensor t(r, c);
  for (auto& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

struct GradCheckResult {
  double max_err = 0.0;    // worst |ad - fd| / max(1, |fd|)
  std::size_t coords = 0;  // coordinates compared
};

// Compares reverse-mode gradients of loss_fn() against central differences
// for every coordinate of every tensor in `inputs`. The error is relative
// with an absolute floor of 1 in the denominator, so near-zero gradients are
// held to an absolute 'tol'.
inline GradCheckResult grad_check(const std::function<beamstop::Tensor()>& loss_fn,
                                  std::vector<beamstop::Tensor> inputs,
                                  double h = 1e-5) {
  using namespace beamstop;
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = loss_fn();
    backward(loss);
  }
  GradCheckResult res;
  for (auto& t : inputs) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t.values()[i];
      t.values()[i] = orig + h;
      const double f_plus = loss_fn().item();
      t.values()[i] = orig - h;
      const double f_minus = loss_fn().item();
      t.values()[i] = orig;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      const double ad = t.has_grad() ? t.grad()[i] : 0.0;
      const double err = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
      res.max_err = std::max(res.max_err, err);
      ++res.coords;
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return res;
}

inline bool all_finite(const beamstop::Tensor& t) {
  for (double x : t.values())
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace testsupport
