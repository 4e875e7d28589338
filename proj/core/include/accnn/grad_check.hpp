#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "accnn/tensor.hpp"

namespace accnn {

/// Central finite-difference check of a scalar-valued tensor function against
/// the analytic gradient produced by the tape. Returns the max over probed
/// components of |analytic - fd| / max(1e-8, |analytic| + |fd|).
///
/// f is called as f(tape, x) and must return a scalar tensor. Probes default
/// to every component of x; pass an index list to spot-check large tensors.
template <typename F>
double grad_check_at(F&& f, Tensor<double>& x, const std::vector<std::size_t>& probe,
                     double eps = 1e-5) {
  std::vector<double> analytic(x.numel());
  {
    Tape<double> tape;
    Tensor<double> y = f(tape, x);
    if (!y.is_scalar()) {
      throw std::invalid_argument("grad_check: function output is not scalar, got " +
                                  shape_str(y.shape()));
    }
    x.zero_grad();
    tape.backward(y);
    auto g = x.grad();
    std::copy(g.begin(), g.end(), analytic.begin());
  }
  auto eval = [&](void) -> double {
    Tape<double> tape;
    tape.set_recording(false);
    Tensor<double> y = f(tape, x);
    return y[0];
  };
  double max_rel = 0.0;
  for (std::size_t i : probe) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double fp = eval();
    x[i] = saved - eps;
    const double fm = eval();
    x[i] = saved;
    const double fd = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double rel = std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

template <typename F>
double grad_check(F&& f, Tensor<double>& x, double eps = 1e-5) {
  std::vector<std::size_t> probe(x.numel());
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i;
  return grad_check_at(std::forward<F>(f), x, probe, eps);
}

}  // namespace accnn
