#pragma once

#include <cmath>
#include <functional>

#include "mvmol/autodiff.hpp"

namespace mvmol {

/// Finite-difference oracle for backward rules. `f` builds a scalar loss on
/// the given tape from the leaf var it is handed; the analytic gradient from
/// one backward pass is compared against central differences of the forward
/// value alone. Returns max over coordinates of
///   |analytic - numeric| / max(1, |analytic|).
/// Run with S = double: the forward path is then evaluated entirely in double
/// precision, which is what makes the 1e-4 tolerance meaningful.
template <class S>
double grad_check(const std::function<VarT<S>(TapeT<S>&, VarT<S>)>& f, TensorT<S> x,
                  double h = 1e-4) {
  x.requires_grad = true;
  x.zero_grad();
  TensorT<S> analytic;
  {
    TapeT<S> tape;
    VarT<S> leaf = tape.leaf(x);
    VarT<S> loss = f(tape, leaf);
    require(loss.val().numel() == 1, ErrorKind::Shape, "grad_check: f must return a scalar");
    tape.backward(loss);
    analytic = x;  // grads were deposited into x.grad
  }
  auto value_at = [&](const TensorT<S>& probe) -> double {
    TensorT<S> frozen = probe;
    frozen.requires_grad = false;
    TapeT<S> tape;
    VarT<S> leaf = tape.leaf(frozen);
    return static_cast<double>(f(tape, leaf).val().data[0]);
  };
  double worst = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    TensorT<S> xp = x, xm = x;
    xp.data[i] += static_cast<S>(h);
    xm.data[i] -= static_cast<S>(h);
    const double numeric = (value_at(xp) - value_at(xm)) / (2.0 * h);
    const double a = static_cast<double>(analytic.grad[i]);
    const double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mvmol
