#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mvmol/error.hpp"
#include "mvmol/rng.hpp"

namespace mvmol {

/// Dense row-major tensor. Storage is `S` (float in the production model,
/// double in the finite-difference oracles); `grad` stays empty until a
/// backward pass deposits into it. No views or strides: every op copies.
template <class S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty, or same length as data
  bool requires_grad = false;

  TensorT() = default;
  TensorT(std::vector<int> shape_, std::vector<S> data_)
      : shape(std::move(shape_)), data(std::move(data_)) {
    require(numel() == static_cast<int64_t>(data.size()), ErrorKind::Shape,
            "tensor data does not match shape");
  }

  static TensorT zeros(std::vector<int> shape) {
    TensorT t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(t.numel()), S(0));
    return t;
  }

  static TensorT full(std::vector<int> shape, S v) {
    TensorT t = zeros(std::move(shape));
    for (auto& x : t.data) x = v;
    return t;
  }

  static TensorT scalar(S v) { return TensorT({1, 1}, {v}); }

  /// Truncated-normal fill, std `std_dev`.
  static TensorT randn(std::vector<int> shape, Rng& rng, double std_dev) {
    TensorT t = zeros(std::move(shape));
    for (auto& x : t.data) x = static_cast<S>(rng.truncated_normal(std_dev));
    return t;
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) {
      require(d >= 0, ErrorKind::Shape, "negative dimension");
      n *= d;
    }
    return n;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 0); }
  int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

  S& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  S at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  S item() const {
    require(numel() == 1, ErrorKind::Shape, "item() on non-scalar tensor");
    return data[0];
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }
  void zero_grad() { grad.assign(data.size(), S(0)); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S x : data)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class T2>
  TensorT<T2> cast() const {
    TensorT<T2> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (S x : data) out.data.push_back(static_cast<T2>(x));
    out.requires_grad = requires_grad;
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace mvmol
