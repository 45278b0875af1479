#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ggt {

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense row-major n-d array. Default scalar is float; the double
/// instantiation exists for finite-difference gradient checks.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor extent must be positive, got shape " + shape_str(shape));
    }
    data.assign(count(shape), fill);
  }

  static Tensor from(std::vector<int> s, std::vector<T> d) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    if (t.data.size() != count(t.shape)) {
      throw std::invalid_argument("tensor data length " + std::to_string(t.data.size()) +
                                  " does not match shape " + shape_str(t.shape));
    }
    return t;
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // 4-d NCHW accessors (rank checked by the ops, not here).
  std::size_t idx4(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
  }
  T& at4(int n, int c, int h, int w) { return data[idx4(n, c, h, w)]; }
  const T& at4(int n, int c, int h, int w) const { return data[idx4(n, c, h, w)]; }

  std::size_t idx2(int i, int j) const { return static_cast<std::size_t>(i) * shape[1] + j; }
  T& at2(int i, int j) { return data[idx2(i, j)]; }
  const T& at2(int i, int j) const { return data[idx2(i, j)]; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  T max_abs() const {
    T m = T(0);
    for (const T& v : data) {
      const T a = v < T(0) ? -v : v;
      if (a > m) m = a;
    }
    return m;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TensorI = Tensor<int>;

template <typename To, typename From>
Tensor<To> cast_tensor(const Tensor<From>& t) {
  Tensor<To> out;
  out.shape = t.shape;
  out.data.reserve(t.data.size());
  for (const From& v : t.data) out.data.push_back(static_cast<To>(v));
  return out;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  }
}

}  // namespace ggt
