#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lestab/error.hpp"

namespace lestab {

/// Square tridiagonal matrix; lower[0] and upper[m-1] are unused.
struct Tridiagonal {
  std::vector<double> lower;
  std::vector<double> diag;
  std::vector<double> upper;

  explicit Tridiagonal(std::size_t m = 0) : lower(m, 0.0), diag(m, 0.0), upper(m, 0.0) {}

  std::size_t size() const { return diag.size(); }

  std::vector<double> apply(const std::vector<double>& x) const {
    const std::size_t m = size();
    std::vector<double> y(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double s = diag[i] * x[i];
      if (i > 0) s += lower[i] * x[i - 1];
      if (i + 1 < m) s += upper[i] * x[i + 1];
      y[i] = s;
    }
    return y;
  }

  /// Returns I - c * this.
  Tridiagonal shifted_identity(double c) const {
    Tridiagonal out(size());
    for (std::size_t i = 0; i < size(); ++i) {
      out.lower[i] = -c * lower[i];
      out.diag[i] = 1.0 - c * diag[i];
      out.upper[i] = -c * upper[i];
    }
    return out;
  }
};

/// Thomas recurrence; a vanishing or non-finite pivot raises step-failure.
inline std::vector<double> solve_tridiagonal(const Tridiagonal& a, std::vector<double> rhs) {
  const std::size_t m = a.size();
  if (m == 0) return rhs;
  std::vector<double> c_prime(m, 0.0);
  double pivot = a.diag[0];
  auto check = [](double p) {
    if (!std::isfinite(p) || std::abs(p) < 1e-300) {
      throw Error(ErrorKind::step_failure, "singular tridiagonal system");
    }
  };
  check(pivot);
  c_prime[0] = a.upper[0] / pivot;
  rhs[0] /= pivot;
  for (std::size_t i = 1; i < m; ++i) {
    pivot = a.diag[i] - a.lower[i] * c_prime[i - 1];
    check(pivot);
    c_prime[i] = (i + 1 < m) ? a.upper[i] / pivot : 0.0;
    rhs[i] = (rhs[i] - a.lower[i] * rhs[i - 1]) / pivot;
  }
  for (std::size_t i = m - 1; i-- > 0;) {
    rhs[i] -= c_prime[i] * rhs[i + 1];
  }
  return rhs;
}

}  // namespace lestab
