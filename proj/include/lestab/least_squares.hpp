#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lestab {

struct LinearFit {
  std::vector<double> coefficients;
  double rms_residual = 0.0;
};

/// Ordinary least squares for y ~ sum_j c_j * columns[j].
inline LinearFit least_squares(const std::vector<std::vector<double>>& columns,
                               std::span<const double> y) {
  const auto rows = static_cast<Eigen::Index>(y.size());
  const auto cols = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd design(rows, cols);
  Eigen::VectorXd rhs(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    rhs(i) = y[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < cols; ++j) {
      design(i, j) = columns[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    }
  }
  const Eigen::VectorXd c = design.colPivHouseholderQr().solve(rhs);
  const Eigen::VectorXd r = design * c - rhs;

  LinearFit fit;
  fit.coefficients.assign(c.data(), c.data() + c.size());
  fit.rms_residual = rows > 0 ? std::sqrt(r.squaredNorm() / static_cast<double>(rows)) : 0.0;
  return fit;
}

/// Straight line y ~ a + b x; returns {a, b} and the rms residual.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  std::vector<std::vector<double>> columns(2);
  columns[0].assign(x.size(), 1.0);
  columns[1].assign(x.begin(), x.end());
  return least_squares(columns, y);
}

}  // namespace lestab
