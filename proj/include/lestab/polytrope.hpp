#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lestab/error.hpp"
#include "lestab/least_squares.hpp"

namespace lestab {

/// One node of the dimensionless Lane-Emden table.
struct ThetaNode {
  double xi = 0.0;
  double theta = 0.0;
  double dtheta = 0.0;
};

/// Solution of (xi^2 theta')' = -xi^2 theta^n with theta(0) = 1, theta'(0) = 0.
struct DimensionlessSolution {
  double index_n = 0.0;
  double xi1 = 0.0;
  double mass_integral = 0.0;  // -xi1^2 theta'(xi1)
  double tol = 0.0;
  std::vector<ThetaNode> theta_table;

  /// Returns {theta, theta'} at xi, with theta = 0 and theta' frozen beyond xi1.
  std::array<double, 2> eval(double xi) const;

  /// theta'' from the ODE itself.
  double second_derivative(double xi, double theta, double dtheta) const {
    if (xi <= 0.0) return -1.0 / 3.0;
    return -std::pow(std::max(theta, 0.0), index_n) - 2.0 * dtheta / xi;
  }
};

namespace detail {

inline constexpr double kSeriesStart = 1e-4;
inline constexpr double kStep = 2e-4;

inline std::array<double, 2> theta_series(double n, double xi) {
  const double x2 = xi * xi;
  return {1.0 - x2 / 6.0 + n * x2 * x2 / 120.0, -xi / 3.0 + n * x2 * xi / 30.0};
}

inline std::array<double, 2> lane_emden_field(double n, double xi, const std::array<double, 2>& y) {
  return {y[1], -std::pow(std::max(y[0], 0.0), n) - 2.0 * y[1] / xi};
}

inline std::array<double, 2> rk4_step(double n, double xi, const std::array<double, 2>& y, double dx) {
  auto axpy = [](const std::array<double, 2>& a, double s, const std::array<double, 2>& b) {
    return std::array<double, 2>{a[0] + s * b[0], a[1] + s * b[1]};
  };
  const auto k1 = lane_emden_field(n, xi, y);
  const auto k2 = lane_emden_field(n, xi + 0.5 * dx, axpy(y, 0.5 * dx, k1));
  const auto k3 = lane_emden_field(n, xi + 0.5 * dx, axpy(y, 0.5 * dx, k2));
  const auto k4 = lane_emden_field(n, xi + dx, axpy(y, dx, k3));
  return {y[0] + dx / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
          y[1] + dx / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
}

inline double hermite(double t, double dx, double f0, double f1, double d0, double d1) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * dx * d0 + (-2 * t3 + 3 * t2) * f1 +
         (t3 - t2) * dx * d1;
}

}  // namespace detail

inline std::array<double, 2> DimensionlessSolution::eval(double xi) const {
  if (xi >= xi1) return {0.0, theta_table.back().dtheta};
  if (xi <= theta_table.front().xi) return detail::theta_series(index_n, std::max(xi, 0.0));
  auto hi = std::upper_bound(theta_table.begin(), theta_table.end(), xi,
                             [](double v, const ThetaNode& node) { return v < node.xi; });
  auto lo = hi - 1;
  const double dx = hi->xi - lo->xi;
  const double t = (xi - lo->xi) / dx;
  const double theta = detail::hermite(t, dx, lo->theta, hi->theta, lo->dtheta, hi->dtheta);
  const double dtheta = detail::hermite(t, dx, lo->dtheta, hi->dtheta,
                                        second_derivative(lo->xi, lo->theta, lo->dtheta),
                                        second_derivative(hi->xi, hi->theta, hi->dtheta));
  return {std::max(theta, 0.0), dtheta};
}

inline DimensionlessSolution solve_dimensionless(double index_n, double tol = 1e-10) {
  if (!(index_n >= 0.0) || index_n >= 5.0) {
    std::ostringstream msg;
    msg << "polytropic index n = " << index_n << " outside [0, 5)";
    if (index_n >= 5.0) msg << "; n >= 5 (gamma <= 6/5) has infinite support";
    throw Error(ErrorKind::unsupported_index, msg.str());
  }
  if (!(tol > 0.0)) throw Error(ErrorKind::domain, "tolerance must be positive");

  const double n = index_n;
  DimensionlessSolution sol;
  sol.index_n = n;
  sol.tol = tol;

  std::vector<ThetaNode> nodes;
  double xi = detail::kSeriesStart;
  auto y = detail::theta_series(n, xi);
  nodes.push_back({xi, y[0], y[1]});

  const double xi_max = 1e3;
  std::array<double, 2> y_next{};
  for (;;) {
    y_next = detail::rk4_step(n, xi, y, detail::kStep);
    if (y_next[0] <= 0.0) break;
    xi += detail::kStep;
    y = y_next;
    nodes.push_back({xi, y[0], y[1]});
    if (xi > xi_max) throw Error(ErrorKind::solver_failure, "no zero of theta found");
  }

  // Bisection on the length of a single RK4 step from the last positive node.
  double lo = 0.0;
  double hi = detail::kStep;
  const double width = std::min(tol, 1e-14);
  int iterations = 0;
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (detail::rk4_step(n, xi, y, mid)[0] > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (++iterations > 200) throw Error(ErrorKind::solver_failure, "root bracket did not converge");
  }
  const double s = 0.5 * (lo + hi);
  const double xi1 = xi + s;
  const auto y1 = detail::rk4_step(n, xi, y, s);
  if (std::abs(y1[0]) > 1e3 * tol) throw Error(ErrorKind::solver_failure, "theta(xi1) not small");

  // Geometric clustering of extra nodes toward xi1 over the outer tenth of the support.
  std::vector<ThetaNode> extra;
  for (double d = 0.1 * xi1; d > 1e-9 * xi1; d *= 0.7) {
    const double target = xi1 - d;
    auto it = std::upper_bound(nodes.begin(), nodes.end(), target,
                               [](double v, const ThetaNode& node) { return v < node.xi; });
    if (it == nodes.begin()) continue;
    const ThetaNode& base = *(it - 1);
    const double step = target - base.xi;
    if (step <= 1e-3 * detail::kStep) continue;
    const auto yt = detail::rk4_step(n, base.xi, {base.theta, base.dtheta}, step);
    if (yt[0] > 0.0) extra.push_back({target, yt[0], yt[1]});
  }
  nodes.insert(nodes.end(), extra.begin(), extra.end());
  std::sort(nodes.begin(), nodes.end(), [](const ThetaNode& a, const ThetaNode& b) { return a.xi < b.xi; });
  nodes.push_back({xi1, 0.0, y1[1]});

  sol.xi1 = xi1;
  sol.mass_integral = -xi1 * xi1 * y1[1];
  sol.theta_table = std::move(nodes);
  return sol;
}

/// Evaluation of the background at one radius.
struct ProfilePoint {
  double rho = 0.0;
  double q = 0.0;    // (rho^gamma)_x = -x phi rho
  double phi = 0.0;  // x^{-3} int_0^x 4 pi rho s^2 ds
};

struct ProfileRow {
  double x = 0.0;
  double rho = 0.0;
  double q = 0.0;
  double phi = 0.0;
};

/// Lane-Emden equilibrium with K = G = 1 and prescribed total mass.
struct PolytropeProfile {
  double gamma = 0.0;
  double total_mass = 0.0;
  double radius_bar_R = 0.0;
  double rho_center = 0.0;
  double polytropic_index = 0.0;
  double alpha = 0.0;  // x = alpha xi
  double tol = 0.0;
  std::shared_ptr<const DimensionlessSolution> dimensionless;

  ProfilePoint eval(double x) const {
    if (!(x >= 0.0) || x > radius_bar_R * (1.0 + 1e-14)) {
      std::ostringstream msg;
      msg << "x = " << x << " outside [0, " << radius_bar_R << "]";
      throw Error(ErrorKind::domain, msg.str());
    }
    const double n = polytropic_index;
    const double xi = x / alpha;
    ProfilePoint p;
    double minus_dtheta_over_xi = 0.0;
    if (xi < detail::kSeriesStart) {
      minus_dtheta_over_xi = 1.0 / 3.0 - n * xi * xi / 30.0;
      p.rho = rho_center * std::pow(detail::theta_series(n, xi)[0], n);
    } else if (x >= radius_bar_R) {
      minus_dtheta_over_xi = -dimensionless->theta_table.back().dtheta / dimensionless->xi1;
      p.rho = 0.0;
    } else {
      const auto th = dimensionless->eval(xi);
      minus_dtheta_over_xi = -th[1] / xi;
      p.rho = rho_center * std::pow(th[0], n);
    }
    p.phi = 4.0 * std::numbers::pi * rho_center * minus_dtheta_over_xi;
    p.q = -x * p.phi * p.rho;
    return p;
  }

  /// The stored sampling of x in [0, R], including the clustering near the boundary.
  std::vector<ProfileRow> table() const {
    std::vector<ProfileRow> rows;
    rows.reserve(dimensionless->theta_table.size() + 1);
    auto push = [&](double x) {
      const auto p = eval(x);
      rows.push_back({x, p.rho, p.q, p.phi});
    };
    push(0.0);
    for (const auto& node : dimensionless->theta_table) {
      push(std::min(node.xi * alpha, radius_bar_R));
    }
    rows.back().x = radius_bar_R;
    return rows;
  }
};

/// Lane-Emden profile for gamma in (6/5, 2] and mass M; the stability range (4/3, 2) is enforced by callers.
inline PolytropeProfile solve_lane_emden(double gamma, double total_mass, double tol = 1e-10) {
  if (!(total_mass > 0.0)) throw Error(ErrorKind::domain, "total mass must be positive");
  if (!(gamma > 1.0) || gamma > 2.0) throw Error(ErrorKind::domain, "gamma must lie in (1, 2]");
  const double n = 1.0 / (gamma - 1.0);
  if (std::abs(n - 3.0) < 1e-12) {
    throw Error(ErrorKind::domain, "gamma = 4/3: the mass does not determine the radius");
  }
  auto sol = std::make_shared<const DimensionlessSolution>(solve_dimensionless(n, tol));

  const double pi = std::numbers::pi;
  const double base = total_mass / (4.0 * pi * sol->mass_integral * std::pow((n + 1.0) / (4.0 * pi), 1.5));
  PolytropeProfile p;
  p.gamma = gamma;
  p.total_mass = total_mass;
  p.polytropic_index = n;
  p.tol = tol;
  p.rho_center = std::pow(base, 2.0 * n / (3.0 - n));
  p.alpha = std::sqrt((n + 1.0) * std::pow(p.rho_center, 1.0 / n - 1.0) / (4.0 * pi));
  p.radius_bar_R = p.alpha * sol->xi1;
  p.dimensionless = std::move(sol);
  return p;
}

struct HolderReport {
  double slope = 0.0;
  double window_lo = 0.0;  // distance to the boundary
  double window_hi = 0.0;
  int samples = 0;
  bool pass = false;
};

/// Fits log(rho^{gamma-1}) = a + s log d + c d with d = R - x over the outer 5% of the support.
inline HolderReport verify_physical_vacuum(const std::function<double(double)>& density, double radius,
                                           double gamma, int samples = 64) {
  HolderReport rep;
  rep.window_lo = 1e-6 * radius;
  rep.window_hi = 0.05 * radius;
  std::vector<double> logd;
  std::vector<double> d_col;
  std::vector<double> y;
  for (int i = 0; i < samples; ++i) {
    const double frac = samples > 1 ? static_cast<double>(i) / (samples - 1) : 0.0;
    const double d = rep.window_lo * std::pow(rep.window_hi / rep.window_lo, frac);
    const double rho = density(radius - d);
    if (!(rho > 0.0) || !std::isfinite(rho)) continue;
    logd.push_back(std::log(d));
    d_col.push_back(d / radius);
    y.push_back((gamma - 1.0) * std::log(rho));
  }
  rep.samples = static_cast<int>(y.size());
  if (rep.samples < 8) {
    throw Error(ErrorKind::insufficient_resolution,
                "only " + std::to_string(rep.samples) + " usable samples in the vacuum window");
  }
  std::vector<std::vector<double>> columns{std::vector<double>(y.size(), 1.0), logd, d_col};
  rep.slope = least_squares(columns, y).coefficients[1];
  rep.pass = rep.slope >= 0.95 && rep.slope <= 1.05;
  return rep;
}

inline HolderReport verify_physical_vacuum(const PolytropeProfile& profile, int samples = 64) {
  return verify_physical_vacuum([&](double x) { return profile.eval(x).rho; }, profile.radius_bar_R,
                                profile.gamma, samples);
}

}  // namespace lestab
