#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lestab/error.hpp"
#include "lestab/polytrope.hpp"
#include "lestab/tridiagonal.hpp"

namespace lestab {

/// Frozen coefficients of the semi-discrete scheme on the uniform reference grid.
struct BackgroundGrid {
  int N = 0;
  double h = 0.0;
  double gamma = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double mu = 0.0;
  double radius = 0.0;
  double total_mass = 0.0;
  std::vector<double> x;
  std::vector<double> rho_bar;
  std::vector<double> rho_gamma;  // rho_bar^gamma
  std::vector<double> q_bar;      // (rho_bar^gamma)_x = -x phi rho_bar
  std::vector<double> phi;

  /// Exponent (2 lambda2 - 4 lambda1 / 3) / mu of the vacuum closure.
  double closure_exponent() const { return (2.0 * lambda2 - 4.0 * lambda1 / 3.0) / mu; }

  double cell_width(int k) const { return x[k] - x[k - 1]; }
};

inline BackgroundGrid sample_background(const PolytropeProfile& profile, int N, double lambda1,
                                        double lambda2) {
  if (N < 16) throw Error(ErrorKind::domain, "N must be at least 16");
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) {
    throw Error(ErrorKind::domain, "viscosities lambda1, lambda2 must be positive");
  }
  BackgroundGrid bg;
  bg.N = N;
  bg.gamma = profile.gamma;
  bg.lambda1 = lambda1;
  bg.lambda2 = lambda2;
  bg.mu = 4.0 * lambda1 / 3.0 + lambda2;
  bg.radius = profile.radius_bar_R;
  bg.total_mass = profile.total_mass;
  bg.h = profile.radius_bar_R / N;
  const auto size = static_cast<std::size_t>(N) + 1;
  bg.x.resize(size);
  bg.rho_bar.resize(size);
  bg.rho_gamma.resize(size);
  bg.q_bar.resize(size);
  bg.phi.resize(size);
  for (int n = 0; n <= N; ++n) {
    const double x = (n == N) ? profile.radius_bar_R : n * bg.h;
    const auto p = profile.eval(x);
    bg.x[n] = x;
    bg.rho_bar[n] = p.rho;
    bg.rho_gamma[n] = std::pow(p.rho, profile.gamma);
    bg.q_bar[n] = p.q;
    bg.phi[n] = p.phi;
  }
  bg.rho_bar[N] = 0.0;
  bg.rho_gamma[N] = 0.0;
  bg.q_bar[0] = 0.0;
  bg.q_bar[N] = 0.0;
  return bg;
}

/// Nodes 0..N of the trajectory map and its velocity. r0_last and r0_prev are the
/// initial positions of the last two nodes, which parametrize the vacuum closure.
struct LagrangianState {
  double t = 0.0;
  std::vector<double> r;
  std::vector<double> v;
  double r0_last = 0.0;
  double r0_prev = 0.0;
};

inline void check_mesh(const std::vector<double>& r) {
  for (std::size_t k = 1; k < r.size(); ++k) {
    if (!(r[k] - r[k - 1] > 0.0)) {
      throw Error(ErrorKind::mesh_tangling, "r_" + std::to_string(k) + " - r_" + std::to_string(k - 1) +
                                                " <= 0 (lost 1/2 <= (r_n - r_{n-1})/h <= 3/2)");
    }
  }
}

struct BoundaryValues {
  double r_N = 0.0;
  double v_N = 0.0;
};

/// Closure that makes the discrete normal stress vanish at the vacuum node.
inline BoundaryValues close_boundary(const BackgroundGrid& bg, double r_Nm1, double v_Nm1, double r0_N,
                                     double r0_Nm1) {
  if (!(r_Nm1 > 0.0)) throw Error(ErrorKind::mesh_tangling, "r_{N-1} <= 0 in the boundary closure");
  const double e = bg.closure_exponent();
  const double width = (r0_N - r0_Nm1) * std::pow(r0_Nm1 / r_Nm1, e);
  return {r_Nm1 + width, v_Nm1 - e * width * v_Nm1 / r_Nm1};
}

inline void close_boundary(const BackgroundGrid& bg, LagrangianState& s) {
  const int N = bg.N;
  const auto b = close_boundary(bg, s.r[N - 1], s.v[N - 1], s.r0_last, s.r0_prev);
  s.r[N] = b.r_N;
  s.v[N] = b.v_N;
}

/// Discrete normal stress at node k (k >= 1), with v_0 / r_0 read as v_1 / r_1.
inline double discrete_stress(const BackgroundGrid& bg, const std::vector<double>& r,
                              const std::vector<double>& v, int k) {
  const double coef = 2.0 * bg.lambda2 - 4.0 * bg.lambda1 / 3.0;
  const double v_over_r = (k == 1) ? v[1] / r[1] : v[k - 1] / r[k - 1];
  return bg.mu * (v[k] - v[k - 1]) / (r[k] - r[k - 1]) + coef * v_over_r;
}

inline double boundary_stress(const BackgroundGrid& bg, const LagrangianState& s) {
  return discrete_stress(bg, s.r, s.v, bg.N);
}

/// Pressure bracket rho_k^gamma [1 - (dx_k / dr_k)^gamma (x_{k-1}/r_{k-1})^{2 gamma}].
inline double pressure_bracket(const BackgroundGrid& bg, const std::vector<double>& r, int k) {
  if (bg.rho_gamma[k] == 0.0) return 0.0;
  const double ratio = (k == 1) ? bg.x[1] / r[1] : bg.x[k - 1] / r[k - 1];
  const double stretch = bg.cell_width(k) / (r[k] - r[k - 1]);
  return -bg.rho_gamma[k] * std::expm1(bg.gamma * (std::log(stretch) + 2.0 * std::log(ratio)));
}

/// Viscous flux B_k + 4 lambda1 v_{k-1}/r_{k-1}.
inline double viscous_flux(const BackgroundGrid& bg, const std::vector<double>& r, const std::vector<double>& v,
                           int k) {
  const double v_over_r = (k == 1) ? v[1] / r[1] : v[k - 1] / r[k - 1];
  return discrete_stress(bg, r, v, k) + 4.0 * bg.lambda1 * v_over_r;
}

inline double inertia_weight(const BackgroundGrid& bg, const std::vector<double>& r, int n) {
  const double ratio = bg.x[n] / r[n];
  return bg.rho_bar[n] * ratio * ratio;
}

inline double gravity_term(const BackgroundGrid& bg, const std::vector<double>& r, int n) {
  const double ratio = bg.x[n] / r[n];
  const double r2 = ratio * ratio;
  return bg.q_bar[n] * (r2 * r2 - 1.0);
}

/// Acceleration of the vacuum node implied by differentiating the closure in time.
inline double boundary_acceleration(const BackgroundGrid& bg, const LagrangianState& s, double a_Nm1) {
  const int N = bg.N;
  const double e = bg.closure_exponent();
  const double r = s.r[N - 1];
  const double v = s.v[N - 1];
  const double g = e * (s.r0_last - s.r0_prev) * std::pow(s.r0_prev / r, e) / r;
  return a_Nm1 * (1.0 - g) + (e + 1.0) * g * v * v / r;
}

/// dv_n/dt for n = 1..N-1 by the full semi-discrete momentum equation; entry 0 is zero and
/// entry N holds the acceleration of the slaved vacuum node.
inline std::vector<double> rhs(const BackgroundGrid& bg, const LagrangianState& s) {
  check_mesh(s.r);
  const int N = bg.N;
  std::vector<double> a(static_cast<std::size_t>(N) + 1, 0.0);
  double pressure_lo = pressure_bracket(bg, s.r, 1);
  double flux_lo = viscous_flux(bg, s.r, s.v, 1);
  for (int n = 1; n < N; ++n) {
    const double pressure_hi = pressure_bracket(bg, s.r, n + 1);
    const double flux_hi = viscous_flux(bg, s.r, s.v, n + 1);
    const double force =
        gravity_term(bg, s.r, n) + (pressure_hi - pressure_lo) / bg.h + (flux_hi - flux_lo) / bg.h;
    a[n] = force / inertia_weight(bg, s.r, n);
    pressure_lo = pressure_hi;
    flux_lo = flux_hi;
  }
  a[N] = boundary_acceleration(bg, s, a[N - 1]);
  return a;
}

/// Pressure and gravity part of the acceleration (independent of v); same layout as rhs.
inline std::vector<double> explicit_acceleration(const BackgroundGrid& bg, const std::vector<double>& r) {
  const int N = bg.N;
  std::vector<double> a(static_cast<std::size_t>(N) + 1, 0.0);
  double pressure_lo = pressure_bracket(bg, r, 1);
  for (int n = 1; n < N; ++n) {
    const double pressure_hi = pressure_bracket(bg, r, n + 1);
    a[n] = (gravity_term(bg, r, n) + (pressure_hi - pressure_lo) / bg.h) / inertia_weight(bg, r, n);
    pressure_lo = pressure_hi;
  }
  return a;
}

/// Viscous acceleration as a linear map on (v_1, ..., v_{N-1}) for frozen r, with v_N eliminated
/// through the closure. Row i corresponds to node n = i + 1.
inline Tridiagonal viscous_operator(const BackgroundGrid& bg, const std::vector<double>& r) {
  const int N = bg.N;
  const double mu = bg.mu;
  Tridiagonal L(static_cast<std::size_t>(N) - 1);
  for (int n = 1; n < N; ++n) {
    const auto i = static_cast<std::size_t>(n - 1);
    const double scale = 1.0 / (bg.h * inertia_weight(bg, r, n));
    const double d_lo = r[n] - r[n - 1];
    double diag = 0.0;
    // upper face (F_{n+1})
    if (n + 1 < N) {
      const double d_hi = r[n + 1] - r[n];
      L.upper[i] = mu / d_hi * scale;
      diag += (-mu / d_hi + 2.0 * mu / r[n]);
    } else {
      diag += 4.0 * bg.lambda1 / r[n];
    }
    // lower face (-F_n)
    if (n == 1) {
      diag += -3.0 * mu / r[1];
    } else {
      diag += -mu / d_lo;
      L.lower[i] = (mu / d_lo - 2.0 * mu / r[n - 1]) * scale;
    }
    L.diag[i] = diag * scale;
  }
  return L;
}

/// Logarithmic strain G_n = ln(dr_n / dx_n) + 2 ln(r_{n-1}/x_{n-1}) for n = 1..N (entry 0 unused).
inline std::vector<double> discrete_G(const BackgroundGrid& bg, const LagrangianState& s) {
  check_mesh(s.r);
  const int N = bg.N;
  std::vector<double> G(static_cast<std::size_t>(N) + 1, 0.0);
  for (int n = 1; n <= N; ++n) {
    const double ratio = (n == 1) ? s.r[1] / bg.x[1] : s.r[n - 1] / bg.x[n - 1];
    G[n] = std::log((s.r[n] - s.r[n - 1]) / bg.cell_width(n)) + 2.0 * std::log(ratio);
  }
  return G;
}

/// (r_n - r_{n-1})/h - 1 and the second difference of r, formed from r - x so that the grid's
/// own rounding (x_n = n h is linear only in exact arithmetic) does not enter.
inline double strain_deviation(const BackgroundGrid& bg, const std::vector<double>& r, int n) {
  return ((r[n] - bg.x[n]) - (r[n - 1] - bg.x[n - 1])) / bg.h;
}

inline double second_difference(const BackgroundGrid& bg, const std::vector<double>& r, int n) {
  return ((r[n + 1] - bg.x[n + 1]) - 2.0 * (r[n] - bg.x[n]) + (r[n - 1] - bg.x[n - 1])) / (bg.h * bg.h);
}

/// Discrete higher-order functional; accel must be rhs at this state.
inline double discrete_energy_functional(const BackgroundGrid& bg, const LagrangianState& s,
                                         const std::vector<double>& accel) {
  const int N = bg.N;
  const double h = bg.h;
  double sup = 0.0;
  for (int n = 1; n <= N; ++n) {
    const double rx = strain_deviation(bg, s.r, n);
    const double vx = (s.v[n] - s.v[n - 1]) / h;
    sup = std::max(sup, rx * rx + vx * vx);
  }
  double accel_sum = 0.0;
  double weighted = 0.0;
  for (int n = 1; n < N; ++n) {
    accel_sum += bg.rho_bar[n] * accel[n] * accel[n];
    const double rxx = second_difference(bg, s.r, n);
    const double lo = (n == 1) ? s.r[1] / bg.x[1] : s.r[n - 1] / bg.x[n - 1];
    const double dratio = (s.r[n] / bg.x[n] - lo) / h;
    weighted += std::pow(bg.rho_bar[n], 2.0 * bg.gamma - 1.0) * (rxx * rxx + dratio * dratio);
  }
  return sup + h * accel_sum + h * weighted;
}

}  // namespace lestab
