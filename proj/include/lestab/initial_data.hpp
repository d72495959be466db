#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "lestab/error.hpp"
#include "lestab/polytrope.hpp"
#include "lestab/scheme.hpp"

namespace lestab {

enum class PerturbationFamily { radial_dilation, polynomial_bump, velocity_kick, composite };

/// How the initial position of the vacuum node is chosen.
///   equilibrium_compatible: the last cell width makes the closure invariant vanish, so the
///     closure relaxes to the reference cell width as r_{N-1} -> x_{N-1}.
///   as_given: the family's formula is evaluated at x_N.
enum class BoundaryPlacement { equilibrium_compatible, as_given };

inline std::string_view to_string(PerturbationFamily f) {
  switch (f) {
    case PerturbationFamily::radial_dilation: return "radial_dilation";
    case PerturbationFamily::polynomial_bump: return "polynomial_bump";
    case PerturbationFamily::velocity_kick: return "velocity_kick";
    case PerturbationFamily::composite: return "composite";
  }
  return "unknown";
}

inline PerturbationFamily parse_family(std::string_view s) {
  if (s == "radial_dilation") return PerturbationFamily::radial_dilation;
  if (s == "polynomial_bump") return PerturbationFamily::polynomial_bump;
  if (s == "velocity_kick") return PerturbationFamily::velocity_kick;
  if (s == "composite") return PerturbationFamily::composite;
  throw Error(ErrorKind::config, "unknown perturbation family '" + std::string(s) + "'");
}

inline std::string_view to_string(BoundaryPlacement b) {
  return b == BoundaryPlacement::as_given ? "as_given" : "equilibrium_compatible";
}

inline BoundaryPlacement parse_placement(std::string_view s) {
  if (s == "equilibrium_compatible") return BoundaryPlacement::equilibrium_compatible;
  if (s == "as_given") return BoundaryPlacement::as_given;
  throw Error(ErrorKind::config, "unknown boundary placement '" + std::string(s) + "'");
}

struct PerturbationSpec {
  PerturbationFamily family = PerturbationFamily::radial_dilation;
  double epsilon = 0.0;
  double taper = 1.0;       // radial_dilation: r = x (1 + eps (1 - taper (x/R)^2))
  double bump_power = 2.0;  // polynomial_bump: r = x (1 + eps (4 s (1 - s))^k)
  double kick_ratio = 1.0;  // composite: velocity amplitude relative to eps
  double max_amplitude = 0.05;
  BoundaryPlacement boundary = BoundaryPlacement::equilibrium_compatible;
};

/// Initial position and velocity of the particle with reference radius x.
inline std::array<double, 2> perturbation_profile(const PerturbationSpec& spec, double x, double radius) {
  const double s = x / radius;
  const double eps = spec.epsilon;
  auto dilation = [&] { return x * (1.0 + eps * (1.0 - spec.taper * s * s)); };
  auto kick = [&](double amp) { return amp * x * (1.0 - s * s); };
  switch (spec.family) {
    case PerturbationFamily::radial_dilation: return {dilation(), 0.0};
    case PerturbationFamily::polynomial_bump:
      return {x * (1.0 + eps * std::pow(4.0 * s * (1.0 - s), spec.bump_power)), 0.0};
    case PerturbationFamily::velocity_kick: return {x, kick(eps)};
    case PerturbationFamily::composite: return {dilation(), kick(spec.kick_ratio * eps)};
  }
  return {x, 0.0};
}

/// Builds a state from nodal positions/velocities for n = 0..N; the last node is then
/// overwritten by the closure.
inline LagrangianState assemble_state(const BackgroundGrid& bg, std::vector<double> r, std::vector<double> v,
                                      BoundaryPlacement placement) {
  const int N = bg.N;
  r[0] = 0.0;
  v[0] = 0.0;
  for (int n = 1; n < N; ++n) {
    if (!(r[n] - r[n - 1] > 0.0)) {
      throw Error(ErrorKind::invalid_perturbation,
                  "(r_n - r_{n-1})/h <= 0 at n = " + std::to_string(n));
    }
  }
  LagrangianState s;
  s.r0_prev = r[N - 1];
  if (placement == BoundaryPlacement::equilibrium_compatible) {
    s.r0_last = r[N - 1] + bg.cell_width(N) * std::pow(bg.x[N - 1] / r[N - 1], bg.closure_exponent());
  } else {
    s.r0_last = r[N];
  }
  if (!(s.r0_last > s.r0_prev)) {
    throw Error(ErrorKind::invalid_perturbation, "(r_N - r_{N-1})/h <= 0");
  }
  s.r = std::move(r);
  s.v = std::move(v);
  close_boundary(bg, s);
  return s;
}

inline LagrangianState build_perturbation(const BackgroundGrid& bg, const PerturbationSpec& spec) {
  if (!std::isfinite(spec.epsilon) || std::abs(spec.epsilon) > spec.max_amplitude) {
    std::ostringstream msg;
    msg << "|epsilon| = " << std::abs(spec.epsilon) << " exceeds the admissible amplitude "
        << spec.max_amplitude;
    throw Error(ErrorKind::invalid_perturbation, msg.str());
  }
  const auto size = static_cast<std::size_t>(bg.N) + 1;
  std::vector<double> r(size);
  std::vector<double> v(size);
  for (int n = 0; n <= bg.N; ++n) {
    const auto rv = perturbation_profile(spec, bg.x[n], bg.radius);
    r[n] = rv[0];
    v[n] = rv[1];
  }
  return assemble_state(bg, std::move(r), std::move(v), spec.boundary);
}

/// Equilibrium data r = x, v = 0.
inline LagrangianState equilibrium_state(const BackgroundGrid& bg) {
  return assemble_state(bg, bg.x, std::vector<double>(bg.x.size(), 0.0),
                        BoundaryPlacement::equilibrium_compatible);
}

/// Mass enclosed by radius x at equilibrium divided by 4 pi.
inline double reference_mass(const PolytropeProfile& profile, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= profile.radius_bar_R) return profile.total_mass / (4.0 * std::numbers::pi);
  return x * x * x * profile.eval(x).phi / (4.0 * std::numbers::pi);
}

/// Positions r0_n enclosing the same mass under rho0 as x_n does under the equilibrium.
inline std::vector<double> mass_match_map(const std::function<double(double)>& rho0, double R0,
                                          const PolytropeProfile& profile, const BackgroundGrid& bg,
                                          double mass_tol = 1e-8) {
  namespace bq = boost::math::quadrature;
  if (!(R0 > 0.0)) throw Error(ErrorKind::invalid_density, "initial radius must be positive");
  auto integrand = [&](double s) {
    const double rho = rho0(s);
    if (!(rho >= 0.0) || !std::isfinite(rho)) {
      std::ostringstream msg;
      msg << "rho0(" << s << ") = " << rho << " is not a nonnegative density";
      throw Error(ErrorKind::invalid_density, msg.str());
    }
    return rho * s * s;
  };
  auto integrate = [&](double a, double b) {
    return bq::gauss_kronrod<double, 15>::integrate(integrand, a, b, 12, 1e-10);
  };

  const int K = 8 * bg.N;
  std::vector<double> nodes(static_cast<std::size_t>(K) + 1);
  std::vector<double> cumulative(nodes.size(), 0.0);
  for (int j = 0; j <= K; ++j) nodes[j] = (j == K) ? R0 : R0 * j / K;
  for (int j = 1; j <= K; ++j) {
    const double piece = integrate(nodes[j - 1], nodes[j]);
    if (piece < 0.0) throw Error(ErrorKind::invalid_density, "cumulative mass is not monotone");
    cumulative[j] = cumulative[j - 1] + piece;
  }

  const double target_total = profile.total_mass / (4.0 * std::numbers::pi);
  if (std::abs(cumulative[K] - target_total) > mass_tol * target_total) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "initial mass " << 4.0 * std::numbers::pi * cumulative[K] << " differs from M = "
        << profile.total_mass;
    throw Error(ErrorKind::same_mass_violation, msg.str());
  }
  // Rescale so the last node lands on R0 exactly despite quadrature error.
  const double scale = target_total / cumulative[K];

  std::vector<double> r(static_cast<std::size_t>(bg.N) + 1, 0.0);
  r[bg.N] = R0;
  for (int n = 1; n < bg.N; ++n) {
    const double m = reference_mass(profile, bg.x[n]) / scale;
    auto it = std::lower_bound(cumulative.begin(), cumulative.end(), m);
    auto j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cumulative.begin(), 1));
    const double a = nodes[j - 1];
    const double b = nodes[j];
    const double base = cumulative[j - 1];
    auto g = [&](double rr) { return base + integrate(a, rr) - m; };
    const double ga = base - m;
    const double gb = cumulative[j] - m;
    if (ga == 0.0) {
      r[n] = a;
    } else if (gb == 0.0) {
      r[n] = b;
    } else {
      std::uintmax_t iters = 200;
      const auto bracket = boost::math::tools::toms748_solve(g, a, b, ga, gb,
                                                             boost::math::tools::eps_tolerance<double>(52), iters);
      r[n] = 0.5 * (bracket.first + bracket.second);
    }
    if (!(r[n] > r[n - 1])) throw Error(ErrorKind::invalid_density, "mass map is not strictly increasing");
  }
  return r;
}

struct CompatibilityReport {
  double origin_velocity = 0.0;  // |v_0|
  double origin_position = 0.0;  // |r_0|
  double boundary_stress = 0.0;  // |B_N| / (|v_{N-1}|/h + 1)
  double mass_residual = 0.0;    // relative
  double min_rx = 0.0;
  double max_rx = 0.0;
  std::vector<std::string> violations;
  bool pass = false;
};

inline CompatibilityReport check_compatibility(const LagrangianState& s, const BackgroundGrid& bg,
                                               double tol = 1e-12) {
  const int N = bg.N;
  CompatibilityReport rep;
  rep.origin_velocity = std::abs(s.v[0]);
  rep.origin_position = std::abs(s.r[0]);
  rep.min_rx = 1e300;
  rep.max_rx = -1e300;
  for (int n = 1; n <= N; ++n) {
    const double rx = (s.r[n] - s.r[n - 1]) / bg.h;
    rep.min_rx = std::min(rep.min_rx, rx);
    rep.max_rx = std::max(rep.max_rx, rx);
  }
  if (rep.min_rx > 0.0) {
    rep.boundary_stress = std::abs(boundary_stress(bg, s)) / (std::abs(s.v[N - 1]) / bg.h + 1.0);
    double lagrangian = 0.0;
    double eulerian = 0.0;
    for (int n = 1; n <= N; ++n) {
      const double rx = (s.r[n] - s.r[n - 1]) / bg.h;
      const double f = bg.x[n] * bg.x[n] * bg.rho_bar[n] / (s.r[n] * s.r[n] * rx);
      eulerian += bg.h * f * s.r[n] * s.r[n] * rx;
      lagrangian += bg.h * bg.rho_bar[n] * bg.x[n] * bg.x[n];
    }
    rep.mass_residual = lagrangian > 0.0 ? std::abs(eulerian - lagrangian) / lagrangian : 0.0;
  } else {
    rep.violations.push_back("mesh: min (r_n - r_{n-1})/h <= 0");
  }
  if (rep.origin_velocity > tol) rep.violations.push_back("origin velocity v_0 != 0");
  if (rep.origin_position > tol) rep.violations.push_back("origin position r_0 != 0");
  if (rep.boundary_stress > tol) rep.violations.push_back("boundary stress B_N != 0");
  if (rep.mass_residual > tol) rep.violations.push_back("mass equality");
  rep.pass = rep.violations.empty();
  return rep;
}

}  // namespace lestab
