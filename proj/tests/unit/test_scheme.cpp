#include <cmath>

#include <gtest/gtest.h>

#include "lestab/initial_data.hpp"
#include "lestab/polytrope.hpp"
#include "lestab/scheme.hpp"

using namespace lestab;

namespace {

BackgroundGrid grid(int N, double l1 = 0.5, double l2 = 1.0 / 3.0, double gamma = 1.5, double mass = 10.0) {
  return sample_background(solve_lane_emden(gamma, mass), N, l1, l2);
}

LagrangianState dilated(const BackgroundGrid& bg, double eps) {
  PerturbationSpec spec;
  spec.epsilon = eps;
  spec.taper = 0.0;
  return build_perturbation(bg, spec);
}

}  // namespace

TEST(Background, SamplingAndValidation) {
  const auto bg = grid(64);
  EXPECT_EQ(bg.x.size(), 65u);
  EXPECT_DOUBLE_EQ(bg.x.back(), bg.radius);
  EXPECT_EQ(bg.rho_bar.back(), 0.0);
  EXPECT_EQ(bg.q_bar.front(), 0.0);
  EXPECT_DOUBLE_EQ(bg.mu, 1.0);
  EXPECT_THROW(grid(8), Error);
  EXPECT_THROW(grid(64, 0.0), Error);
  EXPECT_THROW(grid(64, 0.5, -1.0), Error);
}

TEST(Scheme, EquilibriumIsStationary) {
  const auto bg = grid(200);
  const auto s = equilibrium_state(bg);
  for (double a : rhs(bg, s)) EXPECT_EQ(a, 0.0);
  for (double a : explicit_acceleration(bg, s.r)) EXPECT_EQ(a, 0.0);
  const auto G = discrete_G(bg, s);
  for (int n = 1; n < bg.N; ++n) EXPECT_NEAR(G[n], 0.0, 1e-15);
  EXPECT_EQ(discrete_energy_functional(bg, s, rhs(bg, s)), 0.0);
}

TEST(Scheme, UniformDilationAcceleration) {
  const auto bg = grid(100);
  const double lam = 1.01;
  const auto s = dilated(bg, lam - 1.0);
  const auto a = rhs(bg, s);
  auto pressure = [&](int k) { return bg.rho_gamma[k] * (1.0 - std::pow(lam, -3.0 * bg.gamma)); };
  for (int n = 1; n < bg.N; ++n) {
    const double force = bg.q_bar[n] * (std::pow(lam, -4.0) - 1.0) + (pressure(n + 1) - pressure(n)) / bg.h;
    const double expected = force * lam * lam / bg.rho_bar[n];
    EXPECT_NEAR(a[n], expected, 1e-10 * (std::abs(expected) + 1.0)) << n;
  }
}

TEST(Scheme, UniformDilationStrain) {
  const auto bg = grid(100);
  const double lam = 1.03;
  const auto G = discrete_G(bg, dilated(bg, lam - 1.0));
  for (int n = 1; n < bg.N; ++n) EXPECT_NEAR(G[n], 3.0 * std::log(lam), 1e-12);
}

TEST(Scheme, UniformDilationFunctional) {
  const auto bg = grid(100);
  const double eps = 0.01;
  const auto s = dilated(bg, eps);
  const auto a = rhs(bg, s);
  double accel = 0.0;
  double weighted = 0.0;
  for (int n = 1; n < bg.N; ++n) {
    accel += bg.h * bg.rho_bar[n] * a[n] * a[n];
    const double lo = (n == 1) ? s.r[1] / bg.x[1] : s.r[n - 1] / bg.x[n - 1];
    const double dratio = (s.r[n] / bg.x[n] - lo) / bg.h;
    const double rxx = second_difference(bg, s.r, n);
    weighted += bg.h * std::pow(bg.rho_bar[n], 2.0 * bg.gamma - 1.0) * (rxx * rxx + dratio * dratio);
    if (n < bg.N - 1) {
      EXPECT_NEAR(rxx, 0.0, 1e-9) << n;
    }
  }
  const double boundary_strain = strain_deviation(bg, s.r, bg.N);
  const double sup = std::max(eps * eps, boundary_strain * boundary_strain);
  EXPECT_NEAR(discrete_energy_functional(bg, s, a), sup + accel + weighted, 1e-14);
}

TEST(Closure, ExponentExamples) {
  EXPECT_DOUBLE_EQ(grid(32, 0.75, 0.5).closure_exponent(), 0.0);
  EXPECT_NEAR(grid(32, 1.0, 1.0).closure_exponent(), 2.0 / 7.0, 1e-15);
  EXPECT_DOUBLE_EQ(grid(32).closure_exponent(), 0.0);
}

TEST(Closure, ZeroExponentKeepsCellWidth) {
  const auto bg = grid(32, 0.75, 0.5);
  const auto b = close_boundary(bg, 0.5, 0.2, 0.7, 0.6);
  EXPECT_NEAR(b.r_N, 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(b.v_N, 0.2);
}

TEST(Closure, StressVanishes) {
  for (auto [l1, l2] : {std::pair{1.0, 1.0}, std::pair{0.5, 1.0 / 3.0}, std::pair{0.2, 2.0}}) {
    const auto bg = grid(64, l1, l2);
    PerturbationSpec spec;
    spec.family = PerturbationFamily::composite;
    spec.epsilon = 0.03;
    auto s = build_perturbation(bg, spec);
    s.r[bg.N - 1] *= 1.001;
    s.v[bg.N - 1] += 0.05;
    close_boundary(bg, s);
    const double scale = bg.mu * std::abs(s.v[bg.N - 1]) / (s.r[bg.N] - s.r[bg.N - 1]) + 1.0;
    EXPECT_NEAR(boundary_stress(bg, s) / scale, 0.0, 1e-12) << l1 << " " << l2;
  }
}

TEST(Closure, BoundaryAccelerationMatchesClosureDerivative) {
  const auto bg = grid(64, 1.0, 1.0);
  PerturbationSpec spec;
  spec.family = PerturbationFamily::composite;
  spec.epsilon = 0.02;
  const auto s = build_perturbation(bg, spec);
  const auto a = rhs(bg, s);
  const double dt = 1e-6;
  auto advance = [&](double sign) {
    const double r = s.r[bg.N - 1] + sign * dt * s.v[bg.N - 1] + 0.5 * dt * dt * a[bg.N - 1];
    const double v = s.v[bg.N - 1] + sign * dt * a[bg.N - 1];
    return close_boundary(bg, r, v, s.r0_last, s.r0_prev).v_N;
  };
  const double fd = (advance(1.0) - advance(-1.0)) / (2.0 * dt);
  EXPECT_NEAR(a[bg.N], fd, 1e-6 * (std::abs(fd) + 1.0));
}

TEST(Scheme, ViscousOperatorMatchesRhs) {
  const auto bg = grid(64, 1.0, 1.0);
  PerturbationSpec spec;
  spec.family = PerturbationFamily::composite;
  spec.epsilon = 0.02;
  const auto s = build_perturbation(bg, spec);
  const auto full = rhs(bg, s);
  const auto expl = explicit_acceleration(bg, s.r);
  const auto L = viscous_operator(bg, s.r);
  const int N = bg.N;
  for (int n = 1; n < N; ++n) {
    const auto i = static_cast<std::size_t>(n - 1);
    double visc = L.diag[i] * s.v[n];
    if (n > 1) visc += L.lower[i] * s.v[n - 1];
    if (n + 1 < N) visc += L.upper[i] * s.v[n + 1];
    EXPECT_NEAR(expl[n] + visc, full[n], 1e-9 * (std::abs(full[n]) + 1.0)) << n;
  }
}

TEST(Scheme, MassIdentityHoldsForAnyMap) {
  const auto bg = grid(128);
  PerturbationSpec spec;
  spec.family = PerturbationFamily::polynomial_bump;
  spec.epsilon = 0.05;
  const auto s = build_perturbation(bg, spec);
  double lagrangian = 0.0;
  double eulerian = 0.0;
  for (int n = 1; n <= bg.N; ++n) {
    const double rx = (s.r[n] - s.r[n - 1]) / bg.h;
    const double rho = bg.x[n] * bg.x[n] * bg.rho_bar[n] / (s.r[n] * s.r[n] * rx);
    eulerian += bg.h * rho * s.r[n] * s.r[n] * rx;
    lagrangian += bg.h * bg.rho_bar[n] * bg.x[n] * bg.x[n];
  }
  EXPECT_NEAR(eulerian, lagrangian, 1e-13 * lagrangian);
}

TEST(Scheme, SpatialConsistency) {
  // Acceleration at a fixed interior point converges as the grid is refined.
  const double x_probe_frac = 0.5;
  std::vector<double> values;
  for (int N : {100, 200, 400, 800}) {
    const auto bg = grid(N, 1.0, 1.0);
    PerturbationSpec spec;
    spec.family = PerturbationFamily::composite;
    spec.epsilon = 0.01;
    const auto a = rhs(bg, build_perturbation(bg, spec));
    values.push_back(a[static_cast<std::size_t>(x_probe_frac * N)]);
  }
  const double d1 = std::abs(values[1] - values[0]);
  const double d2 = std::abs(values[2] - values[1]);
  const double d3 = std::abs(values[3] - values[2]);
  const double order = 0.5 * (std::log2(d1 / d2) + std::log2(d2 / d3));
  EXPECT_GE(order, 0.9) << d1 << " " << d2 << " " << d3;
}

TEST(Scheme, MeshTanglingDetected) {
  const auto bg = grid(32);
  auto s = equilibrium_state(bg);
  s.r[5] = s.r[4];
  EXPECT_THROW(rhs(bg, s), Error);
  try {
    check_mesh(s.r);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::mesh_tangling);
  }
}
