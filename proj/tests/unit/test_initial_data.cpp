#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "lestab/error.hpp"
#include "lestab/initial_data.hpp"
#include "lestab/polytrope.hpp"
#include "lestab/scheme.hpp"

using namespace lestab;

namespace {

struct Fixture {
  PolytropeProfile profile = solve_lane_emden(1.5, 10.0);
  BackgroundGrid bg = sample_background(profile, 100, 0.5, 1.0 / 3.0);
};

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::io;
}

}  // namespace

TEST(InitialData, ZeroAmplitudeIsEquilibrium) {
  Fixture f;
  for (auto fam : {PerturbationFamily::radial_dilation, PerturbationFamily::polynomial_bump,
                   PerturbationFamily::velocity_kick, PerturbationFamily::composite}) {
    PerturbationSpec spec;
    spec.family = fam;
    spec.epsilon = 0.0;
    const auto s = build_perturbation(f.bg, spec);
    for (int n = 0; n <= f.bg.N; ++n) {
      EXPECT_NEAR(s.r[n], f.bg.x[n], 1e-15 * f.bg.radius);
      EXPECT_EQ(s.v[n], 0.0);
    }
  }
  const auto eq = equilibrium_state(f.bg);
  EXPECT_NEAR(eq.r[f.bg.N], f.bg.radius, 1e-15);
}

TEST(InitialData, DilationBounds) {
  Fixture f;
  PerturbationSpec spec;
  spec.epsilon = 0.01;
  const auto s = build_perturbation(f.bg, spec);
  EXPECT_EQ(s.r[0], 0.0);
  EXPECT_EQ(s.v[0], 0.0);
  double worst = 0.0;
  for (int n = 1; n <= f.bg.N; ++n) worst = std::max(worst, std::abs(strain_deviation(f.bg, s.r, n)));
  EXPECT_LE(worst, 3.0 * spec.epsilon + 1e-12);
  for (int n = 0; n < f.bg.N; ++n) EXPECT_LE(std::abs(s.r[n] - f.bg.x[n]), spec.epsilon * f.bg.radius);
}

TEST(InitialData, UniformDilation) {
  Fixture f;
  PerturbationSpec spec;
  spec.epsilon = 0.02;
  spec.taper = 0.0;
  const auto s = build_perturbation(f.bg, spec);
  for (int n = 0; n < f.bg.N; ++n) EXPECT_NEAR(s.r[n], 1.02 * f.bg.x[n], 1e-14);
}

TEST(InitialData, VelocityKick) {
  Fixture f;
  PerturbationSpec spec;
  spec.family = PerturbationFamily::velocity_kick;
  spec.epsilon = 0.01;
  const auto s = build_perturbation(f.bg, spec);
  for (int n = 0; n < f.bg.N; ++n) {
    const double x = f.bg.x[n];
    const double sr = x / f.bg.radius;
    EXPECT_NEAR(s.v[n], 0.01 * x * (1.0 - sr * sr), 1e-15);
    EXPECT_NEAR(s.r[n], x, 1e-15);
  }
}

TEST(InitialData, AmplitudeLimit) {
  Fixture f;
  PerturbationSpec spec;
  spec.epsilon = 0.2;
  EXPECT_EQ(kind_of([&] { build_perturbation(f.bg, spec); }), ErrorKind::invalid_perturbation);
  spec.epsilon = std::nan("");
  EXPECT_EQ(kind_of([&] { build_perturbation(f.bg, spec); }), ErrorKind::invalid_perturbation);
}

TEST(InitialData, FoldedMapRejected) {
  Fixture f;
  auto r = f.bg.x;
  std::swap(r[10], r[11]);
  std::vector<double> v(r.size(), 0.0);
  EXPECT_EQ(kind_of([&] { assemble_state(f.bg, r, v, BoundaryPlacement::as_given); }),
            ErrorKind::invalid_perturbation);
}

TEST(InitialData, Deterministic) {
  Fixture f;
  PerturbationSpec spec;
  spec.family = PerturbationFamily::composite;
  spec.epsilon = 0.03;
  const auto a = build_perturbation(f.bg, spec);
  const auto b = build_perturbation(f.bg, spec);
  EXPECT_EQ(a.r, b.r);
  EXPECT_EQ(a.v, b.v);
}

TEST(InitialData, CompatiblePerturbationsPass) {
  Fixture f;
  for (auto fam : {PerturbationFamily::radial_dilation, PerturbationFamily::polynomial_bump,
                   PerturbationFamily::velocity_kick, PerturbationFamily::composite}) {
    PerturbationSpec spec;
    spec.family = fam;
    spec.epsilon = 0.01;
    const auto rep = check_compatibility(build_perturbation(f.bg, spec), f.bg);
    EXPECT_TRUE(rep.pass) << to_string(fam);
    EXPECT_LT(rep.mass_residual, 1e-13);
  }
}

TEST(InitialData, CompatibilityReportsOriginVelocity) {
  Fixture f;
  auto s = equilibrium_state(f.bg);
  s.v[0] = 1e-3;
  const auto rep = check_compatibility(s, f.bg);
  EXPECT_FALSE(rep.pass);
  ASSERT_FALSE(rep.violations.empty());
  EXPECT_NE(rep.violations.front().find("origin velocity"), std::string::npos);
}

TEST(InitialData, AsGivenBoundaryViolatesStress) {
  PolytropeProfile p = solve_lane_emden(1.5, 10.0);
  const auto bg = sample_background(p, 100, 1.0, 1.0);
  PerturbationSpec spec;
  spec.family = PerturbationFamily::velocity_kick;
  spec.epsilon = 0.04;
  spec.boundary = BoundaryPlacement::as_given;
  const auto s = build_perturbation(bg, spec);
  EXPECT_NEAR(check_compatibility(s, bg).boundary_stress, 0.0, 1e-13);
  auto broken = s;
  broken.v[bg.N] = broken.v[bg.N - 1] + 0.01;
  EXPECT_FALSE(check_compatibility(broken, bg).pass);
}

TEST(MassMatch, IdentityForEquilibriumDensity) {
  Fixture f;
  auto rho = [&](double x) { return f.profile.eval(std::min(x, f.profile.radius_bar_R)).rho; };
  const auto r = mass_match_map(rho, f.profile.radius_bar_R, f.profile, f.bg);
  for (int n = 0; n <= f.bg.N; ++n) EXPECT_NEAR(r[n], f.bg.x[n], 1e-7 * f.bg.radius) << n;
}

TEST(MassMatch, ScaledDensityGivesDilation) {
  Fixture f;
  const double lam = 1.05;
  const double R = f.profile.radius_bar_R;
  auto rho = [&](double y) { return f.profile.eval(std::min(y / lam, R)).rho / (lam * lam * lam); };
  const auto r = mass_match_map(rho, lam * R, f.profile, f.bg);
  for (int n = 0; n <= f.bg.N; ++n) EXPECT_NEAR(r[n], lam * f.bg.x[n], 1e-7 * R) << n;
}

TEST(MassMatch, RenormalizedPolynomialDensity) {
  Fixture f;
  const double R0 = 0.8;
  const double mass = f.profile.total_mass;
  // rho = c (1 - y/R0) with 4 pi c R0^3 / 12 = M
  const double c = 3.0 * mass / (std::numbers::pi * R0 * R0 * R0);
  auto rho = [&](double y) { return c * (1.0 - y / R0); };
  const auto r = mass_match_map(rho, R0, f.profile, f.bg);
  EXPECT_DOUBLE_EQ(r[f.bg.N], R0);
  for (int n = 1; n <= f.bg.N; ++n) {
    ASSERT_GT(r[n], r[n - 1]);
    const double y = r[n];
    const double enclosed = c * (y * y * y / 3.0 - y * y * y * y / (4.0 * R0));
    EXPECT_NEAR(enclosed, reference_mass(f.profile, f.bg.x[n]), 1e-8 * mass) << n;
  }
}

TEST(MassMatch, SameMassViolation) {
  Fixture f;
  auto rho = [&](double x) { return 1.01 * f.profile.eval(std::min(x, f.profile.radius_bar_R)).rho; };
  EXPECT_EQ(kind_of([&] { mass_match_map(rho, f.profile.radius_bar_R, f.profile, f.bg); }),
            ErrorKind::same_mass_violation);
}

TEST(MassMatch, InvalidDensity) {
  Fixture f;
  auto rho = [](double) { return -1.0; };
  EXPECT_EQ(kind_of([&] { mass_match_map(rho, 1.0, f.profile, f.bg); }), ErrorKind::invalid_density);
  auto ok = [](double) { return 1.0; };
  EXPECT_EQ(kind_of([&] { mass_match_map(ok, 0.0, f.profile, f.bg); }), ErrorKind::invalid_density);
}

TEST(InitialData, FamilyNamesRoundTrip) {
  for (auto fam : {PerturbationFamily::radial_dilation, PerturbationFamily::polynomial_bump,
                   PerturbationFamily::velocity_kick, PerturbationFamily::composite}) {
    EXPECT_EQ(parse_family(to_string(fam)), fam);
  }
  EXPECT_EQ(parse_placement("as_given"), BoundaryPlacement::as_given);
  EXPECT_THROW(parse_family("spiral"), Error);
}
