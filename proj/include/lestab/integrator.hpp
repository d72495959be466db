#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "lestab/error.hpp"
#include "lestab/scheme.hpp"
#include "lestab/tridiagonal.hpp"

namespace lestab {

enum class StepMode { explicit_rk4, imex_be, imex_cn };

inline std::string_view to_string(StepMode m) {
  switch (m) {
    case StepMode::explicit_rk4: return "explicit_rk4";
    case StepMode::imex_be: return "imex_be";
    case StepMode::imex_cn: return "imex_cn";
  }
  return "unknown";
}

inline StepMode parse_step_mode(std::string_view s) {
  if (s == "explicit_rk4") return StepMode::explicit_rk4;
  if (s == "imex_be") return StepMode::imex_be;
  if (s == "imex_cn") return StepMode::imex_cn;
  throw Error(ErrorKind::config, "unknown step mode '" + std::string(s) + "'");
}

struct StepPolicy {
  StepMode mode = StepMode::imex_cn;
  double dt = 0.0;  // <= 0 selects min(1e-3, h / (4 max|v| + 1))
  double cfl_safety = 0.9;
  double t_end = 1.0;
  long max_steps = 100000000;
  double blowup_factor = 1e4;
  bool enforce_limits = true;
  int max_retries = 10;
};

enum class Termination { t_end, max_steps, mesh_tangling, blow_up, step_failure };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::t_end: return "t_end";
    case Termination::max_steps: return "max_steps";
    case Termination::mesh_tangling: return "mesh_tangling";
    case Termination::blow_up: return "blow_up";
    case Termination::step_failure: return "step_failure";
  }
  return "unknown";
}

/// A second-order-in-time system r' = v, v' = P(r) + L(r) v on nodes 0..N, with node 0 pinned
/// and node N slaved to N-1 by a closure. The System type supplies:
///   State with members t, and position/velocity vectors reachable through pos()/vel();
///   explicit_accel(pos), implicit_operator(pos), full_accel(state), close(state&),
///   check(pos), functional(state), size() (= N), h(), min_weight(), mu().
template <class S>
concept SecondOrderSystem = requires(const S& sys, typename S::State& st, const typename S::State& cst,
                                     const std::vector<double>& p) {
  { sys.size() } -> std::convertible_to<int>;
  { sys.pos(st) } -> std::same_as<std::vector<double>&>;
  { sys.vel(st) } -> std::same_as<std::vector<double>&>;
  { sys.explicit_accel(p) } -> std::same_as<std::vector<double>>;
  { sys.implicit_operator(p) } -> std::same_as<Tridiagonal>;
  { sys.full_accel(cst) } -> std::same_as<std::vector<double>>;
  { sys.functional(cst) } -> std::convertible_to<double>;
  sys.close(st);
  sys.check(p);
};

/// Adapter of the nonlinear scheme to the generic stepper.
struct NonlinearSystem {
  using State = LagrangianState;
  const BackgroundGrid& bg;

  int size() const { return bg.N; }
  double h() const { return bg.h; }
  double mu() const { return bg.mu; }
  double min_weight() const {
    double m = std::numeric_limits<double>::infinity();
    for (int n = 0; n < bg.N; ++n) m = std::min(m, bg.rho_bar[n]);
    return m;
  }
  std::vector<double>& pos(State& s) const { return s.r; }
  std::vector<double>& vel(State& s) const { return s.v; }
  const std::vector<double>& pos(const State& s) const { return s.r; }
  const std::vector<double>& vel(const State& s) const { return s.v; }
  std::vector<double> explicit_accel(const std::vector<double>& r) const { return explicit_acceleration(bg, r); }
  Tridiagonal implicit_operator(const std::vector<double>& r) const { return viscous_operator(bg, r); }
  std::vector<double> full_accel(const State& s) const { return rhs(bg, s); }
  void close(State& s) const { close_boundary(bg, s); }
  void check(const std::vector<double>& r) const { check_mesh(r); }
  double functional(const State& s) const { return discrete_energy_functional(bg, s, rhs(bg, s)); }
};

namespace detail {

inline std::vector<double> interior(const std::vector<double>& a, int N) {
  return std::vector<double>(a.begin() + 1, a.begin() + N);
}

inline void scatter(std::vector<double>& dst, const std::vector<double>& src) {
  std::copy(src.begin(), src.end(), dst.begin() + 1);
}

template <SecondOrderSystem Sys>
typename Sys::State rk4_step(const Sys& sys, const typename Sys::State& s0, double dt) {
  const int N = sys.size();
  using State = typename Sys::State;
  auto stage = [&](const State& base, const std::vector<double>& dr, const std::vector<double>& dv, double c) {
    State s = base;
    auto& r = sys.pos(s);
    auto& v = sys.vel(s);
    for (int n = 1; n < N; ++n) {
      r[n] += c * dr[n];
      v[n] += c * dv[n];
    }
    sys.close(s);
    sys.check(r);
    return s;
  };
  const auto v1 = sys.vel(s0);
  const auto a1 = sys.full_accel(s0);
  const State s2 = stage(s0, v1, a1, 0.5 * dt);
  const auto v2 = sys.vel(s2);
  const auto a2 = sys.full_accel(s2);
  const State s3 = stage(s0, v2, a2, 0.5 * dt);
  const auto v3 = sys.vel(s3);
  const auto a3 = sys.full_accel(s3);
  const State s4 = stage(s0, v3, a3, dt);
  const auto v4 = sys.vel(s4);
  const auto a4 = sys.full_accel(s4);

  State out = s0;
  auto& r = sys.pos(out);
  auto& v = sys.vel(out);
  for (int n = 1; n < N; ++n) {
    r[n] += dt / 6.0 * (v1[n] + 2.0 * v2[n] + 2.0 * v3[n] + v4[n]);
    v[n] += dt / 6.0 * (a1[n] + 2.0 * a2[n] + 2.0 * a3[n] + a4[n]);
  }
  sys.close(out);
  sys.check(r);
  out.t = s0.t + dt;
  return out;
}

template <SecondOrderSystem Sys>
typename Sys::State imex_be_step(const Sys& sys, const typename Sys::State& s0, double dt) {
  const int N = sys.size();
  const auto& r0 = sys.pos(s0);
  const auto L = sys.implicit_operator(r0);
  const auto P = sys.explicit_accel(r0);
  auto b = interior(sys.vel(s0), N);
  for (int i = 0; i < N - 1; ++i) b[i] += dt * P[i + 1];
  const auto v_new = solve_tridiagonal(L.shifted_identity(dt), std::move(b));

  auto out = s0;
  auto& r = sys.pos(out);
  scatter(sys.vel(out), v_new);
  for (int n = 1; n < N; ++n) r[n] += dt * v_new[n - 1];
  sys.close(out);
  sys.check(r);
  out.t = s0.t + dt;
  return out;
}

/// Two-stage L-stable IMEX Runge-Kutta scheme of second order (Ascher-Ruuth-Spiteri 2-2-2);
/// the viscous operator is frozen at the half-step predictor of r.
template <SecondOrderSystem Sys>
typename Sys::State imex_ars_step(const Sys& sys, const typename Sys::State& s0, double dt) {
  const int N = sys.size();
  const double g = 1.0 - 1.0 / std::sqrt(2.0);
  const double d = 1.0 - 1.0 / (2.0 * g);
  const auto& r0 = sys.pos(s0);
  const auto& v0 = sys.vel(s0);

  auto r_mid = r0;
  for (int n = 1; n < N; ++n) r_mid[n] += 0.5 * dt * v0[n];
  {
    auto probe = s0;
    sys.pos(probe) = r_mid;
    sys.close(probe);
    r_mid = sys.pos(probe);
  }
  sys.check(r_mid);
  const auto L = sys.implicit_operator(r_mid);
  const auto A = L.shifted_identity(dt * g);

  const auto K1 = sys.explicit_accel(r0);
  const auto vn = interior(v0, N);

  auto b2 = vn;
  for (int i = 0; i < N - 1; ++i) b2[i] += dt * g * K1[i + 1];
  const auto v2 = solve_tridiagonal(A, std::move(b2));

  auto s2 = s0;
  for (int n = 1; n < N; ++n) sys.pos(s2)[n] = r0[n] + dt * g * v2[n - 1];
  scatter(sys.vel(s2), v2);
  sys.close(s2);
  sys.check(sys.pos(s2));
  const auto K2 = sys.explicit_accel(sys.pos(s2));

  const auto Lv2 = L.apply(v2);
  auto b3 = vn;
  for (int i = 0; i < N - 1; ++i) {
    b3[i] += dt * (1.0 - g) * Lv2[i] + dt * (d * K1[i + 1] + (1.0 - d) * K2[i + 1]);
  }
  const auto v3 = solve_tridiagonal(A, std::move(b3));

  auto out = s0;
  auto& r = sys.pos(out);
  for (int n = 1; n < N; ++n) r[n] = r0[n] + dt * ((1.0 - g) * v2[n - 1] + g * v3[n - 1]);
  scatter(sys.vel(out), v3);
  sys.close(out);
  sys.check(r);
  out.t = s0.t + dt;
  return out;
}

inline bool all_finite(const std::vector<double>& a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

/// One step of the selected mode; a singular linear solve or a non-finite state halves dt
/// up to policy.max_retries times (the returned state records the step actually taken).
template <SecondOrderSystem Sys>
typename Sys::State step(const Sys& sys, const typename Sys::State& s, const StepPolicy& policy, double dt) {
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    try {
      typename Sys::State out;
      switch (policy.mode) {
        case StepMode::explicit_rk4: out = detail::rk4_step(sys, s, dt); break;
        case StepMode::imex_be: out = detail::imex_be_step(sys, s, dt); break;
        case StepMode::imex_cn: out = detail::imex_ars_step(sys, s, dt); break;
      }
      if (detail::all_finite(sys.pos(out)) && detail::all_finite(sys.vel(out))) return out;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::step_failure) throw;
    }
    dt *= 0.5;
  }
  throw Error(ErrorKind::step_failure, "step failed after dt halving retries");
}

template <SecondOrderSystem Sys>
double max_abs_velocity(const Sys& sys, const typename Sys::State& s) {
  double m = 0.0;
  for (double v : sys.vel(s)) m = std::max(m, std::abs(v));
  return m;
}

/// Step size honoring the policy: the nominal dt (or the adaptive default) capped by the
/// stability limit of the chosen mode.
template <SecondOrderSystem Sys>
double select_dt(const Sys& sys, const typename Sys::State& s, const StepPolicy& policy) {
  const double vmax = max_abs_velocity(sys, s);
  double dt = policy.dt > 0.0 ? policy.dt : std::min(1e-3, sys.h() / (4.0 * vmax + 1.0));
  if (policy.enforce_limits) {
    if (policy.mode == StepMode::explicit_rk4) {
      dt = std::min(dt, policy.cfl_safety * sys.h() * sys.h() * sys.min_weight() / (2.0 * sys.mu()));
    } else if (vmax > 0.0) {
      dt = std::min(dt, policy.cfl_safety * sys.h() / vmax);
    }
  }
  return dt;
}

template <class State>
struct RunResult {
  State state;
  Termination reason = Termination::t_end;
  long steps = 0;
  std::string message;
};

/// Advances to policy.t_end, calling sink(state) at t = 0 and at every multiple of
/// sample_interval (and at t_end). The functional ceiling is checked at samples.
template <SecondOrderSystem Sys, class Sink>
RunResult<typename Sys::State> run(const Sys& sys, typename Sys::State state, const StepPolicy& policy,
                                   Sink&& sink, double sample_interval) {
  RunResult<typename Sys::State> result;
  const double ceiling = policy.blowup_factor * sys.functional(state) + 1.0;
  sink(static_cast<const typename Sys::State&>(state));
  if (!(sample_interval > 0.0)) sample_interval = policy.t_end;
  long sample_index = 1;
  const double t0 = state.t;
  long steps = 0;
  while (state.t < policy.t_end) {
    const double target = std::min(policy.t_end, t0 + static_cast<double>(sample_index) * sample_interval);
    double dt = select_dt(sys, state, policy);
    bool lands = false;
    if (state.t + dt >= target - 1e-9 * dt) {
      dt = target - state.t;
      lands = true;
    }
    if (steps >= policy.max_steps) {
      result.reason = Termination::max_steps;
      break;
    }
    try {
      state = step(sys, state, policy, dt);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::mesh_tangling && e.kind() != ErrorKind::step_failure) throw;
      result.message = e.what();
      result.reason = e.kind() == ErrorKind::mesh_tangling ? Termination::mesh_tangling : Termination::step_failure;
      result.state = state;
      result.steps = steps;
      return result;
    }
    ++steps;
    if (lands && std::abs(state.t - target) <= 1e-9 * std::max(1.0, std::abs(target))) {
      state.t = target;
      ++sample_index;
      sink(static_cast<const typename Sys::State&>(state));
      const double f = sys.functional(state);
      if (!(f <= ceiling)) {
        result.reason = Termination::blow_up;
        result.message = "functional exceeded the blow-up ceiling";
        break;
      }
    }
  }
  result.state = std::move(state);
  result.steps = steps;
  return result;
}

}  // namespace lestab
