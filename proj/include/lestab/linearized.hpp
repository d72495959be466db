#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lestab/error.hpp"
#include "lestab/initial_data.hpp"
#include "lestab/integrator.hpp"
#include "lestab/scheme.hpp"
#include "lestab/tridiagonal.hpp"

namespace lestab {

/// Perturbation w = r/x - 1 and its rate w_t = v/x on nodes 0..N.
struct LinearState {
  double t = 0.0;
  std::vector<double> w;
  std::vector<double> wt;
};

namespace detail {

/// Linearized pressure bracket gamma rho_k^gamma [(x_k w_k - x_{k-1} w_{k-1})/dx_k + 2 w_{k-1}].
inline double linear_pressure(const BackgroundGrid& bg, const std::vector<double>& w, int k) {
  if (bg.rho_gamma[k] == 0.0) return 0.0;
  const double w_lo = (k == 1) ? w[1] : w[k - 1];
  const double xw_lo = (k == 1) ? 0.0 : bg.x[k - 1] * w[k - 1];
  return bg.gamma * bg.rho_gamma[k] * ((bg.x[k] * w[k] - xw_lo) / bg.cell_width(k) + 2.0 * w_lo);
}

/// Linearized viscous flux at face k for the rate field wt.
inline double linear_flux(const BackgroundGrid& bg, const std::vector<double>& wt, int k) {
  const double mu = bg.mu;
  if (k == 1) return 3.0 * mu * wt[1];
  if (k == bg.N) return 4.0 * bg.lambda1 * wt[bg.N - 1];
  return mu * (bg.x[k] * wt[k] - bg.x[k - 1] * wt[k - 1]) / bg.cell_width(k) + 2.0 * mu * wt[k - 1];
}

}  // namespace detail

/// Factor s with x_N w_N = s x_N w_{N-1}, the linearization of the vacuum closure.
inline double linear_boundary_factor(const BackgroundGrid& bg) {
  const int N = bg.N;
  return (bg.x[N - 1] - bg.closure_exponent() * bg.cell_width(N)) / bg.x[N];
}

inline void close_linear(const BackgroundGrid& bg, LinearState& s) {
  const int N = bg.N;
  const double f = linear_boundary_factor(bg);
  s.w[N] = f * s.w[N - 1];
  s.wt[N] = f * s.wt[N - 1];
  s.w[0] = s.w[1];
  s.wt[0] = s.wt[1];
}

/// Discrete form of B_L = (x w_t)_x (plus the closure exponent term) at the last node.
inline double linear_boundary_residual(const BackgroundGrid& bg, const LinearState& s) {
  const int N = bg.N;
  return (bg.x[N] * s.wt[N] - bg.x[N - 1] * s.wt[N - 1]) / bg.cell_width(N) +
         bg.closure_exponent() * s.wt[N - 1];
}

/// Gravity and pressure part of the tangent dynamics (the exact linearization of the
/// nonlinear scheme about r = x, v = 0); entries 1..N-1.
inline std::vector<double> tangent_explicit(const BackgroundGrid& bg, const std::vector<double>& w) {
  const int N = bg.N;
  std::vector<double> a(static_cast<std::size_t>(N) + 1, 0.0);
  double p_lo = detail::linear_pressure(bg, w, 1);
  for (int n = 1; n < N; ++n) {
    const double p_hi = detail::linear_pressure(bg, w, n + 1);
    a[n] = (-4.0 * bg.q_bar[n] * w[n] + (p_hi - p_lo) / bg.h) / (bg.rho_bar[n] * bg.x[n]);
    p_lo = p_hi;
  }
  return a;
}

/// Viscous part of the tangent dynamics as a tridiagonal map on (w_t1, ..., w_t{N-1}).
inline Tridiagonal tangent_viscous_operator(const BackgroundGrid& bg) {
  const int N = bg.N;
  const double mu = bg.mu;
  Tridiagonal L(static_cast<std::size_t>(N) - 1);
  for (int n = 1; n < N; ++n) {
    const auto i = static_cast<std::size_t>(n - 1);
    const double scale = 1.0 / (bg.h * bg.rho_bar[n] * bg.x[n]);
    double diag = 0.0;
    if (n + 1 < N) {
      const double dx = bg.cell_width(n + 1);
      L.upper[i] = mu * bg.x[n + 1] / dx * scale;
      diag += -mu * bg.x[n] / dx + 2.0 * mu;
    } else {
      diag += 4.0 * bg.lambda1;
    }
    if (n == 1) {
      diag += -3.0 * mu;
    } else {
      const double dx = bg.cell_width(n);
      diag += -mu * bg.x[n] / dx;
      L.lower[i] = (mu * bg.x[n - 1] / dx - 2.0 * mu) * scale;
    }
    L.diag[i] = diag * scale;
  }
  return L;
}

/// w_tt of the tangent dynamics on interior nodes (entries 0 and N are zero).
inline std::vector<double> tangent_rhs(const BackgroundGrid& bg, const std::vector<double>& w,
                                       const std::vector<double>& wt) {
  const int N = bg.N;
  auto a = tangent_explicit(bg, w);
  double f_lo = detail::linear_flux(bg, wt, 1);
  for (int n = 1; n < N; ++n) {
    const double f_hi = detail::linear_flux(bg, wt, n + 1);
    a[n] += (f_hi - f_lo) / (bg.h * bg.rho_bar[n] * bg.x[n]);
    f_lo = f_hi;
  }
  return a;
}

/// Self-adjoint discretization M w_tt = -K w - C w_t on nodes 1..N-1. M, K and C are the
/// Hessians of the discrete kinetic energy, potential energy and dissipation
///   T = 1/2 h sum rho x^4 w_t^2,
///   V = 1/2 h sum (3 gamma - 4) phi rho x^4 w^2 + 1/2 h sum_faces c_k ((w_k - w_{k-1})/h)^2,
///   D = h sum mu x^2 [P_n^2 + 2 w_t,n^2] + mu e x_N^3 w_t,N^2,  P_n = (x_n w_t,n - x_{n-1} w_t,n-1)/h,
/// with arithmetic face coefficients c_k = gamma (x_k^4 rho_k^gamma + x_{k-1}^4 rho_{k-1}^gamma)/2,
/// w_0 = w_1 at the origin and w_N slaved to w_{N-1}. Hence dE/dt = -D holds exactly in space.
struct LinearOperator {
  std::vector<double> mass;  // M, indexed by row i = n - 1
  Tridiagonal stiffness;     // K
  Tridiagonal damping;       // C
};

inline LinearOperator build_linear_operator(const BackgroundGrid& bg) {
  const int N = bg.N;
  const double h = bg.h;
  const double g = bg.gamma;
  const double mu = bg.mu;
  const double f = linear_boundary_factor(bg);
  const auto m = static_cast<std::size_t>(N) - 1;
  LinearOperator op{std::vector<double>(m, 0.0), Tridiagonal(m), Tridiagonal(m)};
  auto x4 = [&](int n) { return std::pow(bg.x[n], 4); };
  auto& K = op.stiffness;
  auto& C = op.damping;
  for (int n = 1; n < N; ++n) {
    const auto i = static_cast<std::size_t>(n - 1);
    op.mass[i] = h * bg.rho_bar[n] * x4(n);
    K.diag[i] += h * (3.0 * g - 4.0) * bg.phi[n] * bg.rho_bar[n] * x4(n);
  }
  // Faces k = 2..N of the potential (face 1 vanishes since w_0 = w_1).
  for (int k = 2; k <= N; ++k) {
    const double c = 0.5 * g * (x4(k) * bg.rho_gamma[k] + x4(k - 1) * bg.rho_gamma[k - 1]) / h;
    const auto lo = static_cast<std::size_t>(k - 2);
    if (k < N) {
      const auto hi = static_cast<std::size_t>(k - 1);
      K.diag[lo] += c;
      K.diag[hi] += c;
      K.upper[lo] -= c;
      K.lower[hi] -= c;
    } else {
      K.diag[lo] += c * (f - 1.0) * (f - 1.0);
    }
  }
  // Dissipation: P_n = (x_n w_t,n - x_{n-1} w_t,n-1)/h and the pointwise 2 w_t^2 term.
  for (int n = 1; n <= N; ++n) {
    const double wgt = mu * h * bg.x[n] * bg.x[n];
    if (n < N) {
      const auto i = static_cast<std::size_t>(n - 1);
      const double a = bg.x[n] / h;
      C.diag[i] += wgt * (a * a + 2.0);
      if (n >= 2) {
        const double b = -bg.x[n - 1] / h;
        C.diag[i - 1] += wgt * b * b;
        C.upper[i - 1] += wgt * a * b;
        C.lower[i] += wgt * a * b;
      }
    } else {
      const auto i = static_cast<std::size_t>(N - 2);
      const double a = (bg.x[N] * f - bg.x[N - 1]) / h;
      C.diag[i] += wgt * (a * a + 2.0 * f * f) + mu * bg.closure_exponent() * std::pow(bg.x[N], 3) * f * f;
    }
  }
  return op;
}

namespace detail {

inline std::vector<double> scaled_apply(const Tridiagonal& A, const std::vector<double>& mass,
                                        const std::vector<double>& full, int N) {
  const auto y = A.apply(std::vector<double>(full.begin() + 1, full.begin() + N));
  std::vector<double> out(static_cast<std::size_t>(N) + 1, 0.0);
  for (int n = 1; n < N; ++n) out[n] = -y[n - 1] / mass[n - 1];
  return out;
}

}  // namespace detail

/// w_tt of the self-adjoint linear dynamics on interior nodes (entries 0 and N are zero).
inline std::vector<double> linear_rhs(const BackgroundGrid& bg, const LinearOperator& op,
                                      const std::vector<double>& w, const std::vector<double>& wt) {
  auto a = detail::scaled_apply(op.stiffness, op.mass, w, bg.N);
  const auto b = detail::scaled_apply(op.damping, op.mass, wt, bg.N);
  for (int n = 1; n < bg.N; ++n) a[n] += b[n];
  return a;
}

inline std::vector<double> linear_rhs(const BackgroundGrid& bg, const std::vector<double>& w,
                                      const std::vector<double>& wt) {
  return linear_rhs(bg, build_linear_operator(bg), w, wt);
}

struct LinearEnergyReport {
  double energy = 0.0;
  double dissipation = 0.0;
  bool coercive = true;  // false when 3 gamma - 4 < 0 (energy may be negative)
};

inline double quadratic_form(const Tridiagonal& A, const std::vector<double>& full, int N) {
  const std::vector<double> u(full.begin() + 1, full.begin() + N);
  const auto y = A.apply(u);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * y[i];
  return s;
}

inline LinearEnergyReport linear_energy(const BackgroundGrid& bg, const LinearOperator& op,
                                        const std::vector<double>& w, const std::vector<double>& wt) {
  const int N = bg.N;
  LinearEnergyReport rep;
  rep.coercive = 3.0 * bg.gamma - 4.0 > 0.0;
  double kinetic = 0.0;
  for (int n = 1; n < N; ++n) kinetic += op.mass[n - 1] * wt[n] * wt[n];
  rep.energy = 0.5 * kinetic + 0.5 * quadratic_form(op.stiffness, w, N);
  rep.dissipation = quadratic_form(op.damping, wt, N);
  return rep;
}

inline LinearEnergyReport linear_energy(const BackgroundGrid& bg, const std::vector<double>& w,
                                        const std::vector<double>& wt) {
  return linear_energy(bg, build_linear_operator(bg), w, wt);
}

/// Adapter of the self-adjoint linear system to the generic stepper.
struct LinearSystem {
  using State = LinearState;
  const BackgroundGrid& bg;
  LinearOperator op = build_linear_operator(bg);
  Tridiagonal viscous = scaled_operator(op.damping, op.mass);

  static Tridiagonal scaled_operator(const Tridiagonal& A, const std::vector<double>& mass) {
    Tridiagonal L(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) {
      L.lower[i] = -A.lower[i] / mass[i];
      L.diag[i] = -A.diag[i] / mass[i];
      L.upper[i] = -A.upper[i] / mass[i];
    }
    return L;
  }

  int size() const { return bg.N; }
  double h() const { return bg.h; }
  double mu() const { return bg.mu; }
  double min_weight() const {
    double m = std::numeric_limits<double>::infinity();
    for (int n = 0; n < bg.N; ++n) m = std::min(m, bg.rho_bar[n]);
    return m;
  }
  std::vector<double>& pos(State& s) const { return s.w; }
  std::vector<double>& vel(State& s) const { return s.wt; }
  const std::vector<double>& pos(const State& s) const { return s.w; }
  const std::vector<double>& vel(const State& s) const { return s.wt; }
  std::vector<double> explicit_accel(const std::vector<double>& w) const {
    return detail::scaled_apply(op.stiffness, op.mass, w, bg.N);
  }
  Tridiagonal implicit_operator(const std::vector<double>&) const { return viscous; }
  std::vector<double> full_accel(const State& s) const { return linear_rhs(bg, op, s.w, s.wt); }
  void close(State& s) const { close_linear(bg, s); }
  void check(const std::vector<double>&) const {}
  double functional(const State& s) const { return std::abs(linear_energy(bg, op, s.w, s.wt).energy); }
};

/// Adapter of the tangent dynamics (linearized nonlinear scheme) to the generic stepper.
struct TangentSystem {
  using State = LinearState;
  const BackgroundGrid& bg;
  Tridiagonal viscous = tangent_viscous_operator(bg);

  int size() const { return bg.N; }
  double h() const { return bg.h; }
  double mu() const { return bg.mu; }
  double min_weight() const {
    double m = std::numeric_limits<double>::infinity();
    for (int n = 0; n < bg.N; ++n) m = std::min(m, bg.rho_bar[n]);
    return m;
  }
  std::vector<double>& pos(State& s) const { return s.w; }
  std::vector<double>& vel(State& s) const { return s.wt; }
  const std::vector<double>& pos(const State& s) const { return s.w; }
  const std::vector<double>& vel(const State& s) const { return s.wt; }
  std::vector<double> explicit_accel(const std::vector<double>& w) const { return tangent_explicit(bg, w); }
  Tridiagonal implicit_operator(const std::vector<double>&) const { return viscous; }
  std::vector<double> full_accel(const State& s) const { return tangent_rhs(bg, s.w, s.wt); }
  void close(State& s) const { close_linear(bg, s); }
  void check(const std::vector<double>&) const {}
  double functional(const State& s) const {
    double m = 0.0;
    for (double v : s.w) m = std::max(m, v * v);
    return m;
  }
};

/// Unit-amplitude linear data matching a perturbation family: w = r/x - 1, w_t = v/x at epsilon = 1.
inline LinearState linear_initial_data(const BackgroundGrid& bg, PerturbationSpec spec) {
  spec.epsilon = 1.0;
  const auto size = static_cast<std::size_t>(bg.N) + 1;
  LinearState s;
  s.w.assign(size, 0.0);
  s.wt.assign(size, 0.0);
  for (int n = 1; n <= bg.N; ++n) {
    const auto rv = perturbation_profile(spec, bg.x[n], bg.radius);
    s.w[n] = rv[0] / bg.x[n] - 1.0;
    s.wt[n] = rv[1] / bg.x[n];
  }
  close_linear(bg, s);
  return s;
}

struct LinearRecord {
  double t = 0.0;
  double energy = 0.0;
  double dissipation = 0.0;
  double sup_w = 0.0;
  double sup_wt = 0.0;
  double boundary_residual = 0.0;
};

inline LinearRecord linear_record(const BackgroundGrid& bg, const LinearOperator& op, const LinearState& s) {
  LinearRecord r;
  r.t = s.t;
  const auto e = linear_energy(bg, op, s.w, s.wt);
  r.energy = e.energy;
  r.dissipation = e.dissipation;
  for (int n = 0; n <= bg.N; ++n) {
    r.sup_w = std::max(r.sup_w, std::abs(s.w[n]));
    r.sup_wt = std::max(r.sup_wt, std::abs(s.wt[n]));
  }
  r.boundary_residual = std::abs(linear_boundary_residual(bg, s));
  return r;
}

template <class Sink>
RunResult<LinearState> run_linear(const LinearSystem& sys, const LinearState& s0, const StepPolicy& policy,
                                  Sink&& sink, double sample_interval) {
  return run(sys, s0, policy, std::forward<Sink>(sink), sample_interval);
}

/// Trapezoid-in-time balance E(T) - E(0) + int_0^T D dt over sampled records.
inline double energy_identity_residual(const std::vector<LinearRecord>& recs) {
  if (recs.size() < 2) return 0.0;
  double integral = 0.0;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    integral += 0.5 * (recs[i].dissipation + recs[i - 1].dissipation) * (recs[i].t - recs[i - 1].t);
  }
  return recs.back().energy - recs.front().energy + integral;
}

struct MismatchReport {
  double epsilon = 0.0;
  double mismatch_eps = 0.0;
  double mismatch_half = 0.0;
  double ratio = 0.0;
};

/// Sup over sampled t <= T of max_{n >= 1} |(r_n/x_n - 1) - eps w_n| at eps and eps/2, where w
/// follows the tangent dynamics of the nonlinear scheme.
inline MismatchReport compare_with_nonlinear(const BackgroundGrid& bg, const PerturbationSpec& spec, double T,
                                             StepPolicy policy, double sample_interval) {
  if (std::abs(spec.epsilon) > 1e-3 * (1.0 + 1e-12)) {
    throw Error(ErrorKind::invalid_perturbation, "compare_with_nonlinear requires epsilon <= 1e-3");
  }
  policy.t_end = T;
  std::vector<std::vector<double>> linear_w;
  const TangentSystem tangent{bg};
  run(tangent, linear_initial_data(bg, spec), policy, [&](const LinearState& s) { linear_w.push_back(s.w); },
      sample_interval);

  auto mismatch = [&](double eps) {
    if (eps == 0.0) return 0.0;
    PerturbationSpec sp = spec;
    sp.epsilon = eps;
    std::size_t k = 0;
    double worst = 0.0;
    const NonlinearSystem sys{bg};
    run(sys, build_perturbation(bg, sp), policy,
        [&](const LagrangianState& s) {
          if (k >= linear_w.size()) return;
          for (int n = 1; n <= bg.N; ++n) {
            worst = std::max(worst, std::abs((s.r[n] / bg.x[n] - 1.0) - eps * linear_w[k][n]));
          }
          ++k;
        },
        sample_interval);
    return worst;
  };

  MismatchReport rep;
  rep.epsilon = spec.epsilon;
  rep.mismatch_eps = mismatch(spec.epsilon);
  rep.mismatch_half = mismatch(0.5 * spec.epsilon);
  rep.ratio = rep.mismatch_half > 0.0 ? rep.mismatch_eps / rep.mismatch_half : 0.0;
  return rep;
}

}  // namespace lestab
