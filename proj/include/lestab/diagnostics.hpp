#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lestab/error.hpp"
#include "lestab/least_squares.hpp"
#include "lestab/scheme.hpp"

namespace lestab {

struct EnergyReport {
  double energy = 0.0;
  double dissipation = 0.0;
};

/// Potential part of the energy density per unit x^2 rho_bar^gamma, shifted so that it
/// vanishes at a = r/x = 1, b = r_x = 1. Written to avoid cancellation near equilibrium.
inline double potential_bracket(double gamma, double a, double b) {
  const double g1 = gamma - 1.0;
  return std::expm1(-g1 * (2.0 * std::log(a) + std::log(b))) / g1 + (b - a * a) / (a * a) - 4.0 * (1.0 - a) / a;
}

inline EnergyReport physical_energy(const BackgroundGrid& bg, const LagrangianState& s) {
  check_mesh(s.r);
  const int N = bg.N;
  const double h = bg.h;
  EnergyReport rep;
  for (int n = 1; n <= N; ++n) {
    const double x2 = bg.x[n] * bg.x[n];
    const double rx = (s.r[n] - s.r[n - 1]) / bg.cell_width(n);
    const double a = s.r[n] / bg.x[n];
    rep.energy += h * (0.5 * x2 * bg.rho_bar[n] * s.v[n] * s.v[n]);
    if (bg.rho_gamma[n] > 0.0) rep.energy += h * x2 * bg.rho_gamma[n] * potential_bracket(bg.gamma, a, rx);

    const double r = s.r[n];
    const double rx_h = (s.r[n] - s.r[n - 1]) / h;
    const double vr_lo = (n == 1) ? s.v[1] / s.r[1] : s.v[n - 1] / s.r[n - 1];
    const double d_vr = (s.v[n] / r - vr_lo) / h;
    const double d_r2v = (r * r * s.v[n] - s.r[n - 1] * s.r[n - 1] * s.v[n - 1]) / h;
    rep.dissipation += h * ((4.0 * bg.lambda1 / 3.0) * (r * r * r * r / rx_h) * d_vr * d_vr +
                            bg.lambda2 * d_r2v * d_r2v / (rx_h * r * r));
  }
  return rep;
}

struct EulerianTable {
  std::vector<double> r;
  std::vector<double> rho;
  std::vector<double> u;
};

/// Eulerian density rho_n = x_n^2 rho_bar_n / (r_n^2 (r_n - r_{n-1})/h) and velocity u_n = v_n.
inline EulerianTable to_eulerian(const BackgroundGrid& bg, const LagrangianState& s) {
  check_mesh(s.r);
  const int N = bg.N;
  EulerianTable e;
  e.r = s.r;
  e.u = s.v;
  e.rho.assign(static_cast<std::size_t>(N) + 1, 0.0);
  for (int n = 0; n < N; ++n) {
    const int k = std::max(n, 1);
    const double ratio = bg.x[k] / s.r[k];
    const double rx = (s.r[k] - s.r[k - 1]) / bg.cell_width(k);
    e.rho[n] = bg.rho_bar[n] * ratio * ratio / rx;
  }
  return e;
}

/// max over n < N of rho_bar_n^w |rho_n - rho_bar_n|.
inline double density_deviation(const BackgroundGrid& bg, const LagrangianState& s, double weight_exponent) {
  const auto e = to_eulerian(bg, s);
  double m = 0.0;
  for (int n = 0; n < bg.N; ++n) {
    m = std::max(m, std::pow(bg.rho_bar[n], weight_exponent) * std::abs(e.rho[n] - bg.rho_bar[n]));
  }
  return m;
}

struct DiagnosticOptions {
  std::vector<double> alpha_list;  // empty selects {gamma-1, gamma, 2 gamma-1}
  double delta = 0.5;

  std::vector<double> alphas(double gamma) const {
    if (!alpha_list.empty()) return alpha_list;
    return {gamma - 1.0, gamma, 2.0 * gamma - 1.0};
  }
};

struct DiagnosticRecord {
  double t = 0.0;
  double E_N = 0.0;
  double E_script = 0.0;
  std::vector<double> F_alpha;
  double sup_r_minus_x = 0.0;
  double sup_v = 0.0;
  double sup_rx_minus_1 = 0.0;
  double sup_vx = 0.0;
  double sup_ur = 0.0;  // max of |u_r| and |u/r|
  double rho_weighted = 0.0;
  double L2_v = 0.0;
  double L2_xvx = 0.0;
  double L2_r_minus_x = 0.0;
  double L2_weighted_v = 0.0;
  double L2_weighted_r = 0.0;
  double rxx_L2_inner = 0.0;  // squared L2 norm of r_xx on [0, delta R]
  double R_t = 0.0;
  double R_residual = 0.0;
  double boundary_accel = 0.0;
  double boundary_stress = 0.0;  // |B_N| / (|v_{N-1}|/h + 1)
  double phys_energy = 0.0;
  double dissipation_rate = 0.0;
};

/// Every norm and functional at one state; accel must be rhs at this state. The boundary
/// acceleration is left for the caller (it needs the sampled history).
inline DiagnosticRecord weighted_norms(const BackgroundGrid& bg, const LagrangianState& s,
                                       const std::vector<double>& accel, const DiagnosticOptions& opt = {}) {
  check_mesh(s.r);
  const int N = bg.N;
  const double h = bg.h;
  const double g = bg.gamma;
  DiagnosticRecord d;
  d.t = s.t;
  d.E_N = discrete_energy_functional(bg, s, accel);

  double sum_v2 = 0.0, sum_xvx2 = 0.0, sum_rmx2 = 0.0, sum_xrx2 = 0.0;
  double sup_rx_outer = 0.0;
  for (int n = 0; n <= N; ++n) {
    d.sup_r_minus_x = std::max(d.sup_r_minus_x, std::abs(s.r[n] - bg.x[n]));
    d.sup_v = std::max(d.sup_v, std::abs(s.v[n]));
  }
  for (int n = 1; n <= N; ++n) {
    const double rx_dev = strain_deviation(bg, s.r, n);
    const double vx = (s.v[n] - s.v[n - 1]) / h;
    d.sup_rx_minus_1 = std::max(d.sup_rx_minus_1, std::abs(rx_dev));
    d.sup_vx = std::max(d.sup_vx, std::abs(vx));
    d.sup_ur = std::max({d.sup_ur, std::abs((s.v[n] - s.v[n - 1]) / (s.r[n] - s.r[n - 1])),
                         std::abs(s.v[n] / s.r[n])});
    if (bg.x[n] >= 0.5 * bg.radius) sup_rx_outer = std::max(sup_rx_outer, std::abs(rx_dev));
    sum_v2 += s.v[n] * s.v[n];
    sum_xvx2 += bg.x[n] * bg.x[n] * vx * vx;
    sum_rmx2 += (s.r[n] - bg.x[n]) * (s.r[n] - bg.x[n]);
    sum_xrx2 += bg.x[n] * bg.x[n] * rx_dev * rx_dev;
    const double a = s.r[n] / bg.x[n];
    d.L2_weighted_v += h * bg.x[n] * bg.x[n] * bg.rho_bar[n] * s.v[n] * s.v[n];
    d.L2_weighted_r += h * bg.x[n] * bg.x[n] * bg.rho_gamma[n] * ((a - 1.0) * (a - 1.0) + rx_dev * rx_dev);
  }
  d.L2_v = std::sqrt(h * sum_v2);
  d.L2_xvx = std::sqrt(h * sum_xvx2);
  d.L2_r_minus_x = std::sqrt(h * sum_rmx2);

  const auto alphas = opt.alphas(g);
  std::vector<double> relaxed(alphas.size(), 0.0);
  double weighted = 0.0, accel_sum = 0.0;
  for (int n = 1; n < N; ++n) {
    const double rxx = second_difference(bg, s.r, n);
    const double lo = (n == 1) ? s.r[1] / bg.x[1] : s.r[n - 1] / bg.x[n - 1];
    const double dratio = (s.r[n] / bg.x[n] - lo) / h;
    weighted += std::pow(bg.rho_bar[n], 2.0 * g - 1.0) * (rxx * rxx + dratio * dratio);
    accel_sum += bg.rho_bar[n] * accel[n] * accel[n];
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      relaxed[k] += std::pow(bg.rho_bar[n], 2.0 * g - 1.0 - alphas[k]) * rxx * rxx;
    }
    if (bg.x[n] <= opt.delta * bg.radius) d.rxx_L2_inner += h * rxx * rxx;
  }
  d.E_script = h * (sum_rmx2 + sum_xrx2 + sum_v2 + sum_xvx2) + sup_rx_outer * sup_rx_outer + h * weighted +
               h * accel_sum;
  for (double v : relaxed) d.F_alpha.push_back(d.E_N + h * v);

  d.rho_weighted = density_deviation(bg, s, (3.0 * g - 6.0) / 4.0);
  d.R_t = s.r[N];
  d.R_residual = std::abs(s.r[N] - bg.radius);
  d.boundary_accel = accel[N];
  d.boundary_stress = std::abs(boundary_stress(bg, s)) / (std::abs(s.v[N - 1]) / h + 1.0);
  const auto e = physical_energy(bg, s);
  d.phys_energy = e.energy;
  d.dissipation_rate = e.dissipation;
  return d;
}

/// Builds records along a trajectory; the boundary acceleration is the backward difference
/// of the sampled v_N (the first record uses the closure-derived acceleration).
class DiagnosticRecorder {
 public:
  DiagnosticRecorder(const BackgroundGrid& bg, DiagnosticOptions opt) : bg_(bg), opt_(std::move(opt)) {}

  const DiagnosticRecord& record(const LagrangianState& s) {
    auto rec = weighted_norms(bg_, s, rhs(bg_, s), opt_);
    const double vN = s.v[bg_.N];
    if (have_prev_ && s.t > prev_t_) rec.boundary_accel = (vN - prev_vN_) / (s.t - prev_t_);
    prev_t_ = s.t;
    prev_vN_ = vN;
    have_prev_ = true;
    records_.push_back(std::move(rec));
    return records_.back();
  }

  const std::vector<DiagnosticRecord>& records() const { return records_; }

 private:
  const BackgroundGrid& bg_;
  DiagnosticOptions opt_;
  std::vector<DiagnosticRecord> records_;
  double prev_t_ = 0.0;
  double prev_vN_ = 0.0;
  bool have_prev_ = false;
};

struct RefinedExponents {
  double alpha = 0.0;
  double kappa = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double p_u_Linf = 0.0;
  double p_ur_Linf = 0.0;
  double p_rho_weighted = 0.0;  // weight (gamma - 2)/2
};

struct DecayExponentTable {
  double gamma = 0.0;
  double theta = 0.0;
  double p_r_Linf = 0.0;
  double p_u_Linf = 0.0;
  double p_ur_Linf = 0.0;
  double p_rho_weighted = 0.0;
  double p_v_L2 = 0.0;
  double p_rminusx_L2 = 0.0;
  std::optional<RefinedExponents> refined;
};

inline DecayExponentTable theoretical_exponents(double gamma, double theta, std::optional<double> alpha = {}) {
  double cap = 2.0 * (gamma - 1.0) / (3.0 * gamma);
  if (alpha) cap = std::min(cap, 2.0 * (gamma - *alpha) / gamma);
  if (!(theta > 0.0) || !(theta < cap)) {
    std::ostringstream msg;
    msg << "theta = " << theta << " outside 0 < theta < " << cap
        << " (0 < theta < 2(gamma-1)/(3 gamma)" << (alpha ? " and theta < 2(gamma-alpha)/gamma" : "") << ")";
    throw Error(ErrorKind::domain, msg.str());
  }
  DecayExponentTable t;
  t.gamma = gamma;
  t.theta = theta;
  t.p_r_Linf = (gamma - 1.0) / gamma - theta / 2.0;
  t.p_u_Linf = (3.0 * gamma - 2.0) / (4.0 * gamma) - theta / 2.0;
  t.p_ur_Linf = (gamma - 1.0) / (2.0 * gamma) - theta / 2.0;
  t.p_rho_weighted = (gamma - 1.0) / (2.0 * gamma) - theta / 2.0;
  t.p_v_L2 = (2.0 * gamma - 1.0) / (2.0 * gamma) - theta / 2.0;
  t.p_rminusx_L2 = 3.0 * (gamma - 1.0) / (2.0 * gamma) - theta / 2.0;

  if (alpha && *alpha >= gamma - 1.0 && *alpha < gamma) {
    const double a = *alpha;
    RefinedExponents r;
    r.alpha = a;
    r.kappa = (a == gamma - 1.0) ? 0.0 : std::min(a - (gamma - 1.0), gamma - 1.0) / gamma - theta;
    const double k = r.kappa;
    const double A = k / 2.0 + (4.0 * gamma - 3.0) / (2.0 * gamma) - 1.5 * theta;
    r.b1 = std::min(std::max(A * (a + 1.0) / (2.0 * gamma - 1.0 + a),
                             1.5 * k + (2.0 * gamma - 1.0) / (2.0 * gamma) - theta / 2.0),
                    A) +
           (2.0 * gamma - 1.0) / gamma - theta;
    r.b2 = std::min(A, k / 4.0 + (10.0 * gamma - 9.0) / (4.0 * gamma) - 2.25 * theta) + A;
    r.p_u_Linf = (8.0 * gamma - 5.0) / (4.0 * gamma) + k / 4.0 - 1.25 * theta;
    r.p_ur_Linf = 0.5 * std::min(r.b1, r.b2);
    r.p_rho_weighted = k / 2.0 + (2.0 * gamma - 1.0) / (2.0 * gamma) - theta / 2.0;
    t.refined = r;
  }
  return t;
}

inline constexpr const char* kNoiseStatus = "decayed below floating noise";

struct DecayFitResult {
  std::string quantity;
  double t_a = 0.0;
  double t_b = 0.0;
  int samples = 0;
  double fitted_exponent = 0.0;
  double fit_residual = 0.0;
  double theoretical_floor = 0.0;
  double slack = 0.0;
  bool pass = false;
  std::string status = "fit";
};

/// Least-squares slope of log(value) against log(1 + t) over [t_a, t_b]; the exponent is the
/// negated slope. Samples below noise_rel times the series maximum end the usable window.
inline DecayFitResult fit_decay(const std::string& quantity, const std::vector<double>& t,
                                const std::vector<double>& values, double t_a, double t_b, double floor,
                                double slack, double noise_rel = 1e-12, int min_samples = 16) {
  if (!(t_b > t_a) || t_a < 5.0) {
    std::ostringstream msg;
    msg << "fit window [" << t_a << ", " << t_b << "] must satisfy t_b > t_a >= 5";
    throw Error(ErrorKind::cannot_fit, msg.str());
  }
  DecayFitResult r;
  r.quantity = quantity;
  r.t_a = t_a;
  r.t_b = t_b;
  r.theoretical_floor = floor;
  r.slack = slack;

  double vmax = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::cannot_fit, quantity + ": non-finite value (blow-up)");
    vmax = std::max(vmax, std::abs(v));
  }
  const double noise = noise_rel * vmax;

  std::vector<double> lx, ly;
  int in_window = 0;
  bool truncated = false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_a || t[i] > t_b) continue;
    ++in_window;
    if (values[i] < 0.0) throw Error(ErrorKind::cannot_fit, quantity + ": negative value in window");
    if (values[i] <= noise || values[i] == 0.0) {
      truncated = true;
      break;
    }
    lx.push_back(std::log1p(t[i]));
    ly.push_back(std::log(values[i]));
  }
  if (!truncated && in_window < min_samples) {
    throw Error(ErrorKind::cannot_fit, quantity + ": only " + std::to_string(in_window) +
                                           " samples in window, need " + std::to_string(min_samples));
  }
  r.samples = static_cast<int>(lx.size());
  if (static_cast<int>(lx.size()) < min_samples) {
    r.status = kNoiseStatus;
    r.pass = true;
    return r;
  }
  const auto fit = fit_line(lx, ly);
  r.fitted_exponent = -fit.coefficients[1];
  r.fit_residual = fit.rms_residual;
  if (truncated) r.status = "fit (window truncated at noise floor)";
  r.pass = r.fitted_exponent >= floor - slack;
  return r;
}

}  // namespace lestab
