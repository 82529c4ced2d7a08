// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsesmp/estimator.hpp"
#include "lsesmp/numerics.hpp"

#include <optional>
#include <vector>

namespace lsesmp {

template <typename Scalar>
struct CrlbReport {
  Mat<Scalar> cov;
  Scalar trace_mse = 0;
  Eigen::Index rank = 0;
};

template <typename Scalar>
CrlbReport<Scalar> crlb_lse(const Mat<Scalar>& s, Scalar noise_var) {
  require_finite(s, "crlb_lse");
  const Mat<Scalar> gram = s.transpose() * s;
  Eigen::LLT<Mat<Scalar>> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > Scalar(1e-13)))
    throw NumericError("crlb_lse: Gram matrix of " + dims_str(s.rows(), s.cols()) + " training is singular");
  CrlbReport<Scalar> r;
  r.cov = noise_var * llt.solve(Mat<Scalar>::Identity(gram.rows(), gram.cols()));
  r.trace_mse = r.cov.trace();
  r.rank = gram.rows();
  return r;
}

// Singular-FIM bound sigma^2 ((S U_b)^T S U_b)^+. Before returning, checks
// that G = Q^+ Q reproduces diag(b) and that G = G I I^+.
template <typename Scalar>
CrlbReport<Scalar> crlb_lse_smp(const Mat<Scalar>& s, const Vec<Scalar>& b, Scalar noise_var,
                                Scalar pinv_rel_tol = Scalar(1e-10), Scalar check_tol = Scalar(1e-9)) {
  require_finite(s, "crlb_lse_smp");
  if (b.size() != s.cols()) throw std::invalid_argument("crlb_lse_smp: support length does not match S columns");
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (b(i) != 0 && b(i) != 1) throw std::invalid_argument("crlb_lse_smp: support must be binary");
  CrlbReport<Scalar> r;
  const Eigen::Index n = b.size();
  if (b.sum() == 0) {
    r.cov = Mat<Scalar>::Zero(n, n);
    return r;
  }
  // off-support rows and columns of Q, G and the FIM are exactly zero, so
  // everything is computed on the support block
  const auto idx = active_indices(b);
  const Eigen::Index k = Eigen::Index(idx.size());
  const Mat<Scalar> sb = s(Eigen::all, idx);
  const Mat<Scalar> q = sb.transpose() * sb;
  const Mat<Scalar> qp = pseudo_inverse(q, pinv_rel_tol);
  const Mat<Scalar> g = qp * q;
  const Scalar g_err = (g - Mat<Scalar>::Identity(k, k)).cwiseAbs().maxCoeff();
  if (g_err > check_tol)
    throw NumericError("crlb_lse_smp: G deviates from diag(b) by " + std::to_string(g_err));
  const Mat<Scalar> fim = q / noise_var;
  const Mat<Scalar> fim_p = pseudo_inverse(fim, pinv_rel_tol);
  const Scalar c_err = (g * fim * fim_p - g).cwiseAbs().maxCoeff();
  if (c_err > check_tol) throw NumericError("crlb_lse_smp: G != G I I^+ (residual " + std::to_string(c_err) + ")");
  r.cov = Mat<Scalar>::Zero(n, n);
  r.cov(idx, idx) = noise_var * qp;
  r.trace_mse = r.cov.trace();
  r.rank = Eigen::Index(b.sum());
  return r;
}

// max |score(h) - I(h) (h_genie - h)| for the support-restricted Gaussian model.
template <typename Scalar>
Scalar score_identity_check(const Mat<Scalar>& s, const Vec<Scalar>& b, const Vec<Scalar>& h, const Vec<Scalar>& y,
                            Scalar noise_var, Scalar pinv_rel_tol = Scalar(1e-10)) {
  const Mat<Scalar> sb = s * b.asDiagonal();
  const Vec<Scalar> h_hat = lse_fine(y, s, b, noise_var, pinv_rel_tol).h;
  const Vec<Scalar> score = sb.transpose() * (y - sb * h) / noise_var;
  const Mat<Scalar> fim = sb.transpose() * sb / noise_var;
  return (score - fim * (h_hat - h)).cwiseAbs().maxCoeff();
}

struct ExitParams {
  int t_len = 64;
  int n_t = 32;
  double snr = 10;   // sigma_s^2 sigma_h^2 / sigma_n^2
  double beta = 10;  // u_h^2 / sigma_h^2
  double l_0 = 0;
  int quad_points = 2048;
  double trunc_sigmas = 8;
  double quad_rel_tol = 1e-8;
  int quad_max_points = 1 << 20;

  void validate() const {
    if (t_len < 1 || n_t < 1) throw std::invalid_argument("ExitParams: t_len and n_t must be >= 1");
    if (!(snr > 0)) throw std::invalid_argument("ExitParams: snr must be positive");
    if (!(beta >= 0)) throw std::invalid_argument("ExitParams: beta must be >= 0");
    if (quad_points < 64) throw std::invalid_argument("ExitParams: quad_points must be >= 64");
    if (!(trunc_sigmas > 0)) throw std::invalid_argument("ExitParams: trunc_sigmas must be positive");
  }
};

// Closed-form extrinsic increment. For l > 0 every term is divided through by
// e^{2l}, which is the same expression without overflow for any l.
inline double exit_zeta(double l, const ExitParams& p) {
  const double beta = p.beta, inv_snr = 1.0 / p.snr, nt1 = double(p.n_t - 1);
  double a1, a2, be2l;
  if (l > 0) {
    const double t = std::exp(-l);
    a1 = (1 + t) * (1 + t);
    a2 = nt1 * (1 + t * (1 + beta));
    be2l = beta;
  } else {
    const double e = std::exp(l);
    a1 = (1 + e) * (1 + e);
    a2 = nt1 * e * (1 + e + beta);
    be2l = beta * e * e;
  }
  const double d1 = a2 + a1 * (inv_snr + 1);
  const double d2 = a2 + a1 * inv_snr;
  // first numerator carries -beta, which scales like e^{-2l} after the division
  const double minus_beta = l > 0 ? -beta * std::exp(-2 * l) : -beta;
  return 0.5 * ((minus_beta - a1 * inv_snr) / d1 + (be2l + a1 * inv_snr) / d2) - 0.5 * std::log1p(a1 / d2);
}

namespace detail {
inline double exit_integral(double u, const ExitParams& p, int points) {
  // composite Simpson on u +- trunc_sigmas * sqrt(2u)
  if (points % 2) ++points;
  const double sd = std::sqrt(2 * u);
  const double lo = u - p.trunc_sigmas * sd, hi = u + p.trunc_sigmas * sd;
  const double step = (hi - lo) / points;
  const double norm = 1.0 / std::sqrt(4 * std::numbers::pi * u);
  auto f = [&](double l) {
    const double d = l - u;
    return exit_zeta(l, p) * std::exp(-d * d / (4 * u)) * norm;
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < points; ++i) acc += f(lo + i * step) * (i % 2 ? 4 : 2);
  return acc * step / 3;
}
}  // namespace detail

// E{zeta(l)}, l ~ N(u, 2u), refined by doubling until two rules agree.
inline double exit_expectation(double u, const ExitParams& p, int* points_used = nullptr) {
  if (!(u > 0)) throw std::domain_error("exit_update: u_v must be positive");
  int n = p.quad_points;
  double prev = detail::exit_integral(u, p, n);
  for (;;) {
    const int n2 = 2 * n;
    const double cur = detail::exit_integral(u, p, n2);
    if (std::abs(cur - prev) <= p.quad_rel_tol * std::abs(cur) + 1e-300 || n2 >= p.quad_max_points) {
      if (points_used) *points_used = n2;
      return cur;
    }
    prev = cur;
    n = n2;
  }
}

inline double exit_update(double u, const ExitParams& p) {
  p.validate();
  if (!(u > 0)) throw std::domain_error("exit_update: u_v must be positive");
  if (p.t_len == 1) return p.l_0;
  return p.l_0 + double(p.t_len - 1) * exit_expectation(u, p);
}

enum class ExitStatus { converged, left_domain, step_limit };

struct ExitTrajectory {
  std::vector<double> u_values;
  std::optional<double> fixed_point;
  bool converged = false;
  ExitStatus status = ExitStatus::step_limit;
  int steps = 0;
  double ber_at_fixed_point = 0.5;
};

inline double ber_predict(double u) {
  if (!(u >= 0)) throw std::domain_error("ber_predict: u_v must be >= 0");
  return 0.5 * std::erfc(std::sqrt(u) / 2);
}

// Iterates the recursion. Stops when |du| < 1e-8 max(1, u) three steps in a row,
// when the mean leaves u > 0 (no admissible fixed point reachable), or at max_steps.
inline ExitTrajectory exit_trajectory(const ExitParams& p, double u_init, int max_steps = 500) {
  if (!(u_init > 0)) throw std::domain_error("exit_trajectory: u_init must be positive");
  ExitTrajectory tr;
  tr.u_values.push_back(u_init);
  double u = u_init;
  int calm = 0;
  for (int step = 1; step <= max_steps; ++step) {
    const double next = exit_update(u, p);
    tr.u_values.push_back(next);
    tr.steps = step;
    if (!(next > 0)) {
      tr.status = ExitStatus::left_domain;
      return tr;
    }
    calm = std::abs(next - u) < 1e-8 * std::max(1.0, u) ? calm + 1 : 0;
    u = next;
    if (calm >= 3) {
      tr.status = ExitStatus::converged;
      tr.converged = true;
      tr.fixed_point = u;
      tr.ber_at_fixed_point = ber_predict(u);
      return tr;
    }
  }
  return tr;
}

// Roots of exit_update(u) - u on [u_lo, u_hi]: sign changes on a log grid,
// refined by bisection.
inline std::vector<double> exit_fixed_points(const ExitParams& p, double u_lo = 1e-3, double u_hi = 1e3,
                                             int grid = 2000) {
  if (!(u_lo > 0 && u_hi > u_lo) || grid < 2) throw std::invalid_argument("exit_fixed_points: bad grid");
  auto g = [&](double u) { return exit_update(u, p) - u; };
  std::vector<double> roots;
  const double r = std::log(u_hi / u_lo) / (grid - 1);
  double a = u_lo, ga = g(a);
  for (int i = 1; i < grid; ++i) {
    const double b = u_lo * std::exp(r * i), gb = g(b);
    if (ga == 0) roots.push_back(a);
    else if ((ga < 0) != (gb < 0) && gb != 0) {
      double lo = a, hi = b, glo = ga;
      for (int k = 0; k < 100 && hi - lo > 1e-12 * hi; ++k) {
        const double mid = 0.5 * (lo + hi), gm = g(mid);
        if ((gm < 0) == (glo < 0)) lo = mid, glo = gm;
        else hi = mid;
      }
      roots.push_back(0.5 * (lo + hi));
    }
    a = b;
    ga = gb;
  }
  return roots;
}

}  // namespace lsesmp
