// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsesmp/numerics.hpp"

#include <complex>
#include <vector>

namespace lsesmp {

template <typename Scalar>
using CMat = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using CVec = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

enum class TrainingDesign { gaussian, kron };

struct SystemDims {
  int n_t = 8;
  int n_r = 8;
  int n_s = 8;
  int t_len = 16;

  Eigen::Index unknowns() const { return Eigen::Index(n_r) * n_t; }
  Eigen::Index equations() const { return Eigen::Index(n_s) * t_len; }

  void validate(TrainingDesign design = TrainingDesign::gaussian) const {
    if (n_t < 1 || n_r < 1 || n_s < 1 || t_len < 1)
      throw std::invalid_argument("SystemDims: all dimensions must be >= 1");
    if (n_s > n_t || n_s > n_r)
      throw std::invalid_argument("SystemDims: n_s must not exceed n_t or n_r");
    if (design == TrainingDesign::gaussian && equations() < unknowns())
      throw std::invalid_argument("SystemDims: gaussian training needs n_s*t_len >= n_r*n_t (got " +
                                  std::to_string(equations()) + " < " + std::to_string(unknowns()) + ")");
  }
};

template <typename Scalar>
struct GeometricParams {
  Scalar path_loss = 1;
  Scalar spacing_ratio = 0.5;  // d / lambda
  CVec<Scalar> gains;
  Vec<Scalar> departure;  // phi_l
  Vec<Scalar> arrival;    // theta_l

  Eigen::Index paths() const { return gains.size(); }
};

struct SparseChannelSpec {
  double eta = 0.05;
  double u_h = 10.0;
  double var_h = 10.0;

  double beta() const { return u_h * u_h / var_h; }
  void validate() const {
    if (!(eta > 0 && eta <= 1)) throw std::invalid_argument("SparseChannelSpec: eta must lie in (0, 1]");
    if (!(var_h > 0) || !std::isfinite(u_h))
      throw std::invalid_argument("SparseChannelSpec: need var_h > 0 and finite u_h");
  }
};

template <typename Scalar>
struct ProblemInstance {
  Mat<Scalar> s_bar;
  Vec<Scalar> h_true;
  Vec<Scalar> b_true;  // 0/1
  Vec<Scalar> y_bar;
  Scalar noise_variance = 1;
  Scalar signal_variance = 1;
};

template <typename Scalar>
CVec<Scalar> ula_response(Scalar angle, Eigen::Index n, Scalar spacing_ratio) {
  if (n < 1) throw std::invalid_argument("ula_response: n must be >= 1");
  const Scalar step = 2 * std::numbers::pi_v<Scalar> * spacing_ratio * std::sin(angle);
  CVec<Scalar> a(n);
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(n));
  for (Eigen::Index k = 0; k < n; ++k) a(k) = std::polar(scale, step * Scalar(k));
  return a;
}

// H = A_r diag(alpha) A_t^H with alpha scaled by sqrt(N_r N_t / rho).
template <typename Scalar>
CMat<Scalar> geometric_channel(const SystemDims& dims, const GeometricParams<Scalar>& p) {
  const Eigen::Index l = p.paths();
  if (l < 1) throw std::invalid_argument("geometric_channel: need at least one path");
  if (l > std::min(dims.n_r, dims.n_t))
    throw std::invalid_argument("geometric_channel: more paths than min(n_r, n_t)");
  if (p.departure.size() != l || p.arrival.size() != l)
    throw std::invalid_argument("geometric_channel: angle lists must have one entry per path");
  if (!(p.path_loss > 0)) throw std::invalid_argument("geometric_channel: path_loss must be positive");
  CMat<Scalar> ar(dims.n_r, l), at(dims.n_t, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    ar.col(i) = ula_response(p.arrival(i), dims.n_r, p.spacing_ratio);
    at.col(i) = ula_response(p.departure(i), dims.n_t, p.spacing_ratio);
  }
  const Scalar g = std::sqrt(Scalar(dims.n_r) * dims.n_t / p.path_loss);
  return ar * (g * p.gains).asDiagonal() * at.adjoint();
}

// Unitary DFT, W(k, m) = exp(-j 2 pi k m / n) / sqrt(n).
template <typename Scalar>
CMat<Scalar> dft_matrix(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("dft_matrix: n must be >= 1");
  CMat<Scalar> w(n, n);
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(n));
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index m = 0; m < n; ++m) {
      // reduce k*m mod n first so the phase stays small and exact
      const Scalar ph = -2 * std::numbers::pi_v<Scalar> * Scalar((k * m) % n) / Scalar(n);
      w(k, m) = std::polar(scale, ph);
    }
  return w;
}

template <typename Scalar>
CMat<Scalar> to_beamspace(const CMat<Scalar>& h, const CMat<Scalar>& w_r, const CMat<Scalar>& w_t) {
  if (w_r.rows() != h.rows() || w_t.rows() != h.cols())
    throw std::invalid_argument("to_beamspace: H is " + dims_str(h.rows(), h.cols()) + " but W_r is " +
                                dims_str(w_r.rows(), w_r.cols()) + " and W_t is " +
                                dims_str(w_t.rows(), w_t.cols()));
  return w_r.adjoint() * h * w_t;
}

template <typename Scalar>
struct RealStack {
  Vec<Scalar> y;
  Mat<Scalar> s;
  Vec<Scalar> h;
  Scalar noise_variance;
};

template <typename Scalar>
Vec<Scalar> stack_complex(const CVec<Scalar>& v) {
  Vec<Scalar> out(2 * v.size());
  out << v.real(), v.imag();
  return out;
}

template <typename Scalar>
Mat<Scalar> stack_complex(const CMat<Scalar>& s) {
  const Eigen::Index m = s.rows(), n = s.cols();
  Mat<Scalar> out(2 * m, 2 * n);
  out.topLeftCorner(m, n) = s.real();
  out.topRightCorner(m, n) = -s.imag();
  out.bottomLeftCorner(m, n) = s.imag();
  out.bottomRightCorner(m, n) = s.real();
  return out;
}

template <typename Scalar>
RealStack<Scalar> complex_to_real_stack(const CVec<Scalar>& y, const CMat<Scalar>& s, const CVec<Scalar>& h,
                                        Scalar noise_variance) {
  if (s.rows() != y.size() || s.cols() != h.size())
    throw std::invalid_argument("complex_to_real_stack: S is " + dims_str(s.rows(), s.cols()) +
                                ", y has " + std::to_string(y.size()) + ", h has " + std::to_string(h.size()));
  return {stack_complex(y), stack_complex(s), stack_complex(h), noise_variance / 2};
}

template <typename Scalar = double>
std::pair<Vec<Scalar>, Vec<Scalar>> bernoulli_gaussian_channel(Eigen::Index n, const SparseChannelSpec& spec,
                                                               RandomStream& rng) {
  spec.validate();
  Vec<Scalar> h(n), b(n);
  const double sd = std::sqrt(spec.var_h);
  for (Eigen::Index i = 0; i < n; ++i) {
    // always consume both draws so stream positions do not depend on eta
    const bool on = rng.uniform() < spec.eta;
    const double g = rng.gaussian();
    b(i) = on ? 1 : 0;
    h(i) = on ? Scalar(spec.u_h + sd * g) : Scalar(0);
  }
  return {h, b};
}

template <typename Scalar>
struct KronTraining {
  CMat<Scalar> d;      // C^H W_r, N_s x N_r
  CMat<Scalar> x;      // W_t^H F S, N_t x T
  CMat<Scalar> s_bar;  // X^T kron D
};

// Precoders, combiners and pilots are unconstrained i.i.d. complex Gaussians;
// the product is rescaled so the mean |entry|^2 equals signal_variance.
template <typename Scalar = double>
KronTraining<Scalar> kron_training(const SystemDims& dims, Scalar signal_variance, RandomStream& rng) {
  dims.validate(TrainingDesign::kron);
  auto cgauss = [&](Eigen::Index r, Eigen::Index c) {
    CMat<Scalar> m(r, c);
    const Scalar s = std::sqrt(Scalar(0.5));
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) {
        const Scalar re = Scalar(rng.gaussian()), im = Scalar(rng.gaussian());
        m(i, j) = {s * re, s * im};
      }
    return m;
  };
  const CMat<Scalar> c = cgauss(dims.n_r, dims.n_s);
  const CMat<Scalar> f = cgauss(dims.n_t, dims.n_s);
  const CMat<Scalar> pilots = cgauss(dims.n_s, dims.t_len);
  KronTraining<Scalar> out;
  out.d = c.adjoint() * dft_matrix<Scalar>(dims.n_r);
  out.x = dft_matrix<Scalar>(dims.n_t).adjoint() * f * pilots;
  const CMat<Scalar> xt = out.x.transpose();
  out.s_bar = kron(xt, out.d);
  const Scalar power = out.s_bar.squaredNorm() / Scalar(out.s_bar.size());
  const Scalar g = std::sqrt(signal_variance / power);
  out.s_bar *= g;
  out.x *= g;
  return out;
}

// Real training matrix. The kron design comes back already stacked to real.
template <typename Scalar = double>
Mat<Scalar> build_training(const SystemDims& dims, Scalar signal_variance, TrainingDesign design,
                           RandomStream& rng) {
  if (!(signal_variance > 0)) throw std::invalid_argument("build_training: signal_variance must be positive");
  if (design == TrainingDesign::kron) return stack_complex(kron_training(dims, signal_variance, rng).s_bar);
  dims.validate(design);
  return rng.gaussian_matrix<Scalar>(dims.equations(), dims.unknowns(), std::sqrt(signal_variance));
}

template <typename Scalar>
Vec<Scalar> observe(const Mat<Scalar>& s, const Vec<Scalar>& h, Scalar noise_variance, RandomStream& rng) {
  if (s.cols() != h.size())
    throw std::invalid_argument("observe: S is " + dims_str(s.rows(), s.cols()) + " but h has " +
                                std::to_string(h.size()) + " entries");
  if (!(noise_variance >= 0)) throw std::invalid_argument("observe: negative noise variance");
  Vec<Scalar> y = s * h;
  const Scalar sd = std::sqrt(noise_variance);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += sd * Scalar(rng.gaussian());
  return y;
}

// sigma_n^2 = |S|_F^2 * signal_power / (rows * 10^(snr/10)).  With power 1 the
// ratio |S|_F^2 / E|n|^2 equals the configured SNR.
template <typename Scalar>
Scalar noise_variance_for_snr(const Mat<Scalar>& s, Scalar snr_db, Scalar signal_power = 1) {
  return s.squaredNorm() * signal_power / (Scalar(s.rows()) * std::pow(Scalar(10), snr_db / 10));
}

// One Monte-Carlo realization. Draw order is S, then h (redrawn while all-zero),
// then noise. The noise level uses the realized per-entry channel power.
template <typename Scalar = double>
ProblemInstance<Scalar> make_instance(const SystemDims& dims, const SparseChannelSpec& spec, Scalar snr_db,
                                      TrainingDesign design, RandomStream& rng, Scalar signal_variance = 1) {
  ProblemInstance<Scalar> inst;
  inst.signal_variance = signal_variance;
  inst.s_bar = build_training<Scalar>(dims, signal_variance, design, rng);
  const Eigen::Index n = inst.s_bar.cols();
  for (int attempt = 0;; ++attempt) {
    auto [h, b] = bernoulli_gaussian_channel<Scalar>(n, spec, rng);
    if (h.squaredNorm() > 0) {
      inst.h_true = std::move(h);
      inst.b_true = std::move(b);
      break;
    }
    if (attempt > 100000) throw NumericError("make_instance: could not draw a nonzero channel");
  }
  const Scalar power = inst.h_true.squaredNorm() / Scalar(n);
  inst.noise_variance = noise_variance_for_snr(inst.s_bar, snr_db, power);
  inst.y_bar = observe(inst.s_bar, inst.h_true, inst.noise_variance, rng);
  return inst;
}

}  // namespace lsesmp
