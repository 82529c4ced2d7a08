// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsesmp {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXr = Mat<double>;
using VectorXr = Vec<double>;

// Raised for anything that should abort a trial (exit code 2 at the CLI).
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::string dims_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (m.size() == 0)
    throw NumericError(std::string(what) + ": empty matrix");
  if (!m.allFinite())
    throw NumericError(std::string(what) + ": non-finite entry in " +
                       dims_str(m.rows(), m.cols()) + " matrix");
}

// SVD pseudo-inverse; singular values below rel_tol * sigma_max are dropped.
template <typename Derived>
Mat<typename Derived::Scalar> pseudo_inverse(const Eigen::MatrixBase<Derived>& a,
                                             typename Derived::Scalar rel_tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (!(rel_tol > 0 && rel_tol < 1))
    throw std::invalid_argument("pseudo_inverse: rel_tol must lie in (0, 1)");
  require_finite(a, "pseudo_inverse");
  Eigen::BDCSVD<Mat<Scalar>> svd(a.derived(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericError("pseudo_inverse: SVD did not converge on " + dims_str(a.rows(), a.cols()) +
                       " input");
  const auto& sv = svd.singularValues();
  const Scalar cut = sv.size() ? rel_tol * sv(0) : Scalar(0);
  Vec<Scalar> inv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) inv(i) = (sv(i) > cut && sv(i) > 0) ? Scalar(1) / sv(i) : Scalar(0);
  Mat<Scalar> out = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  // BDCSVD can hand back NaN without reporting failure (seen on large, mostly zero input)
  if (!out.allFinite())
    throw NumericError("pseudo_inverse: SVD produced non-finite values on " + dims_str(a.rows(), a.cols()) +
                       " input");
  return out;
}

// Indices of the nonzero entries of a weight vector.
template <typename Derived>
std::vector<Eigen::Index> active_indices(const Eigen::MatrixBase<Derived>& w) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) != 0) idx.push_back(i);
  return idx;
}

inline constexpr Eigen::Index kron_max_elements = Eigen::Index(1) << 28;

template <typename DA, typename DB>
Mat<typename DA::Scalar> kron(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                              Eigen::Index max_elements = kron_max_elements) {
  using Scalar = typename DA::Scalar;
  const Eigen::Index r = a.rows() * b.rows(), c = a.cols() * b.cols();
  if (a.rows() && b.rows() && (r / a.rows() != b.rows() || (c && r > max_elements / c)))
    throw std::length_error("kron: result " + dims_str(r, c) + " exceeds element limit");
  Mat<Scalar> out(r, c);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

template <typename Scalar>
Scalar gaussian_logpdf(Scalar x, Scalar mean, Scalar variance) {
  if (!(variance > 0)) throw std::domain_error("gaussian_logpdf: variance must be positive");
  const Scalar d = x - mean;
  return Scalar(-0.5) * (std::log(Scalar(2) * std::numbers::pi_v<Scalar> * variance) + d * d / variance);
}

template <typename Scalar>
Scalar logistic(Scalar l) {
  // Split on sign so exp never overflows.
  if (l >= 0) return Scalar(1) / (Scalar(1) + std::exp(-l));
  const Scalar e = std::exp(l);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p / (Scalar(1) - p));
}

// splitmix64 finalizer; also the hash used to derive trial streams.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: draw n is mix64(seed + (n+1)*golden), i.e. splitmix64
// addressed by position. Gaussians are Box-Muller pairs; the second half of a
// pair is cached, so position always counts uniforms consumed.
class RandomStream {
public:
  static constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

  explicit RandomStream(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return pos_; }

  std::uint64_t at(std::uint64_t n) const { return mix64(seed_ + (n + 1) * golden); }
  std::uint64_t next_u64() { return at(pos_++); }

  // Uniform on the open interval (0, 1).
  double uniform() { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename Scalar = double>
  Mat<Scalar> gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Scalar stddev = 1) {
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * Scalar(gaussian());
    return m;
  }

private:
  std::uint64_t seed_;
  std::uint64_t pos_ = 0;
  double spare_ = 0;
  bool has_spare_ = false;
};

inline RandomStream stream_for_trial(std::uint64_t base_seed, std::uint64_t trial) {
  return RandomStream(mix64(mix64(base_seed) ^ (trial * RandomStream::golden + 0x632be59bd9b4e019ULL)));
}

}  // namespace lsesmp
