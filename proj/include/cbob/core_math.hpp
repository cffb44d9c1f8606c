#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace cbob {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kLog2Pi = 1.83787706640934548356;

// ---------------------------------------------------------------------------
// Standard normal primitives.
// ---------------------------------------------------------------------------

inline double norm_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// erfc-based CDF; accurate in both tails (no underflow until z < -37).
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

namespace detail {
// Series factor for the tail expansion of phi(z)/Phi(z) at z = -t:
//   z + ratio = (1/t) * (1 - 2u + 10u^2 - 74u^3 + 706u^4),  u = 1/t^2.
inline double tail_z_plus_ratio(double t) {
  const double u = 1.0 / (t * t);
  return (1.0 - u * (2.0 - u * (10.0 - u * (74.0 - 706.0 * u)))) / t;
}
}  // namespace detail

struct ProbitTail {
  double ratio;         // phi(z) / Phi(z)
  double z_plus_ratio;  // z + phi(z)/Phi(z), computed without cancellation
};

// phi(z)/Phi(z) and z + phi(z)/Phi(z). Direct evaluation is stable down to
// z = -30; below that the asymptotic expansion avoids underflow. Never
// divides by zero.
inline ProbitTail probit_tail(double z) {
  if (z > -30.0) {
    const double r = norm_pdf(z) / norm_cdf(z);
    return {r, z + r};
  }
  const double zr = detail::tail_z_plus_ratio(-z);
  return {-z + zr, zr};
}

// log Phi(z), stable for arbitrarily negative z.
inline double norm_logcdf(double z) {
  if (z > -30.0) return std::log(norm_cdf(z));
  const double r = -z + detail::tail_z_plus_ratio(-z);
  return -0.5 * z * z - 0.5 * kLog2Pi - std::log(r);
}

// log h(z) where h(z) = z*Phi(z) + phi(z) (the unit-variance improvement
// integral). h > 0 for all z; the tail branch uses
//   h(z) = phi(z)/z^2 * (1 - 3u + 15u^2 - 105u^3 + 945u^4),  u = 1/z^2.
inline double log_ei_term(double z) {
  if (z > -30.0) return std::log(z * norm_cdf(z) + norm_pdf(z));
  const double u = 1.0 / (z * z);
  const double series = 1.0 - u * (3.0 - u * (15.0 - u * (105.0 - 945.0 * u)));
  return -0.5 * z * z - 0.5 * kLog2Pi + std::log(u * series);
}

// ---------------------------------------------------------------------------
// Matern 5/2 kernel with per-dimension lengthscales.
// ---------------------------------------------------------------------------

template <typename Scalar = double>
struct KernelParamsT {
  Scalar signal_variance{1};
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lengthscales;
};
using KernelParams = KernelParamsT<double>;

template <typename Scalar = double>
struct MeanParamsT {
  Scalar constant{0};
};
using MeanParams = MeanParamsT<double>;

template <typename Scalar>
void validate_kernel_params(const KernelParamsT<Scalar>& p, Eigen::Index dim) {
  if (p.lengthscales.size() != dim)
    throw std::invalid_argument("kernel lengthscale dimension mismatch");
  if (!(p.signal_variance > Scalar(0)))
    throw std::invalid_argument("signal_variance must be positive");
  if ((p.lengthscales.array() <= Scalar(0)).any())
    throw std::invalid_argument("lengthscales must be positive");
}

// Covariance between two points given the scaled squared distance r^2.
template <typename Scalar>
Scalar matern52_from_r2(Scalar r2, Scalar signal_variance) {
  using std::exp;
  using std::sqrt;
  const Scalar r = sqrt(r2);
  const Scalar sr5 = sqrt(Scalar(5)) * r;
  return signal_variance * (Scalar(1) + sr5 + Scalar(5) / Scalar(3) * r2) * exp(-sr5);
}

template <typename DerivedA, typename DerivedB, typename Scalar>
Scalar matern52(const Eigen::MatrixBase<DerivedA>& a,
                const Eigen::MatrixBase<DerivedB>& b,
                const KernelParamsT<Scalar>& params) {
  validate_kernel_params(params, a.size());
  if (a.size() != b.size())
    throw std::invalid_argument("matern52: point dimension mismatch");
  const Scalar r2 =
      ((a - b).template cast<Scalar>().cwiseQuotient(params.lengthscales)).squaredNorm();
  return matern52_from_r2(r2, params.signal_variance);
}

// Gram matrix of the columns of X (dim x N).
template <typename Derived, typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> kernel_matrix(
    const Eigen::MatrixBase<Derived>& X, const KernelParamsT<Scalar>& params) {
  validate_kernel_params(params, X.rows());
  const Eigen::Index n = X.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = params.signal_variance;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const Scalar r2 =
          ((X.col(i) - X.col(j)).template cast<Scalar>().cwiseQuotient(params.lengthscales))
              .squaredNorm();
      K(i, j) = matern52_from_r2(r2, params.signal_variance);
      K(j, i) = K(i, j);
    }
  }
  return K;
}

// Cross-covariances between the columns of X and a single point x.
template <typename DerivedX, typename DerivedP, typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> kernel_cross(
    const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedP>& x,
    const KernelParamsT<Scalar>& params) {
  validate_kernel_params(params, X.rows());
  if (x.size() != X.rows())
    throw std::invalid_argument("kernel_cross: point dimension mismatch");
  const Eigen::Index n = X.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar r2 =
        ((X.col(i) - x).template cast<Scalar>().cwiseQuotient(params.lengthscales))
            .squaredNorm();
    k(i) = matern52_from_r2(r2, params.signal_variance);
  }
  return k;
}

}  // namespace cbob
