#pragma once

// Small dense helpers shared by the analysis modules. Everything is templated
// on the scalar type and works on plain Eigen dense matrices.

#include <Eigen/Dense>

#include <cmath>

namespace capcrl {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::RowVectorXd;

/// Column means of a samples-as-rows matrix.
template <typename Derived>
RowVec<typename Derived::Scalar> column_means(const Eigen::MatrixBase<Derived>& x) {
  return x.colwise().mean();
}

/// Sample covariance with 1/N normalisation (samples are rows).
template <typename Derived>
Mat<typename Derived::Scalar> covariance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Mat<Scalar> centered = x.rowwise() - x.colwise().mean();
  return (centered.transpose() * centered) / static_cast<Scalar>(x.rows());
}

/// Flips v so its largest-magnitude entry is positive (first index wins ties).
template <typename Derived>
void canonicalize_sign(Eigen::MatrixBase<Derived>& v) {
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;
}

/// Orthonormal basis (as columns) of the row space of `rows`, dropping
/// singular directions below `rel_tol * sigma_max`.
template <typename Derived>
Mat<typename Derived::Scalar> row_space_basis(const Eigen::MatrixBase<Derived>& rows,
                                              typename Derived::Scalar rel_tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (rows.rows() == 0) return Mat<Scalar>(rows.cols(), 0);
  Eigen::JacobiSVD<Mat<Scalar>> svd(rows, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Index rank = 0;
  if (s.size() > 0 && s(0) > Scalar(0)) {
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > rel_tol * s(0)) ++rank;
  }
  return svd.matrixV().leftCols(rank);
}

/// Numerical rank with singular values below rel_tol * sigma_max treated as zero.
template <typename Derived>
Index numerical_rank(const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar rel_tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Mat<Scalar>> svd(m);
  const auto& s = svd.singularValues();
  if (s(0) <= Scalar(0)) return 0;
  return (s.array() > rel_tol * s(0)).count();
}

/// Symmetric inverse square root of a symmetric positive definite matrix.
template <typename Derived>
Mat<typename Derived::Scalar> inverse_sqrt_spd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(m);
  const Vec<Scalar> d = eig.eigenvalues().array().max(Scalar(0)).sqrt().inverse();
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

/// Pearson correlation of two equally sized vectors; 0 if either is constant.
template <typename A, typename B>
typename A::Scalar correlation(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  const auto ac = (a.array() - a.mean()).matrix();
  const auto bc = (b.array() - b.mean()).matrix();
  const Scalar den = ac.norm() * bc.norm();
  return den > Scalar(0) ? ac.dot(bc) / den : Scalar(0);
}

}  // namespace capcrl
