#pragma once

#include "capcrl/error.hpp"

#include <algorithm>
#include <cmath>

namespace capcrl {

template <typename Derived>
PrincipalSubspace<typename Derived::Scalar> pca(const Eigen::MatrixBase<Derived>& x, Index rank,
                                                PcaScaling scaling) {
  using Scalar = typename Derived::Scalar;
  const Index n = x.cols();
  const Index rows = x.rows();
  if (rows < 2) throw input_error("subspace-analysis", "pca needs at least two rows");
  if (rank < 0 || rank > std::min(n, rows))
    throw input_error("subspace-analysis", "rank out of range");
  if (!x.allFinite()) throw input_error("subspace-analysis", "pca input has non-finite entries");

  PrincipalSubspace<Scalar> s;
  s.mean = x.colwise().mean();
  Mat<Scalar> centered = x.rowwise() - s.mean;
  s.scale = RowVec<Scalar>::Ones(n);
  if (scaling == PcaScaling::ZScore) {
    for (Index j = 0; j < n; ++j) {
      const Scalar sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<Scalar>(rows));
      s.scale(j) = sd > Scalar(0) ? sd : Scalar(1);
    }
    centered = centered.array().rowwise() / s.scale.array();
  }
  const Mat<Scalar> cov = centered.transpose() * centered / static_cast<Scalar>(rows);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(cov);
  const Vec<Scalar> values = eig.eigenvalues().reverse().cwiseMax(Scalar(0));
  const Index kept = std::min(n, rows);
  const Scalar total = values.sum();
  s.explained_variance_ratios = total > Scalar(0) ? Vec<Scalar>(values.head(kept) / total)
                                                  : Vec<Scalar>(Vec<Scalar>::Zero(kept));
  s.basis.resize(n, rank);
  for (Index i = 0; i < rank; ++i) {
    Vec<Scalar> v = eig.eigenvectors().col(n - 1 - i);
    canonicalize_sign(v);
    s.basis.col(i) = v;
  }
  return s;
}

template <typename Scalar>
Vec<Scalar> principal_cosines(const PrincipalSubspace<Scalar>& a, const PrincipalSubspace<Scalar>& b) {
  if (a.basis.cols() != b.basis.cols() || a.basis.rows() != b.basis.rows())
    throw input_error("subspace-analysis", "subspace rank mismatch");
  if (a.basis.cols() == 0) return Vec<Scalar>();
  Eigen::JacobiSVD<Mat<Scalar>> svd(a.basis.transpose() * b.basis);
  return svd.singularValues().cwiseMin(Scalar(1));
}

template <typename Scalar>
Vec<Scalar> principal_angles(const PrincipalSubspace<Scalar>& a, const PrincipalSubspace<Scalar>& b) {
  return principal_cosines(a, b).array().acos().matrix();
}

template <typename Scalar>
Scalar subspace_distance(const PrincipalSubspace<Scalar>& a, const PrincipalSubspace<Scalar>& b) {
  const Vec<Scalar> c = principal_cosines(a, b);
  if (c.size() == 0) throw input_error("subspace-analysis", "subspace distance needs rank >= 1");
  return std::clamp(Scalar(1) - c.mean(), Scalar(0), Scalar(1));
}

template <typename Derived>
Vec<typename Derived::Scalar> point_subspace_distances(const Eigen::MatrixBase<Derived>& x,
                                                       const PrincipalSubspace<typename Derived::Scalar>& s) {
  using Scalar = typename Derived::Scalar;
  if (x.cols() != s.basis.rows()) throw input_error("subspace-analysis", "dimension mismatch");
  Mat<Scalar> centered = (x.rowwise() - s.mean).array().rowwise() / s.scale.array();
  const Mat<Scalar> residual = centered - (centered * s.basis) * s.basis.transpose();
  return residual.rowwise().norm();
}

}  // namespace capcrl
