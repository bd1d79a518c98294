#pragma once

// PCA heterogeneity diagnostics across domains.
//
// Subspace distance between two rank-r principal subspaces with orthonormal
// bases A and B is 1 - mean_i cos(theta_i), where cos(theta_i) are the singular
// values of A^T B (the principal-angle cosines).

#include "capcrl/linalg.hpp"
#include "capcrl/scm.hpp"

#include <string>
#include <vector>

namespace capcrl {

enum class PcaScaling { Raw, ZScore };

template <typename Scalar>
struct PrincipalSubspace {
  Mat<Scalar> basis;                     ///< n x r, orthonormal columns
  Vec<Scalar> explained_variance_ratios; ///< length min(n, N), descending, sums to 1
  RowVec<Scalar> mean;                   ///< centering vector
  RowVec<Scalar> scale;                  ///< column scale applied after centering (ones for Raw)
};

/// PCA of the centered (optionally z-scored) data; each basis column has its
/// largest-magnitude coordinate positive.
template <typename Derived>
PrincipalSubspace<typename Derived::Scalar> pca(const Eigen::MatrixBase<Derived>& x, Index rank,
                                                PcaScaling scaling = PcaScaling::Raw);

/// Cosines of the principal angles, descending.
template <typename Scalar>
Vec<Scalar> principal_cosines(const PrincipalSubspace<Scalar>& a, const PrincipalSubspace<Scalar>& b);

/// Principal angles in radians, ascending.
template <typename Scalar>
Vec<Scalar> principal_angles(const PrincipalSubspace<Scalar>& a, const PrincipalSubspace<Scalar>& b);

template <typename Scalar>
Scalar subspace_distance(const PrincipalSubspace<Scalar>& a, const PrincipalSubspace<Scalar>& b);

/// Norm of each (transformed) row's residual after projection onto the basis.
template <typename Derived>
Vec<typename Derived::Scalar> point_subspace_distances(const Eigen::MatrixBase<Derived>& x,
                                                       const PrincipalSubspace<typename Derived::Scalar>& s);

/// K x K symmetric distances between the rank-r subspaces of each domain.
MatrixXd pairwise_distance_matrix(const DomainCollection& domains, Index rank,
                                  PcaScaling scaling = PcaScaling::Raw);

std::string distance_matrix_csv(const std::vector<std::string>& labels, const MatrixXd& m);

}  // namespace capcrl

#include "capcrl/subspace_impl.hpp"
