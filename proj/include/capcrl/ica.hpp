#pragma once

// Per-domain linear ICA: PCA whitening with reduction to d0 components, then
// symmetric FastICA on the whitened data.

#include "capcrl/linalg.hpp"

#include <cstdint>
#include <vector>

namespace capcrl {

struct Whitening {
  MatrixXd map;      ///< d0 x n; rows are top eigenvectors scaled by 1/sqrt(eigenvalue)
  RowVectorXd mean;  ///< 1 x n centering vector
  MatrixXd white;    ///< N x d0 whitened data, identity sample covariance
  VectorXd eigenvalues;  ///< all n covariance eigenvalues, descending
};

/// Centers X, keeps the top d0 principal directions and rescales them to unit
/// variance. Throws a rank-deficient-input error when an eigenvalue among the
/// top d0 falls below 1e-12 times the largest.
Whitening whiten(const MatrixXd& x, Index d0);

enum class Nonlinearity { LogCosh, Cube };

struct IcaConfig {
  Nonlinearity nonlinearity = Nonlinearity::LogCosh;
  int max_iter = 500;
  double tol = 1e-7;
  std::uint64_t seed = 0;
  int restarts = 5;
};

struct IcaConvergence {
  bool converged = false;
  int iterations = 0;                 ///< shared by all components (symmetric update)
  std::vector<int> component_iterations;  ///< first iteration each component met tol (-1 if never)
  std::vector<double> final_deltas;   ///< 1 - |<w_new, w_old>| per component at the last step
  int best_restart = 0;
  double objective = 0.0;             ///< summed negentropy proxy of the selected restart
};

struct IcaResult {
  MatrixXd unmixing;  ///< d0 x n; M = R * W
  MatrixXd sources;   ///< N x d0; (X - mean) M^T
  MatrixXd whitener;  ///< d0 x n
  RowVectorXd mean;
  MatrixXd rotation;  ///< d0 x d0 orthogonal
  VectorXd nongaussianity;  ///< per component, descending
  IcaConvergence convergence;
};

/// Symmetric (parallel) FastICA with `restarts` seeded random initial
/// rotations; the restart with the largest negentropy proxy is kept, ties to
/// the lower restart index. Components are ordered by descending
/// non-Gaussianity and each unmixing row is sign-normalised so that its
/// largest-magnitude entry is positive. Non-convergence is reported, not thrown.
IcaResult fast_ica(const MatrixXd& x, Index d0, const IcaConfig& config = {});

/// Amari index of P = M G, scaled to [0, 1]; zero iff P is a scaled permutation.
double amari_distance(const MatrixXd& unmixing, const MatrixXd& mixing);

}  // namespace capcrl
