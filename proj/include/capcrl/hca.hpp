#pragma once

// Hierarchical component analysis.
//
// Input: K per-domain ICA unmixing matrices M_k (d0 x n), each equal in the
// exact model to P_k B_k H for an unknown row permutation P_k, a triangular
// B_k = Omega_k^{-1/2} (I - A_k) and a shared H = (G^T G)^{-1} G^T.
//
// Triangularity convention. Everything here is LOWER triangular with rows in
// topological order (root first). Row i of B_k H is a combination of h_0..h_i,
// so the residual of row i after projecting out rows 0..i-1 is parallel to the
// component of h_i orthogonal to h_0..h_{i-1}. The upper-triangular
// formulation that projects against the trailing rows i+1..d0-1 is the same
// procedure with row indices reversed (i <-> d0 - 1 - i).

#include "capcrl/error.hpp"
#include "capcrl/linalg.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace capcrl {

namespace hca_detail {
inline constexpr const char* kModule = "hca";
}

/// Row-wise orthogonal projection: every row of each A_k is replaced by its
/// residual after projecting onto span{(A_k)_s : s in rows}. Empty `rows` is
/// the identity. Dependent spanning rows are handled by a rank-revealing basis
/// (singular values below 1e-10 sigma_max dropped).
template <typename Scalar>
std::vector<Mat<Scalar>> ortho_proj(std::span<const Index> rows, std::span<const Mat<Scalar>> mats) {
  std::vector<Mat<Scalar>> out;
  out.reserve(mats.size());
  for (const auto& a : mats) {
    if (rows.empty()) {
      out.push_back(a);
      continue;
    }
    Mat<Scalar> spanning(static_cast<Index>(rows.size()), a.cols());
    for (std::size_t s = 0; s < rows.size(); ++s) {
      if (rows[s] < 0 || rows[s] >= a.rows())
        throw input_error(hca_detail::kModule, "ortho_proj: row index out of range");
      spanning.row(static_cast<Index>(s)) = a.row(rows[s]);
    }
    const Mat<Scalar> q = row_space_basis(spanning);
    out.push_back(a - (a * q) * q.transpose());
  }
  return out;
}

template <typename Scalar>
struct Direction {
  RowVec<Scalar> h;     ///< unit vector, largest-magnitude entry positive
  Scalar rank1_error;   ///< 1 - sigma_1^2 / sum sigma_i^2
};

/// Principal right singular vector of the stacked residual rows (K x n).
/// Throws a numerical error when every row has norm below 1e-12.
template <typename Derived>
Direction<typename Derived::Scalar> extract_direction(const Eigen::MatrixBase<Derived>& residual_rows) {
  using Scalar = typename Derived::Scalar;
  if (residual_rows.rows() == 0 || residual_rows.rowwise().norm().maxCoeff() < Scalar(1e-12))
    throw numerical_error(hca_detail::kModule,
                          "degenerate residual: all rows vanish (over-orthogonalised branch)");
  Eigen::JacobiSVD<Mat<Scalar>> svd(residual_rows, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Direction<Scalar> d;
  d.h = svd.matrixV().col(0).transpose();
  canonicalize_sign(d.h);
  const Scalar total = s.squaredNorm();
  d.rank1_error = std::max(Scalar(0), Scalar(1) - s(0) * s(0) / total);
  return d;
}

/// Lower-triangular B minimising ||M - B H||_F, solved row by row as the
/// least-squares fit of row i of M on rows 0..i of H. Throws when H is rank
/// deficient.
template <typename DM, typename DH>
Mat<typename DM::Scalar> fit_triangular(const Eigen::MatrixBase<DM>& m, const Eigen::MatrixBase<DH>& h) {
  using Scalar = typename DM::Scalar;
  if (m.rows() != h.rows() || m.cols() != h.cols())
    throw input_error(hca_detail::kModule, "fit_triangular: M and H must have the same shape");
  const Index d = h.rows();
  if (numerical_rank(h) < d)
    throw numerical_error(hca_detail::kModule, "ill-posed triangular fit: H is rank deficient");
  Mat<Scalar> b = Mat<Scalar>::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    const Mat<Scalar> design = h.topRows(i + 1).transpose();  // n x (i+1)
    const Vec<Scalar> target = m.row(i).transpose();
    b.row(i).head(i + 1) = design.colPivHouseholderQr().solve(target).transpose();
  }
  return b;
}

template <typename Scalar>
struct MicResult {
  Scalar alpha = 0;
  std::vector<Scalar> per_domain;
  std::vector<Mat<Scalar>> j;             ///< B_k H M_k^T (M_k M_k^T)^{-1}
  std::vector<Mat<Scalar>> j_normalized;  ///< rows scaled to unit norm
};

/// alpha_k = (1/d0) sum_{i != j} (J~_k)_ij^2 and alpha = max_k alpha_k.
template <typename Scalar>
MicResult<Scalar> compute_mic(std::span<const Mat<Scalar>> m_mats, std::span<const Mat<Scalar>> b_hats,
                              const Mat<Scalar>& h_hat) {
  if (m_mats.size() != b_hats.size() || m_mats.empty())
    throw input_error(hca_detail::kModule, "compute_mic: need one B per M and K >= 1");
  MicResult<Scalar> out;
  const Index d = h_hat.rows();
  for (std::size_t k = 0; k < m_mats.size(); ++k) {
    const Mat<Scalar>& m = m_mats[k];
    if (m.rows() != d || m.cols() != h_hat.cols() || b_hats[k].rows() != d || b_hats[k].cols() != d)
      throw input_error(hca_detail::kModule, "compute_mic: inconsistent shapes");
    const Mat<Scalar> gram = m * m.transpose();
    Eigen::FullPivLU<Mat<Scalar>> lu(gram);
    lu.setThreshold(Scalar(1e-12));
    if (!lu.isInvertible())
      throw numerical_error(hca_detail::kModule,
                            "singular domain: M_k M_k^T is not invertible (domain " + std::to_string(k) + ")");
    // J = B H M^T (M M^T)^{-1}; solve with the symmetric Gram matrix.
    const Mat<Scalar> rhs = (b_hats[k] * h_hat * m.transpose()).transpose();
    Mat<Scalar> j = lu.solve(rhs).transpose();
    Mat<Scalar> jn = j;
    Scalar off = 0;
    for (Index i = 0; i < d; ++i) {
      const Scalar norm = j.row(i).norm();
      if (!(norm > Scalar(0)))
        throw numerical_error(hca_detail::kModule, "degenerate J: zero row " + std::to_string(i));
      jn.row(i) /= norm;
      for (Index c = 0; c < d; ++c)
        if (c != i) off += jn(i, c) * jn(i, c);
    }
    const Scalar alpha_k = off / static_cast<Scalar>(d);
    out.per_domain.push_back(alpha_k);
    out.alpha = k == 0 ? alpha_k : std::max(out.alpha, alpha_k);
    out.j.push_back(std::move(j));
    out.j_normalized.push_back(std::move(jn));
  }
  return out;
}

/// ||M - B H||_F / ||M||_F.
template <typename DM, typename DB, typename DH>
typename DM::Scalar unmixing_recovery_error(const Eigen::MatrixBase<DM>& m, const Eigen::MatrixBase<DB>& b,
                                            const Eigen::MatrixBase<DH>& h) {
  const auto denom = m.norm();
  if (!(denom > 0)) throw input_error(hca_detail::kModule, "unmixing_recovery_error: M is zero");
  return (m - b * h).norm() / denom;
}

/// Gram-Schmidt on the rows of H in order; keeps the lower-triangular relation.
template <typename Scalar>
Mat<Scalar> gram_schmidt_rows(const Mat<Scalar>& h) {
  Mat<Scalar> q = h;
  for (Index i = 0; i < q.rows(); ++i) {
    for (Index j = 0; j < i; ++j) q.row(i) -= q.row(i).dot(q.row(j)) * q.row(j);
    const Scalar norm = q.row(i).norm();
    if (!(norm > Scalar(1e-12)))
      throw numerical_error(hca_detail::kModule, "Gram-Schmidt: dependent rows in H");
    q.row(i) /= norm;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Permutation search (double precision).

using Permutation = std::vector<int>;

struct HcaConfig {
  std::uint64_t budget = 1'000'000;  ///< max permutation tuples evaluated
  bool parallel = true;
  int threads = 0;                   ///< 0 = hardware concurrency
  bool orthonormalize_h = false;     ///< Gram-Schmidt on the candidate H rows
  std::uint64_t seed = 0;            ///< used only when subsampling
};

/// Result of the inner loop for one fixed permutation tuple.
struct HcaCandidate {
  std::vector<Permutation> permutations;  ///< row i of M'_k is row permutations[k][i] of M_k
  std::vector<MatrixXd> permuted;         ///< M'_k
  MatrixXd h_hat;                         ///< d0 x n, rows h_i
  std::vector<MatrixXd> b_hats;           ///< lower triangular d0 x d0
  std::vector<double> rank1_errors;       ///< per row i
  MicResult<double> mic;
};

/// Runs the residual extraction / triangular refit / MIC scoring for one
/// tuple. Throws a numerical error on a degenerate branch.
HcaCandidate hca_evaluate(std::span<const MatrixXd> m_mats, const std::vector<Permutation>& permutations,
                          bool orthonormalize_h = false);

struct HcaSolution {
  MatrixXd h_hat;
  std::vector<MatrixXd> b_hats;
  std::vector<Permutation> permutations;
  double mic = std::numeric_limits<double>::infinity();
  std::vector<double> per_domain_alpha;
  std::vector<double> rank1_errors;
  std::vector<double> unmixing_errors;
  std::vector<MatrixXd> j_normalized;
  std::uint64_t tuples_total_capped = 0;  ///< (d0!)^K, saturating at uint64 max
  std::uint64_t tuples_evaluated = 0;
  std::uint64_t degenerate_branches = 0;
  bool exhaustive = true;
};

/// Minimum-MIC search over permutation tuples. Exhaustive when (d0!)^K <= budget,
/// otherwise a seeded uniform subsample of `budget` distinct tuples that always
/// contains the identity tuple. Ties go to the lexicographically smallest tuple.
HcaSolution hca_search(std::span<const MatrixXd> m_mats, const HcaConfig& config = {});

// ---------------------------------------------------------------------------
// Reading causal weights off the triangular factors.

struct DomainWeights {
  MatrixXd weights;      ///< A_k, strictly lower triangular; A(i, j) is the edge j -> i
  VectorXd variances;    ///< sigma_i = diag(B)^-2
  VectorXd noise_scale;  ///< signed 1 / B_ii, so that B = diag(1/noise_scale) (I - A)
};

struct RecoveredScm {
  std::vector<DomainWeights> domains;
  /// Rebuilds Omega^{-1/2} (I - A) for domain k.
  MatrixXd rebuild_b(std::size_t k) const;
};

/// Throws a numerical error on a zero diagonal entry.
RecoveredScm recover_graph_weights(std::span<const MatrixXd> b_hats);

/// Graphviz export of one domain's recovered graph; edges with |w| <= threshold
/// are omitted.
std::string to_dot(const DomainWeights& weights, const std::string& graph_name,
                   const std::vector<std::string>& node_labels = {}, double threshold = 0.0);

}  // namespace capcrl
