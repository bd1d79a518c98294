#pragma once

// Shared fixtures and independent oracles for the unit suites.

#include "capcrl/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace capcrl::test {

/// Relative Frobenius error ||a - b|| / ||b||.
inline double rel_err(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / b.norm(); }

/// Inverse of a unit-lower-triangular-after-scaling matrix by plain forward
/// substitution, independent of Eigen's decompositions.
inline MatrixXd lower_inverse(const MatrixXd& l) {
  const Index d = l.rows();
  MatrixXd inv = MatrixXd::Zero(d, d);
  for (Index c = 0; c < d; ++c) {
    for (Index i = 0; i < d; ++i) {
      double s = (i == c) ? 1.0 : 0.0;
      for (Index j = 0; j < i; ++j) s -= l(i, j) * inv(j, c);
      inv(i, c) = s / l(i, i);
    }
  }
  return inv;
}

/// Amari index written out from its definition with explicit loops.
inline double amari_oracle(const MatrixXd& p) {
  const Index d = p.rows();
  if (d == 1) return 0.0;
  double total = 0.0;
  for (Index i = 0; i < d; ++i) {
    double sum = 0.0, mx = 0.0;
    for (Index j = 0; j < d; ++j) {
      sum += std::abs(p(i, j));
      mx = std::max(mx, std::abs(p(i, j)));
    }
    total += sum / mx - 1.0;
  }
  for (Index j = 0; j < d; ++j) {
    double sum = 0.0, mx = 0.0;
    for (Index i = 0; i < d; ++i) {
      sum += std::abs(p(i, j));
      mx = std::max(mx, std::abs(p(i, j)));
    }
    total += sum / mx - 1.0;
  }
  return total / (2.0 * static_cast<double>(d) * static_cast<double>(d - 1));
}

/// Best |corr| matching between columns of a and b, by brute force over all
/// column permutations (d0 <= 6).
inline std::vector<double> matched_abs_correlations(const MatrixXd& a, const MatrixXd& b) {
  const Index d = a.cols();
  MatrixXd c(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) c(i, j) = std::abs(correlation(a.col(i), b.col(j)));
  std::vector<int> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_score = -1.0;
  do {
    double s = 0.0;
    for (Index i = 0; i < d; ++i) s += c(i, perm[i]);
    if (s > best_score) {
      best_score = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<double> out;
  for (Index i = 0; i < d; ++i) out.push_back(c(i, best[i]));
  return out;
}

/// Fixture: K domains sharing a complete DAG and mixing G, distinct sources.
struct SyntheticDomains {
  MatrixXd g;
  std::vector<LinearScm> scms;
  std::vector<MatrixXd> x;
  std::vector<MatrixXd> z;
  std::vector<MatrixXd> noise;
};

inline SyntheticDomains make_domains(int k, int d0, Index n, Index samples, std::uint64_t seed, double alpha = 0.0) {
  SyntheticDomains out;
  Rng rng(derive_seed(seed, {1}));
  out.g = random_mixing(n, d0, rng);
  const MixingMatrix g(out.g);
  const CausalGraph graph = CausalGraph::complete(d0);
  for (int i = 0; i < k; ++i) {
    Rng r(derive_seed(seed, {2, static_cast<std::uint64_t>(i)}));
    LinearScm scm = random_scm(graph, distinct_sources(d0, i), {}, r);
    ScmSample s = alpha > 0.0
                      ? sample_inexact_scm(InexactScm(scm, random_entanglement(d0, alpha, r)), samples,
                                           derive_seed(seed, {3, static_cast<std::uint64_t>(i)}))
                      : sample_scm(scm, samples, derive_seed(seed, {3, static_cast<std::uint64_t>(i)}));
    out.x.push_back(mix_observations(g, s.latents));
    out.z.push_back(std::move(s.latents));
    out.noise.push_back(std::move(s.noise));
    out.scms.push_back(std::move(scm));
  }
  return out;
}

}  // namespace capcrl::test
