#pragma once

// Ground-truth data model: causal DAGs over latent capability factors, exact
// and entangled ("inexact") linear structural causal models, and the linear
// mixing from latents to observed benchmark scores.
//
// Conventions: samples are rows. A latent row z satisfies
//   z^T = (I - A)^{-1} Omega^{1/2} eps^T,
// where A(i, j) is the weight of the edge j -> i. Under a topological order A
// is strictly lower triangular, so B = Omega^{-1/2} (I - A) is lower
// triangular with eps^T = B z^T.

#include "capcrl/linalg.hpp"
#include "capcrl/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace capcrl {

enum class SourceDistribution { Uniform, Laplace, CenteredExponential, TwoPoint };

std::string_view to_string(SourceDistribution d);
SourceDistribution parse_source_distribution(std::string_view name);

/// One zero-mean, unit-variance draw from the given family.
double draw_standardized(SourceDistribution d, Rng& rng);

/// Directed edge `from -> to` (0-based node ids).
struct Edge {
  int from = 0;
  int to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Kahn's algorithm with smallest-index tie-breaking. Throws on a cycle.
std::vector<int> topological_order(int node_count, const std::vector<Edge>& edges);

class CausalGraph {
public:
  CausalGraph(int node_count, std::vector<Edge> edges);

  /// The complete DAG i -> j for all i < j.
  static CausalGraph complete(int node_count);

  int node_count() const { return node_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& order() const { return order_; }
  bool has_edge(int from, int to) const;
  std::vector<int> parents(int node) const;

private:
  int node_count_;
  std::vector<Edge> edges_;
  std::vector<int> order_;
};

class LinearScm {
public:
  /// Validates: weights supported on the edge set, positive variances, one
  /// non-Gaussian family per node, and (optionally) pairwise distinct families.
  LinearScm(CausalGraph graph, MatrixXd weights, VectorXd variances,
            std::vector<SourceDistribution> distributions, bool require_distinct_sources = false);

  const CausalGraph& graph() const { return graph_; }
  int node_count() const { return graph_.node_count(); }
  const MatrixXd& weights() const { return weights_; }
  const VectorXd& variances() const { return variances_; }
  const std::vector<SourceDistribution>& distributions() const { return distributions_; }

  /// B = Omega^{-1/2} (I - A).
  MatrixXd b_matrix() const;
  /// (I - A)^{-1} Omega (I - A)^{-T}.
  MatrixXd latent_covariance() const;

private:
  CausalGraph graph_;
  MatrixXd weights_;
  VectorXd variances_;
  std::vector<SourceDistribution> distributions_;
};

class InexactScm {
public:
  /// Rows of `entanglement` must have unit Euclidean norm (tolerance 1e-8).
  InexactScm(LinearScm base, MatrixXd entanglement);

  const LinearScm& base() const { return base_; }
  const MatrixXd& entanglement() const { return entanglement_; }
  double alpha() const;

private:
  LinearScm base_;
  MatrixXd entanglement_;
};

/// n x d0 map from latents to observations; must have full column rank.
class MixingMatrix {
public:
  explicit MixingMatrix(MatrixXd g);

  const MatrixXd& matrix() const { return g_; }
  Index observed_dim() const { return g_.rows(); }
  Index latent_dim() const { return g_.cols(); }
  /// H = (G^T G)^{-1} G^T.
  MatrixXd unmixing() const;

private:
  MatrixXd g_;
};

struct ScmSample {
  MatrixXd latents;  ///< N x d0
  MatrixXd noise;    ///< N x d0 independent sources (before entanglement)
};

/// Latent rows from given standardized noise rows (no sampling).
MatrixXd latents_from_noise(const LinearScm& scm, const MatrixXd& noise);

/// Column i of the noise is drawn from stream derive_seed(seed, {i}).
ScmSample sample_scm(const LinearScm& scm, Index n_samples, std::uint64_t seed);
/// As sample_scm with eps_hat = U eps fed to the structural equations; the
/// returned noise is the raw eps.
ScmSample sample_inexact_scm(const InexactScm& scm, Index n_samples, std::uint64_t seed);

/// X = Z G^T.
MatrixXd mix_observations(const MixingMatrix& g, const MatrixXd& latents);

/// alpha(U) = (1/d0) sum_{i != j} U_ij^2 for unit-row U.
double mic_of_entanglement(const MatrixXd& entanglement);

struct DomainDataset {
  std::string id;
  MatrixXd observations;            ///< N_k x n
  std::optional<MatrixXd> latents;  ///< synthetic data only
};

struct DomainCollection {
  std::vector<std::string> benchmarks;
  std::vector<DomainDataset> domains;

  /// Throws unless every domain has >= 1 row, finite entries and n columns.
  void validate() const;
  Index observed_dim() const { return static_cast<Index>(benchmarks.size()); }
  /// Row-stack of all domains in order.
  MatrixXd stacked() const;
  const DomainDataset& find(std::string_view id) const;
};

// ---- random generators used by the simulator and the test suites ----

struct ScmDrawSpec {
  double weight_min = 0.5;  ///< |w| range; sign is random
  double weight_max = 1.5;
  double variance_min = 0.5;
  double variance_max = 2.0;
};

/// Families assigned round-robin starting at `offset`, so d0 <= 4 nodes get
/// pairwise distinct distributions.
std::vector<SourceDistribution> distinct_sources(int d0, int offset = 0);

LinearScm random_scm(const CausalGraph& graph, const std::vector<SourceDistribution>& sources,
                     const ScmDrawSpec& spec, Rng& rng);

/// Unit-row entanglement with alpha(U) == alpha exactly: row i is
/// sqrt(1 - alpha) e_i + sqrt(alpha) v_i with v_i a random unit vector orthogonal to e_i.
MatrixXd random_entanglement(int d0, double alpha, Rng& rng);

/// Gaussian n x d0 mixing, redrawn until well conditioned.
MatrixXd random_mixing(Index n, Index d0, Rng& rng);

}  // namespace capcrl
