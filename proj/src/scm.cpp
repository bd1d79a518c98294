#include "capcrl/scm.hpp"

#include "capcrl/error.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

namespace capcrl {

namespace {
constexpr const char* kModule = "scm-core";
constexpr double kUnitRowTol = 1e-8;

void check_unit_rows(const MatrixXd& u) {
  if (u.rows() != u.cols() || u.rows() == 0)
    throw input_error(kModule, "invalid entanglement: matrix must be square and non-empty");
  for (Index i = 0; i < u.rows(); ++i) {
    const double norm = u.row(i).norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitRowTol)
      throw input_error(kModule, "invalid entanglement: row " + std::to_string(i) +
                                     " has norm " + std::to_string(norm));
  }
}
}  // namespace

std::string_view to_string(SourceDistribution d) {
  switch (d) {
    case SourceDistribution::Uniform: return "uniform";
    case SourceDistribution::Laplace: return "laplace";
    case SourceDistribution::CenteredExponential: return "centered-exponential";
    case SourceDistribution::TwoPoint: return "two-point";
  }
  return "uniform";
}

SourceDistribution parse_source_distribution(std::string_view name) {
  for (auto d : {SourceDistribution::Uniform, SourceDistribution::Laplace,
                 SourceDistribution::CenteredExponential, SourceDistribution::TwoPoint})
    if (to_string(d) == name) return d;
  throw input_error(kModule, "unknown source distribution '" + std::string(name) + "'");
}

double draw_standardized(SourceDistribution d, Rng& rng) {
  switch (d) {
    case SourceDistribution::Uniform:
      return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    case SourceDistribution::Laplace: {
      // scale 1/sqrt(2) gives unit variance
      const double u = rng.uniform_open() - 0.5;
      const double mag = -std::log(1.0 - 2.0 * std::abs(u)) / std::sqrt(2.0);
      return u < 0 ? -mag : mag;
    }
    case SourceDistribution::CenteredExponential:
      return -std::log(rng.uniform_open()) - 1.0;
    case SourceDistribution::TwoPoint:
      return rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  return 0.0;
}

std::vector<int> topological_order(int node_count, const std::vector<Edge>& edges) {
  if (node_count < 1) throw input_error(kModule, "graph must have at least one node");
  std::vector<int> indegree(node_count, 0);
  std::vector<std::vector<int>> children(node_count);
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= node_count || e.to < 0 || e.to >= node_count)
      throw input_error(kModule, "edge endpoint out of range");
    if (e.from == e.to) throw input_error(kModule, "graph is not a DAG: self loop");
    children[e.from].push_back(e.to);
    ++indegree[e.to];
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < node_count; ++i)
    if (indegree[i] == 0) ready.push(i);
  std::vector<int> order;
  order.reserve(node_count);
  while (!ready.empty()) {
    const int v = ready.top();
    ready.pop();
    order.push_back(v);
    for (int c : children[v])
      if (--indegree[c] == 0) ready.push(c);
  }
  if (static_cast<int>(order.size()) != node_count)
    throw input_error(kModule, "graph is not a DAG: cycle detected");
  return order;
}

CausalGraph::CausalGraph(int node_count, std::vector<Edge> edges)
    : node_count_(node_count), edges_(std::move(edges)) {
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return std::pair(a.from, a.to) < std::pair(b.from, b.to);
  });
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  order_ = topological_order(node_count_, edges_);
}

CausalGraph CausalGraph::complete(int node_count) {
  std::vector<Edge> edges;
  for (int i = 0; i < node_count; ++i)
    for (int j = i + 1; j < node_count; ++j) edges.push_back({i, j});
  return CausalGraph(node_count, std::move(edges));
}

bool CausalGraph::has_edge(int from, int to) const {
  return std::find(edges_.begin(), edges_.end(), Edge{from, to}) != edges_.end();
}

std::vector<int> CausalGraph::parents(int node) const {
  std::vector<int> out;
  for (const auto& e : edges_)
    if (e.to == node) out.push_back(e.from);
  return out;
}

LinearScm::LinearScm(CausalGraph graph, MatrixXd weights, VectorXd variances,
                     std::vector<SourceDistribution> distributions, bool require_distinct_sources)
    : graph_(std::move(graph)),
      weights_(std::move(weights)),
      variances_(std::move(variances)),
      distributions_(std::move(distributions)) {
  const int d = graph_.node_count();
  if (weights_.rows() != d || weights_.cols() != d)
    throw input_error(kModule, "weights must be d0 x d0");
  if (variances_.size() != d) throw input_error(kModule, "variances must have length d0");
  if (static_cast<int>(distributions_.size()) != d)
    throw input_error(kModule, "distributions must have length d0");
  for (int i = 0; i < d; ++i) {
    if (!(variances_(i) > 0.0) || !std::isfinite(variances_(i)))
      throw input_error(kModule, "source variances must be positive");
    for (int j = 0; j < d; ++j) {
      if (!std::isfinite(weights_(i, j))) throw input_error(kModule, "non-finite weight");
      if (weights_(i, j) != 0.0 && !graph_.has_edge(j, i))
        throw input_error(kModule, "weight (" + std::to_string(i) + "," + std::to_string(j) +
                                       ") is nonzero but edge " + std::to_string(j) + "->" +
                                       std::to_string(i) + " is absent");
    }
  }
  if (require_distinct_sources) {
    std::set<SourceDistribution> seen(distributions_.begin(), distributions_.end());
    if (static_cast<int>(seen.size()) != d)
      throw input_error(kModule, "identifiability requires pairwise distinct source distributions");
  }
}

MatrixXd LinearScm::b_matrix() const {
  const Index d = node_count();
  const MatrixXd i_minus_a = MatrixXd::Identity(d, d) - weights_;
  return variances_.array().rsqrt().matrix().asDiagonal() * i_minus_a;
}

MatrixXd LinearScm::latent_covariance() const {
  const Index d = node_count();
  const MatrixXd inv = (MatrixXd::Identity(d, d) - weights_).inverse();
  return inv * variances_.asDiagonal() * inv.transpose();
}

InexactScm::InexactScm(LinearScm base, MatrixXd entanglement)
    : base_(std::move(base)), entanglement_(std::move(entanglement)) {
  if (entanglement_.rows() != base_.node_count())
    throw input_error(kModule, "invalid entanglement: must be d0 x d0");
  check_unit_rows(entanglement_);
}

double InexactScm::alpha() const { return mic_of_entanglement(entanglement_); }

MixingMatrix::MixingMatrix(MatrixXd g) : g_(std::move(g)) {
  if (g_.rows() < g_.cols() || g_.cols() == 0)
    throw input_error(kModule, "mixing matrix must be n x d0 with n >= d0 >= 1");
  if (!g_.allFinite()) throw input_error(kModule, "mixing matrix has non-finite entries");
  if (numerical_rank(g_) != g_.cols())
    throw input_error(kModule, "mixing matrix must have full column rank");
}

MatrixXd MixingMatrix::unmixing() const {
  return (g_.transpose() * g_).ldlt().solve(g_.transpose());
}

MatrixXd latents_from_noise(const LinearScm& scm, const MatrixXd& noise) {
  const Index d = scm.node_count();
  if (noise.cols() != d) throw input_error(kModule, "noise must have d0 columns");
  const MatrixXd i_minus_a = MatrixXd::Identity(d, d) - scm.weights();
  Eigen::FullPivLU<MatrixXd> lu(i_minus_a);
  if (!lu.isInvertible()) throw numerical_error(kModule, "degenerate SCM: I - A is singular");
  const MatrixXd scaled = noise * scm.variances().cwiseSqrt().asDiagonal();
  return lu.solve(scaled.transpose()).transpose();
}

namespace {
MatrixXd draw_noise(const LinearScm& scm, Index n, std::uint64_t seed) {
  if (n < 1) throw input_error(kModule, "n_samples must be positive");
  const Index d = scm.node_count();
  MatrixXd e(n, d);
  for (Index j = 0; j < d; ++j) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(j)}));
    for (Index i = 0; i < n; ++i) e(i, j) = draw_standardized(scm.distributions()[j], rng);
  }
  return e;
}
}  // namespace

ScmSample sample_scm(const LinearScm& scm, Index n_samples, std::uint64_t seed) {
  MatrixXd e = draw_noise(scm, n_samples, seed);
  MatrixXd z = latents_from_noise(scm, e);
  return {std::move(z), std::move(e)};
}

ScmSample sample_inexact_scm(const InexactScm& scm, Index n_samples, std::uint64_t seed) {
  MatrixXd e = draw_noise(scm.base(), n_samples, seed);
  const MatrixXd entangled = e * scm.entanglement().transpose();
  MatrixXd z = latents_from_noise(scm.base(), entangled);
  return {std::move(z), std::move(e)};
}

MatrixXd mix_observations(const MixingMatrix& g, const MatrixXd& latents) {
  if (latents.cols() != g.latent_dim())
    throw input_error(kModule, "latent dimension does not match the mixing matrix");
  return latents * g.matrix().transpose();
}

double mic_of_entanglement(const MatrixXd& entanglement) {
  check_unit_rows(entanglement);
  const double total = entanglement.squaredNorm();
  const double diag = entanglement.diagonal().squaredNorm();
  return std::max(0.0, total - diag) / static_cast<double>(entanglement.rows());
}

void DomainCollection::validate() const {
  const Index n = observed_dim();
  if (n == 0) throw input_error(kModule, "collection has no benchmark columns");
  for (const auto& d : domains) {
    if (d.observations.rows() < 1)
      throw input_error(kModule, "domain '" + d.id + "' has no rows");
    if (d.observations.cols() != n)
      throw input_error(kModule, "domain '" + d.id + "' has " +
                                     std::to_string(d.observations.cols()) + " columns, expected " +
                                     std::to_string(n));
    if (!d.observations.allFinite())
      throw input_error(kModule, "domain '" + d.id + "' has non-finite entries");
  }
}

MatrixXd DomainCollection::stacked() const {
  Index rows = 0;
  for (const auto& d : domains) rows += d.observations.rows();
  MatrixXd out(rows, observed_dim());
  Index at = 0;
  for (const auto& d : domains) {
    out.middleRows(at, d.observations.rows()) = d.observations;
    at += d.observations.rows();
  }
  return out;
}

const DomainDataset& DomainCollection::find(std::string_view id) const {
  for (const auto& d : domains)
    if (d.id == id) return d;
  throw input_error(kModule, "unknown domain '" + std::string(id) + "'");
}

std::vector<SourceDistribution> distinct_sources(int d0, int offset) {
  static constexpr SourceDistribution kFamilies[] = {
      SourceDistribution::Uniform, SourceDistribution::Laplace,
      SourceDistribution::CenteredExponential, SourceDistribution::TwoPoint};
  std::vector<SourceDistribution> out(d0);
  for (int i = 0; i < d0; ++i) out[i] = kFamilies[(i + offset) % 4];
  return out;
}

LinearScm random_scm(const CausalGraph& graph, const std::vector<SourceDistribution>& sources,
                     const ScmDrawSpec& spec, Rng& rng) {
  const int d = graph.node_count();
  MatrixXd a = MatrixXd::Zero(d, d);
  for (const auto& e : graph.edges()) {
    const double mag = rng.uniform(spec.weight_min, spec.weight_max);
    a(e.to, e.from) = rng.bernoulli(0.5) ? mag : -mag;
  }
  VectorXd var(d);
  for (int i = 0; i < d; ++i) var(i) = rng.uniform(spec.variance_min, spec.variance_max);
  return LinearScm(graph, std::move(a), std::move(var), sources);
}

MatrixXd random_entanglement(int d0, double alpha, Rng& rng) {
  if (alpha < 0.0 || alpha > 1.0) throw input_error(kModule, "alpha must lie in [0, 1]");
  if (d0 == 1 && alpha > 0.0) throw input_error(kModule, "a single node cannot be entangled");
  MatrixXd u = MatrixXd::Zero(d0, d0);
  for (int i = 0; i < d0; ++i) {
    VectorXd v = VectorXd::Zero(d0);
    if (d0 > 1) {
      double norm = 0.0;
      while (norm < 1e-6) {
        for (int j = 0; j < d0; ++j) v(j) = j == i ? 0.0 : rng.normal();
        norm = v.norm();
      }
      v /= norm;
    }
    u.row(i) = std::sqrt(alpha) * v.transpose();
    u(i, i) = std::sqrt(1.0 - alpha);
  }
  return u;
}

MatrixXd random_mixing(Index n, Index d0, Rng& rng) {
  for (;;) {
    MatrixXd g(n, d0);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < d0; ++j) g(i, j) = rng.normal();
    Eigen::JacobiSVD<MatrixXd> svd(g);
    const auto& s = svd.singularValues();
    if (s(s.size() - 1) > 0.2 * s(0)) return g;
  }
}

}  // namespace capcrl
