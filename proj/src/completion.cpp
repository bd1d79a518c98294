#include "capcrl/completion.hpp"

#include "capcrl/error.hpp"
#include "capcrl/rng.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace capcrl {

namespace {
constexpr const char* kModule = "completion";

void check_mask(const MaskedMatrix& m) {
  if (m.values.rows() != m.observed.rows() || m.values.cols() != m.observed.cols())
    throw input_error(kModule, "mask shape does not match values");
}

void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw input_error(kModule, "p must lie in [0, 1]");
}

MatrixXd observed_part(const MaskedMatrix& m) {
  return m.observed.select(m.values, MatrixXd::Zero(m.values.rows(), m.values.cols()));
}

struct Shrunk {
  MatrixXd z;
  double nuclear = 0.0;
};

// Right singular vectors and values come from the eigen-decomposition of the
// small Gram matrix Y^T Y; Z = Y V diag(shrunk / s) V^T never forms U. Squared
// singular values are accurate to eps * s_max^2, far below any lambda on the grid.
Shrunk soft_threshold_svd(const MatrixXd& y, double lambda) {
  if (y.rows() < y.cols()) {
    Shrunk t = soft_threshold_svd(y.transpose(), lambda);
    t.z.transposeInPlace();
    return t;
  }
  const Index n = y.cols();
  MatrixXd gram = MatrixXd::Zero(n, n);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram.selfadjointView<Eigen::Lower>());
  Shrunk out;
  Index kept = 0;
  VectorXd ratio(n);
  MatrixXd v(n, n);
  for (Index i = n - 1; i >= 0; --i) {
    const double s = std::sqrt(std::max(eig.eigenvalues()(i), 0.0));
    if (!(s > lambda)) break;
    ratio(kept) = (s - lambda) / s;
    out.nuclear += s - lambda;
    v.col(kept++) = eig.eigenvectors().col(i);
  }
  if (kept == 0) {
    out.z = MatrixXd::Zero(y.rows(), n);
    return out;
  }
  const auto vk = v.leftCols(kept);
  out.z = (y * vk) * (ratio.head(kept).asDiagonal() * vk.transpose());
  return out;
}

double nuclear_norm(const MatrixXd& z) {
  if (z.size() == 0) return 0.0;
  Eigen::BDCSVD<MatrixXd> svd(z);
  return svd.singularValues().sum();
}

CompletionResult soft_impute_core(const MaskedMatrix& m, double lambda, const SoftImputeConfig& cfg,
                                  const MatrixXd* warm) {
  const MatrixXd obs = observed_part(m);
  CompletionResult r;
  r.lambda = lambda;
  MatrixXd z = warm ? *warm : MatrixXd::Zero(m.values.rows(), m.values.cols());
  [[maybe_unused]] double prev_objective = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= cfg.max_iter; ++it) {
    const MatrixXd filled = m.observed.select(obs, z);
    Shrunk next = soft_threshold_svd(filled, lambda);
    const double change = (next.z - z).squaredNorm();
    const double base = std::max(z.squaredNorm(), 1e-300);
    const MatrixXd resid = m.observed.select(m.values - next.z, MatrixXd::Zero(z.rows(), z.cols()));
    const double objective = 0.5 * resid.squaredNorm() + lambda * next.nuclear;
    // Majorise-minimise step: the objective cannot increase.
    assert(objective <= prev_objective * (1.0 + 1e-9) + 1e-12);
    prev_objective = objective;
    r.objective_history.push_back(objective);
    z = std::move(next.z);
    r.iterations = it;
    if (change / base < cfg.tol) {
      r.converged = true;
      break;
    }
  }
  r.low_rank = z;
  r.completed = m.observed.select(m.values, z);
  return r;
}
}  // namespace

MaskedMatrix mask_random(const MatrixXd& x, double p, std::uint64_t seed) {
  check_p(p);
  Rng rng(derive_seed(seed, {0x6d61736bULL}));
  MaskedMatrix m{x, BoolArray::Constant(x.rows(), x.cols(), true)};
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) m.observed(i, j) = !rng.bernoulli(p);
  return m;
}

MaskedMatrix mask_block(const MatrixXd& x, const std::vector<int>& observed_cols, double p, std::uint64_t seed) {
  check_p(p);
  for (int c : observed_cols)
    if (c < 0 || c >= x.cols()) throw input_error(kModule, "observed column out of range");
  Rng rng(derive_seed(seed, {0x626c6bULL}));
  MaskedMatrix m{x, BoolArray::Constant(x.rows(), x.cols(), true)};
  const int hidden_rows = static_cast<int>(std::lround(p * static_cast<double>(x.rows())));
  const auto rows = rng.sample_without_replacement(static_cast<int>(x.rows()), hidden_rows);
  for (Index j = 0; j < x.cols(); ++j) {
    if (std::find(observed_cols.begin(), observed_cols.end(), static_cast<int>(j)) != observed_cols.end())
      continue;
    for (int r : rows) m.observed(r, j) = false;
  }
  return m;
}

double hidden_rmse(const MaskedMatrix& mask, const MatrixXd& truth, const MatrixXd& estimate) {
  check_mask(mask);
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols() || truth.rows() != mask.values.rows() ||
      truth.cols() != mask.values.cols())
    throw input_error(kModule, "hidden_rmse: shape mismatch");
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < truth.rows(); ++i)
    for (Index j = 0; j < truth.cols(); ++j)
      if (!mask.observed(i, j)) {
        const double e = truth(i, j) - estimate(i, j);
        sum += e * e;
        ++count;
      }
  return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

double soft_impute_objective(const MaskedMatrix& m, const MatrixXd& z, double lambda) {
  check_mask(m);
  const MatrixXd resid = m.observed.select(m.values - z, MatrixXd::Zero(z.rows(), z.cols()));
  return 0.5 * resid.squaredNorm() + lambda * nuclear_norm(z);
}

CompletionResult nnr_complete(const MaskedMatrix& m, double lambda, const SoftImputeConfig& config,
                              const MatrixXd* warm_start) {
  check_mask(m);
  if (!(lambda >= 0.0)) throw input_error(kModule, "lambda must be non-negative");
  if (config.max_iter < 1) throw input_error(kModule, "max_iter must be >= 1");
  if (m.observed.count() == 0) throw input_error(kModule, "nnr_complete needs at least one observed entry");
  if (warm_start && (warm_start->rows() != m.values.rows() || warm_start->cols() != m.values.cols()))
    throw input_error(kModule, "warm start shape mismatch");

  std::vector<int> keep, dropped;
  for (Index j = 0; j < m.values.cols(); ++j)
    (m.observed.col(j).any() ? keep : dropped).push_back(static_cast<int>(j));
  if (dropped.empty()) return soft_impute_core(m, lambda, config, warm_start);

  MaskedMatrix sub{m.values(Eigen::all, keep), m.observed(Eigen::all, keep)};
  MatrixXd warm_sub;
  if (warm_start) warm_sub = (*warm_start)(Eigen::all, keep);
  CompletionResult part = soft_impute_core(sub, lambda, config, warm_start ? &warm_sub : nullptr);

  CompletionResult r = part;
  r.completed.resize(m.values.rows(), m.values.cols());
  r.low_rank.resize(m.values.rows(), m.values.cols());
  r.completed(Eigen::all, keep) = part.completed;
  r.low_rank(Eigen::all, keep) = part.low_rank;
  const MatrixXd obs = observed_part(m);
  const double global_mean = obs.sum() / static_cast<double>(m.observed.count());
  for (Index i = 0; i < m.values.rows(); ++i) {
    const auto cnt = m.observed.row(i).count();
    const double row_mean = cnt > 0 ? obs.row(i).sum() / static_cast<double>(cnt) : global_mean;
    for (int j : dropped) r.completed(i, j) = r.low_rank(i, j) = row_mean;
  }
  r.unidentifiable_columns = dropped;
  return r;
}

std::vector<double> lambda_grid(const MaskedMatrix& m, int size, double min_ratio) {
  check_mask(m);
  if (size < 1) throw input_error(kModule, "grid size must be >= 1");
  Eigen::BDCSVD<MatrixXd> svd(observed_part(m));
  const double top = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  std::vector<double> grid(size);
  for (int i = 0; i < size; ++i) {
    const double t = size == 1 ? 0.0 : static_cast<double>(i) / (size - 1);
    grid[i] = top * std::pow(min_ratio, t);
  }
  return grid;
}

std::vector<CompletionResult> nnr_complete_path(const MaskedMatrix& m, const std::vector<double>& lambdas,
                                                const SoftImputeConfig& config) {
  std::vector<CompletionResult> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) {
    const MatrixXd* warm = out.empty() ? nullptr : &out.back().low_rank;
    out.push_back(nnr_complete(m, lambda, config, warm));
  }
  return out;
}

LambdaSelection nnr_complete_auto(const MaskedMatrix& m, const LambdaSelectionConfig& config) {
  check_mask(m);
  LambdaSelection sel;
  sel.grid = lambda_grid(m, config.grid_size, config.min_ratio);

  std::vector<std::pair<Index, Index>> visible;
  for (Index j = 0; j < m.values.cols(); ++j)
    for (Index i = 0; i < m.values.rows(); ++i)
      if (m.observed(i, j)) visible.emplace_back(i, j);
  if (visible.empty()) throw input_error(kModule, "nnr_complete needs at least one observed entry");

  const int holdout = std::max(1, static_cast<int>(std::lround(config.validation_fraction * visible.size())));
  if (static_cast<std::size_t>(holdout) < visible.size()) {
    Rng rng(derive_seed(config.seed, {0x76616cULL}));
    const auto picks = rng.sample_without_replacement(static_cast<int>(visible.size()), holdout);
    MaskedMatrix train = m;
    for (int p : picks) train.observed(visible[p].first, visible[p].second) = false;
    const auto path = nnr_complete_path(train, sel.grid, config.solver);
    std::size_t best = 0;
    for (std::size_t g = 0; g < path.size(); ++g) {
      double sum = 0.0;
      for (int p : picks) {
        const double e = m.values(visible[p].first, visible[p].second) -
                         path[g].completed(visible[p].first, visible[p].second);
        sum += e * e;
      }
      sel.validation_rmse.push_back(std::sqrt(sum / holdout));
      if (sel.validation_rmse[g] < sel.validation_rmse[best]) best = g;
    }
    sel.chosen = sel.grid[best];
    const std::vector<double> refit_grid(sel.grid.begin(), sel.grid.begin() + static_cast<long>(best) + 1);
    auto refit = nnr_complete_path(m, refit_grid, config.solver);
    sel.result = std::move(refit.back());
  } else {
    // Too few entries to hold any out: use the smallest lambda.
    sel.chosen = sel.grid.back();
    auto refit = nnr_complete_path(m, sel.grid, config.solver);
    sel.result = std::move(refit.back());
  }
  return sel;
}

BlockCompletionResult block_complete(const MaskedMatrix& m, const std::vector<int>& observed_cols, Index rank) {
  check_mask(m);
  const Index n = m.values.cols();
  if (rank < 0 || rank > n) throw input_error(kModule, "rank out of range");
  for (int c : observed_cols) {
    if (c < 0 || c >= n) throw input_error(kModule, "observed column out of range");
    if (!m.observed.col(c).all()) throw input_error(kModule, "observed columns must be fully observed");
  }
  std::vector<Index> complete;
  for (Index i = 0; i < m.values.rows(); ++i)
    if (m.observed.row(i).all()) complete.push_back(i);
  if (static_cast<Index>(complete.size()) < rank + 1)
    throw input_error(kModule, "too few complete rows for a rank-" + std::to_string(rank) + " fit");

  const MatrixXd full = m.values(complete, Eigen::all);
  const RowVectorXd mean = full.colwise().mean();
  MatrixXd loadings(n, rank);
  if (rank > 0) {
    const MatrixXd centered = full.rowwise() - mean;
    Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinV);
    loadings = svd.matrixV().leftCols(rank);
  }

  BlockCompletionResult out;
  out.complete_rows = static_cast<Index>(complete.size());
  out.completed = m.values;
  for (Index i = 0; i < m.values.rows(); ++i) {
    if (m.observed.row(i).all()) continue;
    std::vector<Index> obs, hid;
    for (Index j = 0; j < n; ++j) (m.observed(i, j) ? obs : hid).push_back(j);
    VectorXd coords = VectorXd::Zero(rank);
    if (rank > 0 && !obs.empty()) {
      const MatrixXd v_obs = loadings(obs, Eigen::all);
      Eigen::JacobiSVD<MatrixXd> svd(v_obs);
      const auto& s = svd.singularValues();
      const double cond = static_cast<Index>(obs.size()) < rank || s(0) == 0.0 ? 0.0 : s(s.size() - 1) / s(0);
      out.loading_condition = std::min(out.loading_condition, cond);
      if (cond < 1e-6) out.ill_conditioned = true;
      const VectorXd target = (m.values(i, obs) - mean(obs)).transpose();
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(v_obs);
      coords = cod.solve(target);
    } else if (rank > 0) {
      out.ill_conditioned = true;
      out.loading_condition = 0.0;
    }
    for (Index j : hid) out.completed(i, j) = mean(j) + loadings.row(j).dot(coords);
  }
  return out;
}

namespace {
RmseSummary summarize(const std::vector<double>& v) {
  RmseSummary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}
}  // namespace

CompletionExperimentReport completion_experiment(const DomainCollection& collection, const std::string& target,
                                                 const CompletionExperimentConfig& config) {
  collection.validate();
  if (config.repeats < 1) throw input_error(kModule, "repeats must be >= 1");
  Index offset = 0;
  Index target_rows = -1;
  for (const auto& d : collection.domains) {
    if (d.id == target) {
      target_rows = d.observations.rows();
      break;
    }
    offset += d.observations.rows();
  }
  if (target_rows < 0) throw input_error(kModule, "unknown target domain '" + target + "'");
  const MatrixXd stacked = collection.stacked();
  const MatrixXd truth = stacked.middleRows(offset, target_rows);

  CompletionExperimentReport rep;
  for (int r = 0; r < config.repeats; ++r) {
    const std::uint64_t seed = derive_seed(config.seed, {static_cast<std::uint64_t>(r)});
    const MaskedMatrix local = config.pattern == MaskPattern::Random
                                   ? mask_random(truth, config.p, seed)
                                   : mask_block(truth, config.observed_cols, config.p, seed);
    MaskedMatrix global{stacked, BoolArray::Constant(stacked.rows(), stacked.cols(), true)};
    global.observed.middleRows(offset, target_rows) = local.observed;
    if (r == 0) rep.first_mask = local.observed;

    MatrixXd local_hat, global_hat;
    if (local.hidden_count() == 0) {
      local_hat = truth;
      global_hat = truth;
    } else if (config.solver == CompletionSolver::Nnr) {
      LambdaSelectionConfig lc = config.lambda;
      lc.seed = derive_seed(seed, {1});
      auto ls = nnr_complete_auto(local, lc);
      auto gs = nnr_complete_auto(global, lc);
      local_hat = std::move(ls.result.completed);
      global_hat = gs.result.completed.middleRows(offset, target_rows);
      rep.local_lambda.push_back(ls.chosen);
      rep.global_lambda.push_back(gs.chosen);
      if (r == 0) {
        rep.local_grid = ls.grid;
        rep.global_grid = gs.grid;
      }
    } else {
      local_hat = block_complete(local, config.observed_cols, config.rank).completed;
      global_hat = block_complete(global, config.observed_cols, config.rank).completed.middleRows(offset, target_rows);
    }
    const double lr = hidden_rmse(local, truth, local_hat);
    const double gr = hidden_rmse(local, truth, global_hat);
    rep.local_rmse.push_back(lr);
    rep.global_rmse.push_back(gr);
    if (lr < gr) ++rep.local_wins;
  }
  rep.local = summarize(rep.local_rmse);
  rep.global = summarize(rep.global_rmse);
  return rep;
}

}  // namespace capcrl
