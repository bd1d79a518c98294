#pragma once

// Missing-entry imputation for benchmark score matrices: nuclear-norm
// regularised completion (soft-impute), a structured solver for block
// patterns, mask generators, and the global-vs-local comparison harness.

#include "capcrl/linalg.hpp"
#include "capcrl/scm.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace capcrl {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct MaskedMatrix {
  MatrixXd values;
  BoolArray observed;  ///< true where the entry is visible

  Index hidden_count() const { return observed.size() - observed.count(); }
};

/// Hides each entry independently with probability p.
MaskedMatrix mask_random(const MatrixXd& x, double p, std::uint64_t seed);

/// Columns in `observed_cols` stay visible; round(p * N) rows, drawn without
/// replacement, are hidden in every other column.
MaskedMatrix mask_block(const MatrixXd& x, const std::vector<int>& observed_cols, double p, std::uint64_t seed);

/// Root mean square error over hidden entries only (0 when nothing is hidden).
double hidden_rmse(const MaskedMatrix& mask, const MatrixXd& truth, const MatrixXd& estimate);

struct SoftImputeConfig {
  int max_iter = 2000;
  double tol = 1e-9;  ///< on ||Z_new - Z||_F^2 / ||Z||_F^2
};

struct CompletionResult {
  MatrixXd completed;  ///< observed entries equal the input exactly
  MatrixXd low_rank;   ///< final soft-thresholded iterate Z
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_history;  ///< one value per iteration
  std::vector<int> unidentifiable_columns;  ///< no observed entry; row-mean filled
};

/// 0.5 ||P_obs(X - Z)||_F^2 + lambda ||Z||_*.
double soft_impute_objective(const MaskedMatrix& m, const MatrixXd& z, double lambda);

/// Soft-impute: Z <- S_lambda(P_obs(X) + P_hidden(Z)) until the relative change
/// drops below tol. Non-convergence is flagged, not thrown.
CompletionResult nnr_complete(const MaskedMatrix& m, double lambda, const SoftImputeConfig& config = {},
                              const MatrixXd* warm_start = nullptr);

/// Geometric grid from sigma_max(P_obs(X)) down to min_ratio * sigma_max.
std::vector<double> lambda_grid(const MaskedMatrix& m, int size = 12, double min_ratio = 1e-4);

/// Warm-started path over a decreasing grid; one result per lambda.
std::vector<CompletionResult> nnr_complete_path(const MaskedMatrix& m, const std::vector<double>& lambdas,
                                                const SoftImputeConfig& config = {});

struct LambdaSelectionConfig {
  int grid_size = 12;
  double min_ratio = 1e-4;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  SoftImputeConfig solver;
};

struct LambdaSelection {
  std::vector<double> grid;
  std::vector<double> validation_rmse;
  double chosen = 0.0;
  CompletionResult result;  ///< refit on all observed entries at `chosen`
};

/// Holds out a fraction of observed entries, picks the grid lambda with the
/// lowest held-out RMSE (ties to the larger lambda) and refits.
LambdaSelection nnr_complete_auto(const MaskedMatrix& m, const LambdaSelectionConfig& config = {});

struct BlockCompletionResult {
  MatrixXd completed;
  Index complete_rows = 0;
  double loading_condition = 1.0;  ///< worst sigma_min / sigma_max of the observed-column loadings
  bool ill_conditioned = false;    ///< some row's observed loadings cannot pin down the factors
};

/// Rank-r factor model fit on the fully observed rows (centered SVD). Each
/// incomplete row's factor coordinates are solved from its observed columns and
/// its hidden entries predicted from them. rank = 0 gives column-mean imputation.
BlockCompletionResult block_complete(const MaskedMatrix& m, const std::vector<int>& observed_cols, Index rank);

enum class MaskPattern { Random, Block };
enum class CompletionSolver { Nnr, Block };

struct CompletionExperimentConfig {
  MaskPattern pattern = MaskPattern::Random;
  double p = 0.8;
  std::vector<int> observed_cols;  ///< block pattern only
  CompletionSolver solver = CompletionSolver::Nnr;
  Index rank = 3;                  ///< block solver only
  int repeats = 100;
  std::uint64_t seed = 0;
  LambdaSelectionConfig lambda;
};

struct RmseSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct CompletionExperimentReport {
  std::vector<double> global_rmse;
  std::vector<double> local_rmse;
  std::vector<double> global_lambda;  ///< NNR only
  std::vector<double> local_lambda;
  RmseSummary global;
  RmseSummary local;
  int local_wins = 0;  ///< repeats with local < global
  BoolArray first_mask;               ///< target-domain mask of repeat 0
  std::vector<double> local_grid;     ///< lambda grids of repeat 0 (NNR only)
  std::vector<double> global_grid;
};

/// Masks the target domain, completes once on the full stacked matrix (other
/// domains fully observed) and once on the target submatrix, and scores each
/// on the target's hidden entries.
CompletionExperimentReport completion_experiment(const DomainCollection& collection, const std::string& target,
                                                 const CompletionExperimentConfig& config);

}  // namespace capcrl
