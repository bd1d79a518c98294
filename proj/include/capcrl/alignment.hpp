#pragma once

// Ambiguity adjustment after HCA. Recovered factor z_i is only determined up
// to adding multiples of its predecessors z_j (j < i). For each i we regress
//   z_i ~ sum_{j<i} a_j z_j + gamma_B x_B + c
// for every benchmark B, keep the benchmark with the highest R^2, and replace
// z_i by z_i - sum_{j<i} a_j z_j.

#include "capcrl/linalg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace capcrl {

struct OlsFit {
  VectorXd coefficients;  ///< one per design column, then the intercept (if fitted)
  double r_squared = 0.0;
  bool rank_deficient = false;    ///< minimum-norm solution was used
  bool degenerate_target = false; ///< constant y with intercept; R^2 reported as 0
};

/// Least squares with R^2 = 1 - RSS/TSS, TSS taken about the mean of y.
OlsFit ols_fit(const VectorXd& y, const MatrixXd& x, bool intercept = true);

/// R^2 of a prediction against a target (TSS about the target mean); may be negative.
double r_squared(const VectorXd& target, const VectorXd& prediction);

struct FactorRegression {
  int benchmark = 0;                 ///< chosen column of X
  std::string benchmark_name;
  VectorXd predecessor_coefficients; ///< a_j for j < i
  double benchmark_coefficient = 0.0;  ///< gamma_B
  double intercept = 0.0;              ///< c
  double r_squared = 0.0;
};

struct AlignmentReport {
  std::vector<FactorRegression> factors;
  MatrixXd r_squared;  ///< d0 x n, every factor/benchmark pairing
  std::vector<std::string> benchmarks;
  std::optional<MatrixXd> adjusted_unmixing;  ///< H with the same row operations applied
};

struct AlignmentResult {
  MatrixXd adjusted_latents;
  AlignmentReport report;
};

/// Sequential adjustment in factor order. R^2 ties go to the earlier benchmark
/// column. When `unmixing` is given (Z = X H^T) its rows receive the same
/// operations.
AlignmentResult align_factors(const MatrixXd& latents, const MatrixXd& benchmarks,
                              const std::vector<std::string>& benchmark_names = {},
                              const std::optional<MatrixXd>& unmixing = std::nullopt);

/// Per-domain variant: one independent alignment per row block.
std::vector<AlignmentResult> align_factors_per_domain(const std::vector<MatrixXd>& latents,
                                                      const std::vector<MatrixXd>& benchmarks,
                                                      const std::vector<std::string>& benchmark_names = {});

/// Applies the stored regressions to new data (unadjusted latents) and returns
/// the R^2 of each factor's fitted equation.
VectorXd out_of_sample_r2(const AlignmentReport& report, const MatrixXd& latents, const MatrixXd& benchmarks);

/// Table layout: header ",<bench...>", one row "z<i>" per factor.
std::string r2_table_csv(const AlignmentReport& report);

}  // namespace capcrl
