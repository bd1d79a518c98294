#pragma once

// Sigmoid scaling law with an additive fine-tuning term,
//   Y ~ L / (1 + exp(-k (log C - log C0))) + tau T + b,
// and backdoor-adjusted treatment effects of fine-tuning with log compute as
// the adjustment variable.

#include "capcrl/linalg.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace capcrl {

struct ScalingFitConfig {
  std::vector<double> k_grid = {0.25, 0.5, 1.0, 2.0, 4.0};  ///< both signs are tried
  std::vector<double> c0_percentiles = {10, 30, 50, 70, 90};
  int max_iter = 500;
  double tol = 1e-12;
  std::uint64_t seed = 0;  ///< reserved; the start grid is deterministic
};

struct ScalingLawFit {
  double L = 0.0;
  double k = 0.0;     ///< canonicalised to k >= 0 via (L, k, b) -> (-L, -k, b + L)
  double log_c0 = 0.0;
  double c0 = 0.0;
  double b = 0.0;
  double tau = 0.0;
  bool tau_fixed = false;  ///< T constant, so tau is unidentifiable and pinned to 0
  double rss = 0.0;
  double residual_rmse = 0.0;
  int iterations = 0;
  bool converged = false;
  int best_start = 0;
  int starts = 0;

  double predict_log(double log_c, double t) const;
  double predict(double c, double t) const;
};

/// Levenberg-Marquardt from every (k, C0) start; each start first solves the
/// linear parameters (L, b, tau) exactly. Needs >= 6 points and at least two
/// distinct compute values.
ScalingLawFit sigmoid_fit(const VectorXd& compute, const VectorXd& treatment, const VectorXd& y,
                          const ScalingFitConfig& config = {});

/// Continues LM from the parameters of `start`; used to check stationarity.
ScalingLawFit refine_sigmoid_fit(const ScalingLawFit& start, const VectorXd& compute, const VectorXd& treatment,
                                 const VectorXd& y, const ScalingFitConfig& config = {});

inline constexpr const char* kIgnorabilityWarning =
    "Backdoor estimates equal the average treatment effect only under conditional ignorability: "
    "given log pretraining compute, treatment assignment must be independent of the potential outcomes.";

struct AteReport {
  double backdoor = 0.0;    ///< mean over x of E[Y | T=1, x] - E[Y | T=0, x]
  double naive = 0.0;       ///< difference in means
  double stratified = 0.0;  ///< binned difference in means, bin-size weighted
  int strata_used = 0;
  int strata = 0;
  std::string warning = kIgnorabilityWarning;
};

using OutcomeModel = std::function<double(double x, double t)>;

/// Backdoor adjustment with an arbitrary outcome regression E[Y | T, X].
AteReport ate_backdoor(const VectorXd& y, const VectorXd& treatment, const VectorXd& x, const OutcomeModel& model,
                       int strata = 5);
/// Same with the fitted sigmoid (x = log C); the backdoor estimate is tau.
AteReport ate_backdoor(const VectorXd& y, const VectorXd& treatment, const VectorXd& log_compute,
                       const ScalingLawFit& model, int strata = 5);

/// C ~ 6 N D with N in parameters and D in tokens.
inline double training_compute(double parameters, double tokens) { return 6.0 * parameters * tokens; }

}  // namespace capcrl
