#include "capcrl/ica.hpp"

#include "capcrl/error.hpp"
#include "capcrl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace capcrl {

namespace {
constexpr const char* kModule = "ica";

// E[log cosh(v)] and E[v^4 / 4] for v ~ N(0, 1).
constexpr double kGaussLogCosh = 0.37456720749659;
constexpr double kGaussQuartic = 0.75;

MatrixXd symmetric_decorrelation(const MatrixXd& w) {
  return inverse_sqrt_spd(w * w.transpose()) * w;
}

struct FixedPointRun {
  MatrixXd rotation;
  IcaConvergence convergence;
  double objective = 0.0;
};

double contrast_mean(const VectorXd& y, Nonlinearity g) {
  if (g == Nonlinearity::LogCosh) {
    double s = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
      const double a = std::abs(y(i));
      // log cosh(a) = a + log1p(exp(-2a)) - log 2, stable for large a
      s += a + std::log1p(std::exp(-2.0 * a)) - M_LN2;
    }
    return s / static_cast<double>(y.size());
  }
  return y.array().pow(4).mean() / 4.0;
}

double negentropy_proxy(const VectorXd& y, Nonlinearity g) {
  const double ref = g == Nonlinearity::LogCosh ? kGaussLogCosh : kGaussQuartic;
  const double d = contrast_mean(y, g) - ref;
  return d * d;
}

FixedPointRun run_fixed_point(const MatrixXd& white, Index d, const IcaConfig& cfg,
                              std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd w(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) w(i, j) = rng.normal();
  w = symmetric_decorrelation(w);

  const double n = static_cast<double>(white.rows());
  FixedPointRun run;
  run.convergence.component_iterations.assign(d, -1);
  run.convergence.final_deltas.assign(d, 1.0);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    const MatrixXd y = white * w.transpose();  // N x d
    MatrixXd gy(y.rows(), d);
    VectorXd mean_dg(d);
    if (cfg.nonlinearity == Nonlinearity::LogCosh) {
      gy = y.array().tanh().matrix();
      mean_dg = (1.0 - gy.array().square()).colwise().mean().transpose();
    } else {
      gy = y.array().cube().matrix();
      mean_dg = (3.0 * y.array().square()).colwise().mean().transpose();
    }
    MatrixXd w_new = (gy.transpose() * white) / n - mean_dg.asDiagonal() * w;
    w_new = symmetric_decorrelation(w_new);

    double worst = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double delta = 1.0 - std::abs(w_new.row(i).dot(w.row(i)));
      run.convergence.final_deltas[i] = delta;
      if (delta < cfg.tol && run.convergence.component_iterations[i] < 0)
        run.convergence.component_iterations[i] = it;
      worst = std::max(worst, delta);
    }
    w = std::move(w_new);
    run.convergence.iterations = it;
    if (worst < cfg.tol) {
      run.convergence.converged = true;
      break;
    }
  }

  const MatrixXd y = white * w.transpose();
  for (Index i = 0; i < d; ++i) run.objective += negentropy_proxy(y.col(i), cfg.nonlinearity);
  run.rotation = std::move(w);
  return run;
}
}  // namespace

Whitening whiten(const MatrixXd& x, Index d0) {
  if (d0 < 1) throw input_error(kModule, "d0 must be positive");
  if (d0 > x.cols()) throw input_error(kModule, "d0 exceeds the observed dimension");
  if (x.rows() <= d0) throw input_error(kModule, "need more samples than components");
  if (!x.allFinite()) throw input_error(kModule, "input has non-finite entries");

  Whitening out;
  out.mean = x.colwise().mean();
  const MatrixXd centered = x.rowwise() - out.mean;
  const MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  const Index n = x.cols();
  out.eigenvalues = eig.eigenvalues().reverse();
  const double largest = out.eigenvalues(0);
  out.map.resize(d0, n);
  for (Index i = 0; i < d0; ++i) {
    const double lambda = out.eigenvalues(i);
    if (!(largest > 0.0) || lambda < 1e-12 * largest)
      throw numerical_error(kModule, "rank-deficient input: eigenvalue " + std::to_string(i) +
                                         " is " + std::to_string(lambda));
    RowVectorXd v = eig.eigenvectors().col(n - 1 - i).transpose();
    canonicalize_sign(v);
    out.map.row(i) = v / std::sqrt(lambda);
  }
  out.white = centered * out.map.transpose();
  return out;
}

IcaResult fast_ica(const MatrixXd& x, Index d0, const IcaConfig& config) {
  if (config.restarts < 1) throw input_error(kModule, "restarts must be >= 1");
  if (config.max_iter < 1) throw input_error(kModule, "max_iter must be >= 1");
  Whitening w = whiten(x, d0);

  FixedPointRun best;
  bool have_best = false;
  for (int r = 0; r < config.restarts; ++r) {
    FixedPointRun run =
        run_fixed_point(w.white, d0, config, derive_seed(config.seed, {static_cast<std::uint64_t>(r)}));
    run.convergence.best_restart = r;
    run.convergence.objective = run.objective;
    if (!have_best || run.objective > best.objective) {
      best = std::move(run);
      have_best = true;
    }
  }

  const MatrixXd y = w.white * best.rotation.transpose();
  VectorXd score(d0);
  for (Index i = 0; i < d0; ++i) score(i) = negentropy_proxy(y.col(i), config.nonlinearity);
  std::vector<Index> order(d0);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return score(a) > score(b); });

  IcaResult out;
  out.whitener = w.map;
  out.mean = w.mean;
  out.rotation.resize(d0, d0);
  out.nongaussianity.resize(d0);
  IcaConvergence conv = best.convergence;
  for (Index i = 0; i < d0; ++i) {
    out.rotation.row(i) = best.rotation.row(order[i]);
    out.nongaussianity(i) = score(order[i]);
    conv.component_iterations[i] = best.convergence.component_iterations[order[i]];
    conv.final_deltas[i] = best.convergence.final_deltas[order[i]];
  }
  out.unmixing = out.rotation * out.whitener;
  for (Index i = 0; i < d0; ++i) {
    Index arg = 0;
    out.unmixing.row(i).cwiseAbs().maxCoeff(&arg);
    if (out.unmixing(i, arg) < 0) {
      out.unmixing.row(i) *= -1.0;
      out.rotation.row(i) *= -1.0;
    }
  }
  out.sources = (x.rowwise() - out.mean) * out.unmixing.transpose();
  out.convergence = std::move(conv);
  return out;
}

double amari_distance(const MatrixXd& unmixing, const MatrixXd& mixing) {
  if (unmixing.cols() != mixing.rows() || unmixing.rows() != mixing.cols())
    throw input_error(kModule, "amari_distance: M G must be square");
  const MatrixXd p = (unmixing * mixing).cwiseAbs();
  const Index d = p.rows();
  if (d < 2) return 0.0;
  double total = 0.0;
  for (Index i = 0; i < d; ++i) total += p.row(i).sum() / p.row(i).maxCoeff() - 1.0;
  for (Index j = 0; j < d; ++j) total += p.col(j).sum() / p.col(j).maxCoeff() - 1.0;
  return total / (2.0 * static_cast<double>(d) * static_cast<double>(d - 1));
}

}  // namespace capcrl
