#include "capcrl/scaling.hpp"

#include "capcrl/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace capcrl {

namespace {
constexpr const char* kModule = "scaling";

double logistic(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// theta = (L, k, x0, b, tau)
using Params = Eigen::Matrix<double, 5, 1>;

struct Problem {
  const VectorXd& x;
  const VectorXd& t;
  const VectorXd& y;
  bool fix_tau;
};

VectorXd residuals(const Problem& p, const Params& th) {
  VectorXd r(p.x.size());
  for (Index i = 0; i < p.x.size(); ++i)
    r(i) = p.y(i) - (th(0) * logistic(th(1) * (p.x(i) - th(2))) + th(3) + th(4) * p.t(i));
  return r;
}

MatrixXd jacobian(const Problem& p, const Params& th) {
  const Index cols = p.fix_tau ? 4 : 5;
  MatrixXd j(p.x.size(), cols);
  for (Index i = 0; i < p.x.size(); ++i) {
    const double dx = p.x(i) - th(2);
    const double s = logistic(th(1) * dx);
    const double ds = s * (1.0 - s);
    j(i, 0) = s;
    j(i, 1) = th(0) * ds * dx;
    j(i, 2) = -th(0) * ds * th(1);
    j(i, 3) = 1.0;
    if (!p.fix_tau) j(i, 4) = p.t(i);
  }
  return j;
}

struct LmResult {
  Params theta;
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;
};

LmResult levenberg_marquardt(const Problem& p, Params theta, int max_iter, double tol) {
  VectorXd r = residuals(p, theta);
  double rss = r.squaredNorm();
  double mu = 1e-3;
  LmResult out;
  const Index cols = p.fix_tau ? 4 : 5;
  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    if (rss == 0.0) {
      out.converged = true;
      break;
    }
    const MatrixXd j = jacobian(p, theta);
    const MatrixXd jtj = j.transpose() * j;
    const VectorXd g = j.transpose() * r;
    bool accepted = false;
    for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
      MatrixXd a = jtj;
      for (Index c = 0; c < cols; ++c) a(c, c) += mu * std::max(jtj(c, c), 1e-12);
      const VectorXd step = a.ldlt().solve(g);
      Params cand = theta;
      cand.head(cols) += step;
      if (!cand.allFinite()) {
        mu *= 10.0;
        continue;
      }
      const VectorXd rc = residuals(p, cand);
      const double rss_c = rc.squaredNorm();
      if (rss_c <= rss) {
        const double rel = (rss - rss_c) / std::max(rss, 1e-300);
        const double step_rel = step.norm() / (theta.head(cols).norm() + 1e-12);
        theta = cand;
        r = rc;
        rss = rss_c;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        if (rel < tol || step_rel < tol) out.converged = true;
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted) {
      // No descent direction left at any damping: stationary to working precision.
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }
  out.theta = theta;
  out.rss = rss;
  return out;
}

Params linear_start(const Problem& p, double k, double x0) {
  const Index n = p.x.size();
  const Index cols = p.fix_tau ? 2 : 3;
  MatrixXd a(n, cols);
  for (Index i = 0; i < n; ++i) {
    a(i, 0) = logistic(k * (p.x(i) - x0));
    a(i, 1) = 1.0;
    if (!p.fix_tau) a(i, 2) = p.t(i);
  }
  const VectorXd sol = a.completeOrthogonalDecomposition().solve(p.y);
  Params th;
  th << sol(0), k, x0, sol(1), p.fix_tau ? 0.0 : sol(2);
  return th;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void validate(const VectorXd& c, const VectorXd& t, const VectorXd& y) {
  if (c.size() != t.size() || c.size() != y.size())
    throw input_error(kModule, "compute, treatment and outcome lengths differ");
  if (c.size() < 6) throw input_error(kModule, "need at least 6 points for 5 parameters");
  for (Index i = 0; i < c.size(); ++i) {
    if (!(c(i) > 0.0) || !std::isfinite(c(i))) throw input_error(kModule, "compute values must be positive");
    if (t(i) != 0.0 && t(i) != 1.0) throw input_error(kModule, "treatment flags must be 0 or 1");
    if (!std::isfinite(y(i))) throw input_error(kModule, "non-finite outcome");
  }
  if (c.maxCoeff() == c.minCoeff()) throw input_error(kModule, "degenerate design: all compute values identical");
}

ScalingLawFit to_fit(const LmResult& r, bool fix_tau, Index n) {
  ScalingLawFit f;
  f.L = r.theta(0);
  f.k = r.theta(1);
  f.log_c0 = r.theta(2);
  f.b = r.theta(3);
  f.tau = fix_tau ? 0.0 : r.theta(4);
  if (f.k < 0.0) {
    f.b += f.L;
    f.L = -f.L;
    f.k = -f.k;
  }
  f.c0 = std::exp(f.log_c0);
  f.tau_fixed = fix_tau;
  f.rss = r.rss;
  f.residual_rmse = std::sqrt(r.rss / static_cast<double>(n));
  f.iterations = r.iterations;
  f.converged = r.converged;
  return f;
}
}  // namespace

double ScalingLawFit::predict_log(double log_c, double t) const {
  return L * logistic(k * (log_c - log_c0)) + tau * t + b;
}

double ScalingLawFit::predict(double c, double t) const { return predict_log(std::log(c), t); }

ScalingLawFit sigmoid_fit(const VectorXd& compute, const VectorXd& treatment, const VectorXd& y,
                          const ScalingFitConfig& config) {
  validate(compute, treatment, y);
  const VectorXd x = compute.array().log().matrix();
  const bool fix_tau = treatment.maxCoeff() == treatment.minCoeff();
  const Problem p{x, treatment, y, fix_tau};
  std::vector<double> xs(x.data(), x.data() + x.size());

  LmResult best;
  best.rss = std::numeric_limits<double>::infinity();
  int best_start = -1, start = 0;
  for (double q : config.c0_percentiles) {
    const double x0 = percentile(xs, q);
    for (double kmag : config.k_grid) {
      for (double sign : {1.0, -1.0}) {
        const LmResult r = levenberg_marquardt(p, linear_start(p, sign * kmag, x0), config.max_iter, config.tol);
        if (std::isfinite(r.rss) && r.rss < best.rss) {
          best = r;
          best_start = start;
        }
        ++start;
      }
    }
  }
  if (best_start < 0) throw numerical_error(kModule, "no start produced a finite fit");
  ScalingLawFit fit = to_fit(best, fix_tau, y.size());
  fit.best_start = best_start;
  fit.starts = start;
  return fit;
}

ScalingLawFit refine_sigmoid_fit(const ScalingLawFit& start, const VectorXd& compute, const VectorXd& treatment,
                                 const VectorXd& y, const ScalingFitConfig& config) {
  validate(compute, treatment, y);
  const VectorXd x = compute.array().log().matrix();
  const Problem p{x, treatment, y, start.tau_fixed};
  Params th;
  th << start.L, start.k, start.log_c0, start.b, start.tau;
  ScalingLawFit fit = to_fit(levenberg_marquardt(p, th, config.max_iter, config.tol), start.tau_fixed, y.size());
  fit.best_start = start.best_start;
  fit.starts = start.starts;
  return fit;
}

AteReport ate_backdoor(const VectorXd& y, const VectorXd& treatment, const VectorXd& x, const OutcomeModel& model,
                       int strata) {
  if (y.size() != treatment.size() || y.size() != x.size()) throw input_error(kModule, "length mismatch");
  if (strata < 1) throw input_error(kModule, "strata must be >= 1");
  const Index n = y.size();
  Index treated = 0;
  double sum1 = 0.0, sum0 = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (treatment(i) == 1.0) {
      ++treated;
      sum1 += y(i);
    } else if (treatment(i) == 0.0) {
      sum0 += y(i);
    } else {
      throw input_error(kModule, "treatment flags must be 0 or 1");
    }
  }
  if (treated == 0 || treated == n) throw input_error(kModule, "both treatment arms must be present");

  AteReport rep;
  rep.naive = sum1 / static_cast<double>(treated) - sum0 / static_cast<double>(n - treated);
  double adj = 0.0;
  for (Index i = 0; i < n; ++i) adj += model(x(i), 1.0) - model(x(i), 0.0);
  rep.backdoor = adj / static_cast<double>(n);

  // Quantile strata of x; bins lacking an arm are skipped and weights renormalised.
  std::vector<Index> idx(n);
  for (Index i = 0; i < n; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return x(a) < x(b); });
  rep.strata = strata;
  double weighted = 0.0, weight = 0.0;
  for (int s = 0; s < strata; ++s) {
    const Index lo = n * s / strata, hi = n * (s + 1) / strata;
    double s1 = 0.0, s0 = 0.0;
    Index c1 = 0, c0 = 0;
    for (Index j = lo; j < hi; ++j) {
      const Index i = idx[j];
      if (treatment(i) == 1.0) {
        s1 += y(i);
        ++c1;
      } else {
        s0 += y(i);
        ++c0;
      }
    }
    if (c1 == 0 || c0 == 0) continue;
    const double w = static_cast<double>(hi - lo);
    weighted += w * (s1 / c1 - s0 / c0);
    weight += w;
    ++rep.strata_used;
  }
  rep.stratified = weight > 0.0 ? weighted / weight : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

AteReport ate_backdoor(const VectorXd& y, const VectorXd& treatment, const VectorXd& log_compute,
                       const ScalingLawFit& model, int strata) {
  return ate_backdoor(y, treatment, log_compute,
                      [&model](double x, double t) { return model.predict_log(x, t); }, strata);
}

}  // namespace capcrl
