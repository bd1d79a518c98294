#include "capcrl/alignment.hpp"

#include "capcrl/error.hpp"

#include <cstdio>
#include <sstream>

namespace capcrl {

namespace {
constexpr const char* kModule = "factor-alignment";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace

double r_squared(const VectorXd& target, const VectorXd& prediction) {
  const double tss = (target.array() - target.mean()).square().sum();
  const double rss = (target - prediction).squaredNorm();
  if (!(tss > 0.0)) return 0.0;
  return 1.0 - rss / tss;
}

OlsFit ols_fit(const VectorXd& y, const MatrixXd& x, bool intercept) {
  if (x.rows() != y.size()) throw input_error(kModule, "ols_fit: row count mismatch");
  const Index p = x.cols() + (intercept ? 1 : 0);
  if (y.size() <= p) throw input_error(kModule, "ols_fit: need more rows than parameters");
  MatrixXd design(x.rows(), p);
  design.leftCols(x.cols()) = x;
  if (intercept) design.col(p - 1).setOnes();

  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(design);
  cod.setThreshold(1e-12);
  OlsFit fit;
  fit.coefficients = cod.solve(y);
  fit.rank_deficient = cod.rank() < p;
  const double tss = (y.array() - y.mean()).square().sum();
  if (!(tss > 1e-300)) {
    fit.r_squared = 0.0;
    fit.degenerate_target = true;
    return fit;
  }
  const double rss = (y - design * fit.coefficients).squaredNorm();
  fit.r_squared = 1.0 - rss / tss;
  return fit;
}

AlignmentResult align_factors(const MatrixXd& latents, const MatrixXd& benchmarks,
                              const std::vector<std::string>& benchmark_names,
                              const std::optional<MatrixXd>& unmixing) {
  if (latents.rows() != benchmarks.rows()) throw input_error(kModule, "row counts of Z and X differ");
  if (benchmarks.cols() < 1) throw input_error(kModule, "need at least one benchmark");
  if (!benchmark_names.empty() && static_cast<Index>(benchmark_names.size()) != benchmarks.cols())
    throw input_error(kModule, "benchmark name count does not match X");
  if (unmixing && unmixing->rows() != latents.cols())
    throw input_error(kModule, "unmixing rows must match the latent dimension");

  const Index d = latents.cols();
  const Index n = benchmarks.cols();
  AlignmentResult out;
  out.adjusted_latents = latents;
  out.report.r_squared.resize(d, n);
  out.report.benchmarks = benchmark_names;
  if (unmixing) out.report.adjusted_unmixing = *unmixing;

  MatrixXd& z = out.adjusted_latents;
  for (Index i = 0; i < d; ++i) {
    MatrixXd design(z.rows(), i + 1);
    design.leftCols(i) = z.leftCols(i);
    FactorRegression best;
    OlsFit best_fit;
    bool have = false;
    for (Index b = 0; b < n; ++b) {
      design.col(i) = benchmarks.col(b);
      OlsFit fit = ols_fit(z.col(i), design, true);
      out.report.r_squared(i, b) = fit.r_squared;
      if (!have || fit.r_squared > best_fit.r_squared) {
        best_fit = std::move(fit);
        best.benchmark = static_cast<int>(b);
        have = true;
      }
    }
    best.benchmark_name = benchmark_names.empty() ? "x" + std::to_string(best.benchmark + 1)
                                                  : benchmark_names[best.benchmark];
    best.predecessor_coefficients = best_fit.coefficients.head(i);
    best.benchmark_coefficient = best_fit.coefficients(i);
    best.intercept = best_fit.coefficients(i + 1);
    best.r_squared = best_fit.r_squared;

    for (Index j = 0; j < i; ++j) {
      const double a = best.predecessor_coefficients(j);
      z.col(i) -= a * z.col(j);
      if (out.report.adjusted_unmixing) {
        MatrixXd& h = *out.report.adjusted_unmixing;
        h.row(i) -= a * h.row(j);
      }
    }
    out.report.factors.push_back(std::move(best));
  }
  return out;
}

std::vector<AlignmentResult> align_factors_per_domain(const std::vector<MatrixXd>& latents,
                                                      const std::vector<MatrixXd>& benchmarks,
                                                      const std::vector<std::string>& benchmark_names) {
  if (latents.size() != benchmarks.size()) throw input_error(kModule, "domain count mismatch");
  std::vector<AlignmentResult> out;
  for (std::size_t k = 0; k < latents.size(); ++k)
    out.push_back(align_factors(latents[k], benchmarks[k], benchmark_names));
  return out;
}

VectorXd out_of_sample_r2(const AlignmentReport& report, const MatrixXd& latents, const MatrixXd& benchmarks) {
  const Index d = static_cast<Index>(report.factors.size());
  if (latents.cols() != d) throw input_error(kModule, "latent dimension does not match the report");
  if (latents.rows() != benchmarks.rows()) throw input_error(kModule, "row counts of Z and X differ");
  MatrixXd z = latents;
  VectorXd r2(d);
  for (Index i = 0; i < d; ++i) {
    const auto& f = report.factors[i];
    if (f.benchmark >= benchmarks.cols()) throw input_error(kModule, "benchmark column out of range");
    VectorXd pred = VectorXd::Constant(z.rows(), f.intercept) + f.benchmark_coefficient * benchmarks.col(f.benchmark);
    for (Index j = 0; j < i; ++j) pred += f.predecessor_coefficients(j) * z.col(j);
    r2(i) = r_squared(z.col(i), pred);
    for (Index j = 0; j < i; ++j) z.col(i) -= f.predecessor_coefficients(j) * z.col(j);
  }
  return r2;
}

std::string r2_table_csv(const AlignmentReport& report) {
  std::ostringstream os;
  const Index n = report.r_squared.cols();
  for (Index b = 0; b < n; ++b)
    os << ',' << (report.benchmarks.empty() ? "x" + std::to_string(b + 1) : report.benchmarks[b]);
  os << '\n';
  for (Index i = 0; i < report.r_squared.rows(); ++i) {
    os << 'z' << (i + 1);
    for (Index b = 0; b < n; ++b) os << ',' << fmt(report.r_squared(i, b));
    os << '\n';
  }
  return os.str();
}

}  // namespace capcrl
