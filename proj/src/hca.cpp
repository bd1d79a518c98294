#include "capcrl/hca.hpp"

#include "capcrl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

namespace capcrl {

namespace {
constexpr const char* kModule = "hca";

std::vector<Permutation> all_permutations(int d) {
  std::vector<Permutation> out;
  Permutation p(d);
  std::iota(p.begin(), p.end(), 0);
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

std::uint64_t saturating_power(std::uint64_t base, std::size_t exp) {
  std::uint64_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (base != 0 && out > std::numeric_limits<std::uint64_t>::max() / base)
      return std::numeric_limits<std::uint64_t>::max();
    out *= base;
  }
  return out;
}

struct Scored {
  double mic = std::numeric_limits<double>::infinity();
  std::uint64_t position = std::numeric_limits<std::uint64_t>::max();
  bool better_than(const Scored& o) const {
    return mic < o.mic || (mic == o.mic && position < o.position);
  }
};

double score_tuple(std::span<const MatrixXd> m_mats, const std::vector<Permutation>& tuple,
                   bool orthonormalize) {
  try {
    return hca_evaluate(m_mats, tuple, orthonormalize).mic.alpha;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Numerical) return std::numeric_limits<double>::infinity();
    throw;
  }
}

// Evaluates positions [0, count) with `tuple_at(position)` and returns the best
// (mic, position) plus the number of degenerate branches. The reduction is
// independent of how positions are split over threads.
template <typename TupleAt>
std::pair<Scored, std::uint64_t> scan(std::span<const MatrixXd> m_mats, std::uint64_t count,
                                      const TupleAt& tuple_at, const HcaConfig& cfg) {
  unsigned threads = 1;
  if (cfg.parallel) {
    threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
    threads = std::max(1u, threads);
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(count, 1)));
  }
  std::vector<Scored> best(threads);
  std::vector<std::uint64_t> degenerate(threads, 0);
  std::vector<std::exception_ptr> failures(threads);
  auto work = [&](unsigned t) {
    try {
      const std::uint64_t lo = count * t / threads;
      const std::uint64_t hi = count * (t + 1) / threads;
      for (std::uint64_t pos = lo; pos < hi; ++pos) {
        Scored s{score_tuple(m_mats, tuple_at(pos), cfg.orthonormalize_h), pos};
        if (std::isinf(s.mic)) ++degenerate[t];
        if (s.better_than(best[t])) best[t] = s;
      }
    } catch (...) {
      failures[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
  Scored overall;
  std::uint64_t degenerate_total = 0;
  for (unsigned t = 0; t < threads; ++t) {
    if (best[t].better_than(overall)) overall = best[t];
    degenerate_total += degenerate[t];
  }
  return {overall, degenerate_total};
}
}  // namespace

HcaCandidate hca_evaluate(std::span<const MatrixXd> m_mats, const std::vector<Permutation>& permutations,
                          bool orthonormalize_h) {
  const std::size_t k_count = m_mats.size();
  if (k_count == 0) throw input_error(kModule, "need at least one domain");
  if (permutations.size() != k_count) throw input_error(kModule, "one permutation per domain required");
  const Index d = m_mats[0].rows();
  const Index n = m_mats[0].cols();

  HcaCandidate c;
  c.permutations = permutations;
  c.permuted.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (m_mats[k].rows() != d || m_mats[k].cols() != n)
      throw input_error(kModule, "all unmixing matrices must share one shape");
    if (static_cast<Index>(permutations[k].size()) != d)
      throw input_error(kModule, "permutation length must equal d0");
    MatrixXd p(d, n);
    for (Index i = 0; i < d; ++i) p.row(i) = m_mats[k].row(permutations[k][i]);
    c.permuted.push_back(std::move(p));
  }

  c.h_hat.resize(d, n);
  c.rank1_errors.resize(d);
  std::vector<Index> leading;
  MatrixXd stacked(static_cast<Index>(k_count), n);
  for (Index i = 0; i < d; ++i) {
    const auto residuals = ortho_proj<double>(leading, c.permuted);
    for (std::size_t k = 0; k < k_count; ++k) stacked.row(static_cast<Index>(k)) = residuals[k].row(i);
    const auto dir = extract_direction(stacked);
    c.h_hat.row(i) = dir.h;
    c.rank1_errors[i] = dir.rank1_error;
    leading.push_back(i);
  }
  if (orthonormalize_h) c.h_hat = gram_schmidt_rows<double>(c.h_hat);

  c.b_hats.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k) c.b_hats.push_back(fit_triangular(c.permuted[k], c.h_hat));
  c.mic = compute_mic<double>(c.permuted, c.b_hats, c.h_hat);
  return c;
}

HcaSolution hca_search(std::span<const MatrixXd> m_mats, const HcaConfig& config) {
  if (m_mats.empty()) throw input_error(kModule, "need at least one domain");
  if (config.budget < 1) throw input_error(kModule, "budget must be >= 1");
  const Index d = m_mats[0].rows();
  if (d < 1 || d > m_mats[0].cols()) throw input_error(kModule, "need 1 <= d0 <= n");
  for (const auto& m : m_mats) {
    if (m.rows() != d || m.cols() != m_mats[0].cols())
      throw input_error(kModule, "all unmixing matrices must share one shape");
    if (!m.allFinite()) throw input_error(kModule, "unmixing matrix has non-finite entries");
  }

  const auto perms = all_permutations(static_cast<int>(d));
  const std::size_t k_count = m_mats.size();
  const std::uint64_t radix = perms.size();
  const std::uint64_t total = saturating_power(radix, k_count);

  HcaSolution sol;
  sol.tuples_total_capped = total;
  sol.exhaustive = total <= config.budget;

  auto expand = [&](const std::vector<std::uint32_t>& ranks) {
    std::vector<Permutation> tuple(k_count);
    for (std::size_t k = 0; k < k_count; ++k) tuple[k] = perms[ranks[k]];
    return tuple;
  };

  std::pair<Scored, std::uint64_t> result;
  std::vector<std::vector<std::uint32_t>> sampled;
  if (sol.exhaustive) {
    // Position -> mixed-radix digits with domain 0 most significant, which is
    // lexicographic order over tuples of lexicographically ranked permutations.
    auto tuple_at = [&](std::uint64_t pos) {
      std::vector<std::uint32_t> ranks(k_count);
      for (std::size_t k = k_count; k-- > 0;) {
        ranks[k] = static_cast<std::uint32_t>(pos % radix);
        pos /= radix;
      }
      return expand(ranks);
    };
    result = scan(m_mats, total, tuple_at, config);
    sol.tuples_evaluated = total;
  } else {
    Rng rng(derive_seed(config.seed, {0x4843ULL}));
    sampled.push_back(std::vector<std::uint32_t>(k_count, 0));
    while (sampled.size() < config.budget) {
      const std::size_t want = config.budget - sampled.size();
      for (std::size_t s = 0; s < want; ++s) {
        std::vector<std::uint32_t> ranks(k_count);
        for (auto& r : ranks) r = static_cast<std::uint32_t>(rng.below(radix));
        sampled.push_back(std::move(ranks));
      }
      std::sort(sampled.begin(), sampled.end());
      sampled.erase(std::unique(sampled.begin(), sampled.end()), sampled.end());
    }
    auto tuple_at = [&](std::uint64_t pos) { return expand(sampled[pos]); };
    result = scan(m_mats, sampled.size(), tuple_at, config);
    sol.tuples_evaluated = sampled.size();
  }
  sol.degenerate_branches = result.second;
  const Scored& best = result.first;
  if (!std::isfinite(best.mic))
    throw Error(ErrorKind::NoSolution, kModule, "no valid solution: every permutation branch is degenerate");

  std::vector<Permutation> tuple;
  if (sol.exhaustive) {
    std::vector<std::uint32_t> ranks(k_count);
    std::uint64_t pos = best.position;
    for (std::size_t k = k_count; k-- > 0;) {
      ranks[k] = static_cast<std::uint32_t>(pos % radix);
      pos /= radix;
    }
    tuple = expand(ranks);
  } else {
    tuple = expand(sampled[best.position]);
  }

  HcaCandidate c = hca_evaluate(m_mats, tuple, config.orthonormalize_h);
  sol.h_hat = std::move(c.h_hat);
  sol.b_hats = std::move(c.b_hats);
  sol.permutations = std::move(c.permutations);
  sol.mic = c.mic.alpha;
  sol.per_domain_alpha = c.mic.per_domain;
  sol.j_normalized = std::move(c.mic.j_normalized);
  sol.rank1_errors = std::move(c.rank1_errors);
  for (std::size_t k = 0; k < k_count; ++k)
    sol.unmixing_errors.push_back(unmixing_recovery_error(c.permuted[k], sol.b_hats[k], sol.h_hat));
  return sol;
}

MatrixXd RecoveredScm::rebuild_b(std::size_t k) const {
  const auto& w = domains.at(k);
  const Index d = w.weights.rows();
  return w.noise_scale.cwiseInverse().asDiagonal() * (MatrixXd::Identity(d, d) - w.weights);
}

RecoveredScm recover_graph_weights(std::span<const MatrixXd> b_hats) {
  RecoveredScm out;
  for (std::size_t k = 0; k < b_hats.size(); ++k) {
    const MatrixXd& b = b_hats[k];
    if (b.rows() != b.cols()) throw input_error(kModule, "B must be square");
    const Index d = b.rows();
    DomainWeights w;
    w.noise_scale.resize(d);
    for (Index i = 0; i < d; ++i) {
      if (b(i, i) == 0.0 || !std::isfinite(b(i, i)))
        throw numerical_error(kModule, "non-invertible node " + std::to_string(i) + " in domain " +
                                           std::to_string(k) + ": zero diagonal");
      w.noise_scale(i) = 1.0 / b(i, i);
    }
    w.variances = w.noise_scale.array().square();
    w.weights = MatrixXd::Identity(d, d) - w.noise_scale.asDiagonal() * b;
    w.weights.diagonal().setZero();
    w.weights.triangularView<Eigen::StrictlyUpper>().setZero();
    out.domains.push_back(std::move(w));
  }
  return out;
}

std::string to_dot(const DomainWeights& weights, const std::string& graph_name,
                   const std::vector<std::string>& node_labels, double threshold) {
  const Index d = weights.weights.rows();
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };
  auto label = [&](Index i) {
    return static_cast<std::size_t>(i) < node_labels.size() ? node_labels[i] : "z" + std::to_string(i + 1);
  };
  std::ostringstream os;
  os << "digraph \"" << graph_name << "\" {\n  rankdir=LR;\n";
  for (Index i = 0; i < d; ++i)
    os << "  n" << i << " [label=\"" << label(i) << "\\nnoise " << fmt(weights.noise_scale(i)) << "\"];\n";
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < i; ++j) {
      const double w = weights.weights(i, j);
      if (std::abs(w) > threshold) os << "  n" << j << " -> n" << i << " [label=\"" << fmt(w) << "\"];\n";
    }
  os << "}\n";
  return os.str();
}

}  // namespace capcrl
