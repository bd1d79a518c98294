#include "capcrl/subspace.hpp"

#include <cstdio>
#include <sstream>

namespace capcrl {

MatrixXd pairwise_distance_matrix(const DomainCollection& domains, Index rank, PcaScaling scaling) {
  domains.validate();
  const Index k = static_cast<Index>(domains.domains.size());
  std::vector<PrincipalSubspace<double>> subspaces;
  subspaces.reserve(k);
  for (const auto& d : domains.domains) subspaces.push_back(pca(d.observations, rank, scaling));
  MatrixXd out = MatrixXd::Zero(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = i + 1; j < k; ++j) out(i, j) = out(j, i) = subspace_distance(subspaces[i], subspaces[j]);
  return out;
}

std::string distance_matrix_csv(const std::vector<std::string>& labels, const MatrixXd& m) {
  std::ostringstream os;
  for (const auto& l : labels) os << ',' << l;
  os << '\n';
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    os << labels[i];
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", m(i, j));
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace capcrl
