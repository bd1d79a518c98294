#pragma once

// JSON views of the core types, synthetic ground truth, and on-disk domain
// bundles (one CSV per domain plus manifest.json).

#include "capcrl/alignment.hpp"
#include "capcrl/completion.hpp"
#include "capcrl/hca.hpp"
#include "capcrl/ica.hpp"
#include "capcrl/scaling.hpp"
#include "capcrl/scm.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace capcrl {

using Json = nlohmann::ordered_json;

/// Row-major nested arrays.
Json matrix_json(const MatrixXd& m);
Json vector_json(const VectorXd& v);
MatrixXd matrix_from_json(const Json& j);
VectorXd vector_from_json(const Json& j);

/// Weights, variances, source families and (optionally) the entanglement U.
Json scm_json(const LinearScm& scm, const std::optional<MatrixXd>& entanglement = std::nullopt);

struct SimulationTruth {
  MatrixXd mixing;  ///< n x d0
  std::vector<std::string> domain_ids;
  std::vector<LinearScm> scms;
  std::vector<std::optional<MatrixXd>> entanglements;
};

Json truth_json(const SimulationTruth& truth);
SimulationTruth truth_from_json(const Json& j);

Json to_json(const IcaResult& r);
Json to_json(const HcaSolution& s);
Json to_json(const RecoveredScm& r);
Json to_json(const AlignmentReport& r);
Json to_json(const ScalingLawFit& f);
Json to_json(const AteReport& a);
Json to_json(const CompletionExperimentReport& r);

/// In-memory bundle: (relative file name, contents) pairs, manifest last.
std::vector<std::pair<std::string, std::string>> bundle_files(
    const DomainCollection& collection, const std::vector<std::vector<std::string>>& model_names = {},
    const Json& extra = Json::object());

/// Writes `<dir>/<id>.csv` per domain and `<dir>/manifest.json`. When
/// `model_names` is non-empty each CSV gains a leading "model" column.
/// Entries of `extra` are appended to the manifest.
void write_bundle(const std::filesystem::path& dir, const DomainCollection& collection,
                  const std::vector<std::vector<std::string>>& model_names = {}, const Json& extra = Json::object());

/// Reads a bundle; benchmark columns are selected by name from each CSV.
DomainCollection load_bundle(const std::filesystem::path& dir);
Json load_manifest(const std::filesystem::path& dir);

Json read_json_file(const std::filesystem::path& path);
/// Two-space indented, trailing newline.
std::string dump_json(const Json& j);

/// File-name-safe form of a domain id.
std::string sanitize_id(std::string_view id);

}  // namespace capcrl
