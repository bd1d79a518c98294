#include "capcrl/io.hpp"

#include "capcrl/csv.hpp"
#include "capcrl/error.hpp"

#include <cmath>

namespace capcrl {

namespace {
constexpr const char* kModule = "io";

Json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;  // JSON has no inf/nan
}

template <class T>
Json list(const std::vector<T>& v) {
  Json a = Json::array();
  for (const auto& x : v) a.push_back(x);
  return a;
}

Json numbers(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}
}  // namespace

Json matrix_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const VectorXd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw input_error(kModule, "matrix must be an array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j.at(0).size()) : 0;
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw input_error(kModule, "ragged matrix");
    for (Index c = 0; c < cols; ++c) {
      if (!row.at(c).is_number()) throw input_error(kModule, "non-numeric matrix entry");
      m(r, c) = row.at(c).get<double>();
    }
  }
  return m;
}

VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw input_error(kModule, "vector must be an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    if (!j.at(i).is_number()) throw input_error(kModule, "non-numeric vector entry");
    v(i) = j.at(i).get<double>();
  }
  return v;
}

Json scm_json(const LinearScm& scm, const std::optional<MatrixXd>& entanglement) {
  Json j;
  j["weights"] = matrix_json(scm.weights());
  j["variances"] = vector_json(scm.variances());
  Json dists = Json::array();
  for (auto d : scm.distributions()) dists.push_back(std::string(to_string(d)));
  j["distributions"] = std::move(dists);
  if (entanglement) {
    j["entanglement"] = matrix_json(*entanglement);
    j["alpha"] = mic_of_entanglement(*entanglement);
  } else {
    j["entanglement"] = nullptr;
    j["alpha"] = nullptr;
  }
  return j;
}

Json truth_json(const SimulationTruth& truth) {
  Json j;
  j["latent_dim"] = truth.mixing.cols();
  j["observed_dim"] = truth.mixing.rows();
  Json edges = Json::array();
  if (!truth.scms.empty())
    for (const auto& e : truth.scms.front().graph().edges()) edges.push_back(Json::array({e.from, e.to}));
  j["edges"] = std::move(edges);
  j["mixing"] = matrix_json(truth.mixing);
  Json domains = Json::array();
  for (std::size_t k = 0; k < truth.scms.size(); ++k) {
    Json d;
    d["id"] = truth.domain_ids.at(k);
    d.update(scm_json(truth.scms[k], truth.entanglements.at(k)));
    domains.push_back(std::move(d));
  }
  j["domains"] = std::move(domains);
  return j;
}

SimulationTruth truth_from_json(const Json& j) {
  try {
    SimulationTruth t;
    t.mixing = matrix_from_json(j.at("mixing"));
    const int d0 = j.at("latent_dim").get<int>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    const CausalGraph graph(d0, edges);
    for (const auto& d : j.at("domains")) {
      std::vector<SourceDistribution> dists;
      for (const auto& s : d.at("distributions")) dists.push_back(parse_source_distribution(s.get<std::string>()));
      t.domain_ids.push_back(d.at("id").get<std::string>());
      t.scms.emplace_back(graph, matrix_from_json(d.at("weights")), vector_from_json(d.at("variances")),
                          std::move(dists));
      if (d.at("entanglement").is_null())
        t.entanglements.emplace_back(std::nullopt);
      else
        t.entanglements.emplace_back(matrix_from_json(d.at("entanglement")));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw input_error(kModule, std::string("ground-truth JSON: ") + e.what());
  }
}

Json to_json(const IcaResult& r) {
  Json j;
  j["unmixing"] = matrix_json(r.unmixing);
  j["whitener"] = matrix_json(r.whitener);
  j["rotation"] = matrix_json(r.rotation);
  j["mean"] = vector_json(r.mean.transpose());
  j["nongaussianity"] = vector_json(r.nongaussianity);
  Json c;
  c["converged"] = r.convergence.converged;
  c["iterations"] = r.convergence.iterations;
  c["component_iterations"] = list(r.convergence.component_iterations);
  c["final_deltas"] = numbers(r.convergence.final_deltas);
  c["best_restart"] = r.convergence.best_restart;
  c["objective"] = number(r.convergence.objective);
  j["convergence"] = std::move(c);
  return j;
}

Json to_json(const HcaSolution& s) {
  Json j;
  j["mic"] = number(s.mic);
  j["per_domain_alpha"] = numbers(s.per_domain_alpha);
  j["unmixing"] = matrix_json(s.h_hat);
  Json bs = Json::array();
  for (const auto& b : s.b_hats) bs.push_back(matrix_json(b));
  j["b_matrices"] = std::move(bs);
  Json perms = Json::array();
  for (const auto& p : s.permutations) perms.push_back(list(p));
  j["permutations"] = std::move(perms);
  j["rank1_errors"] = numbers(s.rank1_errors);
  j["unmixing_errors"] = numbers(s.unmixing_errors);
  Json search;
  search["tuples_total"] = s.tuples_total_capped;
  search["tuples_evaluated"] = s.tuples_evaluated;
  search["degenerate_branches"] = s.degenerate_branches;
  search["exhaustive"] = s.exhaustive;
  j["search"] = std::move(search);
  return j;
}

Json to_json(const RecoveredScm& r) {
  Json a = Json::array();
  for (const auto& d : r.domains) {
    Json j;
    j["weights"] = matrix_json(d.weights);
    j["variances"] = vector_json(d.variances);
    j["noise_scale"] = vector_json(d.noise_scale);
    a.push_back(std::move(j));
  }
  return a;
}

Json to_json(const AlignmentReport& r) {
  Json j;
  j["benchmarks"] = list(r.benchmarks);
  Json factors = Json::array();
  for (std::size_t i = 0; i < r.factors.size(); ++i) {
    const auto& f = r.factors[i];
    Json x;
    x["factor"] = "z" + std::to_string(i + 1);
    x["benchmark"] = f.benchmark_name.empty() ? Json(f.benchmark) : Json(f.benchmark_name);
    x["predecessor_coefficients"] = vector_json(f.predecessor_coefficients);
    x["benchmark_coefficient"] = number(f.benchmark_coefficient);
    x["intercept"] = number(f.intercept);
    x["r_squared"] = number(f.r_squared);
    factors.push_back(std::move(x));
  }
  j["factors"] = std::move(factors);
  j["r_squared"] = matrix_json(r.r_squared);
  j["adjusted_unmixing"] = r.adjusted_unmixing ? matrix_json(*r.adjusted_unmixing) : Json(nullptr);
  return j;
}

Json to_json(const ScalingLawFit& f) {
  Json j;
  j["L"] = number(f.L);
  j["k"] = number(f.k);
  j["log_c0"] = number(f.log_c0);
  j["c0"] = number(f.c0);
  j["b"] = number(f.b);
  j["tau"] = number(f.tau);
  j["tau_fixed"] = f.tau_fixed;
  j["rss"] = number(f.rss);
  j["residual_rmse"] = number(f.residual_rmse);
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["best_start"] = f.best_start;
  j["starts"] = f.starts;
  return j;
}

Json to_json(const AteReport& a) {
  Json j;
  j["backdoor"] = number(a.backdoor);
  j["naive"] = number(a.naive);
  j["stratified"] = number(a.stratified);
  j["strata"] = a.strata;
  j["strata_used"] = a.strata_used;
  j["warning"] = a.warning;
  return j;
}

Json to_json(const CompletionExperimentReport& r) {
  Json j;
  j["global"] = {{"mean", number(r.global.mean)}, {"std", number(r.global.std)}};
  j["local"] = {{"mean", number(r.local.mean)}, {"std", number(r.local.std)}};
  j["local_wins"] = r.local_wins;
  j["repeats"] = r.local_rmse.size();
  j["global_rmse"] = numbers(r.global_rmse);
  j["local_rmse"] = numbers(r.local_rmse);
  j["global_lambda"] = numbers(r.global_lambda);
  j["local_lambda"] = numbers(r.local_lambda);
  j["lambda_grid"] = {{"global", numbers(r.global_grid)}, {"local", numbers(r.local_grid)}};
  return j;
}

std::string sanitize_id(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '_');
  return out;
}

std::vector<std::pair<std::string, std::string>> bundle_files(const DomainCollection& collection,
                                                            const std::vector<std::vector<std::string>>& model_names,
                                                            const Json& extra) {
  collection.validate();
  const bool with_names = !model_names.empty();
  if (with_names && model_names.size() != collection.domains.size())
    throw input_error(kModule, "one model-name list per domain required");
  std::vector<std::pair<std::string, std::string>> files;
  Json manifest;
  manifest["format"] = "capcrl-bundle/1";
  manifest["benchmarks"] = list(collection.benchmarks);
  Json domains = Json::array();
  for (std::size_t k = 0; k < collection.domains.size(); ++k) {
    const auto& d = collection.domains[k];
    const std::string file = sanitize_id(d.id) + ".csv";
    std::vector<std::string> header;
    if (with_names) header.push_back("model");
    header.insert(header.end(), collection.benchmarks.begin(), collection.benchmarks.end());
    std::string text = csv_line(header);
    for (Index r = 0; r < d.observations.rows(); ++r) {
      std::vector<std::string> cells;
      if (with_names) cells.push_back(model_names[k].at(static_cast<std::size_t>(r)));
      for (Index c = 0; c < d.observations.cols(); ++c) cells.push_back(format_number(d.observations(r, c)));
      text += csv_line(cells);
    }
    files.emplace_back(file, std::move(text));
    domains.push_back({{"id", d.id}, {"file", file}, {"rows", d.observations.rows()}});
  }
  manifest["domains"] = std::move(domains);
  for (const auto& [key, value] : extra.items()) manifest[key] = value;
  files.emplace_back("manifest.json", dump_json(manifest));
  return files;
}

void write_bundle(const std::filesystem::path& dir, const DomainCollection& collection,
                  const std::vector<std::vector<std::string>>& model_names, const Json& extra) {
  const auto files = bundle_files(collection, model_names, extra);
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : files) write_text_file(dir / name, text);
}

Json read_json_file(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw input_error(kModule, path.string() + ": " + e.what());
  }
}

Json load_manifest(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw input_error(kModule, "data directory not found: " + dir.string());
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw input_error(kModule, "no manifest.json in " + dir.string());
  return read_json_file(path);
}

DomainCollection load_bundle(const std::filesystem::path& dir) {
  const Json manifest = load_manifest(dir);
  DomainCollection out;
  try {
    out.benchmarks = manifest.at("benchmarks").get<std::vector<std::string>>();
    for (const auto& d : manifest.at("domains")) {
      const CsvTable table = read_csv(dir / d.at("file").get<std::string>());
      std::vector<std::size_t> cols;
      for (const auto& b : out.benchmarks) {
        const auto c = table.column(b);
        if (!c) throw input_error(kModule, d.at("file").get<std::string>() + ": missing column '" + b + "'");
        cols.push_back(*c);
      }
      DomainDataset ds;
      ds.id = d.at("id").get<std::string>();
      ds.observations.resize(static_cast<Index>(table.rows.size()), static_cast<Index>(cols.size()));
      for (std::size_t r = 0; r < table.rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) {
          const auto v = parse_number(table.rows[r][cols[c]]);
          if (!v) throw input_error(kModule, ds.id + ": non-numeric cell at row " + std::to_string(r + 1));
          ds.observations(static_cast<Index>(r), static_cast<Index>(c)) = *v;
        }
      out.domains.push_back(std::move(ds));
    }
  } catch (const nlohmann::json::exception& e) {
    throw input_error(kModule, std::string("manifest: ") + e.what());
  }
  out.validate();
  return out;
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace capcrl
