#include "capcrl/commands.hpp"

#include "capcrl/completion.hpp"
#include "capcrl/csv.hpp"
#include "capcrl/ingest.hpp"
#include "capcrl/subspace.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <map>
#include <ostream>
#include <set>

#ifndef CAPCRL_VERSION
#define CAPCRL_VERSION "0.0.0"
#endif
#ifndef CAPCRL_DEFAULT_RULES
#define CAPCRL_DEFAULT_RULES "data/base_models.json"
#endif

namespace capcrl {

namespace {
constexpr const char* kModule = "cli";
namespace fs = std::filesystem;

// ---- configuration -------------------------------------------------------

Json ica_defaults() {
  return {{"nonlinearity", "logcosh"}, {"max_iter", 500}, {"tol", 1e-7}, {"restarts", 5}};
}

Json hca_defaults() { return {{"budget", 1000000}, {"gram_schmidt", false}, {"threads", 0}}; }

const std::map<std::string, Json>& defaults_table() {
  static const std::map<std::string, Json> table = [] {
    std::map<std::string, Json> t;
    t["simulate"] = {{"domains", 4},
                     {"latent_dim", 3},
                     {"observed_dim", 6},
                     {"samples", 5000},
                     {"edges", nullptr},
                     {"alpha", 0.0},
                     {"weight_range", {0.5, 1.5}},
                     {"variance_range", {0.5, 2.0}}};
    t["ingest"] = {{"input", nullptr},
                   {"rules", CAPCRL_DEFAULT_RULES},
                   {"min_size", 1},
                   {"scale", "auto"},
                   {"schema",
                    {{"name_column", "fullname"},
                     {"base_column", "Base Model"},
                     {"architecture_column", "Architecture"},
                     {"params_column", "#Params (B)"},
                     {"date_column", "Upload To Hub Date"},
                     {"moe_column", "MoE"},
                     {"type_column", "Type"},
                     {"benchmarks", {"IFEval", "BBH", "MATH Lvl 5", "GPQA", "MUSR", "MMLU-PRO"}}}}};
    t["ica"] = {{"data", nullptr}, {"latent_dim", 3}, {"ica", ica_defaults()}};
    t["hca"] = {{"unmixing", nullptr}, {"hca", hca_defaults()}};
    t["pipeline"] = {{"data", nullptr},          {"latent_dim", 3},
                     {"domains", nullptr},       {"min_size", 1},
                     {"unmixing_source", "ica"}, {"strict", false},
                     {"ica", ica_defaults()},    {"hca", hca_defaults()},
                     {"dot_threshold", 0.0}};
    t["pca"] = {{"data", nullptr}, {"rank", 3}, {"scaling", "raw"}};
    t["complete"] = {{"data", nullptr},   {"target", nullptr},     {"pattern", "random"},
                     {"p", 0.8},          {"observed_cols", Json::array()}, {"solver", "nnr"},
                     {"rank", 3},         {"repeats", 100},        {"grid_size", 12}};
    t["scaling"] = {{"input", nullptr},         {"leaderboard", nullptr}, {"rules", CAPCRL_DEFAULT_RULES},
                    {"outcomes", Json::array()}, {"strata", 5},          {"sweep_points", 50}};
    return t;
  }();
  return table;
}

void overlay(Json& base, const Json& patch, const std::string& where) {
  if (!patch.is_object()) throw input_error(kModule, where + ": configuration must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    if (!base.contains(key)) throw input_error(kModule, where + ": unknown configuration key '" + key + "'");
    Json& slot = base[key];
    if (slot.is_object() && value.is_object())
      overlay(slot, value, where + "." + key);
    else
      slot = value;
  }
}

template <class T>
T get(const Json& c, const std::string& key) {
  try {
    return c.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw input_error(kModule, "configuration key '" + key + "' missing or of the wrong type");
  }
}

fs::path required_path(const Json& c, const std::string& key) {
  if (!c.contains(key) || c.at(key).is_null())
    throw input_error(kModule, "'" + key + "' is required");
  return fs::path(get<std::string>(c, key));
}

IcaConfig ica_config(const Json& c, std::uint64_t seed) {
  IcaConfig cfg;
  const auto nl = get<std::string>(c, "nonlinearity");
  if (nl == "logcosh")
    cfg.nonlinearity = Nonlinearity::LogCosh;
  else if (nl == "cube")
    cfg.nonlinearity = Nonlinearity::Cube;
  else
    throw input_error(kModule, "ica.nonlinearity must be 'logcosh' or 'cube'");
  cfg.max_iter = get<int>(c, "max_iter");
  cfg.tol = get<double>(c, "tol");
  cfg.restarts = get<int>(c, "restarts");
  if (cfg.max_iter < 1 || cfg.restarts < 1 || !(cfg.tol > 0)) throw input_error(kModule, "invalid ICA settings");
  cfg.seed = seed;
  return cfg;
}

HcaConfig hca_config(const Json& c, std::uint64_t seed) {
  HcaConfig cfg;
  const auto budget = get<double>(c, "budget");
  if (!(budget >= 1)) throw input_error(kModule, "hca.budget must be >= 1");
  cfg.budget = static_cast<std::uint64_t>(budget);
  cfg.orthonormalize_h = get<bool>(c, "gram_schmidt");
  cfg.threads = get<int>(c, "threads");
  cfg.seed = seed;
  return cfg;
}

// ---- helpers -------------------------------------------------------------

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Files produced by a command, written only after it succeeds.
struct Outputs {
  std::vector<std::pair<fs::path, std::string>> files;
  void add(fs::path rel, std::string contents) { files.emplace_back(std::move(rel), std::move(contents)); }
};

struct Report {
  Json result = Json::object();
  std::vector<std::string> warnings;
};

std::vector<std::string> latent_labels(Index d0) {
  std::vector<std::string> v;
  for (Index i = 0; i < d0; ++i) v.push_back("z" + std::to_string(i + 1));
  return v;
}

std::vector<MatrixXd> run_ica(const DomainCollection& c, Index d0, const IcaConfig& base, std::vector<IcaResult>& full) {
  std::vector<MatrixXd> m;
  for (std::size_t k = 0; k < c.domains.size(); ++k) {
    IcaConfig cfg = base;
    cfg.seed = derive_seed(base.seed, {k});
    full.push_back(fast_ica(c.domains[k].observations, d0, cfg));
    m.push_back(full.back().unmixing);
  }
  return m;
}

std::optional<SimulationTruth> load_truth(const fs::path& data_dir) {
  const fs::path p = data_dir / "truth.json";
  if (!fs::exists(p)) return std::nullopt;
  return truth_from_json(read_json_file(p));
}

const LinearScm* truth_scm(const SimulationTruth& t, const std::string& id) {
  for (std::size_t k = 0; k < t.domain_ids.size(); ++k)
    if (t.domain_ids[k] == id) return &t.scms[k];
  return nullptr;
}

/// Amari index of an estimated unmixing against the exact B H; the
/// right inverse of B H is G B^{-1}.
double amari_to_truth(const MatrixXd& m, const SimulationTruth& t, const LinearScm& scm) {
  return amari_distance(m, t.mixing * scm.b_matrix().inverse());
}

// ---- simulate ------------------------------------------------------------

Report simulate(const Json& c, std::uint64_t seed, Outputs& out) {
  const int k_domains = get<int>(c, "domains");
  const int d0 = get<int>(c, "latent_dim");
  const int n = get<int>(c, "observed_dim");
  const Index samples = get<Index>(c, "samples");
  const double alpha = get<double>(c, "alpha");
  const auto wr = get<std::vector<double>>(c, "weight_range");
  const auto vr = get<std::vector<double>>(c, "variance_range");
  if (k_domains < 1 || d0 < 1 || n < d0 || samples < 2)
    throw input_error(kModule, "simulate needs domains >= 1, 1 <= latent_dim <= observed_dim, samples >= 2");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw input_error(kModule, "alpha must lie in [0, 1)");
  if (wr.size() != 2 || !(0 < wr[0] && wr[0] <= wr[1])) throw input_error(kModule, "weight_range must be [lo, hi] > 0");
  if (vr.size() != 2 || !(0 < vr[0] && vr[0] <= vr[1])) throw input_error(kModule, "variance_range must be [lo, hi] > 0");
  std::vector<Edge> edges;
  if (c.at("edges").is_null()) {
    edges = CausalGraph::complete(d0).edges();
  } else {
    for (const auto& e : c.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw input_error(kModule, "edges must be [from, to] pairs");
      edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    }
  }
  const CausalGraph graph(d0, edges);
  const ScmDrawSpec spec{wr[0], wr[1], vr[0], vr[1]};

  Rng mix_rng(derive_seed(seed, {1}));
  SimulationTruth truth;
  truth.mixing = random_mixing(n, d0, mix_rng);
  const MixingMatrix g(truth.mixing);
  DomainCollection coll;
  for (int i = 0; i < n; ++i) coll.benchmarks.push_back("b" + std::to_string(i + 1));
  for (int k = 0; k < k_domains; ++k) {
    Rng rng(derive_seed(seed, {2, static_cast<std::uint64_t>(k)}));
    LinearScm scm = random_scm(graph, distinct_sources(d0, k), spec, rng);
    const std::uint64_t sample_seed = derive_seed(seed, {3, static_cast<std::uint64_t>(k)});
    ScmSample s;
    std::optional<MatrixXd> u;
    if (alpha > 0.0) {
      u = random_entanglement(d0, alpha, rng);
      s = sample_inexact_scm(InexactScm(scm, *u), samples, sample_seed);
    } else {
      s = sample_scm(scm, samples, sample_seed);
    }
    const std::string id = "domain_" + std::to_string(k + 1);
    coll.domains.push_back({id, mix_observations(g, s.latents), std::nullopt});
    truth.domain_ids.push_back(id);
    truth.scms.push_back(std::move(scm));
    truth.entanglements.push_back(std::move(u));
  }
  coll.validate();

  Report rep;
  for (auto& [name, text] : bundle_files(coll, {}, {{"generator", "simulate"}, {"truth", "truth.json"}}))
    out.add(name, std::move(text));
  out.add("truth.json", dump_json(truth_json(truth)));
  rep.result["domains"] = k_domains;
  rep.result["shape"] = {samples, n};
  rep.result["inexact"] = alpha > 0.0;
  Json alphas = Json::array();
  for (const auto& u : truth.entanglements) alphas.push_back(u ? Json(mic_of_entanglement(*u)) : Json(0.0));
  rep.result["alpha"] = std::move(alphas);
  return rep;
}

// ---- ingest --------------------------------------------------------------

SchemaConfig schema_from(const Json& c, const std::string& scale) {
  SchemaConfig s;
  s.name_column = get<std::string>(c, "name_column");
  s.base_column = get<std::string>(c, "base_column");
  s.architecture_column = get<std::string>(c, "architecture_column");
  s.params_column = get<std::string>(c, "params_column");
  s.date_column = get<std::string>(c, "date_column");
  s.moe_column = get<std::string>(c, "moe_column");
  s.type_column = get<std::string>(c, "type_column");
  s.benchmarks = get<std::vector<std::string>>(c, "benchmarks");
  if (scale == "auto")
    s.scale = ScoreScale::Auto;
  else if (scale == "unit")
    s.scale = ScoreScale::Unit;
  else if (scale == "percent")
    s.scale = ScoreScale::Percent;
  else
    throw input_error(kModule, "scale must be 'auto', 'unit' or 'percent'");
  return s;
}

Report ingest(const Json& c, std::uint64_t, Outputs& out) {
  const fs::path input = required_path(c, "input");
  const KnowledgeBase kb = KnowledgeBase::load(required_path(c, "rules"));
  const auto min_size = get<int>(c, "min_size");
  if (min_size < 1) throw input_error(kModule, "min_size must be >= 1");
  const Leaderboard board = parse_leaderboard(input, schema_from(c.at("schema"), get<std::string>(c, "scale")));

  std::vector<std::optional<Attribution>> attributions;
  std::map<std::string, std::size_t> tiers;
  std::size_t compute_known = 0;
  std::string table = csv_line({"model", "base_model", "tier", "parameter_count_b", "pretraining_flops"});
  for (const auto& row : board.rows) {
    attributions.push_back(attribute_base_model(row, kb));
    const auto& a = attributions.back();
    const auto flops = pretraining_compute(row, a, kb);
    if (a) ++tiers[std::string(to_string(a->tier))];
    if (flops) ++compute_known;
    table += csv_line({row.model_name, a ? a->base_model_id : "", a ? std::string(to_string(a->tier)) : "",
                       row.parameter_count ? format_number(*row.parameter_count) : "",
                       flops ? format_number(*flops) : ""});
  }
  const DomainGrouping grouping = group_domains(board, attributions, static_cast<std::size_t>(min_size));
  if (grouping.collection.domains.empty()) throw input_error(kModule, "no domain reaches min_size");

  Report rep;
  Json colmap = Json::object();
  for (const auto& [role, col] : board.column_map) colmap[role] = col;
  rep.result["column_map"] = std::move(colmap);
  rep.result["rows"] = board.rows.size();
  rep.result["dropped"] = board.dropped;
  rep.result["rescaled"] = board.rescaled;
  rep.result["unattributed"] = grouping.unattributed;
  Json tier_json = Json::object();
  for (const auto& [t, n] : tiers) tier_json[t] = n;
  rep.result["tiers"] = std::move(tier_json);
  rep.result["compute_available"] = compute_known;
  rep.result["compute_unavailable"] = board.rows.size() - compute_known;
  Json doms = Json::array();
  for (const auto& d : grouping.collection.domains) doms.push_back({{"id", d.id}, {"rows", d.observations.rows()}});
  rep.result["domains"] = std::move(doms);
  Json excl = Json::array();
  for (const auto& [id, n] : grouping.excluded) excl.push_back({{"id", id}, {"rows", n}});
  rep.result["excluded"] = std::move(excl);

  for (auto& [name, text] : bundle_files(grouping.collection, grouping.model_names, {{"generator", "ingest"}}))
    out.add(name, std::move(text));
  out.add("attributions.csv", std::move(table));
  return rep;
}

// ---- ica / hca -----------------------------------------------------------

Report ica(const Json& c, std::uint64_t seed, Outputs&) {
  const fs::path data = required_path(c, "data");
  const DomainCollection coll = load_bundle(data);
  const auto d0 = get<Index>(c, "latent_dim");
  if (d0 < 1 || d0 > coll.observed_dim()) throw input_error(kModule, "latent_dim must lie in [1, benchmarks]");
  std::vector<IcaResult> results;
  run_ica(coll, d0, ica_config(c.at("ica"), seed), results);
  const auto truth = load_truth(data);
  Report rep;
  Json doms = Json::array();
  for (std::size_t k = 0; k < results.size(); ++k) {
    Json d;
    d["id"] = coll.domains[k].id;
    d.update(to_json(results[k]));
    if (truth)
      if (const LinearScm* scm = truth_scm(*truth, coll.domains[k].id))
        d["amari_to_truth"] = amari_to_truth(results[k].unmixing, *truth, *scm);
    if (!results[k].convergence.converged) rep.warnings.push_back(coll.domains[k].id + ": ICA did not converge");
    doms.push_back(std::move(d));
  }
  rep.result["benchmarks"] = coll.benchmarks;
  rep.result["domains"] = std::move(doms);
  return rep;
}

Json solution_json(const HcaSolution& sol, const RecoveredScm& rec, const std::vector<std::string>& ids) {
  Json j = to_json(sol);
  Json graphs = to_json(rec);
  for (std::size_t k = 0; k < ids.size(); ++k) graphs[k]["id"] = ids[k];
  j["graphs"] = std::move(graphs);
  return j;
}

void add_dot_files(Outputs& out, const RecoveredScm& rec, const std::vector<std::string>& ids, double threshold) {
  const auto labels = latent_labels(rec.domains.empty() ? 0 : rec.domains.front().weights.rows());
  for (std::size_t k = 0; k < ids.size(); ++k)
    out.add(fs::path("graphs") / (sanitize_id(ids[k]) + ".dot"),
            to_dot(rec.domains[k], sanitize_id(ids[k]), labels, threshold));
}

Report hca(const Json& c, std::uint64_t seed, Outputs& out) {
  const Json ica_report = read_json_file(required_path(c, "unmixing"));
  std::vector<MatrixXd> m;
  std::vector<std::string> ids;
  try {
    const Json& doms = ica_report.contains("result") ? ica_report.at("result").at("domains") : ica_report.at("domains");
    for (const auto& d : doms) {
      ids.push_back(d.at("id").get<std::string>());
      m.push_back(matrix_from_json(d.at("unmixing")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw input_error(kModule, std::string("unmixing file: ") + e.what());
  }
  if (m.empty()) throw input_error(kModule, "unmixing file lists no domains");
  const HcaSolution sol = hca_search(m, hca_config(c.at("hca"), seed));
  const RecoveredScm rec = recover_graph_weights(sol.b_hats);
  Report rep;
  rep.result = solution_json(sol, rec, ids);
  add_dot_files(out, rec, ids, 0.0);
  return rep;
}

// ---- pipeline ------------------------------------------------------------

DomainCollection select_domains(DomainCollection coll, const Json& c) {
  const auto min_size = get<Index>(c, "min_size");
  std::vector<DomainDataset> kept;
  if (!c.at("domains").is_null()) {
    for (const auto& id : get<std::vector<std::string>>(c, "domains")) kept.push_back(coll.find(id));
  } else {
    for (auto& d : coll.domains)
      if (d.observations.rows() >= min_size) kept.push_back(std::move(d));
  }
  coll.domains = std::move(kept);
  if (coll.domains.empty()) throw input_error(kModule, "no domains selected");
  return coll;
}

Report pipeline(const Json& c, std::uint64_t seed, Outputs& out) {
  const fs::path data = required_path(c, "data");
  const DomainCollection coll = select_domains(load_bundle(data), c);
  const auto d0 = get<Index>(c, "latent_dim");
  const auto source = get<std::string>(c, "unmixing_source");
  const bool strict = get<bool>(c, "strict");
  const double dot_threshold = get<double>(c, "dot_threshold");
  if (d0 < 1 || d0 > coll.observed_dim()) throw input_error(kModule, "latent_dim must lie in [1, benchmarks]");
  if (source != "ica" && source != "truth") throw input_error(kModule, "unmixing_source must be 'ica' or 'truth'");
  const IcaConfig icfg = ica_config(c.at("ica"), derive_seed(seed, {1}));
  const HcaConfig hcfg = hca_config(c.at("hca"), derive_seed(seed, {2}));
  const auto truth = load_truth(data);
  if (source == "truth" && !truth) throw input_error(kModule, "unmixing_source 'truth' needs truth.json in the data directory");

  Report rep;
  const Index k_domains = static_cast<Index>(coll.domains.size());
  if (strict && k_domains < d0)
    rep.warnings.push_back("only " + std::to_string(k_domains) + " domains for latent_dim " + std::to_string(d0) +
                           ": the identifiability guarantee assumes at least as many domains as latent factors");

  std::vector<std::string> ids;
  for (const auto& d : coll.domains) ids.push_back(d.id);
  std::vector<MatrixXd> m;
  std::vector<IcaResult> ica_results;
  if (source == "ica") {
    m = run_ica(coll, d0, icfg, ica_results);
    for (std::size_t k = 0; k < ica_results.size(); ++k)
      if (!ica_results[k].convergence.converged) rep.warnings.push_back(ids[k] + ": ICA did not converge");
  } else {
    // Exact B_k H with shuffled rows and random signs, standing in for a perfect ICA.
    const MatrixXd h = MixingMatrix(truth->mixing).unmixing();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const LinearScm* scm = truth_scm(*truth, ids[k]);
      if (!scm) throw input_error(kModule, "truth.json has no domain '" + ids[k] + "'");
      if (scm->node_count() != d0) throw input_error(kModule, "latent_dim differs from the ground truth");
      const MatrixXd exact = scm->b_matrix() * h;
      Rng rng(derive_seed(seed, {3, k}));
      const auto perm = rng.permutation(static_cast<int>(d0));
      MatrixXd mk(d0, exact.cols());
      for (Index i = 0; i < d0; ++i) mk.row(i) = (rng.bernoulli(0.5) ? -1.0 : 1.0) * exact.row(perm[i]);
      m.push_back(std::move(mk));
    }
  }

  const HcaSolution sol = hca_search(m, hcfg);
  const RecoveredScm rec = recover_graph_weights(sol.b_hats);
  const MatrixXd x = coll.stacked();
  const MatrixXd z = x * sol.h_hat.transpose();
  const AlignmentResult aligned = align_factors(z, x, coll.benchmarks, sol.h_hat);

  rep.result["domains"] = ids;
  rep.result["benchmarks"] = coll.benchmarks;
  rep.result["solution"] = solution_json(sol, rec, ids);
  rep.result["alignment"] = to_json(aligned.report);
  Json per_domain_r2 = Json::object();
  {
    Index row = 0;
    for (const auto& d : coll.domains) {
      const Index rows = d.observations.rows();
      per_domain_r2[d.id] = vector_json(out_of_sample_r2(aligned.report, z.middleRows(row, rows), d.observations));
      row += rows;
    }
  }
  rep.result["alignment_r2_by_domain"] = std::move(per_domain_r2);
  if (!ica_results.empty()) {
    Json conv = Json::array();
    for (std::size_t k = 0; k < ica_results.size(); ++k) {
      Json e = {{"id", ids[k]},
                {"converged", ica_results[k].convergence.converged},
                {"iterations", ica_results[k].convergence.iterations}};
      if (truth)
        if (const LinearScm* scm = truth_scm(*truth, ids[k]))
          e["amari_to_truth"] = amari_to_truth(ica_results[k].unmixing, *truth, *scm);
      conv.push_back(std::move(e));
    }
    rep.result["ica"] = std::move(conv);
  }
  if (truth && truth->mixing.cols() == d0) {
    const MatrixXd hg = sol.h_hat * truth->mixing;
    double upper = 0.0;
    for (Index i = 0; i < d0; ++i)
      for (Index j = i + 1; j < d0; ++j) upper = std::max(upper, std::abs(hg(i, j)));
    rep.result["truth_check"] = {{"h_times_g", matrix_json(hg)}, {"upper_relative", upper / hg.cwiseAbs().maxCoeff()}};
  }

  out.add("r2.csv", r2_table_csv(aligned.report));
  add_dot_files(out, rec, ids, dot_threshold);

  std::string s;
  s += "capcrl pipeline summary\n";
  s += "domains: " + std::to_string(ids.size()) + " (";
  for (std::size_t k = 0; k < ids.size(); ++k) s += (k ? ", " : "") + ids[k];
  s += ")\n";
  s += "latent factors: " + std::to_string(d0) + ", benchmarks: " + std::to_string(coll.observed_dim()) + "\n";
  s += "unmixing source: " + source + "\n";
  s += "mic = " + fmt("%.6e", sol.mic) + "\n";
  for (std::size_t k = 0; k < ids.size(); ++k)
    s += "  alpha[" + ids[k] + "] = " + fmt("%.6e", sol.per_domain_alpha[k]) + "\n";
  s += "search: " + std::to_string(sol.tuples_evaluated) + " of " + std::to_string(sol.tuples_total_capped) +
       " permutation tuples (" + (sol.exhaustive ? "exhaustive" : "subsampled") + ")\n";
  for (std::size_t i = 0; i < aligned.report.factors.size(); ++i) {
    const auto& f = aligned.report.factors[i];
    s += "z" + std::to_string(i + 1) + ": best benchmark " + f.benchmark_name + " (R^2 = " + fmt("%.4f", f.r_squared) +
         ")\n";
  }
  for (std::size_t k = 0; k < ids.size(); ++k) {
    s += "graph " + ids[k] + ":";
    const auto& w = rec.domains[k];
    for (Index i = 0; i < w.weights.rows(); ++i)
      for (Index j = 0; j < i; ++j)
        if (std::abs(w.weights(i, j)) > dot_threshold)
          s += " z" + std::to_string(j + 1) + "->z" + std::to_string(i + 1) + "=" + fmt("%.4g", w.weights(i, j));
    s += "\n";
  }
  for (const auto& w : rep.warnings) s += "warning: " + w + "\n";
  out.add("summary.txt", std::move(s));
  return rep;
}

// ---- pca / complete / scaling -------------------------------------------

Report pca_cmd(const Json& c, std::uint64_t, Outputs& out) {
  const DomainCollection coll = load_bundle(required_path(c, "data"));
  const auto rank = get<Index>(c, "rank");
  const auto scaling_name = get<std::string>(c, "scaling");
  PcaScaling scaling;
  if (scaling_name == "raw")
    scaling = PcaScaling::Raw;
  else if (scaling_name == "zscore")
    scaling = PcaScaling::ZScore;
  else
    throw input_error(kModule, "scaling must be 'raw' or 'zscore'");
  if (rank < 1 || rank > coll.observed_dim()) throw input_error(kModule, "rank must lie in [1, benchmarks]");
  const MatrixXd dist = pairwise_distance_matrix(coll, rank, scaling);
  std::vector<std::string> labels;
  Report rep;
  Json evr = Json::object();
  for (const auto& d : coll.domains) {
    labels.push_back(d.id);
    evr[d.id] = vector_json(pca(d.observations, rank, scaling).explained_variance_ratios);
  }
  rep.result["labels"] = labels;
  rep.result["distances"] = matrix_json(dist);
  rep.result["explained_variance_ratios"] = std::move(evr);
  out.add("distances.csv", distance_matrix_csv(labels, dist));
  return rep;
}

Report complete_cmd(const Json& c, std::uint64_t seed, Outputs& out) {
  const DomainCollection coll = load_bundle(required_path(c, "data"));
  CompletionExperimentConfig cfg;
  const auto pattern = get<std::string>(c, "pattern");
  const auto solver = get<std::string>(c, "solver");
  if (pattern == "random")
    cfg.pattern = MaskPattern::Random;
  else if (pattern == "block")
    cfg.pattern = MaskPattern::Block;
  else
    throw input_error(kModule, "pattern must be 'random' or 'block'");
  if (solver == "nnr")
    cfg.solver = CompletionSolver::Nnr;
  else if (solver == "block")
    cfg.solver = CompletionSolver::Block;
  else
    throw input_error(kModule, "solver must be 'nnr' or 'block'");
  cfg.p = get<double>(c, "p");
  cfg.observed_cols = get<std::vector<int>>(c, "observed_cols");
  cfg.rank = get<Index>(c, "rank");
  cfg.repeats = get<int>(c, "repeats");
  cfg.lambda.grid_size = get<int>(c, "grid_size");
  cfg.seed = seed;
  cfg.lambda.seed = derive_seed(seed, {1});
  if (!(cfg.p >= 0.0 && cfg.p <= 1.0) || cfg.repeats < 1 || cfg.lambda.grid_size < 1)
    throw input_error(kModule, "complete needs p in [0, 1], repeats >= 1, grid_size >= 1");
  const std::string target = c.at("target").is_null() ? coll.domains.front().id : get<std::string>(c, "target");
  const CompletionExperimentReport r = completion_experiment(coll, target, cfg);
  Report rep;
  rep.result["target"] = target;
  rep.result["pattern"] = pattern;
  rep.result["p"] = cfg.p;
  rep.result["solver"] = solver;
  rep.result.update(to_json(r));
  std::string table = csv_line({"repeat", "global_rmse", "local_rmse"});
  for (std::size_t i = 0; i < r.local_rmse.size(); ++i)
    table += csv_line({std::to_string(i), format_number(r.global_rmse[i]), format_number(r.local_rmse[i])});
  out.add("completion_rmse.csv", std::move(table));
  std::string mask = csv_line(coll.benchmarks);
  for (Index i = 0; i < r.first_mask.rows(); ++i) {
    std::vector<std::string> cells;
    for (Index j = 0; j < r.first_mask.cols(); ++j) cells.push_back(r.first_mask(i, j) ? "1" : "0");
    mask += csv_line(cells);
  }
  out.add("mask_repeat0.csv", std::move(mask));
  return rep;
}

struct ScalingData {
  VectorXd compute;
  VectorXd treatment;
  std::vector<std::string> outcomes;
  std::vector<VectorXd> y;
  std::size_t excluded = 0;
};

ScalingData scaling_from_table(const fs::path& path, std::vector<std::string> outcomes) {
  const CsvTable t = read_csv(path);
  const auto cc = t.column("compute");
  const auto tc = t.column("treatment");
  if (!cc || !tc) throw input_error(kModule, "scaling input needs 'compute' and 'treatment' columns");
  if (outcomes.empty())
    for (const auto& h : t.header)
      if (h != "compute" && h != "treatment") outcomes.push_back(h);
  std::vector<std::size_t> oc;
  for (const auto& o : outcomes) {
    const auto col = t.column(o);
    if (!col) throw input_error(kModule, "missing outcome column '" + o + "'");
    oc.push_back(*col);
  }
  ScalingData d;
  d.outcomes = outcomes;
  std::vector<double> cv, tv;
  std::vector<std::vector<double>> yv(oc.size());
  for (const auto& row : t.rows) {
    const auto cval = parse_number(row[*cc]);
    const auto tval = parse_number(row[*tc]);
    bool ok = cval && tval;
    std::vector<double> ys;
    for (std::size_t j = 0; ok && j < oc.size(); ++j) {
      const auto v = parse_number(row[oc[j]]);
      if (!v) ok = false;
      else ys.push_back(*v);
    }
    if (!ok) {
      ++d.excluded;
      continue;
    }
    cv.push_back(*cval);
    tv.push_back(*tval);
    for (std::size_t j = 0; j < oc.size(); ++j) yv[j].push_back(ys[j]);
  }
  d.compute = Eigen::Map<VectorXd>(cv.data(), static_cast<Index>(cv.size()));
  d.treatment = Eigen::Map<VectorXd>(tv.data(), static_cast<Index>(tv.size()));
  for (auto& v : yv) d.y.push_back(Eigen::Map<VectorXd>(v.data(), static_cast<Index>(v.size())));
  return d;
}

ScalingData scaling_from_leaderboard(const fs::path& path, const KnowledgeBase& kb, std::vector<std::string> outcomes) {
  const Leaderboard board = parse_leaderboard(path);
  if (outcomes.empty()) outcomes = board.benchmarks;
  std::vector<std::size_t> oc;
  for (const auto& o : outcomes) {
    const auto it = std::find(board.benchmarks.begin(), board.benchmarks.end(), o);
    if (it == board.benchmarks.end()) throw input_error(kModule, "unknown benchmark '" + o + "'");
    oc.push_back(static_cast<std::size_t>(it - board.benchmarks.begin()));
  }
  ScalingData d;
  d.outcomes = outcomes;
  std::vector<double> cv, tv;
  std::vector<std::vector<double>> yv(oc.size());
  for (const auto& row : board.rows) {
    const auto flops = pretraining_compute(row, attribute_base_model(row, kb), kb);
    if (!flops || !row.fine_tuned) {
      ++d.excluded;
      continue;
    }
    cv.push_back(*flops);
    tv.push_back(*row.fine_tuned ? 1.0 : 0.0);
    for (std::size_t j = 0; j < oc.size(); ++j) yv[j].push_back(row.scores[oc[j]]);
  }
  d.compute = Eigen::Map<VectorXd>(cv.data(), static_cast<Index>(cv.size()));
  d.treatment = Eigen::Map<VectorXd>(tv.data(), static_cast<Index>(tv.size()));
  for (auto& v : yv) d.y.push_back(Eigen::Map<VectorXd>(v.data(), static_cast<Index>(v.size())));
  return d;
}

Report scaling_cmd(const Json& c, std::uint64_t seed, Outputs& out) {
  const bool has_table = !c.at("input").is_null();
  const bool has_board = !c.at("leaderboard").is_null();
  if (has_table == has_board) throw input_error(kModule, "give exactly one of 'input' or 'leaderboard'");
  const auto outcomes = get<std::vector<std::string>>(c, "outcomes");
  const int strata = get<int>(c, "strata");
  const int sweep_points = get<int>(c, "sweep_points");
  if (strata < 1 || sweep_points < 2) throw input_error(kModule, "strata >= 1 and sweep_points >= 2 required");
  const ScalingData d = has_table
                            ? scaling_from_table(required_path(c, "input"), outcomes)
                            : scaling_from_leaderboard(required_path(c, "leaderboard"),
                                                       KnowledgeBase::load(required_path(c, "rules")), outcomes);
  ScalingFitConfig fcfg;
  fcfg.seed = seed;
  Report rep;
  rep.result["points"] = d.compute.size();
  rep.result["excluded_rows"] = d.excluded;
  Json fits = Json::array();
  std::string sweep = csv_line({"outcome", "compute", "log10_compute", "treatment", "predicted"});
  const VectorXd logc = d.compute.size() ? VectorXd(d.compute.array().log()) : VectorXd();
  for (std::size_t j = 0; j < d.outcomes.size(); ++j) {
    const ScalingLawFit fit = sigmoid_fit(d.compute, d.treatment, d.y[j], fcfg);
    Json f;
    f["outcome"] = d.outcomes[j];
    f["fit"] = to_json(fit);
    const bool both_arms = d.treatment.maxCoeff() == 1.0 && d.treatment.minCoeff() == 0.0;
    if (both_arms)
      f["ate"] = to_json(ate_backdoor(d.y[j], d.treatment, logc, fit, strata));
    else
      f["ate"] = nullptr;
    fits.push_back(std::move(f));
    const double lo = logc.minCoeff(), hi = logc.maxCoeff();
    for (double t : {0.0, 1.0}) {
      if (fit.tau_fixed && t != d.treatment(0)) continue;
      for (int s = 0; s < sweep_points; ++s) {
        const double x = lo + (hi - lo) * s / (sweep_points - 1);
        sweep += csv_line({d.outcomes[j], format_number(std::exp(x)), format_number(x / std::log(10.0)),
                           format_number(t), format_number(fit.predict_log(x, t))});
      }
    }
  }
  if (!(d.treatment.size() && d.treatment.maxCoeff() == 1.0 && d.treatment.minCoeff() == 0.0))
    rep.warnings.push_back("single treatment arm: ATE not estimated");
  rep.result["fits"] = std::move(fits);
  rep.result["ignorability_warning"] = kIgnorabilityWarning;
  out.add("scaling_sweep.csv", std::move(sweep));
  return rep;
}

using CommandFn = std::function<Report(const Json&, std::uint64_t, Outputs&)>;

const std::map<std::string, std::pair<CommandFn, std::string>>& command_table() {
  static const std::map<std::string, std::pair<CommandFn, std::string>> table = {
      {"simulate", {simulate, "simulate.json"}}, {"ingest", {ingest, "ingest_report.json"}},
      {"ica", {ica, "ica.json"}},                {"hca", {hca, "hca.json"}},
      {"pipeline", {pipeline, "solution.json"}}, {"pca", {pca_cmd, "pca.json"}},
      {"complete", {complete_cmd, "completion.json"}}, {"scaling", {scaling_cmd, "scaling.json"}}};
  return table;
}
}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"simulate", "ingest", "ica", "hca",
                                                 "pipeline", "pca",    "complete", "scaling"};
  return names;
}

Json command_defaults(const std::string& command) {
  const auto& t = defaults_table();
  const auto it = t.find(command);
  if (it == t.end()) throw input_error(kModule, "unknown command '" + command + "'");
  return it->second;
}

Json resolve_config(const std::string& command, const Json& overrides) {
  Json c = command_defaults(command);
  overlay(c, overrides, command);
  return c;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Input: return 2;
    case ErrorKind::Numerical: return 3;
    case ErrorKind::NoSolution: return 4;
  }
  return 1;
}

Json report_payload(Json report) {
  report.erase("run");
  return report;
}

int run_command(const CommandRequest& request, std::ostream& log) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_utc = utc_now();
  try {
    const auto it = command_table().find(request.command);
    if (it == command_table().end()) throw input_error(kModule, "unknown command '" + request.command + "'");
    const Json config = resolve_config(request.command, request.config);
    const std::uint64_t seed = request.seed.value_or(0);
    Outputs outputs;
    const Report rep = it->second.first(config, seed, outputs);
    for (const auto& w : rep.warnings) log << "warning: " << w << "\n";

    Json report;
    report["command"] = request.command;
    report["version"] = CAPCRL_VERSION;
    report["modules"] = {{"capcrl", CAPCRL_VERSION}, {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                                  std::to_string(EIGEN_MINOR_VERSION)}};
    report["seed"] = seed;
    report["config"] = config;
    report["warnings"] = rep.warnings;
    report["result"] = rep.result;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report["run"] = {{"started_utc", started_utc}, {"wall_clock_seconds", wall}, {"output_dir", request.out.string()}};
    outputs.add(it->second.second, dump_json(report));

    fs::create_directories(request.out);
    for (const auto& [rel, contents] : outputs.files) {
      const fs::path p = request.out / rel;
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      write_text_file(p, contents);
    }
    log << request.command << ": wrote " << outputs.files.size() << " files to " << request.out.string() << "\n";
    return 0;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    log << "error: [" << kModule << "] configuration: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    log << "error: [" << kModule << "] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace capcrl
