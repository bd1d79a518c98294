// capcrl: command-line driver. Flags override the command's section of the
// --config file (or $CAPCRL_CONFIG), which overrides built-in defaults.

#include "capcrl/commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using capcrl::Json;

/// Flag values collected per command; only flags the user actually gave are kept.
struct Overrides {
  std::map<std::string, std::string> strings;
  std::map<std::string, double> numbers;
  std::map<std::string, bool> flags;
  std::vector<std::string> sets;  ///< key=json, dotted keys allowed
};

Json parse_set(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw capcrl::input_error("cli", "--set expects key=value, got '" + kv + "'");
  const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // bare strings need no quotes
  }
  Json root = Json::object();
  Json* node = &root;
  std::size_t start = 0;
  for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1)
    node = &(*node)[key.substr(start, dot - start)];
  (*node)[key.substr(start)] = value;
  return root;
}

void merge(Json& base, const Json& patch) {
  for (const auto& [k, v] : patch.items()) {
    if (base.contains(k) && base[k].is_object() && v.is_object())
      merge(base[k], v);
    else
      base[k] = v;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capcrl: hierarchical latent capability factors from grouped benchmark data"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::string out = "capcrl-out";
  std::string config_path;
  app.add_option("--seed", seed, "master seed (default 0)");
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--config", config_path, std::string("JSON config; falls back to $") + capcrl::kConfigEnvVar);
  app.set_version_flag("--version", CAPCRL_VERSION);

  std::map<std::string, Overrides> overrides;
  auto add_sub = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--set", overrides[name].sets, "override any config key: key=json (dotted keys for nesting)");
    return sub;
  };
  auto str = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&, name = sub->get_name(), key](const std::string& v) { overrides[name].strings[key] = v; }, help);
  };
  auto num = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<double>(
        flag, [&, name = sub->get_name(), key](const double& v) { overrides[name].numbers[key] = v; }, help);
  };
  auto count = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::int64_t>(
        flag, [&, name = sub->get_name(), key](const std::int64_t& v) { overrides[name].numbers[key] = static_cast<double>(v); },
        help);
  };
  auto flag = [&](CLI::App* sub, const std::string& flag_name, const std::string& key, const std::string& help) {
    sub->add_flag_callback(
        flag_name, [&, name = sub->get_name(), key] { overrides[name].flags[key] = true; }, help);
  };

  auto* sim = add_sub("simulate", "write a synthetic multi-domain bundle with ground truth");
  count(sim, "--domains", "domains", "number of domains K");
  count(sim, "--latent-dim", "latent_dim", "latent factors d0");
  count(sim, "--observed-dim", "observed_dim", "benchmarks n");
  count(sim, "--samples", "samples", "rows per domain");
  num(sim, "--alpha", "alpha", "noise entanglement (0 = exact SCM)");

  auto* ing = add_sub("ingest", "attribute leaderboard rows to base models and write a domain bundle");
  str(ing, "--input", "input", "leaderboard CSV");
  str(ing, "--rules", "rules", "base-model knowledge base JSON");
  count(ing, "--min-size", "min_size", "minimum rows per domain");
  str(ing, "--scale", "scale", "score scale: auto, unit or percent");

  auto* ica = add_sub("ica", "per-domain FastICA");
  str(ica, "--data", "data", "bundle directory");
  count(ica, "--latent-dim", "latent_dim", "sources per domain");

  auto* hca = add_sub("hca", "permutation search over per-domain unmixing matrices");
  str(hca, "--unmixing", "unmixing", "ica.json from the ica command");

  auto* pipe = add_sub("pipeline", "ICA, HCA, graph recovery and factor alignment");
  str(pipe, "--data", "data", "bundle directory");
  count(pipe, "--latent-dim", "latent_dim", "latent factors d0");
  count(pipe, "--min-size", "min_size", "minimum rows per domain");
  str(pipe, "--unmixing-source", "unmixing_source", "ica, or truth for synthetic bundles");
  flag(pipe, "--strict", "strict", "warn when identifiability assumptions are violated");

  auto* pca = add_sub("pca", "pairwise principal-subspace distances between domains");
  str(pca, "--data", "data", "bundle directory");
  count(pca, "--rank", "rank", "subspace rank");
  str(pca, "--scaling", "scaling", "raw or zscore");

  auto* comp = add_sub("complete", "local versus global matrix completion experiment");
  str(comp, "--data", "data", "bundle directory");
  str(comp, "--target", "target", "domain to mask");
  str(comp, "--pattern", "pattern", "random or block");
  num(comp, "--p", "p", "missing fraction");
  str(comp, "--solver", "solver", "nnr or block");
  count(comp, "--repeats", "repeats", "number of masks");

  auto* sc = add_sub("scaling", "sigmoid scaling-law fit and backdoor ATE");
  str(sc, "--input", "input", "CSV with compute, treatment and outcome columns");
  str(sc, "--leaderboard", "leaderboard", "leaderboard CSV (compute from the knowledge base)");
  str(sc, "--rules", "rules", "base-model knowledge base JSON");

  CLI11_PARSE(app, argc, argv);

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    Json file_config = Json::object();
    if (config_path.empty())
      if (const char* env = std::getenv(capcrl::kConfigEnvVar)) config_path = env;
    if (!config_path.empty()) {
      file_config = capcrl::read_json_file(config_path);
      if (!file_config.is_object()) throw capcrl::input_error("cli", "config file must hold a JSON object");
    }
    capcrl::CommandRequest request;
    request.command = name;
    request.out = out;
    request.seed = seed;
    if (!seed && file_config.contains("seed")) request.seed = file_config.at("seed").get<std::uint64_t>();
    if (file_config.contains(name)) request.config = file_config.at(name);
    const Overrides& o = overrides[name];
    Json flags = Json::object();
    for (const auto& [k, v] : o.strings) flags[k] = v;
    for (const auto& [k, v] : o.numbers) flags[k] = v == static_cast<double>(static_cast<long long>(v))
                                                        ? Json(static_cast<long long>(v))
                                                        : Json(v);
    for (const auto& [k, v] : o.flags) flags[k] = v;
    for (const auto& s : o.sets) merge(flags, parse_set(s));
    merge(request.config, flags);
    return capcrl::run_command(request, std::cerr);
  } catch (const capcrl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return capcrl::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: [cli] " << e.what() << "\n";
    return 2;
  }
}
