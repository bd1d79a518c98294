#include "capcrl/ingest.hpp"

#include "capcrl/csv.hpp"
#include "capcrl/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace capcrl {

namespace {
constexpr const char* kModule = "ingest";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::optional<std::string> nonempty(const std::string& cell) {
  const auto first = cell.find_first_not_of(" \t");
  if (first == std::string::npos) return std::nullopt;
  return cell.substr(first, cell.find_last_not_of(" \t") - first + 1);
}

std::optional<bool> parse_flag(const std::string& cell) {
  const std::string v = lower(nonempty(cell).value_or(""));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  return std::nullopt;
}

ConfidenceTier parse_tier(const std::string& s) {
  if (s == "explicit") return ConfidenceTier::Explicit;
  if (s == "name-pattern") return ConfidenceTier::NamePattern;
  if (s == "architecture") return ConfidenceTier::Architecture;
  throw input_error(kModule, "unknown confidence tier '" + s + "'");
}

bool in_range(const BaseModelRule& r, double params) { return params >= r.params_low && params <= r.params_high; }
}  // namespace

std::string_view to_string(ConfidenceTier t) {
  switch (t) {
    case ConfidenceTier::Explicit: return "explicit";
    case ConfidenceTier::NamePattern: return "name-pattern";
    case ConfidenceTier::Architecture: return "architecture";
  }
  return "explicit";
}

Leaderboard parse_leaderboard_text(std::string_view text, const SchemaConfig& schema) {
  const CsvTable table = parse_csv(text);
  if (table.rows.empty()) throw input_error(kModule, "leaderboard has a header but no rows");
  if (schema.benchmarks.empty()) throw input_error(kModule, "no benchmark columns configured");

  Leaderboard board;
  board.benchmarks = schema.benchmarks;
  auto require = [&](const std::string& role, const std::string& name) {
    const auto c = table.column(name);
    if (!c) throw input_error(kModule, "missing mandatory column '" + name + "'");
    board.column_map.emplace_back(role, name);
    return *c;
  };
  auto optional_col = [&](const std::string& role, const std::string& name) -> std::optional<std::size_t> {
    const auto c = table.column(name);
    if (c) board.column_map.emplace_back(role, name);
    return c;
  };
  const std::size_t name_col = require("model_name", schema.name_column);
  std::vector<std::size_t> score_cols;
  for (const auto& b : schema.benchmarks) score_cols.push_back(require("score:" + b, b));
  const auto base_col = optional_col("declared_base", schema.base_column);
  const auto arch_col = optional_col("architecture", schema.architecture_column);
  const auto params_col = optional_col("parameter_count", schema.params_column);
  const auto date_col = optional_col("upload_date", schema.date_column);
  const auto moe_col = optional_col("is_moe", schema.moe_column);
  const auto type_col = optional_col("fine_tuned", schema.type_column);

  double max_score = 0.0;
  for (const auto& cells : table.rows) {
    LeaderboardRow row;
    const auto name = nonempty(cells[name_col]);
    bool ok = name.has_value();
    for (std::size_t c : score_cols) {
      const auto v = parse_number(cells[c]);
      if (!v) {
        ok = false;
        break;
      }
      row.scores.push_back(*v);
    }
    if (!ok) {
      ++board.dropped;
      continue;
    }
    row.model_name = *name;
    if (base_col) row.declared_base = nonempty(cells[*base_col]);
    if (arch_col) row.architecture = nonempty(cells[*arch_col]);
    if (params_col) {
      const auto p = parse_number(cells[*params_col]);
      if (p && *p > 0.0) row.parameter_count = p;
    }
    if (date_col) row.upload_date = nonempty(cells[*date_col]);
    if (moe_col) row.is_moe = parse_flag(cells[*moe_col]);
    if (type_col) {
      if (const auto t = nonempty(cells[*type_col])) row.fine_tuned = lower(*t).find("pretrained") == std::string::npos;
    }
    for (double s : row.scores) max_score = std::max(max_score, std::abs(s));
    board.rows.push_back(std::move(row));
  }

  board.rescaled = schema.scale == ScoreScale::Percent || (schema.scale == ScoreScale::Auto && max_score > 1.5);
  if (board.rescaled)
    for (auto& row : board.rows)
      for (double& s : row.scores) s /= 100.0;
  return board;
}

Leaderboard parse_leaderboard(const std::filesystem::path& path, const SchemaConfig& schema) {
  return parse_leaderboard_text(read_text_file(path), schema);
}

KnowledgeBase::KnowledgeBase(std::vector<BaseModelRule> rules) : rules_(std::move(rules)) {
  for (const auto& r : rules_) {
    if (r.base_model_id.empty()) throw input_error(kModule, "rule without base model id");
    if (!(r.params_low < r.params_high)) throw input_error(kModule, "rule " + r.base_model_id + ": empty parameter range");
    const bool by_name = r.tier != ConfidenceTier::Architecture;
    if (by_name && r.name_patterns.empty())
      throw input_error(kModule, "rule " + r.base_model_id + ": name tiers need patterns");
    if (!by_name && r.architecture_tags.empty())
      throw input_error(kModule, "rule " + r.base_model_id + ": architecture tier needs tags");
    if (r.pretraining_tokens && !(*r.pretraining_tokens > 0.0))
      throw input_error(kModule, "rule " + r.base_model_id + ": token count must be positive");
    std::vector<std::regex> compiled;
    for (const auto& p : r.name_patterns) {
      try {
        compiled.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
      } catch (const std::regex_error&) {
        throw input_error(kModule, "rule " + r.base_model_id + ": invalid pattern '" + p + "'");
      }
    }
    patterns_.push_back(std::move(compiled));
  }
}

KnowledgeBase KnowledgeBase::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw input_error(kModule, std::string("rules JSON: ") + e.what());
  }
  std::vector<BaseModelRule> rules;
  try {
    for (const auto& model : doc.at("base_models")) {
      std::optional<double> tokens;
      if (model.contains("pretraining_tokens") && !model.at("pretraining_tokens").is_null())
        tokens = model.at("pretraining_tokens").get<double>();
      for (const auto& r : model.at("rules")) {
        BaseModelRule rule;
        rule.base_model_id = model.at("id").get<std::string>();
        rule.tier = parse_tier(r.at("tier").get<std::string>());
        rule.name_patterns = r.value("name_patterns", std::vector<std::string>{});
        rule.architecture_tags = r.value("architecture_tags", std::vector<std::string>{});
        const auto range = r.at("parameter_range").get<std::vector<double>>();
        if (range.size() != 2) throw input_error(kModule, "parameter_range must have two entries");
        rule.params_low = range[0];
        rule.params_high = range[1];
        rule.pretraining_tokens = tokens;
        rules.push_back(std::move(rule));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw input_error(kModule, std::string("rules JSON: ") + e.what());
  }
  return KnowledgeBase(std::move(rules));
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& path) { return from_json_text(read_text_file(path)); }

std::optional<double> KnowledgeBase::tokens(std::string_view base_model_id) const {
  for (const auto& r : rules_)
    if (r.base_model_id == base_model_id && r.pretraining_tokens) return r.pretraining_tokens;
  return std::nullopt;
}

std::optional<Attribution> attribute_base_model(const LeaderboardRow& row, const KnowledgeBase& kb) {
  const auto& rules = kb.rules();
  const auto& patterns = kb.patterns();
  auto name_hit = [&](std::size_t i, const std::string& text) {
    return std::any_of(patterns[i].begin(), patterns[i].end(),
                       [&](const std::regex& re) { return std::regex_search(text, re); });
  };
  auto unique = [](const std::set<std::string>& ids, ConfidenceTier tier) -> std::optional<Attribution> {
    if (ids.size() == 1) return Attribution{*ids.begin(), tier};
    return std::nullopt;
  };

  // Explicit references: the model name, then the declared base as a fallback hint.
  for (const std::optional<std::string>& text : {std::optional<std::string>(row.model_name), row.declared_base}) {
    if (!text) continue;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (rules[i].tier != ConfidenceTier::Explicit) continue;
      if (row.parameter_count && !in_range(rules[i], *row.parameter_count)) continue;
      if (name_hit(i, *text)) ids.insert(rules[i].base_model_id);
    }
    if (auto a = unique(ids, ConfidenceTier::Explicit)) return a;
    if (!ids.empty()) break;  // ambiguous explicit hit; do not consult the hint
  }
  if (!row.parameter_count) return std::nullopt;
  const double params = *row.parameter_count;

  {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < rules.size(); ++i)
      if (rules[i].tier == ConfidenceTier::NamePattern && in_range(rules[i], params) && name_hit(i, row.model_name))
        ids.insert(rules[i].base_model_id);
    if (auto a = unique(ids, ConfidenceTier::NamePattern)) return a;
  }
  if (!row.architecture) return std::nullopt;
  const std::string arch = lower(*row.architecture);
  std::set<std::string> ids;
  for (const auto& r : rules) {
    if (r.tier != ConfidenceTier::Architecture || !in_range(r, params)) continue;
    if (std::any_of(r.architecture_tags.begin(), r.architecture_tags.end(),
                    [&](const std::string& tag) { return lower(tag) == arch; }))
      ids.insert(r.base_model_id);
  }
  return unique(ids, ConfidenceTier::Architecture);
}

std::optional<double> pretraining_compute(const LeaderboardRow& row, const std::optional<Attribution>& attribution,
                                          const KnowledgeBase& kb) {
  if (!attribution || !row.parameter_count) return std::nullopt;
  const auto tokens = kb.tokens(attribution->base_model_id);
  if (!tokens) return std::nullopt;
  return 6.0 * (*row.parameter_count * 1e9) * (*tokens * 1e12);
}

DomainGrouping group_domains(const Leaderboard& board, const std::vector<std::optional<Attribution>>& attributions,
                             std::size_t min_size) {
  if (attributions.size() != board.rows.size()) throw input_error(kModule, "one attribution per row required");
  std::map<std::string, std::vector<std::size_t>> groups;
  DomainGrouping out;
  for (std::size_t i = 0; i < board.rows.size(); ++i) {
    if (attributions[i])
      groups[attributions[i]->base_model_id].push_back(i);
    else
      ++out.unattributed;
  }
  out.collection.benchmarks = board.benchmarks;
  const Index n = static_cast<Index>(board.benchmarks.size());
  for (const auto& [id, members] : groups) {
    if (members.size() < std::max<std::size_t>(min_size, 1)) {
      out.excluded.emplace_back(id, members.size());
      continue;
    }
    DomainDataset d;
    d.id = id;
    d.observations.resize(static_cast<Index>(members.size()), n);
    std::vector<std::string> names;
    for (std::size_t r = 0; r < members.size(); ++r) {
      const auto& row = board.rows[members[r]];
      for (Index c = 0; c < n; ++c) d.observations(static_cast<Index>(r), c) = row.scores[c];
      names.push_back(row.model_name);
    }
    out.collection.domains.push_back(std::move(d));
    out.model_names.push_back(std::move(names));
  }
  return out;
}

}  // namespace capcrl
