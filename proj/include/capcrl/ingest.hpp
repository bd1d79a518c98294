#pragma once

// Leaderboard ingestion: CSV parsing with score-scale detection, tiered
// base-model attribution against an editable JSON knowledge base, compute
// lookup, and grouping into per-base-model domains.

#include "capcrl/scm.hpp"

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

namespace capcrl {

enum class ScoreScale { Auto, Unit, Percent };

struct SchemaConfig {
  std::string name_column = "fullname";
  std::string base_column = "Base Model";
  std::string architecture_column = "Architecture";
  std::string params_column = "#Params (B)";
  std::string date_column = "Upload To Hub Date";
  std::string moe_column = "MoE";
  std::string type_column = "Type";
  std::vector<std::string> benchmarks = {"IFEval", "BBH", "MATH Lvl 5", "GPQA", "MUSR", "MMLU-PRO"};
  /// Auto divides every score by 100 when the file-wide maximum exceeds 1.5.
  ScoreScale scale = ScoreScale::Auto;
};

struct LeaderboardRow {
  std::string model_name;
  std::optional<std::string> declared_base;  ///< a hint only; often itself a fine-tune
  std::optional<std::string> architecture;
  std::optional<double> parameter_count;  ///< billions
  std::optional<std::string> upload_date;
  std::optional<bool> is_moe;
  std::optional<bool> fine_tuned;  ///< from the type column; "pretrained" means false
  std::vector<double> scores;     ///< aligned with Leaderboard::benchmarks, in [0, 1]
};

struct Leaderboard {
  std::vector<std::string> benchmarks;
  std::vector<LeaderboardRow> rows;
  std::size_t dropped = 0;  ///< rows with a missing or unparseable score
  bool rescaled = false;    ///< scores were divided by 100
  std::vector<std::pair<std::string, std::string>> column_map;  ///< role -> column, absent columns omitted
};

/// Throws on an empty file or missing name/benchmark columns.
Leaderboard parse_leaderboard(const std::filesystem::path& path, const SchemaConfig& schema = {});
Leaderboard parse_leaderboard_text(std::string_view csv, const SchemaConfig& schema = {});

enum class ConfidenceTier { Explicit, NamePattern, Architecture };
std::string_view to_string(ConfidenceTier t);

struct BaseModelRule {
  std::string base_model_id;
  std::vector<std::string> name_patterns;  ///< case-insensitive ECMAScript regexes, searched
  double params_low = 0.0;                 ///< billions, inclusive
  double params_high = 0.0;
  std::vector<std::string> architecture_tags;  ///< exact, case-insensitive
  std::optional<double> pretraining_tokens;    ///< trillions
  ConfidenceTier tier = ConfidenceTier::Explicit;
};

class KnowledgeBase {
public:
  /// Validates every rule: low < high, a criterion for its tier, compilable patterns.
  explicit KnowledgeBase(std::vector<BaseModelRule> rules);
  static KnowledgeBase from_json_text(std::string_view text);
  static KnowledgeBase load(const std::filesystem::path& path);

  const std::vector<BaseModelRule>& rules() const { return rules_; }
  /// Tokens in trillions for a base model, if the knowledge base states it.
  std::optional<double> tokens(std::string_view base_model_id) const;

  /// Compiled patterns, parallel to rules().
  const std::vector<std::vector<std::regex>>& patterns() const { return patterns_; }

private:
  std::vector<BaseModelRule> rules_;
  std::vector<std::vector<std::regex>> patterns_;
};

struct Attribution {
  std::string base_model_id;
  ConfidenceTier tier = ConfidenceTier::Explicit;
  friend bool operator==(const Attribution&, const Attribution&) = default;
};

/// Tiers in order; within a tier a rule fires only if a pattern or tag matches
/// and a known parameter count lies in its range. Name and architecture tiers
/// need a parameter count. A tier matching several base models is skipped.
std::optional<Attribution> attribute_base_model(const LeaderboardRow& row, const KnowledgeBase& kb);

/// 6 * params * tokens in FLOPs, or nullopt when either is unknown.
std::optional<double> pretraining_compute(const LeaderboardRow& row, const std::optional<Attribution>& attribution,
                                          const KnowledgeBase& kb);

struct DomainGrouping {
  DomainCollection collection;  ///< domains sorted by base model id
  std::vector<std::vector<std::string>> model_names;  ///< parallel to collection.domains
  std::vector<std::pair<std::string, std::size_t>> excluded;  ///< groups below min_size
  std::size_t unattributed = 0;
};

DomainGrouping group_domains(const Leaderboard& board, const std::vector<std::optional<Attribution>>& attributions,
                             std::size_t min_size);

}  // namespace capcrl
