#include "capcrl/ingest.hpp"

#include "capcrl/csv.hpp"
#include "capcrl/error.hpp"
#include "capcrl/rng.hpp"

#include <doctest.h>

#include <algorithm>

using namespace capcrl;

namespace {
const KnowledgeBase& shipped() {
  static const KnowledgeBase kb = KnowledgeBase::load(CAPCRL_DEFAULT_RULES);
  return kb;
}

LeaderboardRow named(std::string name, std::optional<double> params = std::nullopt,
                     std::optional<std::string> arch = std::nullopt) {
  LeaderboardRow r;
  r.model_name = std::move(name);
  r.parameter_count = params;
  r.architecture = std::move(arch);
  return r;
}

SchemaConfig two_benchmarks() {
  SchemaConfig s;
  s.benchmarks = {"A", "B"};
  return s;
}

std::string attribution_text(const std::optional<Attribution>& a) {
  return a ? a->base_model_id + "/" + std::string(to_string(a->tier)) : "-";
}
}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("parse examples") {
    const auto ok = parse_leaderboard_text("fullname,A,B\nm1,0.1,0.2\nm2,0.3,0.4\nm3,0.5,0.6\n", two_benchmarks());
    CHECK(ok.rows.size() == 3);
    CHECK(ok.dropped == 0);
    CHECK_FALSE(ok.rescaled);
    CHECK(ok.rows[2].scores == std::vector<double>{0.5, 0.6});

    const auto bad = parse_leaderboard_text("fullname,A,B\nm1,abc,0.2\nm2,0.3,0.4\n", two_benchmarks());
    CHECK(bad.rows.size() == 1);
    CHECK(bad.dropped == 1);

    const auto pct = parse_leaderboard_text("fullname,A,B\nm1,73.0,12\n", two_benchmarks());
    CHECK(pct.rescaled);
    CHECK(pct.rows[0].scores[0] == doctest::Approx(0.73));

    SchemaConfig unit = two_benchmarks();
    unit.scale = ScoreScale::Unit;
    CHECK(parse_leaderboard_text("fullname,A,B\nm1,73.0,12\n", unit).rows[0].scores[0] == 73.0);
    SchemaConfig percent = two_benchmarks();
    percent.scale = ScoreScale::Percent;
    CHECK(parse_leaderboard_text("fullname,A,B\nm1,0.5,1\n", percent).rows[0].scores[0] == doctest::Approx(0.005));
  }

  TEST_CASE("optional metadata columns") {
    const auto b = parse_leaderboard_text(
        "fullname,Base Model,Architecture,#Params (B),MoE,Type,A,B\n"
        "m1,base/x,LlamaForCausalLM,8.03,True,pretrained,0.1,0.2\n"
        "m2,,,,,fine-tuned,0.1,0.2\n",
        two_benchmarks());
    CHECK(*b.rows[0].declared_base == "base/x");
    CHECK(*b.rows[0].parameter_count == doctest::Approx(8.03));
    CHECK(*b.rows[0].is_moe);
    CHECK_FALSE(*b.rows[0].fine_tuned);
    CHECK_FALSE(b.rows[1].declared_base.has_value());
    CHECK_FALSE(b.rows[1].parameter_count.has_value());
    CHECK(*b.rows[1].fine_tuned);
  }

  TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_leaderboard_text("", two_benchmarks()), Error);
    CHECK_THROWS_AS(parse_leaderboard_text("fullname,A\nm1,0.1\n", two_benchmarks()), Error);
    CHECK_THROWS_AS(parse_leaderboard_text("name,A,B\nm1,0.1,0.2\n", two_benchmarks()), Error);
    CHECK_THROWS_AS(parse_leaderboard(std::filesystem::path(CAPCRL_TEST_DATA) / "absent.csv"), Error);
  }

  TEST_CASE("attribution examples") {
    const auto& kb = shipped();
    CHECK(attribute_base_model(named("someone/Gemma-2-9B-finetune"), kb) ==
          Attribution{"Gemma-2-9B", ConfidenceTier::Explicit});
    CHECK(attribute_base_model(named("org/llama-3-chat", 8.1), kb) ==
          Attribution{"Llama-3-8B", ConfidenceTier::NamePattern});
    CHECK_FALSE(attribute_base_model(named("my-custom-net"), kb).has_value());
    CHECK(attribute_base_model(named("plain-8b", 8.0, "LlamaForCausalLM"), kb) ==
          Attribution{"Llama-3-8B", ConfidenceTier::Architecture});
    CHECK(attribute_base_model(named("plain-8b", 8.0, "llamaforcausallm"), kb).has_value());
    // The name tier needs a parameter count.
    CHECK_FALSE(attribute_base_model(named("org/llama-3-chat"), kb).has_value());
  }

  TEST_CASE("declared base is only a hint for the explicit tier") {
    LeaderboardRow r = named("ft/opaque", 9.24);
    r.declared_base = "google/gemma-2-9b";
    CHECK(attribute_base_model(r, shipped()) == Attribution{"Gemma-2-9B", ConfidenceTier::Explicit});
    r.declared_base = "someone/llama-3-chat";
    CHECK_FALSE(attribute_base_model(r, shipped()).has_value());
  }

  TEST_CASE("a tier that matches several base models is skipped") {
    BaseModelRule a{"A", {"shared"}, 1.0, 10.0, {}, std::nullopt, ConfidenceTier::NamePattern};
    BaseModelRule b{"B", {"shared"}, 1.0, 10.0, {}, std::nullopt, ConfidenceTier::NamePattern};
    BaseModelRule c{"C", {}, 1.0, 10.0, {"Arch"}, std::nullopt, ConfidenceTier::Architecture};
    const KnowledgeBase kb({a, b, c});
    CHECK(attribute_base_model(named("shared-model", 5.0, "Arch"), kb) ==
          Attribution{"C", ConfidenceTier::Architecture});
    CHECK_FALSE(attribute_base_model(named("shared-model", 5.0), kb).has_value());
  }

  TEST_CASE("knowledge base validation") {
    CHECK_THROWS_AS(KnowledgeBase({{"X", {"("}, 1, 2, {}, std::nullopt, ConfidenceTier::Explicit}}), Error);
    CHECK_THROWS_AS(KnowledgeBase({{"X", {"x"}, 3, 2, {}, std::nullopt, ConfidenceTier::NamePattern}}), Error);
    CHECK_THROWS_AS(KnowledgeBase({{"X", {}, 1, 2, {}, std::nullopt, ConfidenceTier::Architecture}}), Error);
    CHECK_THROWS_AS(KnowledgeBase::from_json_text("{\"base_models\": 3}"), Error);
    CHECK(shipped().tokens("Gemma-2-9B") == 8.0);
    CHECK_FALSE(shipped().tokens("Llama-3-8B").has_value());
  }

  TEST_CASE("pretraining compute") {
    const KnowledgeBase& kb = shipped();
    LeaderboardRow r = named("x", 9.0);
    CHECK(*pretraining_compute(r, Attribution{"Gemma-2-9B", ConfidenceTier::Explicit}, kb) == doctest::Approx(4.32e23));
    CHECK_FALSE(pretraining_compute(r, Attribution{"Llama-3-8B", ConfidenceTier::Explicit}, kb).has_value());
    CHECK_FALSE(pretraining_compute(r, std::nullopt, kb).has_value());
    CHECK_FALSE(pretraining_compute(named("x"), Attribution{"Gemma-2-9B", ConfidenceTier::Explicit}, kb).has_value());
    BaseModelRule small{"Small", {"small"}, 0.1, 1.0, {}, 1.0, ConfidenceTier::Explicit};
    const KnowledgeBase one({small});
    CHECK(*pretraining_compute(named("small", 0.5), Attribution{"Small", ConfidenceTier::Explicit}, one) ==
          doctest::Approx(3e21));
  }

  TEST_CASE("grouping examples") {
    const auto board = parse_leaderboard_text("fullname,A,B\nm1,0.1,0.2\nm2,0.3,0.4\nm3,0.5,0.6\nm4,0.7,0.8\n",
                                              two_benchmarks());
    const Attribution x{"X", ConfidenceTier::Explicit}, y{"Y", ConfidenceTier::Explicit};
    const auto same = group_domains(board, {x, x, x, x}, 1);
    REQUIRE(same.collection.domains.size() == 1);
    CHECK(same.collection.domains[0].observations.rows() == 4);

    const auto excluded = group_domains(board, {y, x, x, x}, 2);
    REQUIRE(excluded.collection.domains.size() == 1);
    CHECK(excluded.excluded == std::vector<std::pair<std::string, std::size_t>>{{"Y", 1}});
    CHECK(group_domains(board, {x, x, x, std::nullopt}, 5).excluded.size() == 1);

    const auto two = group_domains(board, {y, x, std::nullopt, y}, 1);
    REQUIRE(two.collection.domains.size() == 2);
    CHECK(two.collection.domains[0].id == "X");
    CHECK(two.collection.domains[1].id == "Y");
    CHECK(two.model_names[1] == std::vector<std::string>{"m1", "m4"});
    CHECK(two.unattributed == 1);
    CHECK(two.collection.domains[1].observations(1, 1) == 0.8);
  }

  TEST_CASE("golden leaderboard attribution table") {
    const auto board = parse_leaderboard(std::filesystem::path(CAPCRL_TEST_DATA) / "golden_leaderboard.csv");
    const auto expected = read_csv(std::filesystem::path(CAPCRL_TEST_DATA) / "golden_attributions.csv");
    REQUIRE(board.rows.size() == expected.rows.size());
    CHECK(board.rescaled);
    for (std::size_t i = 0; i < board.rows.size(); ++i) {
      CAPTURE(board.rows[i].model_name);
      CHECK(board.rows[i].model_name == expected.rows[i][0]);
      const auto a = attribute_base_model(board.rows[i], shipped());
      const std::string want = expected.rows[i][1].empty() ? "-" : expected.rows[i][1] + "/" + expected.rows[i][2];
      CHECK(attribution_text(a) == want);
    }
  }

  TEST_CASE("property: attribution is order-stable") {
    auto board = parse_leaderboard(std::filesystem::path(CAPCRL_TEST_DATA) / "golden_leaderboard.csv");
    std::vector<std::string> before;
    for (const auto& r : board.rows) before.push_back(r.model_name + "=" + attribution_text(attribute_base_model(r, shipped())));
    std::sort(before.begin(), before.end());
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const auto perm = rng.permutation(static_cast<int>(board.rows.size()));
      std::vector<std::string> after;
      for (int p : perm) {
        const auto& r = board.rows[p];
        after.push_back(r.model_name + "=" + attribution_text(attribute_base_model(r, shipped())));
      }
      std::sort(after.begin(), after.end());
      CHECK(after == before);
    }
  }

  TEST_CASE("property: no rule fires outside its parameter range") {
    const KnowledgeBase& kb = shipped();
    const double eps = 1e-9;
    for (std::size_t i = 0; i < kb.rules().size(); ++i) {
      const BaseModelRule& rule = kb.rules()[i];
      std::string name = "probe";
      std::optional<std::string> arch;
      if (rule.tier == ConfidenceTier::Architecture) {
        arch = rule.architecture_tags.front();
      } else {
        // A name that every pattern of this rule matches: the base id itself.
        name = rule.base_model_id;
        bool hit = false;
        for (const auto& re : kb.patterns()[i]) hit = hit || std::regex_search(name, re);
        if (!hit) continue;
      }
      for (double p : {rule.params_low - eps, rule.params_high + eps, rule.params_low * 0.5, rule.params_high * 2.0}) {
        const auto a = attribute_base_model(named(name, p, arch), kb);
        if (a && a->base_model_id == rule.base_model_id) CHECK(a->tier != rule.tier);
      }
      for (double p : {rule.params_low, rule.params_high}) {
        CAPTURE(rule.base_model_id);
        CAPTURE(p);
        const auto a = attribute_base_model(named(name, p, arch), kb);
        if (rule.tier == ConfidenceTier::Explicit) CHECK(a == Attribution{rule.base_model_id, ConfidenceTier::Explicit});
      }
    }
  }
}
