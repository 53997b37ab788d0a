#include <doctest.h>

#include <algorithm>
#include <random>
#include <regex>

#include "helpers.hpp"
#include "tasim/experiment.hpp"
#include "tasim/export.hpp"

using namespace tasim;

namespace {

std::map<std::filesystem::path, std::string> snapshot_tree(
    const std::filesystem::path& root) {
  std::map<std::filesystem::path, std::string> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) {
      out[std::filesystem::relative(entry.path(), root)] =
          testutil::read_file(entry.path());
    }
  }
  return out;
}

std::vector<double> svg_rect_heights(const std::string& svg) {
  std::vector<double> out;
  std::regex pattern("<rect[^>]*height=\"([0-9.]+)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), pattern);
       it != std::sregex_iterator(); ++it) {
    out.push_back(std::stod((*it)[1].str()));
  }
  return out;
}

}  // namespace

TEST_CASE("analyze_distribution reproduces the ablation fixture counts") {
  auto on = testutil::make_fig5_transcripts(Condition::memory_on);
  auto off = testutil::make_fig5_transcripts(Condition::memory_off);

  EgoStateDistribution john_on = analyze_distribution(on, "John");
  CHECK(john_on.counts.at(EgoState::child) == 15);
  CHECK(john_on.total == 88);

  EgoStateDistribution john_off = analyze_distribution(off, "John");
  CHECK(john_off.counts.at(EgoState::child) == 10);
  CHECK(john_off.total == 88);

  EgoStateDistribution taylor_on = analyze_distribution(on, "Taylor");
  CHECK(taylor_on.counts.at(EgoState::parent) == 18);
  EgoStateDistribution taylor_off = analyze_distribution(off, "Taylor");
  CHECK(taylor_off.counts.at(EgoState::parent) == 8);

  int sum = 0;
  for (const auto& [state, count] : taylor_on.counts) sum += count;
  CHECK(sum == taylor_on.total);
}

TEST_CASE("analyze_distribution ignores transcript ordering") {
  auto transcripts = testutil::make_fig5_transcripts(Condition::memory_on);
  EgoStateDistribution before = analyze_distribution(transcripts, "John");
  std::mt19937_64 rng(5);
  std::shuffle(transcripts.begin(), transcripts.end(), rng);
  EgoStateDistribution after = analyze_distribution(transcripts, "John");
  CHECK(before.counts == after.counts);
  CHECK(before.total == after.total);
}

TEST_CASE("analyze_distribution edge cases") {
  std::vector<Transcript> none;
  EgoStateDistribution empty = analyze_distribution(none, "John");
  CHECK(empty.total == 0);
  CHECK(empty.counts.at(EgoState::parent) == 0);
  CHECK(empty.counts.at(EgoState::adult) == 0);
  CHECK(empty.counts.at(EgoState::child) == 0);

  auto on = testutil::make_fig5_transcripts(Condition::memory_on);
  auto off = testutil::make_fig5_transcripts(Condition::memory_off);
  std::vector<Transcript> mixed = {on[0], off[0]};
  CHECK_THROWS_AS(analyze_distribution(mixed, "John"), ValidationError);

  CHECK_THROWS_AS(analyze_distribution(on, "Nobody"), ValidationError);
}

TEST_CASE("fallback turns are counted and reported separately") {
  auto transcripts = testutil::make_fig5_transcripts(Condition::memory_on);
  transcripts[0].turns[1].fallback_used = true;  // a John turn
  transcripts[3].turns[3].fallback_used = true;  // another John turn
  EgoStateDistribution d = analyze_distribution(transcripts, "John");
  CHECK(d.fallbacks == 2);
  CHECK(d.total == 88);
}

TEST_CASE("transaction classification follows the declared-target rule") {
  Transcript t;
  t.scenario_id = "rule";
  auto add_turn = [&](EgoState selected, EgoState addressed) {
    Turn turn;
    turn.index = static_cast<int>(t.turns.size());
    turn.speaker = turn.index % 2 == 0 ? "A" : "B";
    turn.selected_state = selected;
    turn.addressed_state = addressed;
    for (EgoState s : kAllEgoStates) {
      turn.candidates[state_index(s)] = {s, "x", {}, {}, {}};
    }
    turn.text = "x";
    t.turns.push_back(std::move(turn));
  };

  SUBCASE("matching state is complementary") {
    add_turn(EgoState::parent, EgoState::child);
    add_turn(EgoState::child, EgoState::parent);
    auto annotations = classify_transactions(t);
    REQUIRE(annotations.size() == 2);
    CHECK(annotations[0].kind == TransactionKind::unclassified);
    CHECK_FALSE(annotations[0].prev_target.has_value());
    CHECK(annotations[1].kind == TransactionKind::complementary);
    CHECK(annotations[1].prev_target == EgoState::child);
    CHECK(annotations[1].cur_source == EgoState::child);
  }

  SUBCASE("mismatching state is crossed") {
    add_turn(EgoState::parent, EgoState::adult);
    add_turn(EgoState::child, EgoState::parent);
    auto annotations = classify_transactions(t);
    REQUIRE(annotations.size() == 2);
    CHECK(annotations[1].kind == TransactionKind::crossed);
    CHECK(annotations[1].prev_target == EgoState::adult);
    CHECK(annotations[1].cur_source == EgoState::child);
  }

  SUBCASE("eight-turn alternating fixture classifies seven complementary") {
    // Taylor speaks from Parent at Child; John answers from Child at Parent.
    for (int i = 0; i < 4; ++i) {
      add_turn(EgoState::parent, EgoState::child);
      add_turn(EgoState::child, EgoState::parent);
    }
    auto annotations = classify_transactions(t);
    REQUIRE(annotations.size() == 8);
    CHECK(annotations[0].kind == TransactionKind::unclassified);
    for (std::size_t i = 1; i < annotations.size(); ++i) {
      CHECK(annotations[i].kind == TransactionKind::complementary);
    }
  }
}

TEST_CASE("a small ablation produces the expected files and counts") {
  testutil::TempDir scenario_dir("abl-scn");
  testutil::TempDir out_dir("abl-out");
  ScenarioConfig scenario = testutil::write_test_scenario(scenario_dir.path(), 2);

  ExperimentConfig experiment;
  experiment.dialogues_per_condition = 2;
  experiment.turns_override = 1;
  experiment.base_seed = 11;
  experiment.parallelism = 2;

  AblationOutcome outcome = run_ablation(scenario, experiment,
                                         testutil::scripted_backend(11),
                                         out_dir.path());
  CHECK(outcome.run_dir == out_dir.path() / "test-pair-s11");
  REQUIRE(outcome.transcripts.at(Condition::memory_off).size() == 2);
  REQUIRE(outcome.transcripts.at(Condition::memory_on).size() == 2);
  for (const auto& [condition, transcripts] : outcome.transcripts) {
    for (const Transcript& t : transcripts) {
      CHECK(t.turns.size() == 2);
      CHECK(t.condition == condition);
    }
  }
  CHECK(std::filesystem::exists(outcome.run_dir / "memory_off" /
                                "dialogue-000.json"));
  CHECK(std::filesystem::exists(outcome.run_dir / "memory_on" /
                                "dialogue-001.json"));
  CHECK(std::filesystem::exists(outcome.run_dir / "summary.json"));

  REQUIRE(outcome.summaries.size() == 2);
  for (const ConditionSummary& s : outcome.summaries) {
    CHECK(s.completed_dialogues == 2);
    CHECK(s.failed_attempts == 0);
    CHECK(s.responses_per_agent.at("Ada") == 2);
    CHECK(s.responses_per_agent.at("Ben") == 2);
    if (s.condition == Condition::memory_off) {
      CHECK(s.gateway.embed_calls == 0);
      CHECK(s.gateway.retrievals == 0);
    } else {
      // 2 dialogues x 2 turns x 3 candidates
      CHECK(s.gateway.retrievals == 12);
      // + 18 indexing embeds (6 banks x 3 items)
      CHECK(s.gateway.embed_calls == 12 + 18);
    }
  }
}

TEST_CASE("a single-condition minimal ablation") {
  testutil::TempDir scenario_dir("abl-one-scn");
  testutil::TempDir out_dir("abl-one-out");
  ScenarioConfig scenario = testutil::write_test_scenario(scenario_dir.path(), 1);

  ExperimentConfig experiment;
  experiment.dialogues_per_condition = 1;
  experiment.turns_override = 1;
  experiment.conditions = {Condition::memory_off};

  AblationOutcome outcome = run_ablation(scenario, experiment,
                                         testutil::scripted_backend(0),
                                         out_dir.path());
  REQUIRE(outcome.transcripts.size() == 1);
  REQUIRE(outcome.transcripts.at(Condition::memory_off).size() == 1);
  CHECK(outcome.transcripts.at(Condition::memory_off)[0].turns.size() == 2);
  REQUIRE(outcome.summaries.size() == 1);
  CHECK(outcome.summaries[0].responses_per_agent.at("Ada") == 1);
  CHECK(outcome.summaries[0].responses_per_agent.at("Ben") == 1);
  CHECK_FALSE(std::filesystem::exists(outcome.run_dir / "memory_on"));
}

TEST_CASE("two identical ablation runs write identical bytes") {
  testutil::TempDir scenario_dir("det-scn");
  testutil::TempDir out_a("det-a");
  testutil::TempDir out_b("det-b");
  ScenarioConfig scenario = testutil::write_test_scenario(scenario_dir.path(), 1);

  ExperimentConfig experiment;
  experiment.dialogues_per_condition = 3;
  experiment.base_seed = 5;
  experiment.parallelism = 2;

  run_ablation(scenario, experiment, testutil::scripted_backend(5), out_a.path());
  run_ablation(scenario, experiment, testutil::scripted_backend(5), out_b.path());
  auto tree_a = snapshot_tree(out_a.path() / "test-pair-s5");
  auto tree_b = snapshot_tree(out_b.path() / "test-pair-s5");
  CHECK(tree_a == tree_b);
  CHECK_FALSE(tree_a.empty());
}

TEST_CASE("distribution csv rows carry the documented header and order") {
  EgoStateDistribution taylor_on;
  taylor_on.agent_name = "Taylor";
  taylor_on.condition = Condition::memory_on;
  taylor_on.counts = {{EgoState::parent, 18}, {EgoState::adult, 55},
                      {EgoState::child, 15}};
  taylor_on.total = 88;
  EgoStateDistribution john_on = taylor_on;
  john_on.agent_name = "John";
  john_on.counts = {{EgoState::parent, 8}, {EgoState::adult, 65},
                    {EgoState::child, 15}};

  std::string csv = render_distribution_csv({taylor_on, john_on});
  CHECK(csv ==
        "agent,condition,parent,adult,child,total,fallbacks\n"
        "john,memory_on,8,65,15,88,0\n"
        "taylor,memory_on,18,55,15,88,0\n");
}

TEST_CASE("transaction csv includes the unclassified first turn") {
  std::vector<TransactionAnnotation> annotations = {
      {0, TransactionKind::unclassified, {}, EgoState::parent},
      {1, TransactionKind::crossed, EgoState::child, EgoState::adult}};
  CHECK(render_transactions_csv(annotations) ==
        "turn_index,kind,prev_target,cur_source\n"
        "0,unclassified,,parent\n"
        "1,crossed,child,adult\n");
}

TEST_CASE("chart bars scale linearly with the counts") {
  EgoStateDistribution d;
  d.agent_name = "Taylor";
  d.condition = Condition::memory_on;
  d.counts = {{EgoState::parent, 18}, {EgoState::adult, 55},
              {EgoState::child, 15}};
  d.total = 88;

  std::string svg = render_distribution_svg(d);
  auto heights = svg_rect_heights(svg);
  REQUIRE(heights.size() == 3);
  // Documented scale: height = 196 * count / max(1, max_count), written with
  // two decimals.
  auto expected = [](int count, int axis_max) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 196.0 * count / axis_max);
    return std::stod(buf);
  };
  CHECK(heights[0] == doctest::Approx(expected(18, 55)).epsilon(1e-9));
  CHECK(heights[1] == doctest::Approx(expected(55, 55)).epsilon(1e-9));
  CHECK(heights[2] == doctest::Approx(expected(15, 55)).epsilon(1e-9));
  CHECK(svg.find(">18</text>") != std::string::npos);
  CHECK(svg.find(">55</text>") != std::string::npos);
}

TEST_CASE("an all-zero distribution renders zero-height bars") {
  EgoStateDistribution d;
  d.agent_name = "Nobody";
  d.condition = Condition::memory_off;
  std::string svg = render_distribution_svg(d);
  auto heights = svg_rect_heights(svg);
  REQUIRE(heights.size() == 3);
  for (double h : heights) CHECK(h == doctest::Approx(0.0));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("write_analysis lays out tables and charts deterministically") {
  testutil::TempDir tmp("analysis");
  std::map<Condition, std::vector<Transcript>> by_condition;
  by_condition[Condition::memory_on] =
      testutil::make_fig5_transcripts(Condition::memory_on);
  by_condition[Condition::memory_off] =
      testutil::make_fig5_transcripts(Condition::memory_off);

  write_analysis(by_condition, tmp.path() / "analysis");
  auto first = snapshot_tree(tmp.path() / "analysis");
  CHECK(first.count("distribution.csv") == 1);
  CHECK(first.count("chart-john-memory_on.svg") == 1);
  CHECK(first.count("chart-taylor-memory_off.svg") == 1);
  CHECK(first.count("chart-panel.svg") == 1);
  CHECK(first.count(std::filesystem::path("transactions") /
                    "memory_on-dialogue-000.csv") == 1);

  write_analysis(by_condition, tmp.path() / "analysis");
  CHECK(snapshot_tree(tmp.path() / "analysis") == first);

  std::string csv = first.at("distribution.csv");
  CHECK(csv.find("john,memory_on,8,65,15,88,0") != std::string::npos);
  CHECK(csv.find("taylor,memory_on,18,55,15,88,0") != std::string::npos);
  CHECK(csv.find("john,memory_off,6,72,10,88,0") != std::string::npos);
  CHECK(csv.find("taylor,memory_off,8,70,10,88,0") != std::string::npos);
}
