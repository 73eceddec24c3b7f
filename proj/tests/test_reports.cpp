#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "modelsmc/reports.hpp"

using namespace modelsmc;

namespace {

struct EntrySpec {
  std::string model_id;
  double log_weight = -1.0;
  std::int64_t tokens = 0;
};

RunRecord make_record(const std::string& task_name,
                      const std::vector<std::vector<EntrySpec>>& iterations,
                      int first_iteration = 1) {
  RunRecord record;
  record.method = "modelsmc";
  record.task_name = task_name;
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    IterationRecord it;
    it.iteration = first_iteration + static_cast<int>(i);
    for (std::size_t slot = 0; slot < iterations[i].size(); ++slot) {
      ParticleEntry e;
      e.iteration = it.iteration;
      e.slot = static_cast<int>(slot);
      e.model_id = iterations[i][slot].model_id;
      e.log_weight = iterations[i][slot].log_weight;
      e.prompt_tokens = iterations[i][slot].tokens;
      it.entries.push_back(std::move(e));
    }
    record.iterations.push_back(std::move(it));
  }
  return record;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::vector<std::string> fields;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) fields.push_back(cell);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

TEST_CASE("target_frequency_series counts the target's share per iteration") {
  RunRecord record = make_record("t", {{{"a"}, {"b"}, {"a"}, {"a"}},
                                       {{"b"}, {"b"}, {"b"}, {"b"}},
                                       {{"a"}, {"b"}}});
  const auto series = target_frequency_series(record, "a");
  REQUIRE(series.size() == 3);
  CHECK(series[0] == std::pair<int, double>{1, 0.75});
  CHECK(series[1] == std::pair<int, double>{2, 0.0});
  CHECK(series[2] == std::pair<int, double>{3, 0.5});
  CHECK(target_frequency_series(record, "never_proposed")[0].second == 0.0);
}

TEST_CASE("report_freq_csv aggregates runs and carries early-stopped runs forward") {
  // Run A reaches iteration 3, run B stops after iteration 2 at frequency 1.
  RunRecord a = make_record("t", {{{"a"}, {"b"}}, {{"a"}, {"a"}}, {{"b"}, {"b"}}});
  RunRecord b = make_record("t", {{{"a"}, {"a"}}, {{"a"}, {"a"}}});
  const auto rows = parse_csv(report_freq_csv({a, b}, "a"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"iteration", "mean_frequency", "min_frequency",
                                            "max_frequency"});
  // Iteration 1: frequencies 0.5 and 1.0.
  CHECK(rows[1][0] == "1");
  CHECK(std::stod(rows[1][1]) == doctest::Approx(0.75));
  CHECK(std::stod(rows[1][2]) == doctest::Approx(0.5));
  CHECK(std::stod(rows[1][3]) == doctest::Approx(1.0));
  // Iteration 3: run B carries its last frequency (1.0) forward.
  CHECK(rows[3][0] == "3");
  CHECK(std::stod(rows[3][1]) == doctest::Approx(0.5));
  CHECK(std::stod(rows[3][2]) == doctest::Approx(0.0));
  CHECK(std::stod(rows[3][3]) == doctest::Approx(1.0));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    CHECK(std::stod(rows[r][2]) <= std::stod(rows[r][1]));
    CHECK(std::stod(rows[r][1]) <= std::stod(rows[r][3]));
  }
}

TEST_CASE("report_freq_csv validates its inputs") {
  CHECK_THROWS_AS(report_freq_csv({}, "a"), std::invalid_argument);
  RunRecord a = make_record("task_one", {{{"a"}}});
  RunRecord b = make_record("task_two", {{{"a"}}});
  CHECK_THROWS_AS(report_freq_csv({a, b}, "a"), std::invalid_argument);
  RunRecord empty;
  empty.task_name = "task_one";
  CHECK_THROWS_AS(report_freq_csv({a, empty}, "a"), std::invalid_argument);
}

TEST_CASE("report_tokens_csv tracks the best metric along the cumulative token spend") {
  RunRecord log = make_record("t", {{{"a", -5.0, 100}, {"b", -3.0, 50}},
                                    {{"c", -4.0, 30}},
                                    {{"d", -1.0, 20}}});
  const auto rows = parse_csv(report_tokens_csv({log}, 1));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"cumulative_tokens", "mean_best_neg_log_marginal"});
  // Checkpoints at 150, 180, 200 tokens; best weights -3, -3, -1.
  CHECK(rows[1][0] == "150");
  CHECK(std::stod(rows[1][1]) == doctest::Approx(3.0));
  CHECK(rows[2][0] == "180");
  CHECK(std::stod(rows[2][1]) == doctest::Approx(3.0));
  CHECK(rows[3][0] == "200");
  CHECK(std::stod(rows[3][1]) == doctest::Approx(1.0));
  for (std::size_t r = 2; r < rows.size(); ++r) {
    CHECK(std::stod(rows[r][1]) <= std::stod(rows[r - 1][1]));  // best never worsens
  }
}

TEST_CASE("report_tokens_csv averages the best runs on the union token grid") {
  RunRecord good = make_record("t", {{{"a", -1.0, 10}}, {{"b", -1.0, 10}}});   // final 1.0
  RunRecord mid = make_record("t", {{{"a", -2.0, 15}}});                       // final 2.0
  RunRecord bad = make_record("t", {{{"a", -9.0, 10}}});                       // final 9.0
  const auto rows = parse_csv(report_tokens_csv({bad, good, mid}, 2));
  // Union grid of the two kept runs (good, mid): 10, 15, 20.
  REQUIRE(rows.size() == 4);
  CHECK(rows[1][0] == "10");
  CHECK(std::stod(rows[1][1]) == doctest::Approx(0.5 * (1.0 + 2.0)));  // mid carried back
  CHECK(rows[2][0] == "15");
  CHECK(std::stod(rows[2][1]) == doctest::Approx(0.5 * (1.0 + 2.0)));
  CHECK(rows[3][0] == "20");
  CHECK(std::stod(rows[3][1]) == doctest::Approx(0.5 * (1.0 + 2.0)));

  std::string warning;
  report_tokens_csv({good}, 5, &warning);
  CHECK(warning.find("1") != std::string::npos);
  CHECK(warning.find("5") != std::string::npos);
  warning.clear();
  report_tokens_csv({bad, good, mid}, 3, &warning);
  CHECK(warning.empty());

  CHECK_THROWS_AS(report_tokens_csv({}, 1), std::invalid_argument);
}

TEST_CASE("token-free fixed-pool runs collapse to a single zero-token checkpoint") {
  RunRecord log = make_record("t", {{{"a", -2.0, 0}, {"b", -1.0, 0}}, {{"a", -2.0, 0}}});
  const auto rows = parse_csv(report_tokens_csv({log}, 1));
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == "0");
  CHECK(std::stod(rows[1][1]) == doctest::Approx(1.0));
}

TEST_CASE("median handles odd and even sizes") {
  CHECK(median({3.0}) == 3.0);
  CHECK(median({5.0, 1.0, 3.0}) == 3.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
  CHECK_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("bootstrap_ci_median brackets the sample median deterministically") {
  std::vector<double> values;
  for (int i = 1; i <= 10; ++i) values.push_back(static_cast<double>(i));
  const double med = median(values);
  CHECK(med == doctest::Approx(5.5));
  const auto [lo, hi] = bootstrap_ci_median(values, 5000, 17);
  CHECK(lo <= med);
  CHECK(hi >= med);
  CHECK(lo >= 1.0);
  CHECK(hi <= 10.0);
  CHECK(lo < hi);

  // Same seed, same interval; a constant sample has a degenerate interval.
  CHECK(bootstrap_ci_median(values, 5000, 17) == std::make_pair(lo, hi));
  const auto degenerate = bootstrap_ci_median({2.0, 2.0, 2.0, 2.0}, 500, 3);
  CHECK(degenerate.first == 2.0);
  CHECK(degenerate.second == 2.0);
  CHECK_THROWS_AS(bootstrap_ci_median({}, 10, 0), std::invalid_argument);

  // A larger sample from a symmetric distribution: the 90% interval should
  // cover the true median for this fixed seed.
  RngStream rng = RngStream(9).derive(0, 0, "cisample");
  std::vector<double> draws(500);
  for (double& d : draws) d = rng.normal();
  const auto [nlo, nhi] = bootstrap_ci_median(draws, 5000, 17);
  CHECK(nlo < 0.0);
  CHECK(nhi > 0.0);
  CHECK(nhi - nlo < 0.5);
}

TEST_CASE("table_metrics_csv reports one row per method and skips empty groups") {
  std::vector<MetricGroup> groups;
  groups.push_back({"modelsmc", {1.0, 2.0, 3.0}});
  groups.push_back({"nothing_ran", {}});
  groups.push_back({"baseline", {4.0, 4.0, 4.0, 4.0}});
  std::string warning;
  const auto rows = parse_csv(table_metrics_csv(groups, 2000, 5, &warning));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"method", "n_runs", "median", "ci_low", "ci_high"});
  CHECK(rows[1][0] == "modelsmc");
  CHECK(rows[1][1] == "3");
  CHECK(std::stod(rows[1][2]) == doctest::Approx(2.0));
  CHECK(std::stod(rows[1][3]) <= 2.0);
  CHECK(std::stod(rows[1][4]) >= 2.0);
  CHECK(rows[2][0] == "baseline");
  CHECK(std::stod(rows[2][2]) == doctest::Approx(4.0));
  CHECK(warning.find("nothing_ran") != std::string::npos);

  // Two empty groups accumulate into one warning string.
  std::string many;
  table_metrics_csv({{"x", {}}, {"y", {}}}, 100, 0, &many);
  CHECK(many.find("x") != std::string::npos);
  CHECK(many.find("y") != std::string::npos);
  CHECK(many.find(";") != std::string::npos);
}
