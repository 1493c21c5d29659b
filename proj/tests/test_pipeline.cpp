#include <fstream>
#include <sstream>

#include "compsight/insight_store.hpp"
#include "compsight/outliers.hpp"
#include "compsight/pipeline.hpp"

#include "doctest.h"
#include "test_util.hpp"

using namespace compsight;

namespace {

// writes synthetic inputs and a config pointing at them
PipelineConfig synthetic_project(const testutil::TempDir& dir,
                                 std::uint64_t seed = 1) {
  SynthConfig sc;
  sc.n_clusters = 2;
  sc.companies_per_cluster = 10;
  sc.n_titles = 4;
  sc.n_regions = 3;
  sc.entries_lambda = 2.0;
  sc.inter_transition_rate = 0.1;
  sc.cluster_offset_sd = 0.15;
  sc.company_offset_sd = 0.05;
  sc.seed = seed;
  const auto data = generate(sc);
  {
    std::ofstream out(dir / "transitions.csv");
    write_transitions_csv(data.transitions, out);
  }
  {
    std::ofstream out(dir / "entries.csv");
    write_entries_csv(data.entries, out);
  }
  {
    std::ofstream out(dir / "ground_truth.json");
    write_ground_truth_json(data.truth, out);
  }
  PipelineConfig config;
  config.paths.transitions = (dir / "transitions.csv").string();
  config.paths.entries = (dir / "entries.csv").string();
  config.paths.ground_truth = (dir / "ground_truth.json").string();
  config.paths.output_dir = (dir / "out").string();
  config.embedding.dim = 6;
  config.embedding.negatives = 3;
  config.embedding.epochs = 4;
  config.embedding.seed = 11;
  config.thresholds = {10, 20, 25, 40};
  config.synth = sc;
  return config;
}

std::string artifact_bytes(const PipelineConfig& config,
                           const std::string& name) {
  return testutil::slurp(artifact_path(config, name));
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("outlier removal drops far-out entries in log space") {
  Rng rng(3);
  std::vector<CompensationEntry> entries;
  for (int i = 0; i < 20; ++i) {
    entries.push_back(make_entry("t", "r", "c", std::exp(rng.normal(11.0, 0.1))));
  }
  // one entry at 100x the cohort median
  entries.push_back(make_entry("t", "r", "c", std::exp(11.0) * 100.0));
  OutlierConfig config;  // iqr, k=3
  const auto [kept, report] = remove_outliers(entries, config);
  CHECK(report.examined == 21);
  CHECK(report.removed == 1);
  CHECK(kept.size() == 20);
  for (const auto& e : kept) CHECK(e.value < std::exp(11.0) * 50.0);

  SUBCASE("second pass removes nothing") {
    const auto [kept2, report2] = remove_outliers(kept, config);
    CHECK(report2.removed == 0);
    CHECK(kept2.size() == kept.size());
  }
}

TEST_CASE("outlier mode none is the identity") {
  std::vector<CompensationEntry> entries{
      make_entry("t", "r", "c", 1e5), make_entry("t", "r", "c", 1e9)};
  OutlierConfig config;
  config.mode = OutlierConfig::Mode::none;
  const auto [kept, report] = remove_outliers(entries, config);
  CHECK(kept.size() == 2);
  CHECK(report.removed == 0);
}

TEST_CASE("small cohorts are left untouched by the iqr filter") {
  std::vector<CompensationEntry> entries;
  for (int i = 0; i < 5; ++i) {
    entries.push_back(make_entry("t", "r", "c", 1e5));
  }
  entries.push_back(make_entry("t", "r", "c", 1e9));
  OutlierConfig config;  // min_cohort = 8 > 6 entries
  const auto [kept, report] = remove_outliers(entries, config);
  CHECK(report.removed == 0);
  CHECK(kept.size() == 6);
}

TEST_CASE("insight store: build, open, lookup") {
  std::map<CohortKey, CohortInsight> insights;
  for (int i = 0; i < 20; ++i) {
    const CohortKey key{"title" + std::to_string(i % 4), "r",
                        "c" + std::to_string(i)};
    insights.emplace(key,
                     make_insight(key, 11.0 + 0.01 * i, 0.04, i,
                                  i % 2 ? Provenance::smoothed
                                        : Provenance::inferred_no_data));
  }
  testutil::TempDir dir("store");
  InsightStore::build(insights, dir / "insights.jsonl", dir / "insights.idx");
  const auto store =
      InsightStore::open(dir / "insights.jsonl", dir / "insights.idx");
  CHECK(store.size() == 20);

  const CohortKey probe{"title1", "r", "c5"};
  const auto got = store.get(probe);
  REQUIRE(got.has_value());
  CHECK(got->log_mean == insights.at(probe).log_mean);
  CHECK(got->support == 5);

  // raw returns the exact serialized record
  const auto raw = store.raw(probe);
  REQUIRE(raw.has_value());
  CHECK(*raw == insight_line(insights.at(probe)));

  CHECK_FALSE(store.get({"nope", "r", "c5"}).has_value());
  CHECK(store.keys_for_title_region("title1", "r").size() == 5);
}

TEST_CASE("insight store build is byte-deterministic") {
  std::map<CohortKey, CohortInsight> insights;
  const CohortKey key{"t", "r", "c"};
  insights.emplace(key, make_insight(key, 11.0, 0.09, 3, Provenance::smoothed));
  testutil::TempDir dir("store2");
  InsightStore::build(insights, dir / "a.jsonl", dir / "a.idx");
  InsightStore::build(insights, dir / "b.jsonl", dir / "b.idx");
  CHECK(testutil::slurp(dir / "a.jsonl") == testutil::slurp(dir / "b.jsonl"));
  CHECK(testutil::slurp(dir / "a.idx") == testutil::slurp(dir / "b.idx"));
}

TEST_CASE("member counts and overrides round trip") {
  std::map<CohortKey, std::uint64_t> counts{
      {{"t", "r", "c1"}, 3}, {{"t", "r", "c2"}, 1}};
  std::ostringstream out;
  write_member_counts(counts, out);
  std::istringstream in(out.str());
  CHECK(read_member_counts(in) == counts);

  std::map<CohortKey, CohortInsight> insights;
  const CohortKey key{"t", "r", "c1"};
  insights.emplace(key, make_insight(key, 11.0, 0.04, 3, Provenance::smoothed));
  std::istringstream overrides(
      R"({"action":"delete","title":"t","region":"r","company":"c1"})"
      "\n"
      R"({"action":"add","title":"t","region":"r","company":"c9","log_mean":11.5,"log_variance":0.02,"support":0})"
      "\n");
  apply_insight_overrides(insights, overrides);
  CHECK(insights.count(key) == 0);
  CHECK(insights.count({"t", "r", "c9"}) == 1);
  CHECK(insights.at({"t", "r", "c9"}).provenance == Provenance::empirical);
}

TEST_CASE("config json round trip and dotted overrides") {
  PipelineConfig config;
  config.bayes.delta = 12.5;
  config.paths.entries = "x.csv";
  const auto j = config.to_json();
  const auto back = PipelineConfig::from_json(j);
  CHECK(back.bayes.delta == 12.5);
  CHECK(back.paths.entries == "x.csv");

  PipelineConfig c2;
  c2.set("bayes.delta", "25");
  CHECK(c2.bayes.delta == 25.0);
  c2.set("paths.output_dir", "elsewhere");
  CHECK(c2.paths.output_dir == "elsewhere");
  c2.set("embedding.lr_decay", "linear_to_zero");
  CHECK(c2.embedding.lr_decay == LrDecay::linear_to_zero);
  CHECK_THROWS_AS(c2.set("no.such.key", "1"), ConfigError);
}

TEST_CASE("full pipeline run is deterministic and resumable") {
  testutil::TempDir dir("pipe");
  auto config = synthetic_project(dir);
  std::ostringstream log;
  REQUIRE(run_pipeline(config, log) == kExitOk);

  const std::vector<std::string> artifacts{
      "transitions_clean.csv", "entries_clean.csv", "trc.jsonl",
      "model.bin",             "peers.jsonl",       "insights.jsonl",
      "insights.idx",          "coverage_report.json"};
  std::map<std::string, std::string> first_run;
  for (const auto& name : artifacts) {
    first_run[name] = artifact_bytes(config, name);
    CHECK(!first_run[name].empty());
  }

  SUBCASE("second run resumes every stage without changing artifacts") {
    std::ostringstream log2;
    REQUIRE(run_pipeline(config, log2) == kExitOk);
    CHECK(log2.str().find("skipped") != std::string::npos);
    for (const auto& name : artifacts) {
      CHECK(artifact_bytes(config, name) == first_run[name]);
    }
  }

  SUBCASE("fresh output dir reproduces identical artifacts") {
    auto config2 = config;
    config2.paths.output_dir = (dir / "out2").string();
    std::ostringstream log2;
    REQUIRE(run_pipeline(config2, log2) == kExitOk);
    for (const auto& name : artifacts) {
      CHECK(artifact_bytes(config2, name) == first_run[name]);
    }
  }

  SUBCASE("resume after deleting a late artifact only reruns downstream") {
    std::filesystem::remove(artifact_path(config, "insights.idx"));
    std::ostringstream log2;
    REQUIRE(run_pipeline(config, log2) == kExitOk);
    CHECK(artifact_bytes(config, "insights.idx") == first_run["insights.idx"]);
    // upstream stages skipped, store stage re-ran
    std::istringstream lines(log2.str());
    std::string line;
    while (std::getline(lines, line)) {
      if (line.find("\"stage\":\"embeddings\"") != std::string::npos) {
        CHECK(line.find("skipped") != std::string::npos);
      }
      if (line.find("\"stage\":\"store\"") != std::string::npos) {
        CHECK(line.find("skipped") == std::string::npos);
      }
    }
  }

  SUBCASE("query returns the stored record verbatim") {
    const auto store = InsightStore::open(artifact_path(config, "insights.jsonl"),
                                          artifact_path(config, "insights.idx"));
    const auto keys = store.keys();
    REQUIRE(!keys.empty());
    const auto& key = keys.front();
    const auto result = query_store(config.paths.output_dir, key.title,
                                    key.region, key.company, 3);
    CHECK(result.found);
    CHECK(result.record == *store.raw(key));
    for (std::size_t i = 1; i < result.related.size(); ++i) {
      CHECK(result.related[i - 1].first.score >=
            result.related[i].first.score);
    }
    // unknown company gives a hint for the same (title, region)
    const auto miss = query_store(config.paths.output_dir, key.title,
                                  key.region, "does-not-exist", 3);
    CHECK_FALSE(miss.found);
    CHECK(!miss.hint.empty());
  }

  SUBCASE("coverage report counts with-data vs inferred-only") {
    std::ifstream in(artifact_path(config, "coverage_report.json"));
    const auto j = nlohmann::json::parse(in);
    CHECK(j["cohorts_with_data"].get<std::uint64_t>() > 0);
    CHECK(j["cohorts_inferred_only"].get<std::uint64_t>() > 0);
    CHECK(j["cohorts_total"] ==
          j["cohorts_with_data"].get<std::uint64_t>() +
              j["cohorts_inferred_only"].get<std::uint64_t>());
  }
}

TEST_CASE("stage failure carries the stage name and exit contract") {
  testutil::TempDir dir("pipefail");
  PipelineConfig config;
  config.paths.transitions = (dir / "missing.csv").string();
  config.paths.entries = (dir / "missing2.csv").string();
  config.paths.output_dir = (dir / "out").string();
  std::ostringstream log;
  CHECK_THROWS_AS(run_pipeline(config, log), StageFailure);
  try {
    run_pipeline(config, log);
  } catch (const StageFailure& e) {
    CHECK(e.stage() == "ingest");
  }
}

TEST_SUITE_END();
