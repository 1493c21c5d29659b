#include <cmath>
#include <set>
#include <sstream>

#include "compsight/synth_gen.hpp"

#include "doctest.h"

using namespace compsight;

TEST_SUITE_BEGIN("synth_gen");

TEST_CASE("zero inter rate keeps clusters disconnected") {
  SynthConfig sc;
  sc.n_clusters = 2;
  sc.companies_per_cluster = 6;
  sc.intra_transition_rate = 3.0;
  sc.inter_transition_rate = 0.0;
  sc.seed = 1;
  const auto data = generate(sc);
  for (const auto& p : data.transitions.pairs()) {
    const auto& cu = data.transitions.id_of(p.origin);
    const auto& cv = data.transitions.id_of(p.destination);
    CHECK(data.truth.cluster_of.at(cu) == data.truth.cluster_of.at(cv));
  }
}

TEST_CASE("near-zero noise pins entries to the planted means") {
  SynthConfig sc;
  sc.n_clusters = 1;
  sc.companies_per_cluster = 4;
  sc.n_titles = 2;
  sc.n_regions = 2;
  sc.noise_sd = 1e-9;
  sc.company_offset_sd = 1e-9;
  sc.entries_dist = SynthConfig::EntriesDist::fixed;
  sc.entries_fixed = 2;
  sc.seed = 2;
  const auto data = generate(sc);
  REQUIRE(!data.entries.empty());
  for (const auto& e : data.entries) {
    const double mean =
        data.truth.true_trc_mean.at({e.cohort.title, e.cohort.region});
    CHECK(e.log_value == doctest::Approx(mean).epsilon(1e-6));
  }
}

TEST_CASE("per-pair transition counts concentrate near the Poisson rate") {
  SynthConfig sc;
  sc.n_clusters = 1;
  sc.companies_per_cluster = 30;
  sc.intra_transition_rate = 8.0;
  sc.inter_transition_rate = 0.1;  // unused with a single cluster
  sc.seed = 3;
  const auto data = generate(sc);
  std::size_t ok = 0, total = 0;
  for (std::uint32_t u = 0; u < data.transitions.company_count(); ++u) {
    for (std::uint32_t v = 0; v < data.transitions.company_count(); ++v) {
      if (u == v) continue;
      ++total;
      const auto n = static_cast<double>(data.transitions.pair_count(u, v));
      if (std::abs(n - 8.0) <= 3.0 * std::sqrt(8.0)) ++ok;
    }
  }
  CHECK(static_cast<double>(ok) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("generation is deterministic in the seed") {
  SynthConfig sc;
  sc.seed = 99;
  sc.companies_per_cluster = 5;
  sc.n_titles = 3;
  sc.n_regions = 2;
  const auto d1 = generate(sc);
  const auto d2 = generate(sc);
  REQUIRE(d1.entries.size() == d2.entries.size());
  for (std::size_t i = 0; i < d1.entries.size(); ++i) {
    CHECK(d1.entries[i].value == d2.entries[i].value);
    CHECK(d1.entries[i].cohort == d2.entries[i].cohort);
  }
  CHECK(d1.transitions.total_transitions() == d2.transitions.total_transitions());
}

TEST_CASE("ground truth covers every generated entity") {
  SynthConfig sc;
  sc.companies_per_cluster = 4;
  sc.n_titles = 3;
  sc.n_regions = 2;
  sc.seed = 7;
  const auto data = generate(sc);
  CHECK(data.truth.cluster_of.size() == 8);
  CHECK(data.truth.true_company_offset.size() == 8);
  CHECK(data.truth.true_trc_mean.size() == 6);
  for (const auto& e : data.entries) {
    CHECK_NOTHROW(data.truth.true_log_mean(e.cohort));
  }
}

TEST_CASE("holdout removes whole cohorts and partitions the data") {
  SynthConfig sc;
  sc.companies_per_cluster = 6;
  sc.n_titles = 4;
  sc.n_regions = 2;
  sc.seed = 5;
  const auto data = generate(sc);
  const auto h = holdout_empty_cohorts(data.entries, data.truth, 0.3, 11);

  CHECK(h.visible.size() + h.hidden_entries.size() == data.entries.size());
  std::set<CohortKey> visible_keys, hidden_keys;
  for (const auto& e : h.visible) visible_keys.insert(e.cohort);
  for (const auto& e : h.hidden_entries) hidden_keys.insert(e.cohort);
  for (const auto& key : hidden_keys) {
    CHECK(visible_keys.count(key) == 0);
    CHECK(h.hidden.count(key) == 1);
  }
  // hidden truth matches the generator
  for (const auto& [key, dist] : h.hidden) {
    CHECK(dist.first == doctest::Approx(data.truth.true_log_mean(key)));
    CHECK(dist.second == data.truth.true_noise_sd);
  }

  SUBCASE("fraction zero hides nothing") {
    const auto none = holdout_empty_cohorts(data.entries, data.truth, 0.0, 11);
    CHECK(none.hidden.empty());
    CHECK(none.visible.size() == data.entries.size());
  }
  SUBCASE("deterministic under seed") {
    const auto h2 = holdout_empty_cohorts(data.entries, data.truth, 0.3, 11);
    CHECK(h2.hidden == h.hidden);
  }
}

TEST_CASE("cluster offsets shift companies coherently") {
  SynthConfig sc;
  sc.n_clusters = 2;
  sc.companies_per_cluster = 20;
  sc.cluster_offset_sd = 1.0;
  sc.company_offset_sd = 0.01;
  sc.seed = 13;
  const auto data = generate(sc);
  double mean0 = 0.0, mean1 = 0.0;
  for (const auto& [c, offset] : data.truth.true_company_offset) {
    if (data.truth.cluster_of.at(c) == 0) mean0 += offset;
    else mean1 += offset;
  }
  mean0 /= 20.0;
  mean1 /= 20.0;
  // within-cluster offsets hug the cluster mean
  for (const auto& [c, offset] : data.truth.true_company_offset) {
    const double center = data.truth.cluster_of.at(c) == 0 ? mean0 : mean1;
    CHECK(std::abs(offset - center) < 0.1);
  }
}

TEST_CASE("ground truth json round trip") {
  SynthConfig sc;
  sc.companies_per_cluster = 3;
  sc.n_titles = 2;
  sc.n_regions = 2;
  sc.seed = 23;
  const auto data = generate(sc);
  std::ostringstream out;
  write_ground_truth_json(data.truth, out);
  std::istringstream in(out.str());
  const auto back = read_ground_truth_json(in);
  CHECK(back.cluster_of == data.truth.cluster_of);
  CHECK(back.true_trc_mean == data.truth.true_trc_mean);
  CHECK(back.true_company_offset == data.truth.true_company_offset);
  CHECK(back.true_noise_sd == data.truth.true_noise_sd);
}

TEST_CASE("config validation") {
  SynthConfig sc;
  sc.inter_transition_rate = 10.0;  // must stay below intra
  CHECK_THROWS_AS(generate(sc), ConfigError);
  SynthConfig sc2;
  sc2.n_titles = 0;
  CHECK_THROWS_AS(generate(sc2), ConfigError);
}

TEST_SUITE_END();
