#include <cmath>
#include <sstream>

#include "compsight/peer_groups.hpp"
#include "compsight/synth_gen.hpp"

#include "doctest.h"

using namespace compsight;

namespace {

double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

EmbeddingModel random_model(std::uint32_t dim, std::uint32_t n,
                            std::uint64_t seed) {
  std::vector<CompanyId> ids;
  for (std::uint32_t i = 0; i < n; ++i) {
    ids.push_back("c" + std::string(1, static_cast<char>('a' + i)));
  }
  EmbeddingConfig config;
  config.dim = dim;
  EmbeddingModel model(config, std::move(ids));
  Rng rng(seed);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (auto& x : model.phi_mut(i)) x = rng.uniform(-1.5, 1.5);
    for (auto& x : model.psi_mut(i)) x = rng.uniform(-1.5, 1.5);
  }
  return model;
}

// brute-force oracle over the peer-score formula with test-side arithmetic
double ref_peer_score(const EmbeddingModel& m, std::uint32_t u,
                      std::uint32_t v) {
  auto dot = [&](std::uint32_t a, std::uint32_t b) {
    double s = 0.0;
    for (std::uint32_t d = 0; d < m.dim(); ++d) {
      s += m.phi(a)[d] * m.psi(b)[d];
    }
    return s;
  };
  auto max_dot = [&](std::uint32_t a) {
    double best = -1e300;
    for (std::uint32_t w = 0; w < m.company_count(); ++w) {
      if (w != a) best = std::max(best, dot(a, w));
    }
    return best;
  };
  return ref_sigmoid(dot(u, v)) / ref_sigmoid(max_dot(u)) *
         (ref_sigmoid(dot(v, u)) / ref_sigmoid(max_dot(v)));
}

}  // namespace

TEST_SUITE_BEGIN("peer_groups");

TEST_CASE("min_score=0 with max_size=|C|-1 ranks every other company") {
  const auto model = random_model(3, 6, 123);
  const auto groups = build_peer_groups(model, 0.0, 5);
  REQUIRE(groups.size() == 6);
  for (const auto& [company, group] : groups) {
    CHECK(group.peers.size() == 5);
    for (const auto& p : group.peers) CHECK(p.id != company);
    for (std::size_t i = 1; i < group.peers.size(); ++i) {
      CHECK(group.peers[i - 1].score >= group.peers[i].score);
    }
  }
}

TEST_CASE("mutual top choice pair leads each other's list with score 1") {
  EmbeddingConfig config;
  config.dim = 2;
  EmbeddingModel model(config, {"a", "b", "c"});
  auto set = [&](std::span<double> dst, double x, double y) {
    dst[0] = x;
    dst[1] = y;
  };
  set(model.phi_mut(0), 1.0, 0.0);
  set(model.phi_mut(1), 0.0, 1.0);
  set(model.phi_mut(2), -1.0, -1.0);
  set(model.psi_mut(0), 0.0, 3.0);
  set(model.psi_mut(1), 2.0, 0.0);
  set(model.psi_mut(2), -1.0, -1.0);
  const auto groups = build_peer_groups(model, 0.0, 2);
  CHECK(groups.at("a").peers.front().id == "b");
  CHECK(groups.at("a").peers.front().score == 1.0);
  CHECK(groups.at("b").peers.front().id == "a");
  CHECK(groups.at("b").peers.front().score == 1.0);
}

TEST_CASE("groups match the brute-force all-pairs oracle") {
  const auto model = random_model(4, 7, 99);
  const auto groups = build_peer_groups(model, 0.0, 6);
  for (std::uint32_t u = 0; u < 7; ++u) {
    const auto& group = groups.at(model.id_of(u));
    REQUIRE(group.peers.size() == 6);
    // collect oracle scores, sort desc with id tie-break
    std::vector<std::pair<double, CompanyId>> expected;
    for (std::uint32_t v = 0; v < 7; ++v) {
      if (v == u) continue;
      expected.push_back({ref_peer_score(model, u, v), model.id_of(v)});
    }
    std::sort(expected.begin(), expected.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(group.peers[i].id == expected[i].second);
      CHECK(group.peers[i].score ==
            doctest::Approx(expected[i].first).epsilon(1e-12));
    }
  }
}

TEST_CASE("score mutuality across lists") {
  const auto model = random_model(3, 8, 555);
  const auto groups = build_peer_groups(model, 0.0, 7);
  for (const auto& [cu, gu] : groups) {
    for (const auto& p : gu.peers) {
      const auto& gv = groups.at(p.id);
      for (const auto& q : gv.peers) {
        if (q.id == cu) {
          CHECK(q.score == p.score);  // exact
        }
      }
    }
  }
}

TEST_CASE("monotonicity in min_score and max_size") {
  const auto model = random_model(3, 8, 777);
  const auto base = build_peer_groups(model, 0.05, 7);
  const auto stricter = build_peer_groups(model, 0.3, 7);
  const auto smaller = build_peer_groups(model, 0.05, 3);
  for (const auto& [c, g] : stricter) {
    // raising min_score never adds a peer
    CHECK(g.peers.size() <= base.at(c).peers.size());
    for (const auto& p : g.peers) CHECK(p.score >= 0.3);
  }
  for (const auto& [c, g] : smaller) {
    CHECK(g.peers.size() <= 3);
    // the truncated list is a prefix of the full one
    const auto& full = base.at(c).peers;
    for (std::size_t i = 0; i < g.peers.size(); ++i) {
      CHECK(g.peers[i].id == full[i].id);
    }
  }
}

TEST_CASE("parallel kernel matches the serial reference") {
  const auto model = random_model(6, 24, 4242);
  const auto serial = build_peer_groups(model, 0.01, 10, 1);
  const auto parallel = build_peer_groups(model, 0.01, 10, 4);
  REQUIRE(serial.size() == parallel.size());
  for (const auto& [c, g] : serial) {
    const auto& pg = parallel.at(c);
    REQUIRE(g.peers.size() == pg.peers.size());
    for (std::size_t i = 0; i < g.peers.size(); ++i) {
      CHECK(g.peers[i].id == pg.peers[i].id);
      CHECK(g.peers[i].score == pg.peers[i].score);  // bitwise
    }
  }
}

TEST_CASE("related_companies") {
  const auto model = random_model(3, 5, 31);
  const auto groups = build_peer_groups(model, 0.0, 4);
  CHECK(related_companies(groups, "ca", 0).empty());
  CHECK(related_companies(groups, "ca", 100).size() == 4);
  CHECK(related_companies(groups, "ca", 2).size() == 2);
  CHECK_THROWS_AS(related_companies(groups, "nope", 3), NotFoundError);
}

TEST_CASE("top peers of a clustered company stay in its cluster") {
  SynthConfig sc;
  sc.n_clusters = 2;
  sc.companies_per_cluster = 12;
  sc.intra_transition_rate = 5.0;
  sc.inter_transition_rate = 0.1;
  sc.seed = 8;
  const auto data = generate(sc);
  EmbeddingConfig config;
  config.dim = 8;
  config.negatives = 3;
  config.epochs = 10;
  config.seed = 5;
  const auto model = fit(data.transitions, config);
  const auto groups = build_peer_groups(model, 0.0, 5);
  // oracle: planted cluster labels; the whole top-5 should sit inside the
  // company's own cluster for nearly every company
  std::size_t all_intra = 0, total = 0;
  for (const auto& [c, g] : groups) {
    if (g.peers.empty()) continue;
    ++total;
    bool intra = true;
    for (const auto& p : g.peers) {
      if (data.truth.cluster_of.at(p.id) != data.truth.cluster_of.at(c)) {
        intra = false;
      }
    }
    if (intra) ++all_intra;
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(all_intra) / static_cast<double>(total) > 0.9);
}

TEST_CASE("jsonl round trip preserves groups to 6 decimals") {
  const auto model = random_model(3, 6, 2021);
  const auto groups = build_peer_groups(model, 0.0, 5);
  std::ostringstream out;
  write_peer_groups_jsonl(groups, out);
  std::istringstream in(out.str());
  const auto back = read_peer_groups_jsonl(in);
  REQUIRE(back.size() == groups.size());
  for (const auto& [c, g] : groups) {
    const auto& bg = back.at(c);
    REQUIRE(bg.peers.size() == g.peers.size());
    for (std::size_t i = 0; i < g.peers.size(); ++i) {
      CHECK(bg.peers[i].id == g.peers[i].id);
      CHECK(bg.peers[i].score == doctest::Approx(g.peers[i].score).epsilon(1e-6));
    }
  }
}

TEST_SUITE_END();
