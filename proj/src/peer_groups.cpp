#include "compsight/peer_groups.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "compsight/csv.hpp"
#include "compsight/stats.hpp"

namespace compsight {

namespace {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += a[d] * b[d];
  return s;
}

struct ScoredPeer {
  std::uint32_t index;
  double score;
};

// Row u of the score matrix, filtered and truncated. `maxima` must come
// from max_origin_dots so every factor is computed exactly as peer_score
// computes it.
std::vector<ScoredPeer> score_row(const EmbeddingModel& model,
                                  std::uint32_t u,
                                  const std::vector<double>& maxima,
                                  double min_score, std::uint32_t max_size) {
  const auto nc = static_cast<std::uint32_t>(model.company_count());
  const auto phi_u = model.phi(u);
  const auto psi_u = model.psi(u);
  const double denom_u = sigmoid(maxima[u]);
  std::vector<ScoredPeer> row;
  for (std::uint32_t v = 0; v < nc; ++v) {
    if (v == u) continue;
    const double forward = sigmoid(dot(phi_u, model.psi(v))) / denom_u;
    const double backward =
        sigmoid(dot(model.phi(v), psi_u)) / sigmoid(maxima[v]);
    const double score = forward * backward;
    if (score >= min_score) row.push_back({v, score});
  }
  std::sort(row.begin(), row.end(),
            [&](const ScoredPeer& a, const ScoredPeer& b) {
              if (a.score != b.score) return a.score > b.score;
              return model.id_of(a.index) < model.id_of(b.index);
            });
  if (row.size() > max_size) row.resize(max_size);
  return row;
}

}  // namespace

PeerGroups build_peer_groups(const EmbeddingModel& model, double min_score,
                             std::uint32_t max_size, std::uint32_t threads) {
  if (min_score < 0.0 || min_score > 1.0) {
    throw ConfigError("min_score must lie in [0,1]");
  }
  if (max_size < 1) throw ConfigError("max_size must be >= 1");

  const auto nc = static_cast<std::uint32_t>(model.company_count());
  const auto maxima = max_origin_dots(model, threads);
  std::vector<std::vector<ScoredPeer>> rows(nc);

  if (threads == 1) {
    for (std::uint32_t u = 0; u < nc; ++u) {
      rows[u] = score_row(model, u, maxima, min_score, max_size);
    }
  } else {
#ifdef _OPENMP
    omp_set_num_threads(threads == 0 ? omp_get_max_threads()
                                     : static_cast<int>(threads));
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (std::int64_t u = 0; u < nc; ++u) {
      rows[static_cast<std::size_t>(u)] = score_row(
          model, static_cast<std::uint32_t>(u), maxima, min_score, max_size);
    }
  }

  PeerGroups groups;
  for (std::uint32_t u = 0; u < nc; ++u) {
    PeerGroup g;
    g.company = model.id_of(u);
    g.min_score = min_score;
    g.max_size = max_size;
    g.peers.reserve(rows[u].size());
    for (const auto& sp : rows[u]) {
      g.peers.push_back({model.id_of(sp.index), sp.score});
    }
    groups.emplace(g.company, std::move(g));
  }
  return groups;
}

std::vector<PeerEntry> related_companies(const PeerGroups& groups,
                                         const CompanyId& c, std::size_t k) {
  auto it = groups.find(c);
  if (it == groups.end()) {
    throw NotFoundError("no peer group for company: " + c);
  }
  const auto& peers = it->second.peers;
  const std::size_t n = std::min(k, peers.size());
  return {peers.begin(), peers.begin() + static_cast<std::ptrdiff_t>(n)};
}

void write_peer_groups_jsonl(const PeerGroups& groups, std::ostream& out) {
  for (const auto& [company, group] : groups) {
    out << "{\"company\":" << nlohmann::json(company).dump() << ",\"peers\":[";
    for (std::size_t i = 0; i < group.peers.size(); ++i) {
      const auto& p = group.peers[i];
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", p.score);
      if (i > 0) out << ',';
      out << "{\"id\":" << nlohmann::json(p.id).dump() << ",\"score\":" << buf
          << '}';
    }
    out << "]}\n";
  }
}

PeerGroups read_peer_groups_jsonl(std::istream& in) {
  PeerGroups groups;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line, line_no)) {
    nlohmann::json j = nlohmann::json::parse(line);
    PeerGroup g;
    g.company = j.at("company").get<std::string>();
    for (const auto& p : j.at("peers")) {
      g.peers.push_back(
          {p.at("id").get<std::string>(), p.at("score").get<double>()});
    }
    groups.emplace(g.company, std::move(g));
  }
  return groups;
}

std::uint64_t peer_support(
    const PeerGroups& groups, const CompanyId& c,
    const std::map<CompanyId, std::uint64_t>& n_by_company) {
  auto it = groups.find(c);
  if (it == groups.end()) return 0;
  std::uint64_t total = 0;
  for (const auto& p : it->second.peers) {
    auto nit = n_by_company.find(p.id);
    if (nit != n_by_company.end()) total += nit->second;
  }
  return total;
}

}  // namespace compsight
