#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include "compsight/company2vec.hpp"

namespace compsight {

struct PeerEntry {
  CompanyId id;
  double score;  // in [0, 1]
};

// Peers of one company: descending by score, ties broken by id, the company
// itself excluded, every score >= min_score.
struct PeerGroup {
  CompanyId company;
  std::vector<PeerEntry> peers;
  double min_score = 0.0;
  std::uint32_t max_size = 0;
};

using PeerGroups = std::map<CompanyId, PeerGroup>;

// All-pairs scoring; O(|C|^2 * dim). threads=1 runs the serial reference
// kernel, larger values the parallel one; output is identical either way.
PeerGroups build_peer_groups(const EmbeddingModel& model, double min_score,
                             std::uint32_t max_size, std::uint32_t threads = 1);

// First min(k, group size) peers of c. Throws NotFound for unknown company.
std::vector<PeerEntry> related_companies(const PeerGroups& groups,
                                         const CompanyId& c, std::size_t k);

// {"company": id, "peers": [{"id":..., "score":...}]} with scores printed
// to 6 decimal places.
void write_peer_groups_jsonl(const PeerGroups& groups, std::ostream& out);
PeerGroups read_peer_groups_jsonl(std::istream& in);

// Total submissions behind the peers of c: sum of n_{c'} over peers.
std::uint64_t peer_support(const PeerGroups& groups, const CompanyId& c,
                           const std::map<CompanyId, std::uint64_t>& n_by_company);

}  // namespace compsight
