#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "compsight/common.hpp"

#include "json.hpp"

namespace compsight {

// One directed company-to-company move by one member.
struct TransitionRecord {
  std::string member;  // optional, may be empty
  CompanyId origin;
  CompanyId destination;
  std::int64_t order = 0;  // sequence index within the member history
};

// Directed pair with multiplicity: count rows of (origin, destination).
struct PairCount {
  std::uint32_t origin;
  std::uint32_t destination;
  std::uint64_t count;
};

// Immutable once built. Companies are interned to dense indices sorted by
// id, so identical input multisets produce identical datasets regardless of
// row order.
class TransitionDataset {
 public:
  const std::vector<CompanyId>& companies() const { return companies_; }
  std::size_t company_count() const { return companies_.size(); }
  // Sorted by (origin, destination).
  const std::vector<PairCount>& pairs() const { return pairs_; }
  std::uint64_t total_transitions() const { return total_transitions_; }

  std::optional<std::uint32_t> index_of(const CompanyId& id) const;
  const CompanyId& id_of(std::uint32_t index) const {
    return companies_[index];
  }

  // Companies sharing any transition with `c` (either direction); sorted.
  std::span<const std::uint32_t> adjacency(std::uint32_t c) const;
  bool adjacent(std::uint32_t a, std::uint32_t b) const;

  // Appearances as origin plus as destination, with multiplicity.
  std::uint64_t occurrences(std::uint32_t c) const {
    return occurrence_[c];
  }

  std::uint64_t pair_count(std::uint32_t origin, std::uint32_t dest) const;

  // Expands the pair multiset into one entry per transition.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> expand_pairs() const;

  struct Builder {
    // Self-loops are dropped and counted, not stored.
    void add(const CompanyId& origin, const CompanyId& destination,
             std::uint64_t count = 1);
    // Registers a company that may end up with no pairs.
    void touch(const CompanyId& id) { isolated.push_back(id); }
    TransitionDataset build() &&;

    std::vector<std::pair<CompanyId, CompanyId>> raw_pairs;
    std::vector<CompanyId> isolated;
    std::uint64_t self_loops_dropped = 0;
  };

  std::uint64_t self_loops_dropped() const { return self_loops_dropped_; }

 private:
  std::vector<CompanyId> companies_;  // sorted
  std::unordered_map<CompanyId, std::uint32_t> index_;
  std::vector<PairCount> pairs_;
  std::vector<std::uint32_t> adj_flat_;
  std::vector<std::size_t> adj_offsets_;  // size company_count()+1
  std::vector<std::uint64_t> occurrence_;
  std::uint64_t total_transitions_ = 0;
  std::uint64_t self_loops_dropped_ = 0;
};

enum class TransitionFormat { csv, jsonl };
enum class OnRowError { fail_fast, skip_and_report };

struct ParseReport {
  std::uint64_t rows_read = 0;
  std::uint64_t rows_used = 0;
  std::uint64_t self_loops_dropped = 0;
  std::uint64_t malformed_skipped = 0;
  std::vector<std::string> messages;  // capped
  void note(std::size_t line, const std::string& msg);
};

// CSV columns: origin,destination[,member,order]. JSONL fields: "origin",
// "destination", optional "member"/"order". A header row starting with
// "origin" is skipped. Empty input yields an empty dataset.
TransitionDataset parse_transitions(std::istream& in, TransitionFormat format,
                                    OnRowError on_error = OnRowError::fail_fast,
                                    ParseReport* report = nullptr);

// Consecutive distinct pairs of each time-ordered history; consecutive
// duplicates are collapsed first (an in-company move is not a transition).
TransitionDataset derive_transitions_from_histories(
    const std::vector<std::pair<std::string, std::vector<CompanyId>>>&
        histories);

enum class OccurrenceCounting { combined, origin_only, destination_only };

// Single pass: companies whose occurrence count is below min_occurrences are
// removed together with every pair touching them. Not iterated to a
// fixpoint, so survivors may fall below the threshold afterwards.
TransitionDataset filter_by_frequency(
    const TransitionDataset& dataset, std::uint64_t min_occurrences,
    OccurrenceCounting counting = OccurrenceCounting::combined);

// One row per transition (count-expanded) so that parse(serialize(d)) == d.
void write_transitions_csv(const TransitionDataset& dataset, std::ostream& out);

nlohmann::json dataset_summary(const TransitionDataset& dataset,
                               const ParseReport* report = nullptr);

}  // namespace compsight
