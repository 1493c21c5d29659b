#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "compsight/bayes_smoothing.hpp"

namespace compsight {

// File-backed key-value store over insights: a JSONL file sorted by
// (title, region, company) plus a TSV sidecar index of byte offsets.
// Both files are byte-deterministic for identical inputs.
class InsightStore {
 public:
  static void build(const std::map<CohortKey, CohortInsight>& insights,
                    const std::filesystem::path& jsonl_path,
                    const std::filesystem::path& index_path);

  // Indexes an existing insights JSONL file without rewriting it.
  static void index_jsonl(const std::filesystem::path& jsonl_path,
                          const std::filesystem::path& index_path);

  static InsightStore open(const std::filesystem::path& jsonl_path,
                           const std::filesystem::path& index_path);

  std::size_t size() const { return index_.size(); }

  // Exact-key lookup; nullopt when absent.
  std::optional<CohortInsight> get(const CohortKey& key) const;
  // The exact serialized record bytes (no trailing newline).
  std::optional<std::string> raw(const CohortKey& key) const;

  // Keys sharing (title, region); used for the nearest-cohort hint.
  std::vector<CohortKey> keys_for_title_region(const std::string& title,
                                               const std::string& region) const;
  std::vector<CohortKey> keys() const;

 private:
  struct IndexEntry {
    CohortKey key;
    std::uint64_t offset;
    std::uint64_t length;
  };
  std::filesystem::path jsonl_path_;
  std::vector<IndexEntry> index_;  // sorted by key
};

}  // namespace compsight
