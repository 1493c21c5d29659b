#include "compsight/insight_store.hpp"

#include <algorithm>
#include <fstream>

namespace compsight {

void InsightStore::build(const std::map<CohortKey, CohortInsight>& insights,
                         const std::filesystem::path& jsonl_path,
                         const std::filesystem::path& index_path) {
  std::ofstream jsonl(jsonl_path, std::ios::binary);
  if (!jsonl) throw IoError("cannot write store: " + jsonl_path.string());
  std::ofstream index(index_path, std::ios::binary);
  if (!index) throw IoError("cannot write index: " + index_path.string());

  std::uint64_t offset = 0;
  for (const auto& [key, ins] : insights) {
    const std::string line = insight_line(ins);
    jsonl << line << '\n';
    index << key.title << '\t' << key.region << '\t' << key.company << '\t'
          << offset << '\t' << line.size() << '\n';
    offset += line.size() + 1;
  }
  if (!jsonl || !index) {
    throw IoError("store write failed: " + jsonl_path.string());
  }
}

void InsightStore::index_jsonl(const std::filesystem::path& jsonl_path,
                               const std::filesystem::path& index_path) {
  std::ifstream jsonl(jsonl_path, std::ios::binary);
  if (!jsonl) throw IoError("cannot open store: " + jsonl_path.string());
  std::ofstream index(index_path, std::ios::binary);
  if (!index) throw IoError("cannot write index: " + index_path.string());
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(jsonl, line)) {
    if (!line.empty()) {
      const auto ins = parse_insight_line(line);
      index << ins.cohort.title << '\t' << ins.cohort.region << '\t'
            << ins.cohort.company << '\t' << offset << '\t' << line.size()
            << '\n';
    }
    offset += line.size() + 1;
  }
  if (!index) throw IoError("index write failed: " + index_path.string());
}

InsightStore InsightStore::open(const std::filesystem::path& jsonl_path,
                                const std::filesystem::path& index_path) {
  InsightStore store;
  store.jsonl_path_ = jsonl_path;
  std::ifstream index(index_path);
  if (!index) throw IoError("cannot open index: " + index_path.string());
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    IndexEntry entry;
    std::size_t pos = 0;
    auto next_field = [&](bool last = false) {
      const auto tab = last ? line.size() : line.find('\t', pos);
      if (tab == std::string::npos) {
        throw IoError("malformed index line: " + line);
      }
      std::string field = line.substr(pos, tab - pos);
      pos = tab + 1;
      return field;
    };
    entry.key.title = next_field();
    entry.key.region = next_field();
    entry.key.company = next_field();
    entry.offset = std::stoull(next_field());
    entry.length = std::stoull(next_field(true));
    store.index_.push_back(std::move(entry));
  }
  std::sort(store.index_.begin(), store.index_.end(),
            [](const IndexEntry& a, const IndexEntry& b) {
              return a.key < b.key;
            });
  return store;
}

std::optional<std::string> InsightStore::raw(const CohortKey& key) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), key,
                             [](const IndexEntry& e, const CohortKey& k) {
                               return e.key < k;
                             });
  if (it == index_.end() || it->key != key) return std::nullopt;
  std::ifstream jsonl(jsonl_path_, std::ios::binary);
  if (!jsonl) throw IoError("cannot open store: " + jsonl_path_.string());
  jsonl.seekg(static_cast<std::streamoff>(it->offset));
  std::string record(it->length, '\0');
  jsonl.read(record.data(), static_cast<std::streamsize>(it->length));
  if (!jsonl) throw IoError("store read failed: " + jsonl_path_.string());
  return record;
}

std::optional<CohortInsight> InsightStore::get(const CohortKey& key) const {
  const auto record = raw(key);
  if (!record) return std::nullopt;
  return parse_insight_line(*record);
}

std::vector<CohortKey> InsightStore::keys_for_title_region(
    const std::string& title, const std::string& region) const {
  std::vector<CohortKey> out;
  const CohortKey lo{title, region, ""};
  auto it = std::lower_bound(index_.begin(), index_.end(), lo,
                             [](const IndexEntry& e, const CohortKey& k) {
                               return e.key < k;
                             });
  for (; it != index_.end() &&
         it->key.title == title && it->key.region == region;
       ++it) {
    out.push_back(it->key);
  }
  return out;
}

std::vector<CohortKey> InsightStore::keys() const {
  std::vector<CohortKey> out;
  out.reserve(index_.size());
  for (const auto& e : index_) out.push_back(e.key);
  return out;
}

}  // namespace compsight
