#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "compsight/bayes_smoothing.hpp"
#include "compsight/company2vec.hpp"
#include "compsight/evaluation.hpp"
#include "compsight/outliers.hpp"
#include "compsight/synth_gen.hpp"

#include "json.hpp"

namespace compsight {

// Exit codes of the CLI and run_pipeline.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitInputError = 3;
inline constexpr int kExitStageFailure = 4;

struct PipelinePaths {
  std::string transitions;    // CSV or JSONL by extension
  std::string entries;        // CSV or JSONL by extension
  std::string ground_truth;   // optional
  std::string member_counts;  // optional JSONL cohort -> member count
  std::string overrides;      // optional JSONL delete/add insight records
  std::string output_dir = "out";
};

struct EvalConfig {
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
  std::uint32_t k_folds = 5;
};

struct PipelineConfig {
  PipelinePaths paths;
  EmbeddingConfig embedding;
  BayesHyperparams bayes;
  SmoothingThresholds thresholds;
  std::uint64_t member_floor = 2;
  OutlierConfig outliers;
  double peer_min_score = 0.05;
  std::uint32_t peer_max_size = 10;
  std::uint64_t min_occurrences = 1;
  SynthConfig synth;
  EvalConfig eval;
  std::uint32_t threads = 1;

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  // Dotted-path assignment, e.g. set("bayes.delta", "10").
  void set(const std::string& dotted_key, const std::string& value);
};

// Line-delimited JSON logging.
void log_json(std::ostream& out, const std::string& stage,
              const std::string& message,
              const nlohmann::json& extra = nlohmann::json::object());

class StageFailure : public std::runtime_error {
 public:
  StageFailure(const std::string& stage, const std::string& why)
      : std::runtime_error("stage '" + stage + "' failed: " + why),
        stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Per-stage manifest handling: a stage is skipped when its manifest matches
// the current config/input hashes and all recorded outputs still hash the
// same.
class StageManifests {
 public:
  explicit StageManifests(const std::filesystem::path& output_dir);
  bool up_to_date(const std::string& stage, std::uint64_t key,
                  const std::vector<std::string>& outputs) const;
  void record(const std::string& stage, std::uint64_t key,
              const std::vector<std::string>& inputs,
              const std::vector<std::string>& outputs,
              const nlohmann::json& counts);

 private:
  std::filesystem::path dir_;
};

// Individual stages. Each reads inputs from disk and writes its artifacts
// plus a manifest under <output_dir>/manifests/.
void stage_ingest(const PipelineConfig& config, std::ostream& log);
void stage_outliers(const PipelineConfig& config, std::ostream& log);
void stage_trc(const PipelineConfig& config, std::ostream& log);
void stage_embeddings(const PipelineConfig& config, std::ostream& log);
void stage_peer_groups(const PipelineConfig& config, std::ostream& log);
void stage_smooth(const PipelineConfig& config, std::ostream& log);
void stage_store(const PipelineConfig& config, std::ostream& log);
void stage_evaluate(const PipelineConfig& config, std::ostream& log);

// ingest -> outliers -> trc -> embeddings -> peer groups -> smooth ->
// store -> evaluate. Returns kExitOk or throws StageFailure.
int run_pipeline(const PipelineConfig& config, std::ostream& log);

// Cohort -> member count, JSONL {"title","region","company","members"}.
std::map<CohortKey, std::uint64_t> read_member_counts(std::istream& in);
void write_member_counts(const std::map<CohortKey, std::uint64_t>& counts,
                         std::ostream& out);

// Post-smoothing trusted-source corrections: JSONL records with
// {"action":"delete"|"add", ...insight fields for add}.
void apply_insight_overrides(std::map<CohortKey, CohortInsight>& insights,
                             std::istream& overrides);

struct QueryResult {
  std::string record;  // serialized insight, verbatim from the store
  CohortInsight insight;
  std::vector<std::pair<PeerEntry, std::optional<CohortInsight>>> related;
  std::vector<CohortKey> hint;  // same (title, region), set on NotFound
  bool found = false;
};

QueryResult query_store(const std::filesystem::path& output_dir,
                        const std::string& title, const std::string& region,
                        const CompanyId& company, std::size_t top_k);

// Helper paths under output_dir.
std::filesystem::path artifact_path(const PipelineConfig& config,
                                    const std::string& name);

}  // namespace compsight
