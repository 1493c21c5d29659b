#include "compsight/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "compsight/insight_store.hpp"

namespace compsight {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["paths"] = {{"transitions", paths.transitions},
                {"entries", paths.entries},
                {"ground_truth", paths.ground_truth},
                {"member_counts", paths.member_counts},
                {"overrides", paths.overrides},
                {"output_dir", paths.output_dir}};
  j["embedding"] = {{"dim", embedding.dim},
                    {"negatives", embedding.negatives},
                    {"learning_rate", embedding.learning_rate},
                    {"epochs", embedding.epochs},
                    {"seed", embedding.seed},
                    {"lr_decay", embedding.lr_decay == LrDecay::none
                                     ? "none"
                                     : "linear_to_zero"},
                    {"convergence_tol", embedding.convergence_tol},
                    {"frequency_weighted_negatives",
                     embedding.frequency_weighted_negatives},
                    {"threads", embedding.threads}};
  j["bayes"] = {{"delta", bayes.delta},
                {"eta", bayes.eta},
                {"peer_prior_threshold", bayes.peer_prior_threshold},
                {"variance_floor", bayes.variance_floor},
                {"predictive_variance_inflation",
                 bayes.predictive_variance_inflation}};
  j["thresholds"] = {{"company", thresholds.company},
                     {"peer", thresholds.peer},
                     {"title", thresholds.title},
                     {"region", thresholds.region}};
  j["member_floor"] = member_floor;
  j["outliers"] = {{"mode", outliers.mode == OutlierConfig::Mode::none
                                ? "none"
                                : "iqr"},
                   {"k", outliers.k},
                   {"min_cohort", outliers.min_cohort}};
  j["peer_groups"] = {{"min_score", peer_min_score},
                      {"max_size", peer_max_size}};
  j["min_occurrences"] = min_occurrences;
  j["synth"] = {{"n_clusters", synth.n_clusters},
                {"companies_per_cluster", synth.companies_per_cluster},
                {"intra_transition_rate", synth.intra_transition_rate},
                {"inter_transition_rate", synth.inter_transition_rate},
                {"n_titles", synth.n_titles},
                {"n_regions", synth.n_regions},
                {"trc_mean_low", synth.trc_mean_low},
                {"trc_mean_high", synth.trc_mean_high},
                {"company_offset_sd", synth.company_offset_sd},
                {"cluster_offset_sd", synth.cluster_offset_sd},
                {"noise_sd", synth.noise_sd},
                {"entries_dist",
                 synth.entries_dist == SynthConfig::EntriesDist::poisson
                     ? "poisson"
                     : "fixed"},
                {"entries_lambda", synth.entries_lambda},
                {"entries_fixed", synth.entries_fixed},
                {"seed", synth.seed}};
  j["eval"] = {{"train_fraction", eval.train_fraction},
               {"seed", eval.seed},
               {"k_folds", eval.k_folds}};
  j["threads"] = threads;
  return j;
}

namespace {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    maybe(p, "transitions", c.paths.transitions);
    maybe(p, "entries", c.paths.entries);
    maybe(p, "ground_truth", c.paths.ground_truth);
    maybe(p, "member_counts", c.paths.member_counts);
    maybe(p, "overrides", c.paths.overrides);
    maybe(p, "output_dir", c.paths.output_dir);
  }
  if (j.contains("embedding")) {
    const auto& e = j["embedding"];
    maybe(e, "dim", c.embedding.dim);
    maybe(e, "negatives", c.embedding.negatives);
    maybe(e, "learning_rate", c.embedding.learning_rate);
    maybe(e, "epochs", c.embedding.epochs);
    maybe(e, "seed", c.embedding.seed);
    if (e.contains("lr_decay")) {
      const auto s = e["lr_decay"].get<std::string>();
      if (s == "none") c.embedding.lr_decay = LrDecay::none;
      else if (s == "linear_to_zero") c.embedding.lr_decay = LrDecay::linear_to_zero;
      else throw ConfigError("unknown lr_decay: " + s);
    }
    maybe(e, "convergence_tol", c.embedding.convergence_tol);
    maybe(e, "frequency_weighted_negatives",
          c.embedding.frequency_weighted_negatives);
    maybe(e, "threads", c.embedding.threads);
  }
  if (j.contains("bayes")) {
    const auto& b = j["bayes"];
    maybe(b, "delta", c.bayes.delta);
    maybe(b, "eta", c.bayes.eta);
    maybe(b, "peer_prior_threshold", c.bayes.peer_prior_threshold);
    maybe(b, "variance_floor", c.bayes.variance_floor);
    maybe(b, "predictive_variance_inflation",
          c.bayes.predictive_variance_inflation);
  }
  if (j.contains("thresholds")) {
    const auto& t = j["thresholds"];
    maybe(t, "company", c.thresholds.company);
    maybe(t, "peer", c.thresholds.peer);
    maybe(t, "title", c.thresholds.title);
    maybe(t, "region", c.thresholds.region);
  }
  maybe(j, "member_floor", c.member_floor);
  if (j.contains("outliers")) {
    const auto& o = j["outliers"];
    if (o.contains("mode")) {
      const auto s = o["mode"].get<std::string>();
      if (s == "none") c.outliers.mode = OutlierConfig::Mode::none;
      else if (s == "iqr") c.outliers.mode = OutlierConfig::Mode::iqr;
      else throw ConfigError("unknown outlier mode: " + s);
    }
    maybe(o, "k", c.outliers.k);
    maybe(o, "min_cohort", c.outliers.min_cohort);
  }
  if (j.contains("peer_groups")) {
    const auto& p = j["peer_groups"];
    maybe(p, "min_score", c.peer_min_score);
    maybe(p, "max_size", c.peer_max_size);
  }
  maybe(j, "min_occurrences", c.min_occurrences);
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    maybe(s, "n_clusters", c.synth.n_clusters);
    maybe(s, "companies_per_cluster", c.synth.companies_per_cluster);
    maybe(s, "intra_transition_rate", c.synth.intra_transition_rate);
    maybe(s, "inter_transition_rate", c.synth.inter_transition_rate);
    maybe(s, "n_titles", c.synth.n_titles);
    maybe(s, "n_regions", c.synth.n_regions);
    maybe(s, "trc_mean_low", c.synth.trc_mean_low);
    maybe(s, "trc_mean_high", c.synth.trc_mean_high);
    maybe(s, "company_offset_sd", c.synth.company_offset_sd);
    maybe(s, "cluster_offset_sd", c.synth.cluster_offset_sd);
    maybe(s, "noise_sd", c.synth.noise_sd);
    if (s.contains("entries_dist")) {
      const auto v = s["entries_dist"].get<std::string>();
      if (v == "poisson") c.synth.entries_dist = SynthConfig::EntriesDist::poisson;
      else if (v == "fixed") c.synth.entries_dist = SynthConfig::EntriesDist::fixed;
      else throw ConfigError("unknown entries_dist: " + v);
    }
    maybe(s, "entries_lambda", c.synth.entries_lambda);
    maybe(s, "entries_fixed", c.synth.entries_fixed);
    maybe(s, "seed", c.synth.seed);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    maybe(e, "train_fraction", c.eval.train_fraction);
    maybe(e, "seed", c.eval.seed);
    maybe(e, "k_folds", c.eval.k_folds);
  }
  maybe(j, "threads", c.threads);
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return from_json(j);
}

void PipelineConfig::set(const std::string& dotted_key,
                         const std::string& value) {
  nlohmann::json j = to_json();
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->contains(part)) {
      throw ConfigError("unknown config key: " + dotted_key);
    }
    if (dot == std::string::npos) {
      nlohmann::json& leaf = (*node)[part];
      if (leaf.is_string()) {
        leaf = value;
      } else {
        const nlohmann::json parsed =
            nlohmann::json::parse(value, nullptr, false);
        if (parsed.is_discarded()) {
          throw ConfigError("cannot parse override value for " + dotted_key);
        }
        leaf = parsed;
      }
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  *this = from_json(j);
}

void log_json(std::ostream& out, const std::string& stage,
              const std::string& message, const nlohmann::json& extra) {
  nlohmann::json j = extra;
  j["stage"] = stage;
  j["msg"] = message;
  out << j.dump() << '\n' << std::flush;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

StageManifests::StageManifests(const fs::path& output_dir)
    : dir_(output_dir / "manifests") {
  fs::create_directories(dir_);
}

bool StageManifests::up_to_date(const std::string& stage, std::uint64_t key,
                                const std::vector<std::string>& outputs) const {
  const auto path = dir_ / (stage + ".json");
  std::ifstream in(path);
  if (!in) return false;
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) return false;
  if (j.value("key", std::string{}) != hex64(key)) return false;
  if (!j.contains("outputs")) return false;
  for (const auto& out : outputs) {
    if (!fs::exists(out)) return false;
    const auto& recorded = j["outputs"];
    if (!recorded.contains(out)) return false;
    if (recorded[out].get<std::string>() != hex64(fnv1a64_file(out))) {
      return false;
    }
  }
  return true;
}

void StageManifests::record(const std::string& stage, std::uint64_t key,
                            const std::vector<std::string>& inputs,
                            const std::vector<std::string>& outputs,
                            const nlohmann::json& counts) {
  nlohmann::json j;
  j["stage"] = stage;
  j["key"] = hex64(key);
  auto& in = j["inputs"] = nlohmann::json::object();
  for (const auto& path : inputs) in[path] = hex64(fnv1a64_file(path));
  auto& out = j["outputs"] = nlohmann::json::object();
  for (const auto& path : outputs) out[path] = hex64(fnv1a64_file(path));
  j["counts"] = counts;
  std::ofstream f(dir_ / (stage + ".json"));
  f << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Stage helpers
// ---------------------------------------------------------------------------

fs::path artifact_path(const PipelineConfig& config, const std::string& name) {
  return fs::path(config.paths.output_dir) / name;
}

namespace {

bool is_jsonl(const std::string& path) {
  return path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl";
}

TransitionDataset load_transitions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open transitions: " + path);
  return parse_transitions(
      in, is_jsonl(path) ? TransitionFormat::jsonl : TransitionFormat::csv,
      OnRowError::skip_and_report, nullptr);
}

std::vector<CompensationEntry> load_entries_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open entries: " + path);
  return is_jsonl(path)
             ? read_entries_jsonl(in, OnRowError::skip_and_report, nullptr)
             : read_entries_csv(in, OnRowError::skip_and_report, nullptr);
}

std::uint64_t stage_key(const PipelineConfig& config,
                        const nlohmann::json& stage_config,
                        const std::vector<std::string>& inputs) {
  std::string blob = stage_config.dump();
  for (const auto& path : inputs) {
    blob += "|" + path + ":" + hex64(fnv1a64_file(path));
  }
  (void)config;
  return fnv1a64(blob);
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_ingest(const PipelineConfig& config, std::ostream& log) {
  const std::string stage = "ingest";
  StageManifests manifests(config.paths.output_dir);
  const std::vector<std::string> inputs{config.paths.transitions};
  const nlohmann::json sc{{"min_occurrences", config.min_occurrences}};
  const auto key = stage_key(config, sc, inputs);
  const std::string out_csv = artifact_path(config, "transitions_clean.csv").string();
  const std::string out_summary = artifact_path(config, "dataset_summary.json").string();
  if (manifests.up_to_date(stage, key, {out_csv, out_summary})) {
    log_json(log, stage, "up to date, skipped");
    return;
  }
  std::ifstream in(config.paths.transitions);
  if (!in) throw IoError("cannot open transitions: " + config.paths.transitions);
  ParseReport report;
  auto dataset = parse_transitions(
      in,
      is_jsonl(config.paths.transitions) ? TransitionFormat::jsonl
                                         : TransitionFormat::csv,
      OnRowError::skip_and_report, &report);
  if (config.min_occurrences > 1) {
    dataset = filter_by_frequency(dataset, config.min_occurrences);
  }
  {
    std::ofstream out(out_csv, std::ios::binary);
    write_transitions_csv(dataset, out);
  }
  {
    std::ofstream out(out_summary, std::ios::binary);
    out << dataset_summary(dataset, &report).dump(2) << '\n';
  }
  manifests.record(stage, key, inputs, {out_csv, out_summary},
                   dataset_summary(dataset, &report));
  log_json(log, stage, "done",
           {{"companies", dataset.company_count()},
            {"transitions", dataset.total_transitions()}});
}

void stage_outliers(const PipelineConfig& config, std::ostream& log) {
  const std::string stage = "outliers";
  StageManifests manifests(config.paths.output_dir);
  const std::vector<std::string> inputs{config.paths.entries};
  const nlohmann::json sc{
      {"mode", config.outliers.mode == OutlierConfig::Mode::none ? "none" : "iqr"},
      {"k", config.outliers.k},
      {"min_cohort", config.outliers.min_cohort}};
  const auto key = stage_key(config, sc, inputs);
  const std::string out_csv = artifact_path(config, "entries_clean.csv").string();
  const std::string out_report = artifact_path(config, "outlier_report.json").string();
  if (manifests.up_to_date(stage, key, {out_csv, out_report})) {
    log_json(log, stage, "up to date, skipped");
    return;
  }
  const auto entries = load_entries_file(config.paths.entries);
  const auto [kept, report] = remove_outliers(entries, config.outliers);
  {
    std::ofstream out(out_csv, std::ios::binary);
    write_entries_csv(kept, out);
  }
  {
    std::ofstream out(out_report, std::ios::binary);
    out << nlohmann::json{{"examined", report.examined},
                          {"removed", report.removed}}
               .dump(2)
        << '\n';
  }
  manifests.record(stage, key, inputs, {out_csv, out_report},
                   {{"examined", report.examined}, {"removed", report.removed}});
  log_json(log, stage, "done",
           {{"examined", report.examined}, {"removed", report.removed}});
}

void stage_trc(const PipelineConfig& config, std::ostream& log) {
  const std::string stage = "trc";
  StageManifests manifests(config.paths.output_dir);
  const std::string in_csv = artifact_path(config, "entries_clean.csv").string();
  const nlohmann::json sc{{"title", config.thresholds.title},
                          {"region", config.thresholds.region}};
  const auto key = stage_key(config, sc, {in_csv});
  const std::string out_jsonl = artifact_path(config, "trc.jsonl").string();
  if (manifests.up_to_date(stage, key, {out_jsonl})) {
    log_json(log, stage, "up to date, skipped");
    return;
  }
  const auto entries = load_entries_file(in_csv);
  const auto trc =
      fit_trc(entries, config.thresholds.title, config.thresholds.region);
  {
    std::ofstream out(out_jsonl, std::ios::binary);
    write_trc_jsonl(trc, out);
  }
  manifests.record(stage, key, {in_csv}, {out_jsonl},
                   {{"estimates", trc.estimates().size()}});
  log_json(log, stage, "done", {{"estimates", trc.estimates().size()}});
}

void stage_embeddings(const PipelineConfig& config, std::ostream& log) {
  const std::string stage = "embeddings";
  StageManifests manifests(config.paths.output_dir);
  const std::string in_csv = artifact_path(config, "transitions_clean.csv").string();
  nlohmann::json sc{{"dim", config.embedding.dim},
                    {"negatives", config.embedding.negatives},
                    {"learning_rate", config.embedding.learning_rate},
                    {"epochs", config.embedding.epochs},
                    {"seed", config.embedding.seed},
                    {"convergence_tol", config.embedding.convergence_tol},
                    {"threads", config.embedding.threads}};
  const auto key = stage_key(config, sc, {in_csv});
  const std::string out_model = artifact_path(config, "model.bin").string();
  const std::string out_debug = artifact_path(config, "model.jsonl").string();
  if (manifests.up_to_date(stage, key, {out_model, out_debug})) {
    log_json(log, stage, "up to date, skipped");
    return;
  }
  const auto dataset = load_transitions_file(in_csv);
  const auto model = fit(dataset, config.embedding);
  save_model(model, out_model);
  {
    std::ofstream out(out_debug, std::ios::binary);
    export_model_jsonl(model, out);
  }
  manifests.record(stage, key, {in_csv}, {out_model, out_debug},
                   {{"companies", model.company_count()},
                    {"epochs_run", model.training_log().size()}});
  log_json(log, stage, "done",
           {{"companies", model.company_count()},
            {"objective", model.training_log().back()}});
}

void stage_peer_groups(const PipelineConfig& config, std::ostream& log) {
  const std::string stage = "peer_groups";
  StageManifests manifests(config.paths.output_dir);
  const std::string in_model = artifact_path(config, "model.bin").string();
  const nlohmann::json sc{{"min_score", config.peer_min_score},
                          {"max_size", config.peer_max_size}};
  const auto key = stage_key(config, sc, {in_model});
  const std::string out_jsonl = artifact_path(config, "peers.jsonl").string();
  if (manifests.up_to_date(stage, key, {out_jsonl})) {
    log_json(log, stage, "up to date, skipped");
    return;
  }
  const auto model = load_model(in_model);
  const auto groups = build_peer_groups(model, config.peer_min_score,
                                        config.peer_max_size, config.threads);
  {
    std::ofstream out(out_jsonl, std::ios::binary);
    write_peer_groups_jsonl(groups, out);
  }
  manifests.record(stage, key, {in_model}, {out_jsonl},
                   {{"groups", groups.size()}});
  log_json(log, stage, "done", {{"groups", groups.size()}});
}

void stage_smooth(const PipelineConfig& config, std::ostream& log) {
  const std::string stage = "smooth";
  StageManifests manifests(config.paths.output_dir);
  const std::string in_entries = artifact_path(config, "entries_clean.csv").string();
  const std::string in_trc = artifact_path(config, "trc.jsonl").string();
  const std::string in_peers = artifact_path(config, "peers.jsonl").string();
  std::vector<std::string> inputs{in_entries, in_trc, in_peers};
  if (!config.paths.member_counts.empty()) {
    inputs.push_back(config.paths.member_counts);
  }
  if (!config.paths.overrides.empty()) {
    inputs.push_back(config.paths.overrides);
  }
  nlohmann::json sc{{"delta", config.bayes.delta},
                    {"eta", config.bayes.eta},
                    {"variance_floor", config.bayes.variance_floor},
                    {"inflation", config.bayes.predictive_variance_inflation},
                    {"company", config.thresholds.company},
                    {"peer", config.thresholds.peer},
                    {"title", config.thresholds.title},
                    {"region", config.thresholds.region},
                    {"member_floor", config.member_floor}};
  const auto key = stage_key(config, sc, inputs);
  const std::string out_jsonl = artifact_path(config, "insights.jsonl").string();
  const std::string out_coverage = artifact_path(config, "coverage_report.json").string();
  if (manifests.up_to_date(stage, key, {out_jsonl, out_coverage})) {
    log_json(log, stage, "up to date, skipped");
    return;
  }
  const auto entries = load_entries_file(in_entries);
  TrcModel trc;
  {
    std::ifstream in(in_trc);
    trc = read_trc_jsonl(in);
  }
  PeerGroups groups;
  {
    std::ifstream in(in_peers);
    groups = read_peer_groups_jsonl(in);
  }
  std::map<CohortKey, std::uint64_t> member_counts;
  SmoothOptions options;
  options.thresholds = config.thresholds;
  options.member_floor = config.member_floor;
  options.threads = config.threads;
  if (!config.paths.member_counts.empty()) {
    std::ifstream in(config.paths.member_counts);
    if (!in) throw IoError("cannot open member counts: " + config.paths.member_counts);
    member_counts = read_member_counts(in);
    options.member_counts = &member_counts;
  }
  auto result = smooth_all(entries, trc, groups, config.bayes, options);
  if (!config.paths.overrides.empty()) {
    std::ifstream in(config.paths.overrides);
    if (!in) throw IoError("cannot open overrides: " + config.paths.overrides);
    apply_insight_overrides(result.insights, in);
  }
  {
    std::ofstream out(out_jsonl, std::ios::binary);
    write_insights_jsonl(result.insights, out);
  }
  nlohmann::json coverage{
      {"cohorts_with_data", result.cohorts_with_data},
      {"cohorts_inferred_only", result.cohorts_inferred_only},
      {"cohorts_total", result.insights.size()},
      {"cohorts_skipped", result.skipped.size()}};
  {
    nlohmann::json by_reason = nlohmann::json::object();
    for (const auto& s : result.skipped) {
      const auto it = by_reason.find(s.reason);
      by_reason[s.reason] = (it == by_reason.end() ? 0 : it->get<int>()) + 1;
    }
    coverage["skipped_by_reason"] = by_reason;
    std::ofstream out(out_coverage, std::ios::binary);
    out << coverage.dump(2) << '\n';
  }
  manifests.record(stage, key, inputs, {out_jsonl, out_coverage}, coverage);
  log_json(log, stage, "done", coverage);
}

void stage_store(const PipelineConfig& config, std::ostream& log) {
  const std::string stage = "store";
  StageManifests manifests(config.paths.output_dir);
  const std::string in_jsonl = artifact_path(config, "insights.jsonl").string();
  const auto key = stage_key(config, nlohmann::json::object(), {in_jsonl});
  const std::string out_idx = artifact_path(config, "insights.idx").string();
  if (manifests.up_to_date(stage, key, {out_idx})) {
    log_json(log, stage, "up to date, skipped");
    return;
  }
  InsightStore::index_jsonl(in_jsonl, out_idx);
  const auto store = InsightStore::open(in_jsonl, out_idx);
  manifests.record(stage, key, {in_jsonl}, {out_idx},
                   {{"records", store.size()}});
  log_json(log, stage, "done", {{"records", store.size()}});
}

void stage_evaluate(const PipelineConfig& config, std::ostream& log) {
  const std::string stage = "evaluate";
  StageManifests manifests(config.paths.output_dir);
  const std::string in_entries = artifact_path(config, "entries_clean.csv").string();
  const std::string in_peers = artifact_path(config, "peers.jsonl").string();
  const nlohmann::json sc{{"train_fraction", config.eval.train_fraction},
                          {"seed", config.eval.seed},
                          {"delta", config.bayes.delta},
                          {"eta", config.bayes.eta}};
  const auto key = stage_key(config, sc, {in_entries, in_peers});
  const std::string out_report = artifact_path(config, "eval_report.json").string();
  if (manifests.up_to_date(stage, key, {out_report})) {
    log_json(log, stage, "up to date, skipped");
    return;
  }
  const auto entries = load_entries_file(in_entries);
  PeerGroups groups;
  {
    std::ifstream in(in_peers);
    groups = read_peer_groups_jsonl(in);
  }
  const auto [train, test] =
      split_cohorts(entries, config.eval.train_fraction, config.eval.seed);
  const auto trc =
      fit_trc(train, config.thresholds.title, config.thresholds.region);
  SmoothOptions options;
  options.thresholds = config.thresholds;
  options.member_floor = config.member_floor;
  options.threads = config.threads;
  options.enumerate_cross_product = false;
  std::set<CohortKey> test_keys;
  for (const auto& e : test) test_keys.insert(e.cohort);
  options.requested_cohorts.assign(test_keys.begin(), test_keys.end());
  const auto smoothed = smooth_all(train, trc, groups, config.bayes, options);
  const auto report = evaluate(smoothed.insights, test);
  nlohmann::json j{{"lower10", report.lower10},
                   {"ci80", report.ci80},
                   {"upper10", report.upper10},
                   {"rmse", report.rmse},
                   {"neg_log_likelihood", report.nll},
                   {"range_statistic_mean", report.range_statistic_mean},
                   {"cohorts_evaluated", report.cohorts_evaluated},
                   {"entries_classified", report.entries_classified},
                   {"entries_skipped", report.entries_skipped},
                   {"train_entries", train.size()},
                   {"test_entries", test.size()}};
  {
    std::ofstream out(out_report, std::ios::binary);
    out << j.dump(2) << '\n';
  }
  manifests.record(stage, key, {in_entries, in_peers}, {out_report}, j);
  log_json(log, stage, "done", j);
}

int run_pipeline(const PipelineConfig& config, std::ostream& log) {
  fs::create_directories(config.paths.output_dir);
  struct Step {
    const char* name;
    void (*fn)(const PipelineConfig&, std::ostream&);
  };
  const Step steps[] = {
      {"ingest", stage_ingest},       {"outliers", stage_outliers},
      {"trc", stage_trc},             {"embeddings", stage_embeddings},
      {"peer_groups", stage_peer_groups}, {"smooth", stage_smooth},
      {"store", stage_store},         {"evaluate", stage_evaluate},
  };
  for (const auto& step : steps) {
    try {
      step.fn(config, log);
    } catch (const StageFailure&) {
      throw;
    } catch (const std::exception& e) {
      throw StageFailure(step.name, e.what());
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Member counts, overrides, query
// ---------------------------------------------------------------------------

std::map<CohortKey, std::uint64_t> read_member_counts(std::istream& in) {
  std::map<CohortKey, std::uint64_t> counts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    CohortKey key{canonicalize(j.at("title").get<std::string>()),
                  canonicalize(j.at("region").get<std::string>()),
                  j.at("company").get<std::string>()};
    counts[key] = j.at("members").get<std::uint64_t>();
  }
  return counts;
}

void write_member_counts(const std::map<CohortKey, std::uint64_t>& counts,
                         std::ostream& out) {
  for (const auto& [key, n] : counts) {
    nlohmann::json j{{"title", key.title},
                     {"region", key.region},
                     {"company", key.company},
                     {"members", n}};
    out << j.dump() << '\n';
  }
}

void apply_insight_overrides(std::map<CohortKey, CohortInsight>& insights,
                             std::istream& overrides) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(overrides, line)) {
    ++line_no;
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    const auto action = j.at("action").get<std::string>();
    CohortKey key{canonicalize(j.at("title").get<std::string>()),
                  canonicalize(j.at("region").get<std::string>()),
                  j.at("company").get<std::string>()};
    if (action == "delete") {
      insights.erase(key);
    } else if (action == "add") {
      const auto ins = make_insight(
          key, j.at("log_mean").get<double>(),
          j.at("log_variance").get<double>(), j.value("support", 0ull),
          Provenance::empirical);
      insights[key] = ins;
    } else {
      throw ParseError(line_no, "unknown override action: " + action);
    }
  }
}

QueryResult query_store(const fs::path& output_dir, const std::string& title,
                        const std::string& region, const CompanyId& company,
                        std::size_t top_k) {
  const auto store = InsightStore::open(output_dir / "insights.jsonl",
                                        output_dir / "insights.idx");
  QueryResult result;
  CohortKey key{canonicalize(title), canonicalize(region), company};
  const auto record = store.raw(key);
  if (!record) {
    result.hint = store.keys_for_title_region(key.title, key.region);
    return result;
  }
  result.found = true;
  result.record = *record;
  result.insight = parse_insight_line(*record);

  std::ifstream peers_in(output_dir / "peers.jsonl");
  if (peers_in) {
    const auto groups = read_peer_groups_jsonl(peers_in);
    auto it = groups.find(company);
    if (it != groups.end()) {
      for (const auto& peer : it->second.peers) {
        if (result.related.size() >= top_k) break;
        CohortKey peer_key{key.title, key.region, peer.id};
        result.related.emplace_back(peer, store.get(peer_key));
      }
    }
  }
  return result;
}

}  // namespace compsight
