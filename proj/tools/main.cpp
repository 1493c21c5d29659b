// compsight: peer-company mining and compensation-insight inference at desk
// scale. Subcommands mirror the batch pipeline stages plus ad-hoc tooling.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"

#include "compsight/evaluation.hpp"
#include "compsight/insight_store.hpp"
#include "compsight/pipeline.hpp"

namespace fs = std::filesystem;
using namespace compsight;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

PipelineConfig resolve_config(const CommonOpts& opts) {
  PipelineConfig config;
  if (!opts.config_path.empty()) {
    config = PipelineConfig::load(opts.config_path);
  }
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override must be key=value: " + kv);
    }
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.overrides,
                  "dotted-path config override, e.g. --set bayes.delta=10");
}

std::vector<CompensationEntry> load_entries_any(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open entries: " + path);
  const bool jsonl =
      path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl";
  return jsonl ? read_entries_jsonl(in, OnRowError::skip_and_report)
               : read_entries_csv(in, OnRowError::skip_and_report);
}

int cmd_gen_synth(const PipelineConfig& config) {
  const auto data = generate(config.synth);
  fs::create_directories(config.paths.output_dir);
  const auto transitions = artifact_path(config, "transitions.csv");
  const auto entries = artifact_path(config, "entries.csv");
  const auto truth = artifact_path(config, "ground_truth.json");
  {
    std::ofstream out(transitions, std::ios::binary);
    write_transitions_csv(data.transitions, out);
  }
  {
    std::ofstream out(entries, std::ios::binary);
    write_entries_csv(data.entries, out);
  }
  {
    std::ofstream out(truth, std::ios::binary);
    write_ground_truth_json(data.truth, out);
  }
  log_json(std::cerr, "gen-synth", "done",
           {{"transitions", transitions.string()},
            {"entries", entries.string()},
            {"ground_truth", truth.string()},
            {"companies", data.transitions.company_count()},
            {"entry_count", data.entries.size()}});
  return kExitOk;
}

int cmd_evaluate(const PipelineConfig& config) {
  stage_evaluate(config, std::cerr);
  std::ifstream in(artifact_path(config, "eval_report.json"));
  std::cout << in.rdbuf();
  return kExitOk;
}

int cmd_grid_search(const PipelineConfig& config) {
  const auto entries =
      load_entries_any(artifact_path(config, "entries_clean.csv").string());
  TrcModel trc;
  {
    std::ifstream in(artifact_path(config, "trc.jsonl"));
    if (!in) throw IoError("run fit-trc first: trc.jsonl missing");
    trc = read_trc_jsonl(in);
  }
  PeerGroups groups;
  {
    std::ifstream in(artifact_path(config, "peers.jsonl"));
    if (!in) throw IoError("run peer-groups first: peers.jsonl missing");
    groups = read_peer_groups_jsonl(in);
  }
  SmoothOptions options;
  options.thresholds = config.thresholds;
  options.member_floor = config.member_floor;
  options.threads = config.threads;
  const auto deltas = default_delta_grid();
  const auto etas = default_eta_grid();
  const auto result =
      grid_search(entries, groups, trc, deltas, etas, config.eval.k_folds,
                  config.eval.seed, config.bayes, options);

  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : result.grid) {
    nlohmann::json point;
    point["delta"] = p.delta;
    point["eta"] = p.eta;
    point["ci80"] = p.report.ci80;
    point["lower10"] = p.report.lower10;
    point["upper10"] = p.report.upper10;
    point["rmse"] = p.report.rmse;
    point["nll"] = p.report.nll;
    point["range_statistic_mean"] = p.report.range_statistic_mean;
    point["entries_classified"] = p.report.entries_classified;
    points.push_back(point);
  }
  nlohmann::json doc;
  doc["kind"] = "grid_search";
  doc["points"] = points;
  doc["best"] = {{"delta", result.best().delta}, {"eta", result.best().eta}};
  const auto json_path = artifact_path(config, "grid_search.json");
  {
    std::ofstream out(json_path, std::ios::binary);
    out << doc.dump(2) << '\n';
  }
  {
    std::ofstream out(artifact_path(config, "grid_search.csv"),
                      std::ios::binary);
    out << "delta,eta,ci80,rmse,nll\n";
    char buf[160];
    for (const auto& p : result.grid) {
      std::snprintf(buf, sizeof buf, "%g,%g,%.6f,%.6f,%.6f\n", p.delta, p.eta,
                    p.report.ci80, p.report.rmse, p.report.nll);
      out << buf;
    }
  }
  std::cout << doc["best"].dump() << '\n';
  log_json(std::cerr, "grid-search", "done",
           {{"points", result.grid.size()},
            {"best_delta", result.best().delta},
            {"best_eta", result.best().eta}});
  return kExitOk;
}

int cmd_sweep(const PipelineConfig& config, const std::string& dimension,
              std::vector<std::uint64_t> grid) {
  const auto entries =
      load_entries_any(artifact_path(config, "entries_clean.csv").string());
  TrcModel trc;
  {
    std::ifstream in(artifact_path(config, "trc.jsonl"));
    if (!in) throw IoError("run fit-trc first: trc.jsonl missing");
    trc = read_trc_jsonl(in);
  }
  PeerGroups groups;
  {
    std::ifstream in(artifact_path(config, "peers.jsonl"));
    if (!in) throw IoError("run peer-groups first: peers.jsonl missing");
    groups = read_peer_groups_jsonl(in);
  }
  ThresholdDimension dim;
  if (dimension == "company") dim = ThresholdDimension::company;
  else if (dimension == "peer") dim = ThresholdDimension::peer;
  else if (dimension == "title") dim = ThresholdDimension::title;
  else if (dimension == "region") dim = ThresholdDimension::region;
  else throw ConfigError("unknown sweep dimension: " + dimension);
  if (grid.empty()) grid = {1, 5, 10, 15, 20, 25, 30, 40, 50, 75, 100};

  const auto [train, test] =
      split_cohorts(entries, config.eval.train_fraction, config.eval.seed);
  SmoothOptions options;
  options.thresholds = config.thresholds;
  options.member_floor = config.member_floor;
  options.threads = config.threads;
  const auto sweep = threshold_sweep(train, test, trc, groups, config.bayes,
                                     options, dim, grid);

  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : sweep) {
    nlohmann::json point;
    point["threshold"] = p.threshold;
    point["ci80"] = p.report.ci80;
    point["ci80_diff"] = std::abs(p.report.ci80 - 0.8);
    point["rmse"] = p.report.rmse;
    point["eligible_cohorts"] = p.eligible_cohorts;
    point["entries_classified"] = p.report.entries_classified;
    points.push_back(point);
  }
  nlohmann::json doc;
  doc["kind"] = "threshold_sweep";
  doc["dimension"] = dimension;
  doc["points"] = points;
  const auto json_path =
      artifact_path(config, "sweep_" + dimension + ".json");
  {
    std::ofstream out(json_path, std::ios::binary);
    out << doc.dump(2) << '\n';
  }
  {
    std::ofstream out(artifact_path(config, "sweep_" + dimension + ".csv"),
                      std::ios::binary);
    out << "threshold,ci80,ci80_diff,rmse,eligible_cohorts\n";
    char buf[160];
    for (const auto& p : sweep) {
      std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f,%.6f,%llu\n",
                    static_cast<unsigned long long>(p.threshold),
                    p.report.ci80, std::abs(p.report.ci80 - 0.8),
                    p.report.rmse,
                    static_cast<unsigned long long>(p.eligible_cohorts));
      out << buf;
    }
  }
  std::cout << doc.dump(2) << '\n';
  return kExitOk;
}

int cmd_plot_data(const std::string& input) {
  std::ifstream in(input);
  if (!in) throw IoError("cannot open results file: " + input);
  const auto doc = nlohmann::json::parse(in);
  const auto kind = doc.value("kind", std::string{});
  if (kind == "grid_search") {
    std::printf("# delta eta ci80 ci80_diff rmse nll\n");
    for (const auto& p : doc.at("points")) {
      std::printf("%g %g %.6f %.6f %.6f %.6f\n", p.at("delta").get<double>(),
                  p.at("eta").get<double>(), p.at("ci80").get<double>(),
                  std::abs(p.at("ci80").get<double>() - 0.8),
                  p.at("rmse").get<double>(), p.at("nll").get<double>());
    }
  } else if (kind == "threshold_sweep") {
    std::printf("# threshold ci80 ci80_diff rmse eligible_cohorts\n");
    for (const auto& p : doc.at("points")) {
      std::printf("%llu %.6f %.6f %.6f %llu\n",
                  static_cast<unsigned long long>(
                      p.at("threshold").get<std::uint64_t>()),
                  p.at("ci80").get<double>(),
                  p.at("ci80_diff").get<double>(),
                  p.at("rmse").get<double>(),
                  static_cast<unsigned long long>(
                      p.at("eligible_cohorts").get<std::uint64_t>()));
    }
  } else {
    throw ConfigError("unrecognized results kind in " + input);
  }
  return kExitOk;
}

int cmd_query(const PipelineConfig& config, const std::string& title,
              const std::string& region, const std::string& company,
              std::size_t top_k) {
  const auto result = query_store(config.paths.output_dir, title, region,
                                  company, top_k);
  if (!result.found) {
    nlohmann::json hint = nlohmann::json::array();
    for (const auto& key : result.hint) hint.push_back(key.company);
    std::cout << nlohmann::json{{"error", "not_found"},
                                {"title", canonicalize(title)},
                                {"region", canonicalize(region)},
                                {"company", company},
                                {"available_companies", hint}}
                     .dump(2)
              << '\n';
    return kExitInputError;
  }
  std::cout << result.record << '\n';
  for (const auto& [peer, insight] : result.related) {
    nlohmann::json j{{"related", peer.id}, {"peer_score", peer.score}};
    if (insight) {
      j["p10"] = insight->p10;
      j["p50"] = insight->p50;
      j["p90"] = insight->p90;
    }
    std::cout << j.dump() << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "compsight: company-transition embeddings, peer groups, and Bayesian "
      "compensation-insight inference"};
  app.require_subcommand(1);

  std::map<std::string, CommonOpts> opts;
  auto* gen = app.add_subcommand("gen-synth",
                                 "generate a synthetic dataset with ground truth");
  add_common(gen, opts["gen-synth"]);
  auto* ingest = app.add_subcommand("ingest", "parse and summarize transitions");
  add_common(ingest, opts["ingest"]);
  auto* train = app.add_subcommand("train-embeddings",
                                   "fit origin/destination embeddings");
  add_common(train, opts["train-embeddings"]);
  auto* peers = app.add_subcommand("peer-groups", "rank and store peer groups");
  add_common(peers, opts["peer-groups"]);
  auto* trc = app.add_subcommand("fit-trc", "fit (title, region) estimates");
  add_common(trc, opts["fit-trc"]);
  auto* smooth = app.add_subcommand("smooth",
                                    "run Bayesian smoothing over all cohorts");
  add_common(smooth, opts["smooth"]);
  auto* evaluate = app.add_subcommand("evaluate",
                                      "hold out cohorts and score the insights");
  add_common(evaluate, opts["evaluate"]);
  auto* grid = app.add_subcommand("grid-search",
                                  "cross-validated (delta, eta) search");
  add_common(grid, opts["grid-search"]);
  auto* sweep = app.add_subcommand("sweep-thresholds",
                                   "metric curves vs information-size thresholds");
  add_common(sweep, opts["sweep-thresholds"]);
  std::string sweep_dimension = "company";
  std::vector<std::uint64_t> sweep_grid;
  sweep->add_option("--dimension", sweep_dimension,
                    "company | peer | title | region");
  sweep->add_option("--grid", sweep_grid, "threshold values");
  auto* store = app.add_subcommand("build-store",
                                   "index the insights file for queries");
  add_common(store, opts["build-store"]);
  auto* query = app.add_subcommand("query", "look up one cohort insight");
  add_common(query, opts["query"]);
  std::string q_title, q_region, q_company;
  std::size_t q_top_k = 5;
  query->add_option("--title", q_title)->required();
  query->add_option("--region", q_region)->required();
  query->add_option("--company", q_company)->required();
  query->add_option("--top-k", q_top_k, "related companies to attach");
  auto* plot = app.add_subcommand("plot-data",
                                  "emit gnuplot-ready columns from results");
  std::string plot_input;
  plot->add_option("input", plot_input, "grid_search.json or sweep_*.json")
      ->required();
  auto* run = app.add_subcommand("run", "execute the full pipeline");
  add_common(run, opts["run"]);

  CLI11_PARSE(app, argc, argv);

  // each verb runs the stage prefix it depends on; finished stages resume
  // from their manifests at negligible cost
  const auto dispatch = [&](const std::string& name) -> int {
    const auto config = resolve_config(opts[name]);
    if (name == "gen-synth") return cmd_gen_synth(config);
    fs::create_directories(config.paths.output_dir);
    const auto upstream = [&](std::initializer_list<
                              void (*)(const PipelineConfig&, std::ostream&)>
                                  stages) {
      for (auto stage : stages) stage(config, std::cerr);
    };
    if (name == "ingest") {
      stage_ingest(config, std::cerr);
      std::ifstream in(artifact_path(config, "dataset_summary.json"));
      std::cout << in.rdbuf();
      return kExitOk;
    }
    if (name == "train-embeddings") {
      upstream({stage_ingest, stage_embeddings});
      return kExitOk;
    }
    if (name == "peer-groups") {
      upstream({stage_ingest, stage_embeddings, stage_peer_groups});
      return kExitOk;
    }
    if (name == "fit-trc") {
      upstream({stage_outliers, stage_trc});
      return kExitOk;
    }
    if (name == "smooth") {
      upstream({stage_ingest, stage_outliers, stage_trc, stage_embeddings,
                stage_peer_groups, stage_smooth});
      return kExitOk;
    }
    if (name == "evaluate") {
      upstream({stage_ingest, stage_outliers, stage_trc, stage_embeddings,
                stage_peer_groups});
      return cmd_evaluate(config);
    }
    if (name == "grid-search") {
      upstream({stage_ingest, stage_outliers, stage_trc, stage_embeddings,
                stage_peer_groups});
      return cmd_grid_search(config);
    }
    if (name == "sweep-thresholds") {
      upstream({stage_ingest, stage_outliers, stage_trc, stage_embeddings,
                stage_peer_groups});
      return cmd_sweep(config, sweep_dimension, sweep_grid);
    }
    if (name == "build-store") {
      upstream({stage_ingest, stage_outliers, stage_trc, stage_embeddings,
                stage_peer_groups, stage_smooth, stage_store});
      return kExitOk;
    }
    if (name == "query")
      return cmd_query(config, q_title, q_region, q_company, q_top_k);
    if (name == "run") return run_pipeline(config, std::cerr);
    throw std::logic_error("unhandled subcommand " + name);
  };

  try {
    if (gen->parsed()) return dispatch("gen-synth");
    if (ingest->parsed()) return dispatch("ingest");
    if (train->parsed()) return dispatch("train-embeddings");
    if (peers->parsed()) return dispatch("peer-groups");
    if (trc->parsed()) return dispatch("fit-trc");
    if (smooth->parsed()) return dispatch("smooth");
    if (evaluate->parsed()) return dispatch("evaluate");
    if (grid->parsed()) return dispatch("grid-search");
    if (sweep->parsed()) return dispatch("sweep-thresholds");
    if (store->parsed()) return dispatch("build-store");
    if (query->parsed()) return dispatch("query");
    if (plot->parsed()) return cmd_plot_data(plot_input);
    if (run->parsed()) return dispatch("run");
  } catch (const ConfigError& e) {
    log_json(std::cerr, "cli", std::string("config error: ") + e.what());
    return kExitConfigError;
  } catch (const StageFailure& e) {
    log_json(std::cerr, "cli", std::string("stage failure: ") + e.what(),
             {{"failed_stage", e.stage()}});
    return kExitStageFailure;
  } catch (const IoError& e) {
    log_json(std::cerr, "cli", std::string("input error: ") + e.what());
    return kExitInputError;
  } catch (const ParseError& e) {
    log_json(std::cerr, "cli", std::string("input error: ") + e.what());
    return kExitInputError;
  } catch (const NotFoundError& e) {
    log_json(std::cerr, "cli", std::string("input error: ") + e.what());
    return kExitInputError;
  } catch (const EmptyDatasetError& e) {
    log_json(std::cerr, "cli", std::string("input error: ") + e.what());
    return kExitInputError;
  } catch (const std::exception& e) {
    log_json(std::cerr, "cli", std::string("failure: ") + e.what());
    return kExitStageFailure;
  }
  return kExitOk;
}
