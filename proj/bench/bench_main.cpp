// Timing comparison of the serial reference kernels against their
// OpenMP counterparts: embedding training (deterministic vs lock-free),
// all-pairs peer scoring, and cohort smoothing.

#include <chrono>
#include <cstdio>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "compsight/bayes_smoothing.hpp"
#include "compsight/evaluation.hpp"
#include "compsight/peer_groups.hpp"
#include "compsight/synth_gen.hpp"

using namespace compsight;

namespace {

double seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

template <typename F>
double timed(F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  return seconds(start);
}

void report(const std::string& kernel, double serial, double parallel,
            int threads) {
  std::printf("%-22s serial %8.3fs   omp(%d) %8.3fs   speedup %5.2fx\n",
              kernel.c_str(), serial, threads, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 4;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::uint32_t companies_per_cluster = 120;
  if (argc > 1) companies_per_cluster = std::stoul(argv[1]);
  if (argc > 2) threads = std::stoi(argv[2]);

  SynthConfig sc;
  sc.n_clusters = 2;
  sc.companies_per_cluster = companies_per_cluster;
  sc.intra_transition_rate = 2.0;
  sc.inter_transition_rate = 0.1;
  sc.n_titles = 12;
  sc.n_regions = 6;
  sc.entries_lambda = 1.0;
  sc.cluster_offset_sd = 0.15;
  sc.seed = 9;
  std::printf("generating synthetic data (%u companies)...\n",
              sc.n_clusters * companies_per_cluster);
  const auto data = generate(sc);
  std::printf("  %zu companies, %llu transitions, %zu entries\n",
              data.transitions.company_count(),
              static_cast<unsigned long long>(
                  data.transitions.total_transitions()),
              data.entries.size());

  // --- training: deterministic single-thread vs hogwild ---
  EmbeddingConfig ec;
  ec.dim = 16;
  ec.epochs = 3;
  ec.seed = 5;
  ec.threads = 1;
  EmbeddingModel model;
  const double train_serial = timed([&] { model = fit(data.transitions, ec); });
  EmbeddingConfig ec_par = ec;
  ec_par.threads = static_cast<std::uint32_t>(threads);
  const double train_parallel =
      timed([&] { (void)fit(data.transitions, ec_par); });
  report("train-embeddings", train_serial, train_parallel, threads);

  // --- all-pairs peer scoring ---
  PeerGroups groups;
  const double peers_serial =
      timed([&] { groups = build_peer_groups(model, 0.01, 10, 1); });
  const double peers_parallel = timed([&] {
    (void)build_peer_groups(model, 0.01, 10,
                            static_cast<std::uint32_t>(threads));
  });
  report("peer-groups", peers_serial, peers_parallel, threads);

  // --- smoothing over the full cross product ---
  const auto trc = fit_trc(data.entries, 25, 40);
  BayesHyperparams hp;
  SmoothOptions options;
  options.thresholds = {10, 25, 25, 40};
  options.threads = 1;
  SmoothResult smoothed;
  const double smooth_serial = timed(
      [&] { smoothed = smooth_all(data.entries, trc, groups, hp, options); });
  options.threads = static_cast<std::uint32_t>(threads);
  const double smooth_parallel = timed(
      [&] { (void)smooth_all(data.entries, trc, groups, hp, options); });
  report("smooth-all", smooth_serial, smooth_parallel, threads);
  std::printf("  insights: %zu (%llu with data, %llu inferred)\n",
              smoothed.insights.size(),
              static_cast<unsigned long long>(smoothed.cohorts_with_data),
              static_cast<unsigned long long>(smoothed.cohorts_inferred_only));
  return 0;
}
