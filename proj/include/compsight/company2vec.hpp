#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "compsight/common.hpp"
#include "compsight/transitions.hpp"

namespace compsight {

enum class LrDecay { none, linear_to_zero };

struct EmbeddingConfig {
  std::uint32_t dim = 16;         // latent dimension
  std::uint32_t negatives = 5;    // negative samples per positive pair
  double learning_rate = 0.025;   // SGD step size
  std::uint32_t epochs = 10;
  std::uint64_t seed = 1;
  LrDecay lr_decay = LrDecay::none;
  double convergence_tol = 1e-4;  // relative objective change; 0 disables
  // Negatives are uniform over the candidate pool by default; this switches
  // to occurrence^0.75 weighting.
  bool frequency_weighted_negatives = false;
  // 1 = deterministic single-threaded training. >1 (or 0 = hardware
  // concurrency) enables lock-free parallel updates; races on shared
  // vectors are tolerated and results are NOT reproducible.
  std::uint32_t threads = 1;

  void validate() const;
};

// Paired origin/destination latent vectors of one company.
struct CompanyEmbedding {
  std::vector<double> phi;
  std::vector<double> psi;
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(EmbeddingConfig config, std::vector<CompanyId> companies);

  const EmbeddingConfig& config() const { return config_; }
  std::uint32_t dim() const { return config_.dim; }
  const std::vector<CompanyId>& companies() const { return companies_; }
  std::size_t company_count() const { return companies_.size(); }

  std::uint32_t index_of(const CompanyId& id) const;  // NotFound
  bool contains(const CompanyId& id) const {
    return index_.find(id) != index_.end();
  }
  const CompanyId& id_of(std::uint32_t i) const { return companies_[i]; }

  std::span<const double> phi(std::uint32_t i) const {
    return {phi_.data() + std::size_t{i} * config_.dim, config_.dim};
  }
  std::span<const double> psi(std::uint32_t i) const {
    return {psi_.data() + std::size_t{i} * config_.dim, config_.dim};
  }
  std::span<double> phi_mut(std::uint32_t i) {
    return {phi_.data() + std::size_t{i} * config_.dim, config_.dim};
  }
  std::span<double> psi_mut(std::uint32_t i) {
    return {psi_.data() + std::size_t{i} * config_.dim, config_.dim};
  }
  CompanyEmbedding embedding(const CompanyId& id) const;

  // Log likelihood recorded once per completed epoch.
  const std::vector<double>& training_log() const { return training_log_; }
  std::vector<double>& training_log_mut() { return training_log_; }

 private:
  EmbeddingConfig config_;
  std::vector<CompanyId> companies_;
  std::unordered_map<CompanyId, std::uint32_t> index_;
  std::vector<double> phi_;
  std::vector<double> psi_;
  std::vector<double> training_log_;
};

// Draws K distinct companies uniformly from the pool of companies sharing
// no transition with `u` (itself excluded). Throws PoolExhausted when the
// pool is smaller than K.
std::vector<std::uint32_t> sample_negatives(std::uint32_t u, std::uint32_t k,
                                            const TransitionDataset& dataset,
                                            Rng& rng);
std::vector<CompanyId> sample_negatives(const CompanyId& u, std::uint32_t k,
                                        const TransitionDataset& dataset,
                                        Rng& rng);

// One skip-gram-with-negatives step. `contexts` holds the destination
// vectors of the positive target and the negatives; `positive` is the index
// of the positive inside `contexts`. Context vectors are updated with the
// pre-update center, and the center is updated last with the accumulated
// correction.
void sgd_update(std::span<double> center,
                std::span<const std::span<double>> contexts,
                std::size_t positive, double lr);

// Trains origin and destination embeddings on the transition multiset.
EmbeddingModel fit(const TransitionDataset& dataset,
                   const EmbeddingConfig& config);

// Log likelihood of the given pair visits under frozen negative draws:
// sum of log sigma(phi_u . psi_v) plus log(1 - sigma(phi_u . psi_w)) over
// the negatives w of each visit. Always <= 0.
double objective(
    const EmbeddingModel& model,
    std::span<const std::pair<std::uint32_t, std::uint32_t>> pair_visits,
    const std::vector<std::vector<std::uint32_t>>& frozen_negatives);

// sigma(phi_u . psi_v) * prod_k sigma(-phi_u . psi_w_k).
double transition_probability(const EmbeddingModel& model, std::uint32_t u,
                              std::uint32_t v,
                              std::span<const std::uint32_t> negatives);

// Bidirectional normalized score in [0, 1]; exact max over all embedded
// companies w distinct from the conditioning company. Symmetric.
double peer_score(const EmbeddingModel& model, std::uint32_t u,
                  std::uint32_t v);
double peer_score(const EmbeddingModel& model, const CompanyId& u,
                  const CompanyId& v);

// Max over w != u of phi_u . psi_w, one entry per company. threads=1 gives
// the serial reference; larger values run the parallel kernel (identical
// output either way).
std::vector<double> max_origin_dots(const EmbeddingModel& model,
                                    std::uint32_t threads = 1);

// Binary model file: fixed header + per-company records with float32
// little-endian vectors. Byte-exact round trip.
void save_model(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_model(const std::filesystem::path& path);
void export_model_jsonl(const EmbeddingModel& model, std::ostream& out);

}  // namespace compsight
