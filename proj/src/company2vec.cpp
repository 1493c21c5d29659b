#include "compsight/company2vec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "compsight/stats.hpp"

namespace compsight {

void EmbeddingConfig::validate() const {
  if (dim < 1) throw ConfigError("embedding dim must be >= 1");
  if (negatives < 1) throw ConfigError("negative sample size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (convergence_tol < 0.0) throw ConfigError("convergence_tol must be >= 0");
}

EmbeddingModel::EmbeddingModel(EmbeddingConfig config,
                               std::vector<CompanyId> companies)
    : config_(config), companies_(std::move(companies)) {
  index_.reserve(companies_.size());
  for (std::uint32_t i = 0; i < companies_.size(); ++i) {
    index_.emplace(companies_[i], i);
  }
  phi_.assign(companies_.size() * std::size_t{config_.dim}, 0.0);
  psi_.assign(companies_.size() * std::size_t{config_.dim}, 0.0);
}

std::uint32_t EmbeddingModel::index_of(const CompanyId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw NotFoundError("company not embedded: " + id);
  return it->second;
}

CompanyEmbedding EmbeddingModel::embedding(const CompanyId& id) const {
  const auto i = index_of(id);
  const auto p = phi(i);
  const auto q = psi(i);
  return {{p.begin(), p.end()}, {q.begin(), q.end()}};
}

namespace {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += a[d] * b[d];
  return s;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Uniform or occurrence^0.75-weighted draws from the non-adjacent pool.
// Eligible pool sizes are precomputed so draws are allocation-free apart
// from the output buffer.
class NegativeSampler {
 public:
  NegativeSampler(const TransitionDataset& d, bool weighted)
      : d_(d), weighted_(weighted) {
    const std::size_t nc = d.company_count();
    eligible_.resize(nc);
    if (weighted_) {
      cum_.resize(nc);
      double total = 0.0;
      std::size_t positive_companies = 0;
      for (std::size_t i = 0; i < nc; ++i) {
        const double w =
            std::pow(static_cast<double>(d.occurrences(
                         static_cast<std::uint32_t>(i))),
                     0.75);
        total += w;
        cum_[i] = total;
        if (w > 0.0) ++positive_companies;
      }
      total_weight_ = total;
      for (std::uint32_t u = 0; u < nc; ++u) {
        std::size_t excluded = d.occurrences(u) > 0 ? 1 : 0;
        for (auto w : d.adjacency(u)) {
          if (d.occurrences(w) > 0) ++excluded;
        }
        eligible_[u] = positive_companies - excluded;
      }
    } else {
      for (std::uint32_t u = 0; u < nc; ++u) {
        eligible_[u] = nc - 1 - d.adjacency(u).size();
      }
    }
  }

  std::size_t eligible(std::uint32_t u) const { return eligible_[u]; }

  void draw(std::uint32_t u, std::uint32_t k, Rng& rng,
            std::vector<std::uint32_t>& out) const {
    out.clear();
    if (eligible_[u] < k) throw PoolExhaustedError(d_.id_of(u));
    const auto adj = d_.adjacency(u);
    const auto nc = static_cast<std::uint32_t>(d_.company_count());
    const bool sparse_pool = !weighted_ && eligible_[u] < nc / 4;
    if (sparse_pool) {
      // enumerate the pool and draw by partial Fisher-Yates
      std::vector<std::uint32_t> cand;
      cand.reserve(eligible_[u]);
      for (std::uint32_t w = 0; w < nc; ++w) {
        if (w != u && !std::binary_search(adj.begin(), adj.end(), w)) {
          cand.push_back(w);
        }
      }
      for (std::uint32_t i = 0; i < k; ++i) {
        const auto j = i + rng.below(cand.size() - i);
        std::swap(cand[i], cand[j]);
        out.push_back(cand[i]);
      }
      return;
    }
    while (out.size() < k) {
      std::uint32_t w;
      if (weighted_) {
        const double r = rng.uniform01() * total_weight_;
        w = static_cast<std::uint32_t>(
            std::upper_bound(cum_.begin(), cum_.end(), r) - cum_.begin());
        if (w >= nc) w = nc - 1;
      } else {
        w = static_cast<std::uint32_t>(rng.below(nc));
      }
      if (w == u) continue;
      if (std::binary_search(adj.begin(), adj.end(), w)) continue;
      if (std::find(out.begin(), out.end(), w) != out.end()) continue;
      out.push_back(w);
    }
  }

 private:
  const TransitionDataset& d_;
  bool weighted_;
  std::vector<double> cum_;
  double total_weight_ = 0.0;
  std::vector<std::size_t> eligible_;
};

// Alg-1 step on raw model storage; `scratch` has dim slots.
void update_side(EmbeddingModel& model, std::uint32_t center_idx,
                 std::uint32_t positive_idx,
                 std::span<const std::uint32_t> negatives, bool origin_side,
                 double lr, double* scratch) {
  const std::uint32_t m = model.dim();
  auto center = origin_side ? model.phi_mut(center_idx)
                            : model.psi_mut(center_idx);
  std::fill(scratch, scratch + m, 0.0);
  const std::size_t n_ctx = negatives.size() + 1;
  for (std::size_t zi = 0; zi < n_ctx; ++zi) {
    const bool is_positive = zi == 0;
    const std::uint32_t z = is_positive
                                ? positive_idx
                                : negatives[zi - 1];
    auto ctx = origin_side ? model.psi_mut(z) : model.phi_mut(z);
    double s = 0.0;
    for (std::uint32_t d = 0; d < m; ++d) s += center[d] * ctx[d];
    const double g = lr * ((is_positive ? 1.0 : 0.0) - sigmoid(s));
    for (std::uint32_t d = 0; d < m; ++d) {
      scratch[d] += g * ctx[d];
      ctx[d] += g * center[d];
    }
  }
  for (std::uint32_t d = 0; d < m; ++d) center[d] += scratch[d];
}

}  // namespace

std::vector<std::uint32_t> sample_negatives(std::uint32_t u, std::uint32_t k,
                                            const TransitionDataset& dataset,
                                            Rng& rng) {
  NegativeSampler sampler(dataset, false);
  std::vector<std::uint32_t> out;
  sampler.draw(u, k, rng, out);
  return out;
}

std::vector<CompanyId> sample_negatives(const CompanyId& u, std::uint32_t k,
                                        const TransitionDataset& dataset,
                                        Rng& rng) {
  const auto idx = dataset.index_of(u);
  if (!idx) throw NotFoundError("company not in dataset: " + u);
  std::vector<CompanyId> ids;
  for (auto w : sample_negatives(*idx, k, dataset, rng)) {
    ids.push_back(dataset.id_of(w));
  }
  return ids;
}

void sgd_update(std::span<double> center,
                std::span<const std::span<double>> contexts,
                std::size_t positive, double lr) {
  const std::size_t m = center.size();
  std::vector<double> e(m, 0.0);
  for (std::size_t zi = 0; zi < contexts.size(); ++zi) {
    auto ctx = contexts[zi];
    double s = 0.0;
    for (std::size_t d = 0; d < m; ++d) s += center[d] * ctx[d];
    const double g = lr * ((zi == positive ? 1.0 : 0.0) - sigmoid(s));
    for (std::size_t d = 0; d < m; ++d) {
      e[d] += g * ctx[d];
      ctx[d] += g * center[d];
    }
  }
  for (std::size_t d = 0; d < m; ++d) center[d] += e[d];
}

double objective(
    const EmbeddingModel& model,
    std::span<const std::pair<std::uint32_t, std::uint32_t>> pair_visits,
    const std::vector<std::vector<std::uint32_t>>& frozen_negatives) {
  double total = 0.0;
  for (std::size_t i = 0; i < pair_visits.size(); ++i) {
    const auto [u, v] = pair_visits[i];
    const auto phi_u = model.phi(u);
    total += log_sigmoid(dot(phi_u, model.psi(v)));
    for (auto w : frozen_negatives[i]) {
      total += log1m_sigmoid(dot(phi_u, model.psi(w)));
    }
  }
  return total;
}

double transition_probability(const EmbeddingModel& model, std::uint32_t u,
                              std::uint32_t v,
                              std::span<const std::uint32_t> negatives) {
  const auto phi_u = model.phi(u);
  double p = sigmoid(dot(phi_u, model.psi(v)));
  for (auto w : negatives) {
    p *= sigmoid(-dot(phi_u, model.psi(w)));
  }
  return p;
}

std::vector<double> max_origin_dots(const EmbeddingModel& model,
                                    std::uint32_t threads) {
  const auto nc = static_cast<std::int64_t>(model.company_count());
  std::vector<double> maxima(
      static_cast<std::size_t>(nc),
      -std::numeric_limits<double>::infinity());
  if (threads == 1) {
    for (std::int64_t u = 0; u < nc; ++u) {
      const auto phi_u = model.phi(static_cast<std::uint32_t>(u));
      double best = -std::numeric_limits<double>::infinity();
      for (std::int64_t w = 0; w < nc; ++w) {
        if (w == u) continue;
        const double s = dot(phi_u, model.psi(static_cast<std::uint32_t>(w)));
        if (s > best) best = s;
      }
      maxima[static_cast<std::size_t>(u)] = best;
    }
    return maxima;
  }
#ifdef _OPENMP
  omp_set_num_threads(threads == 0 ? omp_get_max_threads()
                                   : static_cast<int>(threads));
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t u = 0; u < nc; ++u) {
    const auto phi_u = model.phi(static_cast<std::uint32_t>(u));
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t w = 0; w < nc; ++w) {
      if (w == u) continue;
      const double s = dot(phi_u, model.psi(static_cast<std::uint32_t>(w)));
      if (s > best) best = s;
    }
    maxima[static_cast<std::size_t>(u)] = best;
  }
  return maxima;
}

double peer_score(const EmbeddingModel& model, std::uint32_t u,
                  std::uint32_t v) {
  if (u == v) throw std::invalid_argument("peer_score: u and v must differ");
  const auto nc = model.company_count();
  double max_u = -std::numeric_limits<double>::infinity();
  double max_v = -std::numeric_limits<double>::infinity();
  const auto phi_u = model.phi(u);
  const auto phi_v = model.phi(v);
  for (std::uint32_t w = 0; w < nc; ++w) {
    if (w != u) {
      const double s = dot(phi_u, model.psi(w));
      if (s > max_u) max_u = s;
    }
    if (w != v) {
      const double s = dot(phi_v, model.psi(w));
      if (s > max_v) max_v = s;
    }
  }
  const double forward = sigmoid(dot(phi_u, model.psi(v))) / sigmoid(max_u);
  const double backward = sigmoid(dot(phi_v, model.psi(u))) / sigmoid(max_v);
  return forward * backward;
}

double peer_score(const EmbeddingModel& model, const CompanyId& u,
                  const CompanyId& v) {
  return peer_score(model, model.index_of(u), model.index_of(v));
}

EmbeddingModel fit(const TransitionDataset& dataset,
                   const EmbeddingConfig& config) {
  config.validate();
  if (dataset.pairs().empty()) {
    throw EmptyDatasetError("fit: no transition pairs after filtering");
  }
  EmbeddingModel model(config, dataset.companies());
  const std::uint32_t m = config.dim;
  const std::uint32_t k = config.negatives;
  Rng rng(config.seed);

  // phi uniform in [-0.5/m, +0.5/m], psi zero
  for (std::uint32_t i = 0; i < model.company_count(); ++i) {
    auto phi = model.phi_mut(i);
    for (std::uint32_t d = 0; d < m; ++d) {
      phi[d] = (rng.uniform01() - 0.5) / m;
    }
  }

  NegativeSampler sampler(dataset, config.frequency_weighted_negatives);

  // Frozen draws used only to evaluate the per-epoch objective, so the
  // convergence signal is comparable across epochs.
  const auto eval_visits = dataset.expand_pairs();
  std::vector<std::vector<std::uint32_t>> eval_negs(eval_visits.size());
  {
    std::vector<std::uint32_t> buf;
    for (std::size_t i = 0; i < eval_visits.size(); ++i) {
      sampler.draw(eval_visits[i].first, k, rng, buf);
      eval_negs[i] = buf;
    }
  }

  auto visits = eval_visits;
  const double total_updates =
      static_cast<double>(config.epochs) * static_cast<double>(visits.size());
  const auto lr_at = [&](std::uint64_t t) {
    if (config.lr_decay == LrDecay::none) return config.learning_rate;
    return config.learning_rate *
           (1.0 - static_cast<double>(t) / total_updates);
  };

#ifdef _OPENMP
  const std::uint32_t threads =
      config.threads == 0 ? static_cast<std::uint32_t>(omp_get_max_threads())
                          : config.threads;
#else
  const std::uint32_t threads = 1;
#endif

  std::uint64_t t = 0;
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(visits);
    if (threads <= 1) {
      std::vector<double> scratch(m);
      std::vector<std::uint32_t> negs;
      for (const auto& [u, v] : visits) {
        const double lr = lr_at(t++);
        sampler.draw(u, k, rng, negs);
        update_side(model, u, v, negs, /*origin_side=*/true, lr,
                    scratch.data());
        sampler.draw(v, k, rng, negs);
        update_side(model, v, u, negs, /*origin_side=*/false, lr,
                    scratch.data());
      }
    } else {
#ifdef _OPENMP
      // Lock-free parallel updates; races on shared embedding rows are
      // tolerated, results are not reproducible.
      const std::int64_t n = static_cast<std::int64_t>(visits.size());
      std::exception_ptr err;
#pragma omp parallel num_threads(threads)
      {
        Rng trng(mix_seed(config.seed,
                          (std::uint64_t{epoch} << 20) +
                              static_cast<std::uint64_t>(
                                  omp_get_thread_num())));
        std::vector<double> scratch(m);
        std::vector<std::uint32_t> negs;
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
          try {
            const auto [u, v] = visits[static_cast<std::size_t>(i)];
            const double lr = lr_at(
                std::uint64_t{epoch} * static_cast<std::uint64_t>(n) +
                static_cast<std::uint64_t>(i));
            sampler.draw(u, k, trng, negs);
            update_side(model, u, v, negs, true, lr, scratch.data());
            sampler.draw(v, k, trng, negs);
            update_side(model, v, u, negs, false, lr, scratch.data());
          } catch (...) {
#pragma omp critical
            if (!err) err = std::current_exception();
          }
        }
      }
      if (err) std::rethrow_exception(err);
      t += visits.size();
#endif
    }

    const double obj = objective(model, eval_visits, eval_negs);
    auto& log = model.training_log_mut();
    const bool converged =
        !log.empty() && config.convergence_tol > 0.0 &&
        std::abs(obj - log.back()) <=
            config.convergence_tol * std::max(std::abs(log.back()), 1e-300);
    log.push_back(obj);
    if (converged) break;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Serialization: "C2VM" magic, u32 version, u32 dim, u64 company count, then
// per company u32 id length + id bytes + dim f32 phi + dim f32 psi. All
// integers and floats little-endian.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', '2', 'V', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_model(const EmbeddingModel& model,
                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, model.dim());
  put_u64(out, model.company_count());
  for (std::uint32_t i = 0; i < model.company_count(); ++i) {
    const auto& id = model.id_of(i);
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (double x : model.phi(i)) put_f32(out, static_cast<float>(x));
    for (double x : model.psi(i)) put_f32(out, static_cast<float>(x));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad model file magic: " + path.string());
  }
  const auto version = get_u32(in);
  if (version != kVersion) {
    throw IoError("unsupported model version " + std::to_string(version));
  }
  EmbeddingConfig config;
  config.dim = get_u32(in);
  const std::uint64_t count = get_u64(in);
  std::vector<CompanyId> ids(count);
  std::vector<double> phis, psis;
  phis.reserve(count * config.dim);
  psis.reserve(count * config.dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get_u32(in);
    std::string id(len, '\0');
    in.read(id.data(), len);
    ids[i] = std::move(id);
    for (std::uint32_t d = 0; d < config.dim; ++d) {
      phis.push_back(static_cast<double>(get_f32(in)));
    }
    for (std::uint32_t d = 0; d < config.dim; ++d) {
      psis.push_back(static_cast<double>(get_f32(in)));
    }
  }
  if (!in) throw IoError("truncated model file: " + path.string());
  EmbeddingModel model(config, std::move(ids));
  for (std::uint64_t i = 0; i < count; ++i) {
    auto phi = model.phi_mut(static_cast<std::uint32_t>(i));
    auto psi = model.psi_mut(static_cast<std::uint32_t>(i));
    for (std::uint32_t d = 0; d < config.dim; ++d) {
      phi[d] = phis[i * config.dim + d];
      psi[d] = psis[i * config.dim + d];
    }
  }
  return model;
}

void export_model_jsonl(const EmbeddingModel& model, std::ostream& out) {
  for (std::uint32_t i = 0; i < model.company_count(); ++i) {
    nlohmann::json j;
    j["id"] = model.id_of(i);
    j["phi"] = std::vector<double>(model.phi(i).begin(), model.phi(i).end());
    j["psi"] = std::vector<double>(model.psi(i).begin(), model.psi(i).end());
    out << j.dump() << '\n';
  }
}

}  // namespace compsight
