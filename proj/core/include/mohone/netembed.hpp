#pragma once

#include "mohone/diffusion.hpp"
#include "mohone/types.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace mohone {

/// Walker/Vose alias table for O(1) draws from a discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;
  /// `weights` must be nonnegative with a positive sum; they are normalized internally.
  explicit AliasTable(std::span<const double> weights);

  template <typename Rng>
  std::size_t sample(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double x = unif(rng) * static_cast<double>(prob_.size());
    auto slot = static_cast<std::size_t>(x);
    if (slot >= prob_.size()) slot = prob_.size() - 1;
    return (x - static_cast<double>(slot)) < prob_[slot] ? slot : alias_[slot];
  }

  std::size_t size() const noexcept { return prob_.size(); }
  bool empty() const noexcept { return prob_.empty(); }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

enum class SamplerMode { kShnb, kStructural };

SamplerMode parse_sampler_mode(std::string_view name);
std::string_view to_string(SamplerMode m);

/// Per-node context distribution over other nodes.
class PairSampler {
 public:
  struct Entry {
    NodeId node;
    double weight;
  };

  PairSampler(SamplerMode mode, std::size_t num_nodes, std::size_t neighbor_cap = 0);

  SamplerMode mode() const noexcept { return mode_; }
  std::size_t num_nodes() const noexcept { return weights_.size(); }
  std::size_t neighbor_cap() const noexcept { return neighbor_cap_; }

  /// Installs the candidate list of `u`. Weights are renormalized to sum to one;
  /// an empty or all-zero list marks `u` unsampleable.
  void set_weights(NodeId u, std::vector<Entry> entries);

  bool sampleable(NodeId u) const { return !tables_.at(u).empty(); }
  std::size_t num_sampleable() const;
  std::span<const Entry> weights(NodeId u) const { return weights_.at(u); }
  /// Weight of `v` in the table of `u` (0 if absent).
  double weight(NodeId u, NodeId v) const;

  template <typename Rng>
  NodeId sample(NodeId u, Rng& rng) const {
    return weights_[u][tables_[u].sample(rng)].node;
  }

 private:
  SamplerMode mode_;
  std::size_t neighbor_cap_;
  std::vector<std::vector<Entry>> weights_;
  std::vector<AliasTable> tables_;
};

/// Pr(v | u) = Psi_u(v) / (1 - Psi_u(u)) for v != u. Columns with no off-node
/// mass leave u unsampleable.
PairSampler build_shnb_sampler(const HeatDiffusionMatrix& psi);

/// Jensen-Shannon divergence in nats. Throws DataError on a length mismatch.
double js_divergence(std::span<const double> p, std::span<const double> q);

inline constexpr std::size_t kDefaultStructuralCap = 10;

/// For each u: JS divergence to every other node, z-scored across v, weights
/// softmax(-z) kept on the `cap` least divergent nodes (plus any tied with the
/// last one) and renormalized. Zero variance gives uniform weights.
PairSampler build_structural_sampler(std::span<const HeatSignature> signatures,
                                     std::size_t cap = kDefaultStructuralCap, unsigned threads = 1);

struct NodeEmbeddingMatrix {
  RowMatrix vectors;

  std::size_t num_nodes() const noexcept { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors.cols()); }
};

/// Negative-sampling skipgram loss for one positive pair:
/// -log sigma(F_u . F_v) - sum_n log sigma(-F_u . F_n).
double sgns_loss(const RowMatrix& f, NodeId u, NodeId v, std::span<const NodeId> negatives);

/// Gradient of sgns_loss; only rows u, v and the negatives are nonzero.
RowMatrix sgns_gradient(const RowMatrix& f, NodeId u, NodeId v, std::span<const NodeId> negatives);

/// One SGD step on sgns_loss with gradients from the pre-step state. Returns the
/// loss before the step.
double sgns_step(RowMatrix& f, NodeId u, NodeId v, std::span<const NodeId> negatives, double lr);

struct TrainConfig {
  std::size_t dim = 100;
  std::size_t epochs = 10;
  std::size_t pairs_per_node_per_epoch = 20;
  std::size_t negatives = 5;
  double initial_learning_rate = 0.025;
  double min_learning_rate = 1e-4;
  std::uint64_t seed = 1;
  /// 1 = deterministic. More threads apply lock-free updates from node shards.
  unsigned threads = 1;

  void validate() const;
};

/// Trains F with uniformly drawn negatives and a linearly decaying rate.
NodeEmbeddingMatrix train_embeddings(const PairSampler& sampler, const TrainConfig& cfg);

}  // namespace mohone
