#pragma once

#include "mohone/graph.hpp"
#include "mohone/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mohone {

enum class KgeModel { kTransE, kDistMult, kComplEx };

KgeModel parse_kge_model(std::string_view name);
std::string_view to_string(KgeModel m);

/// Row width for a model of dimension d (ComplEx stores real then imaginary halves).
std::size_t kge_width(KgeModel m, std::size_t dim);

struct KGEmbedding {
  KgeModel model = KgeModel::kTransE;
  std::size_t dim = 0;
  RowMatrix entities;
  RowMatrix relations;
};

/// Plausibility score; higher is more plausible for every model.
double score(KgeModel model, std::span<const double> head, std::span<const double> rel,
             std::span<const double> tail);
double score(const KGEmbedding& emb, EntityId h, RelationId r, EntityId t);

enum class Optimizer { kSgd, kAdagrad };

Optimizer parse_optimizer(std::string_view name);
std::string_view to_string(Optimizer o);

struct KgeTrainConfig {
  KgeModel model = KgeModel::kTransE;
  std::size_t dim = 100;
  std::size_t batch_size = 100;
  std::size_t epochs = 500;
  double margin = 1.0;
  double learning_rate = 0.01;
  /// Per-epoch rate is learning_rate / (1 + lr_decay * epoch).
  double lr_decay = 0.0;
  Optimizer optimizer = Optimizer::kSgd;
  std::size_t negatives_per_positive = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// A positive triple and its corrupted counterpart.
struct TrainingPair {
  Triple positive;
  Triple negative;
};

/// Margin ranking loss (TransE) or logistic loss on both members (DistMult, ComplEx),
/// summed over the batch.
double batch_loss(const KGEmbedding& emb, std::span<const TrainingPair> batch, double margin);

/// Dense gradient of batch_loss with respect to entity and relation rows.
struct KgeGradient {
  RowMatrix entities;
  RowMatrix relations;
};
KgeGradient batch_gradient(const KGEmbedding& emb, std::span<const TrainingPair> batch, double margin);

/// Uniform head-or-tail corruption that never returns the positive itself and
/// avoids other training triples when it can.
class CorruptionSampler {
 public:
  CorruptionSampler(std::span<const Triple> known, std::size_t num_entities);

  Triple corrupt(const Triple& t, std::mt19937_64& rng) const;

  bool is_known(const Triple& t) const;

 private:
  std::vector<Triple> known_;
  std::size_t num_entities_;
};

/// Initializes entities and relations uniformly in [-6/d, 6/d]; TransE rows are unit-normalized.
KGEmbedding init_kge(KgeModel model, std::size_t dim, std::size_t num_entities, std::size_t num_relations,
                     std::uint64_t seed);

/// Per-epoch mean loss reported by training.
struct KgeTrainLog {
  std::vector<double> epoch_mean_loss;
};

KGEmbedding train_kge(const TripleStore& store, const KgeTrainConfig& cfg, KgeTrainLog* log = nullptr);

/// Continues training `emb` in place. With `freeze_entities` entity rows are never written.
void fit_kge(KGEmbedding& emb, std::span<const Triple> triples, const KgeTrainConfig& cfg,
             bool freeze_entities, KgeTrainLog* log = nullptr);

/// Fresh relation parameters trained against fixed entity rows.
KGEmbedding relearn_relations(const TripleStore& store, const RowMatrix& frozen_entities,
                              const KgeTrainConfig& cfg, KgeTrainLog* log = nullptr);

/// entities.vec, relations.vec (tokens prefixed "rel:") and model.json.
struct KgeArtifactMeta {
  std::uint64_t vocab_hash = 0;
  std::string config_hash;
};
void write_kge(const std::filesystem::path& dir, const KGEmbedding& emb, const TripleStore& store,
               const KgeTrainConfig& cfg, const KgeArtifactMeta& meta);

struct LoadedKge {
  KGEmbedding embedding;
  Vocabulary entities;
  Vocabulary relations;
  std::uint64_t vocab_hash = 0;
  std::string config_hash;
};
LoadedKge read_kge(const std::filesystem::path& dir);

}  // namespace mohone
