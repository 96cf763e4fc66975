#include "mohone/kge.hpp"

#include "mohone/embedding_io.hpp"
#include "mohone/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mohone {

KgeModel parse_kge_model(std::string_view name) {
  if (name == "transe") return KgeModel::kTransE;
  if (name == "distmult") return KgeModel::kDistMult;
  if (name == "complex") return KgeModel::kComplEx;
  throw ConfigError("unknown KGE model '" + std::string(name) + "' (transe|distmult|complex)");
}

std::string_view to_string(KgeModel m) {
  switch (m) {
    case KgeModel::kTransE: return "transe";
    case KgeModel::kDistMult: return "distmult";
    case KgeModel::kComplEx: return "complex";
  }
  return "?";
}

std::size_t kge_width(KgeModel m, std::size_t dim) { return m == KgeModel::kComplEx ? 2 * dim : dim; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adagrad") return Optimizer::kAdagrad;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (sgd|adagrad)");
}

std::string_view to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adagrad"; }

double score(KgeModel model, std::span<const double> h, std::span<const double> r, std::span<const double> t) {
  switch (model) {
    case KgeModel::kTransE: {
      double sq = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        const double x = h[i] + r[i] - t[i];
        sq += x * x;
      }
      return -std::sqrt(sq);
    }
    case KgeModel::kDistMult: {
      double s = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * r[i] * t[i];
      return s;
    }
    case KgeModel::kComplEx: {
      const std::size_t d = h.size() / 2;
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double a = h[i], b = h[d + i], c = r[i], e = r[d + i], f = t[i], g = t[d + i];
        s += (a * c - b * e) * f + (a * e + b * c) * g;
      }
      return s;
    }
  }
  return 0.0;
}

namespace {

std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gradient sink with touched-row tracking so sparse batches stay cheap on large vocabularies.
struct GradAccumulator {
  RowMatrix ent, rel;
  std::vector<Eigen::Index> touched_ent, touched_rel;
  std::vector<char> ent_flag, rel_flag;

  GradAccumulator(Eigen::Index n_ent, Eigen::Index n_rel, Eigen::Index width)
      : ent(RowMatrix::Zero(n_ent, width)),
        rel(RowMatrix::Zero(n_rel, width)),
        ent_flag(static_cast<std::size_t>(n_ent), 0),
        rel_flag(static_cast<std::size_t>(n_rel), 0) {}

  double* ent_row(Eigen::Index i) {
    if (!ent_flag[static_cast<std::size_t>(i)]) {
      ent_flag[static_cast<std::size_t>(i)] = 1;
      touched_ent.push_back(i);
    }
    return ent.data() + i * ent.cols();
  }
  double* rel_row(Eigen::Index i) {
    if (!rel_flag[static_cast<std::size_t>(i)]) {
      rel_flag[static_cast<std::size_t>(i)] = 1;
      touched_rel.push_back(i);
    }
    return rel.data() + i * rel.cols();
  }
  void clear() {
    for (auto i : touched_ent) {
      ent.row(i).setZero();
      ent_flag[static_cast<std::size_t>(i)] = 0;
    }
    for (auto i : touched_rel) {
      rel.row(i).setZero();
      rel_flag[static_cast<std::size_t>(i)] = 0;
    }
    touched_ent.clear();
    touched_rel.clear();
  }
};

// Adds coef * d score(t) / d params into acc.
void add_score_gradient(const KGEmbedding& emb, const Triple& t, double coef, GradAccumulator& acc) {
  const auto h = row_span(emb.entities, t.head);
  const auto r = row_span(emb.relations, t.relation);
  const auto tl = row_span(emb.entities, t.tail);
  const std::size_t w = h.size();
  double* gh = acc.ent_row(t.head);
  double* gr = acc.rel_row(t.relation);
  double* gt = acc.ent_row(t.tail);
  switch (emb.model) {
    case KgeModel::kTransE: {
      double sq = 0.0;
      for (std::size_t i = 0; i < w; ++i) {
        const double x = h[i] + r[i] - tl[i];
        sq += x * x;
      }
      const double norm = std::sqrt(sq);
      if (norm == 0.0) return;
      for (std::size_t i = 0; i < w; ++i) {
        const double g = coef * (h[i] + r[i] - tl[i]) / norm;
        gh[i] -= g;
        gr[i] -= g;
        gt[i] += g;
      }
      return;
    }
    case KgeModel::kDistMult:
      for (std::size_t i = 0; i < w; ++i) {
        const double hi = h[i], ri = r[i], ti = tl[i];
        gh[i] += coef * ri * ti;
        gr[i] += coef * hi * ti;
        gt[i] += coef * hi * ri;
      }
      return;
    case KgeModel::kComplEx: {
      const std::size_t d = w / 2;
      for (std::size_t i = 0; i < d; ++i) {
        const double a = h[i], b = h[d + i], c = r[i], e = r[d + i], f = tl[i], g = tl[d + i];
        gh[i] += coef * (c * f + e * g);
        gh[d + i] += coef * (c * g - e * f);
        gr[i] += coef * (a * f + b * g);
        gr[d + i] += coef * (a * g - b * f);
        gt[i] += coef * (a * c - b * e);
        gt[d + i] += coef * (a * e + b * c);
      }
      return;
    }
  }
}

double pair_loss(const KGEmbedding& emb, const TrainingPair& p, double margin) {
  const double sp = score(emb, p.positive.head, p.positive.relation, p.positive.tail);
  const double sn = score(emb, p.negative.head, p.negative.relation, p.negative.tail);
  if (emb.model == KgeModel::kTransE) return std::max(0.0, margin - sp + sn);
  return log1p_exp(-sp) + log1p_exp(sn);
}

// Returns the pair's loss and accumulates its gradient.
double accumulate_pair(const KGEmbedding& emb, const TrainingPair& p, double margin, GradAccumulator& acc) {
  const double sp = score(emb, p.positive.head, p.positive.relation, p.positive.tail);
  const double sn = score(emb, p.negative.head, p.negative.relation, p.negative.tail);
  if (emb.model == KgeModel::kTransE) {
    const double loss = margin - sp + sn;
    if (loss <= 0.0) return 0.0;
    add_score_gradient(emb, p.positive, -1.0, acc);
    add_score_gradient(emb, p.negative, 1.0, acc);
    return loss;
  }
  // d/ds log(1 + e^{-s}) = -sigma(-s); d/ds log(1 + e^{s}) = sigma(s).
  add_score_gradient(emb, p.positive, -sigmoid(-sp), acc);
  add_score_gradient(emb, p.negative, sigmoid(sn), acc);
  return log1p_exp(-sp) + log1p_exp(sn);
}

void normalize_row(RowMatrix& m, Eigen::Index i) {
  const double n = m.row(i).norm();
  if (n > 0.0) m.row(i) /= n;
}

}  // namespace

double score(const KGEmbedding& emb, EntityId h, RelationId r, EntityId t) {
  return score(emb.model, row_span(emb.entities, h), row_span(emb.relations, r), row_span(emb.entities, t));
}

double batch_loss(const KGEmbedding& emb, std::span<const TrainingPair> batch, double margin) {
  double total = 0.0;
  for (const auto& p : batch) total += pair_loss(emb, p, margin);
  return total;
}

KgeGradient batch_gradient(const KGEmbedding& emb, std::span<const TrainingPair> batch, double margin) {
  GradAccumulator acc(emb.entities.rows(), emb.relations.rows(), emb.entities.cols());
  for (const auto& p : batch) accumulate_pair(emb, p, margin, acc);
  return {std::move(acc.ent), std::move(acc.rel)};
}

void KgeTrainConfig::validate() const {
  if (dim < 1) throw ConfigError("kge dim must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (negatives_per_positive < 1) throw ConfigError("negatives per positive must be >= 1");
  if (model == KgeModel::kTransE && !(margin > 0.0)) throw ConfigError("TransE margin must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(lr_decay >= 0.0)) throw ConfigError("learning rate decay must be >= 0");
}

CorruptionSampler::CorruptionSampler(std::span<const Triple> known, std::size_t num_entities)
    : known_(known.begin(), known.end()), num_entities_(num_entities) {
  std::sort(known_.begin(), known_.end());
  known_.erase(std::unique(known_.begin(), known_.end()), known_.end());
}

bool CorruptionSampler::is_known(const Triple& t) const { return std::binary_search(known_.begin(), known_.end(), t); }

Triple CorruptionSampler::corrupt(const Triple& t, std::mt19937_64& rng) const {
  if (num_entities_ < 2) return t;
  std::bernoulli_distribution side(0.5);
  // Draw from the n - 1 entities other than the one being replaced.
  std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(num_entities_ - 2));
  Triple candidate = t;
  for (int attempt = 0; attempt < 16; ++attempt) {
    candidate = t;
    const bool head = side(rng);
    EntityId& slot = head ? candidate.head : candidate.tail;
    const EntityId original = slot;
    EntityId e = pick(rng);
    if (e >= original) ++e;
    slot = e;
    if (!is_known(candidate)) return candidate;
  }
  return candidate;
}

KGEmbedding init_kge(KgeModel model, std::size_t dim, std::size_t num_entities, std::size_t num_relations,
                     std::uint64_t seed) {
  KGEmbedding emb;
  emb.model = model;
  emb.dim = dim;
  const auto w = static_cast<Eigen::Index>(kge_width(model, dim));
  emb.entities.resize(static_cast<Eigen::Index>(num_entities), w);
  emb.relations.resize(static_cast<Eigen::Index>(num_relations), w);
  std::mt19937_64 rng(seed);
  const double bound = 6.0 / static_cast<double>(dim);
  std::uniform_real_distribution<double> unif(-bound, bound);
  for (Eigen::Index i = 0; i < emb.entities.size(); ++i) emb.entities.data()[i] = unif(rng);
  for (Eigen::Index i = 0; i < emb.relations.size(); ++i) emb.relations.data()[i] = unif(rng);
  if (model == KgeModel::kTransE) {
    for (Eigen::Index i = 0; i < emb.entities.rows(); ++i) normalize_row(emb.entities, i);
    for (Eigen::Index i = 0; i < emb.relations.rows(); ++i) normalize_row(emb.relations, i);
  }
  return emb;
}

void fit_kge(KGEmbedding& emb, std::span<const Triple> triples, const KgeTrainConfig& cfg, bool freeze_entities,
             KgeTrainLog* log) {
  cfg.validate();
  if (cfg.epochs == 0 || triples.empty()) return;
  const CorruptionSampler corrupter(triples, static_cast<std::size_t>(emb.entities.rows()));
  std::mt19937_64 rng(cfg.seed ^ 0xc0ffee);
  GradAccumulator acc(emb.entities.rows(), emb.relations.rows(), emb.entities.cols());
  RowMatrix hist_ent, hist_rel;
  if (cfg.optimizer == Optimizer::kAdagrad) {
    hist_ent = RowMatrix::Zero(emb.entities.rows(), emb.entities.cols());
    hist_rel = RowMatrix::Zero(emb.relations.rows(), emb.relations.cols());
  }

  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainingPair> batch;
  batch.reserve(cfg.batch_size * cfg.negatives_per_positive);

  auto apply = [&](RowMatrix& param, RowMatrix& grad, RowMatrix& hist, std::span<const Eigen::Index> rows, double lr) {
    for (auto i : rows) {
      if (cfg.optimizer == Optimizer::kSgd) {
        param.row(i) -= lr * grad.row(i);
      } else {
        hist.row(i).array() += grad.row(i).array().square();
        param.row(i).array() -= lr * grad.row(i).array() / (hist.row(i).array().sqrt() + 1e-10);
      }
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate / (1.0 + cfg.lr_decay * static_cast<double>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_pairs = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        const Triple& pos = triples[order[i]];
        for (std::size_t k = 0; k < cfg.negatives_per_positive; ++k) batch.push_back({pos, corrupter.corrupt(pos, rng)});
      }
      for (const auto& p : batch) epoch_loss += accumulate_pair(emb, p, cfg.margin, acc);
      epoch_pairs += batch.size();
      if (!freeze_entities) apply(emb.entities, acc.ent, hist_ent, acc.touched_ent, lr);
      apply(emb.relations, acc.rel, hist_rel, acc.touched_rel, lr);
      if (!freeze_entities && emb.model == KgeModel::kTransE) {
        for (auto i : acc.touched_ent) normalize_row(emb.entities, i);
      }
      acc.clear();
    }
    if (log) log->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_pairs)));
  }
}

KGEmbedding train_kge(const TripleStore& store, const KgeTrainConfig& cfg, KgeTrainLog* log) {
  cfg.validate();
  if (store.triples.empty()) throw DataError("cannot train KGE on an empty triple store");
  KGEmbedding emb = init_kge(cfg.model, cfg.dim, store.entities.size(), store.relations.size(), cfg.seed);
  fit_kge(emb, store.triples, cfg, false, log);
  return emb;
}

KGEmbedding relearn_relations(const TripleStore& store, const RowMatrix& frozen_entities, const KgeTrainConfig& cfg,
                              KgeTrainLog* log) {
  cfg.validate();
  const auto width = static_cast<Eigen::Index>(kge_width(cfg.model, cfg.dim));
  if (frozen_entities.cols() != width) {
    throw DataError("frozen entity width " + std::to_string(frozen_entities.cols()) + " does not match " +
                    std::string(to_string(cfg.model)) + " dim " + std::to_string(cfg.dim));
  }
  if (static_cast<std::size_t>(frozen_entities.rows()) != store.entities.size()) {
    throw DataError("frozen entity rows " + std::to_string(frozen_entities.rows()) + " != vocabulary size " +
                    std::to_string(store.entities.size()));
  }
  KGEmbedding emb = init_kge(cfg.model, cfg.dim, 0, store.relations.size(), cfg.seed);
  emb.entities = frozen_entities;
  fit_kge(emb, store.triples, cfg, true, log);
  return emb;
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void write_kge(const std::filesystem::path& dir, const KGEmbedding& emb, const TripleStore& store,
               const KgeTrainConfig& cfg, const KgeArtifactMeta& meta) {
  std::filesystem::create_directories(dir);
  write_word2vec(dir / "entities.vec", store.entities.tokens(), emb.entities);
  write_word2vec(dir / "relations.vec", store.relations.tokens(), emb.relations, "rel:");
  nlohmann::json j;
  j["model"] = to_string(emb.model);
  j["dim"] = emb.dim;
  j["vocab_hash"] = hex64(meta.vocab_hash);
  j["config_hash"] = meta.config_hash;
  j["config"] = {{"batch_size", cfg.batch_size},       {"epochs", cfg.epochs},
                 {"margin", cfg.margin},               {"learning_rate", cfg.learning_rate},
                 {"lr_decay", cfg.lr_decay},           {"optimizer", to_string(cfg.optimizer)},
                 {"negatives_per_positive", cfg.negatives_per_positive}, {"seed", cfg.seed}};
  std::ofstream out(dir / "model.json");
  if (!out) throw DataError("cannot write " + (dir / "model.json").string());
  out << j.dump(2) << '\n';
}

LoadedKge read_kge(const std::filesystem::path& dir) {
  const auto meta_path = dir / "model.json";
  std::ifstream in(meta_path);
  if (!in) throw DataError("missing " + meta_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  LoadedKge out;
  try {
    out.embedding.model = parse_kge_model(j.at("model").get<std::string>());
    out.embedding.dim = j.at("dim").get<std::size_t>();
    out.vocab_hash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
    out.config_hash = j.value("config_hash", "");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  auto ents = read_word2vec(dir / "entities.vec");
  auto rels = read_word2vec(dir / "relations.vec", "rel:");
  const auto width = static_cast<Eigen::Index>(kge_width(out.embedding.model, out.embedding.dim));
  if (ents.vectors.cols() != width || rels.vectors.cols() != width) {
    throw DataError(dir.string() + ": embedding width does not match model.json");
  }
  out.entities = Vocabulary::from_tokens(ents.tokens);
  out.relations = Vocabulary::from_tokens(rels.tokens);
  out.embedding.entities = std::move(ents.vectors);
  out.embedding.relations = std::move(rels.vectors);
  return out;
}

}  // namespace mohone
