#include "mohone/netembed.hpp"

#include "mohone/error.hpp"
#include "mohone/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace mohone {

AliasTable::AliasTable(std::span<const double> weights) {
  const std::size_t n = weights.size();
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("alias table weights must be finite and >= 0");
    total += w;
  }
  if (n == 0 || !(total > 0.0)) throw DataError("alias table needs positive total weight");

  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::size_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = weights[i] * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const std::size_t s = small.back();
    small.pop_back();
    const std::size_t l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (std::size_t i : large) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
  // Leftovers here are rounding residue.
  for (std::size_t i : small) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
}

SamplerMode parse_sampler_mode(std::string_view name) {
  if (name == "shnb") return SamplerMode::kShnb;
  if (name == "structural") return SamplerMode::kStructural;
  throw ConfigError("unknown embedding mode '" + std::string(name) + "' (shnb|structural)");
}

std::string_view to_string(SamplerMode m) { return m == SamplerMode::kShnb ? "shnb" : "structural"; }

PairSampler::PairSampler(SamplerMode mode, std::size_t num_nodes, std::size_t neighbor_cap)
    : mode_(mode), neighbor_cap_(neighbor_cap), weights_(num_nodes), tables_(num_nodes) {}

void PairSampler::set_weights(NodeId u, std::vector<Entry> entries) {
  std::erase_if(entries, [u](const Entry& e) { return e.node == u || !(e.weight > 0.0); });
  double total = 0.0;
  for (const auto& e : entries) total += e.weight;
  if (entries.empty() || !(total > 0.0) || !std::isfinite(total)) {
    weights_.at(u).clear();
    tables_.at(u) = AliasTable();
    return;
  }
  std::vector<double> w(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].weight /= total;
    w[i] = entries[i].weight;
  }
  tables_.at(u) = AliasTable(w);
  weights_.at(u) = std::move(entries);
}

std::size_t PairSampler::num_sampleable() const {
  return static_cast<std::size_t>(
      std::count_if(tables_.begin(), tables_.end(), [](const AliasTable& t) { return !t.empty(); }));
}

double PairSampler::weight(NodeId u, NodeId v) const {
  for (const auto& e : weights_.at(u)) {
    if (e.node == v) return e.weight;
  }
  return 0.0;
}

PairSampler build_shnb_sampler(const HeatDiffusionMatrix& psi) {
  const std::size_t n = psi.size();
  PairSampler sampler(SamplerMode::kShnb, n);
  for (std::size_t u = 0; u < n; ++u) {
    const auto col = psi.psi.col(static_cast<Eigen::Index>(u));
    std::vector<PairSampler::Entry> entries;
    double off_mass = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      const double w = col[static_cast<Eigen::Index>(v)];
      if (v == u || !(w > 0.0)) continue;
      entries.push_back({static_cast<NodeId>(v), w});
      off_mass += w;
    }
    // Residual off-node mass at round-off level is not a neighborhood.
    if (off_mass <= 1e-12) entries.clear();
    sampler.set_weights(static_cast<NodeId>(u), std::move(entries));
  }
  return sampler;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DataError("js_divergence: length mismatch (" + std::to_string(p.size()) + " vs " +
                    std::to_string(q.size()) + ")");
  }
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log(q[i] / m);
  }
  return 0.5 * kl_p + 0.5 * kl_q;
}

PairSampler build_structural_sampler(std::span<const HeatSignature> signatures, std::size_t cap,
                                     unsigned threads) {
  if (cap < 1) throw ConfigError("structural neighbor cap must be >= 1");
  const std::size_t n = signatures.size();
  PairSampler sampler(SamplerMode::kStructural, n, cap);
  if (n < 2) {
    for (std::size_t u = 0; u < n; ++u) sampler.set_weights(static_cast<NodeId>(u), {});
    return sampler;
  }

  std::vector<std::vector<PairSampler::Entry>> rows(n);
  parallel_for(n, threads, [&](std::size_t u) {
    std::vector<std::pair<double, NodeId>> div;
    div.reserve(n - 1);
    double sum = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u) continue;
      const double d = js_divergence(signatures[u].histogram, signatures[v].histogram);
      div.emplace_back(d, static_cast<NodeId>(v));
      sum += d;
    }
    const double count = static_cast<double>(div.size());
    const double mean = sum / count;
    double var = 0.0;
    for (const auto& [d, v] : div) var += (d - mean) * (d - mean);
    const double sd = std::sqrt(var / count);

    std::sort(div.begin(), div.end());
    std::size_t keep = std::min(cap, div.size());
    const double boundary = div[keep - 1].first;
    while (keep < div.size() && div[keep].first <= boundary + 1e-12) ++keep;

    std::vector<PairSampler::Entry> entries;
    entries.reserve(keep);
    if (!(sd > 1e-12)) {
      for (std::size_t i = 0; i < keep; ++i) entries.push_back({div[i].second, 1.0});
    } else {
      // softmax(-z) over the kept set; the smallest z gives the largest logit.
      const double top = -(div[0].first - mean) / sd;
      for (std::size_t i = 0; i < keep; ++i) {
        const double logit = -(div[i].first - mean) / sd;
        entries.push_back({div[i].second, std::exp(logit - top)});
      }
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.node < b.node; });
    rows[u] = std::move(entries);
  });
  for (std::size_t u = 0; u < n; ++u) sampler.set_weights(static_cast<NodeId>(u), std::move(rows[u]));
  return sampler;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + e^{-x}) without overflow.
double softplus_neg(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

}  // namespace

double sgns_loss(const RowMatrix& f, NodeId u, NodeId v, std::span<const NodeId> negatives) {
  double loss = softplus_neg(f.row(u).dot(f.row(v)));
  for (NodeId w : negatives) loss += softplus_neg(-f.row(u).dot(f.row(w)));
  return loss;
}

RowMatrix sgns_gradient(const RowMatrix& f, NodeId u, NodeId v, std::span<const NodeId> negatives) {
  RowMatrix grad = RowMatrix::Zero(f.rows(), f.cols());
  // d/dx softplus(-x) = -(1 - sigma(x)); d/dx softplus(x) = sigma(x).
  const double gp = -(1.0 - sigmoid(f.row(u).dot(f.row(v))));
  grad.row(u) += gp * f.row(v);
  grad.row(v) += gp * f.row(u);
  for (NodeId w : negatives) {
    const double gn = sigmoid(f.row(u).dot(f.row(w)));
    grad.row(u) += gn * f.row(w);
    grad.row(w) += gn * f.row(u);
  }
  return grad;
}

namespace {

// Shared core of the serial step: reads rows, accumulates the u-gradient, writes
// context rows immediately and u last. Equivalent to a step on the pre-step state
// when u, v and the negatives are distinct.
double sgns_step_rows(RowMatrix& f, NodeId u, NodeId v, std::span<const NodeId> negatives, double lr,
                      Eigen::VectorXd& grad_u) {
  grad_u.setZero(f.cols());
  const double dp = f.row(u).dot(f.row(v));
  double loss = softplus_neg(dp);
  const double gp = -(1.0 - sigmoid(dp));
  grad_u.noalias() += gp * f.row(v).transpose();
  f.row(v) -= lr * gp * f.row(u);
  for (NodeId w : negatives) {
    const double dn = f.row(u).dot(f.row(w));
    loss += softplus_neg(-dn);
    const double gn = sigmoid(dn);
    grad_u.noalias() += gn * f.row(w).transpose();
    f.row(w) -= lr * gn * f.row(u);
  }
  f.row(u) -= lr * grad_u.transpose();
  return loss;
}

}  // namespace

double sgns_step(RowMatrix& f, NodeId u, NodeId v, std::span<const NodeId> negatives, double lr) {
  if (u == v) throw DataError("sgns_step: u == v");
  // Duplicate indices need the dense gradient to stay exact.
  bool distinct = true;
  for (std::size_t i = 0; i < negatives.size() && distinct; ++i) {
    if (negatives[i] == u || negatives[i] == v) distinct = false;
    for (std::size_t j = i + 1; j < negatives.size() && distinct; ++j) distinct = negatives[i] != negatives[j];
  }
  if (!distinct) {
    const double loss = sgns_loss(f, u, v, negatives);
    f -= lr * sgns_gradient(f, u, v, negatives);
    return loss;
  }
  Eigen::VectorXd grad_u;
  return sgns_step_rows(f, u, v, negatives, lr, grad_u);
}

void TrainConfig::validate() const {
  if (dim < 1 || epochs < 1 || pairs_per_node_per_epoch < 1 || negatives < 1) {
    throw ConfigError("embedding dim, epochs, pairs per node and negatives must all be >= 1");
  }
  if (!(initial_learning_rate > 0.0) || !(min_learning_rate > 0.0)) {
    throw ConfigError("learning rates must be > 0");
  }
}

namespace {

template <typename Rng>
void draw_negatives(Rng& rng, std::size_t n, NodeId u, NodeId v, std::vector<NodeId>& out, std::size_t k) {
  out.clear();
  if (n <= 2) return;
  std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
  while (out.size() < k) {
    const NodeId w = pick(rng);
    if (w == u || w == v || std::find(out.begin(), out.end(), w) != out.end()) {
      if (n - 2 <= out.size()) break;
      continue;
    }
    out.push_back(w);
  }
}

}  // namespace

NodeEmbeddingMatrix train_embeddings(const PairSampler& sampler, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = sampler.num_nodes();
  std::vector<NodeId> active;
  for (std::size_t u = 0; u < n; ++u) {
    if (sampler.sampleable(static_cast<NodeId>(u))) active.push_back(static_cast<NodeId>(u));
  }
  if (active.empty()) throw DataError("no sampleable nodes: every heat column is a point mass on its source");

  std::mt19937_64 rng(cfg.seed);
  NodeEmbeddingMatrix emb;
  emb.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.dim));
  const double half = 0.5 / static_cast<double>(cfg.dim);
  std::uniform_real_distribution<double> init(-half, half);
  for (Eigen::Index i = 0; i < emb.vectors.size(); ++i) emb.vectors.data()[i] = init(rng);

  const double total = static_cast<double>(cfg.epochs * cfg.pairs_per_node_per_epoch * active.size());
  auto rate_at = [&](double step) {
    return std::max(cfg.min_learning_rate, cfg.initial_learning_rate * (1.0 - step / total));
  };

  if (cfg.threads <= 1) {
    std::vector<NodeId> negs;
    Eigen::VectorXd grad_u;
    double step = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(active.begin(), active.end(), rng);
      for (NodeId u : active) {
        for (std::size_t p = 0; p < cfg.pairs_per_node_per_epoch; ++p) {
          const NodeId v = sampler.sample(u, rng);
          draw_negatives(rng, n, u, v, negs, cfg.negatives);
          sgns_step_rows(emb.vectors, u, v, negs, rate_at(step), grad_u);
          step += 1.0;
        }
      }
    }
    return emb;
  }

  // Lock-free shards: rows are read and written with relaxed atomics, so
  // concurrent updates may be lost but never tear.
  const unsigned workers = cfg.threads;
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  std::atomic<std::uint64_t> global_step{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      std::mt19937_64 local(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (w + 1)));
      std::vector<NodeId> negs;
      Eigen::VectorXd fu(d), grad_u(d), fo(d);
      auto load = [&](NodeId r, Eigen::VectorXd& dst) {
        for (Eigen::Index j = 0; j < d; ++j) dst[j] = std::atomic_ref<double>(emb.vectors(r, j)).load(std::memory_order_relaxed);
      };
      auto add = [&](NodeId r, const Eigen::VectorXd& delta) {
        for (Eigen::Index j = 0; j < d; ++j) {
          std::atomic_ref<double> cell(emb.vectors(r, j));
          cell.store(cell.load(std::memory_order_relaxed) + delta[j], std::memory_order_relaxed);
        }
      };
      for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = w; i < active.size(); i += workers) {
          const NodeId u = active[i];
          for (std::size_t p = 0; p < cfg.pairs_per_node_per_epoch; ++p) {
            const NodeId v = sampler.sample(u, local);
            draw_negatives(local, n, u, v, negs, cfg.negatives);
            const double lr = rate_at(static_cast<double>(global_step.fetch_add(1, std::memory_order_relaxed)));
            load(u, fu);
            grad_u.setZero();
            load(v, fo);
            const double gp = -(1.0 - sigmoid(fu.dot(fo)));
            grad_u += gp * fo;
            add(v, -lr * gp * fu);
            for (NodeId neg : negs) {
              load(neg, fo);
              const double gn = sigmoid(fu.dot(fo));
              grad_u += gn * fo;
              add(neg, -lr * gn * fu);
            }
            add(u, -lr * grad_u);
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  return emb;
}

}  // namespace mohone
