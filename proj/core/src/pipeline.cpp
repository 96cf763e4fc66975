#include "mohone/pipeline.hpp"

#include "mohone/embedding_io.hpp"
#include "mohone/error.hpp"
#include "mohone/retrofit.hpp"

#include <fcntl.h>
#include <sys/resource.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

namespace mohone {

namespace {

std::ostream* g_log = &std::cerr;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto s = trim(v);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + s + "'");
  }
  return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto s = trim(v);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a nonnegative integer, got '" + s + "'");
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct Field {
  const char* key;
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto path = [&f](const char* key, std::filesystem::path C::Dataset::*m) {
      f.push_back({key, [m](C& c, std::string_view v) { c.dataset.*m = trim(v); },
                   [m](const C& c) { return (c.dataset.*m).string(); }});
    };
    path("dataset.train", &C::Dataset::train);
    path("dataset.valid", &C::Dataset::valid);
    path("dataset.test", &C::Dataset::test);
    f.push_back({"dataset.name", [](C& c, std::string_view v) { c.dataset.name = trim(v); },
                 [](const C& c) { return c.dataset.name; }});

    f.push_back({"diffusion.scale", [](C& c, std::string_view v) { c.diffusion.scale = parse_double("diffusion.scale", v); },
                 [](const C& c) { return fmt_double(c.diffusion.scale); }});
    f.push_back({"diffusion.method", [](C& c, std::string_view v) { c.diffusion.method = parse_diffusion_method(trim(v)); },
                 [](const C& c) { return std::string(to_string(c.diffusion.method)); }});
    f.push_back({"diffusion.chebyshev_degree",
                 [](C& c, std::string_view v) { c.diffusion.chebyshev_degree = static_cast<int>(parse_uint("diffusion.chebyshev_degree", v)); },
                 [](const C& c) { return std::to_string(c.diffusion.chebyshev_degree); }});
    f.push_back({"diffusion.clip_epsilon",
                 [](C& c, std::string_view v) { c.diffusion.clip_epsilon = parse_double("diffusion.clip_epsilon", v); },
                 [](const C& c) { return fmt_double(c.diffusion.clip_epsilon); }});
    f.push_back({"diffusion.signature_bins",
                 [](C& c, std::string_view v) { c.diffusion.signature_bins = parse_uint("diffusion.signature_bins", v); },
                 [](const C& c) { return std::to_string(c.diffusion.signature_bins); }});

    f.push_back({"netembed.mode", [](C& c, std::string_view v) { c.netembed.mode = parse_sampler_mode(trim(v)); },
                 [](const C& c) { return std::string(to_string(c.netembed.mode)); }});
    auto ne_size = [&f](const char* key, std::size_t C::NetEmbed::*m) {
      f.push_back({key, [m, key](C& c, std::string_view v) { c.netembed.*m = parse_uint(key, v); },
                   [m](const C& c) { return std::to_string(c.netembed.*m); }});
    };
    ne_size("netembed.dim", &C::NetEmbed::dim);
    ne_size("netembed.epochs", &C::NetEmbed::epochs);
    ne_size("netembed.pairs_per_node", &C::NetEmbed::pairs_per_node);
    ne_size("netembed.negatives", &C::NetEmbed::negatives);
    ne_size("netembed.structural_cap", &C::NetEmbed::structural_cap);
    f.push_back({"netembed.learning_rate",
                 [](C& c, std::string_view v) { c.netembed.learning_rate = parse_double("netembed.learning_rate", v); },
                 [](const C& c) { return fmt_double(c.netembed.learning_rate); }});
    f.push_back({"netembed.min_learning_rate",
                 [](C& c, std::string_view v) { c.netembed.min_learning_rate = parse_double("netembed.min_learning_rate", v); },
                 [](const C& c) { return fmt_double(c.netembed.min_learning_rate); }});
    f.push_back({"netembed.seed", [](C& c, std::string_view v) { c.netembed.seed = parse_uint("netembed.seed", v); },
                 [](const C& c) { return std::to_string(c.netembed.seed); }});
    f.push_back({"netembed.threads",
                 [](C& c, std::string_view v) { c.netembed.threads = static_cast<unsigned>(parse_uint("netembed.threads", v)); },
                 [](const C& c) { return std::to_string(c.netembed.threads); }});

    f.push_back({"kge.model", [](C& c, std::string_view v) { c.kge.model = parse_kge_model(trim(v)); },
                 [](const C& c) { return std::string(to_string(c.kge.model)); }});
    auto kge_size = [&f](const char* key, std::size_t C::Kge::*m) {
      f.push_back({key, [m, key](C& c, std::string_view v) { c.kge.*m = parse_uint(key, v); },
                   [m](const C& c) { return std::to_string(c.kge.*m); }});
    };
    kge_size("kge.dim", &C::Kge::dim);
    kge_size("kge.batch_size", &C::Kge::batch_size);
    kge_size("kge.epochs", &C::Kge::epochs);
    auto kge_double = [&f](const char* key, double C::Kge::*m) {
      f.push_back({key, [m, key](C& c, std::string_view v) { c.kge.*m = parse_double(key, v); },
                   [m](const C& c) { return fmt_double(c.kge.*m); }});
    };
    kge_double("kge.margin", &C::Kge::margin);
    kge_double("kge.learning_rate", &C::Kge::learning_rate);
    kge_double("kge.lr_decay", &C::Kge::lr_decay);
    f.push_back({"kge.optimizer", [](C& c, std::string_view v) { c.kge.optimizer = parse_optimizer(trim(v)); },
                 [](const C& c) { return std::string(to_string(c.kge.optimizer)); }});
    f.push_back({"kge.seed", [](C& c, std::string_view v) { c.kge.seed = parse_uint("kge.seed", v); },
                 [](const C& c) { return std::to_string(c.kge.seed); }});

    f.push_back({"retrofit.k", [](C& c, std::string_view v) { c.retrofit.k = parse_uint("retrofit.k", v); },
                 [](const C& c) { return std::to_string(c.retrofit.k); }});
    f.push_back({"retrofit.alpha", [](C& c, std::string_view v) { c.retrofit.alpha = parse_double("retrofit.alpha", v); },
                 [](const C& c) { return fmt_double(c.retrofit.alpha); }});
    f.push_back({"retrofit.iters", [](C& c, std::string_view v) { c.retrofit.iters = parse_uint("retrofit.iters", v); },
                 [](const C& c) { return std::to_string(c.retrofit.iters); }});
    f.push_back({"retrofit.tol", [](C& c, std::string_view v) { c.retrofit.tol = parse_double("retrofit.tol", v); },
                 [](const C& c) { return fmt_double(c.retrofit.tol); }});

    f.push_back({"eval.hits",
                 [](C& c, std::string_view v) {
                   c.eval.hits.clear();
                   std::string s = trim(v);
                   std::stringstream ss(s);
                   std::string item;
                   while (std::getline(ss, item, ',')) {
                     c.eval.hits.push_back(static_cast<int>(parse_uint("eval.hits", item)));
                   }
                 },
                 [](const C& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.eval.hits.size(); ++i) out += (i ? "," : "") + std::to_string(c.eval.hits[i]);
                   return out;
                 }});
    f.push_back({"eval.resamples", [](C& c, std::string_view v) { c.eval.resamples = parse_uint("eval.resamples", v); },
                 [](const C& c) { return std::to_string(c.eval.resamples); }});
    f.push_back({"eval.significance_alpha",
                 [](C& c, std::string_view v) { c.eval.significance_alpha = parse_double("eval.significance_alpha", v); },
                 [](const C& c) { return fmt_double(c.eval.significance_alpha); }});
    f.push_back({"eval.threads",
                 [](C& c, std::string_view v) { c.eval.threads = static_cast<unsigned>(parse_uint("eval.threads", v)); },
                 [](const C& c) { return std::to_string(c.eval.threads); }});
    return f;
  }();
  return table;
}

// Writes go to "<target>.partial" and are renamed into place on commit, so a
// failed stage leaves its partial output behind for inspection.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path target) : target_(std::move(target)) {
    partial_ = target_;
    partial_ += ".partial";
    std::filesystem::remove_all(partial_);
  }
  const std::filesystem::path& path() const { return partial_; }
  void commit() {
    std::filesystem::remove_all(target_);
    std::filesystem::rename(partial_, target_);
  }

 private:
  std::filesystem::path target_, partial_;
};

void require(const std::filesystem::path& p, const char* producer) {
  if (!std::filesystem::exists(p)) {
    throw DataError("missing artifact " + p.string() + "; run `mohone " + producer + "` first");
  }
}

// Logs wall clock and peak RSS for one stage and prefixes errors with its name.
template <typename Fn>
auto run_stage(const char* name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    if (!g_log) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rusage usage{};
    getrusage(RUSAGE_SELF, &usage);
    *g_log << "[mohone] stage=" << name << " wall_s=" << secs << " peak_rss_mb=" << usage.ru_maxrss / 1024.0 << '\n';
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto r = fn();
      finish();
      return r;
    }
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + name + ": " + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(ExitCode::kData, std::string("stage ") + name + ": " + e.what());
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  for (const auto& l : lines) out << l << '\n';
}

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::string> PipelineConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

void PipelineConfig::validate() const {
  heat_config().validate();
  if (diffusion.signature_bins < 2) throw ConfigError("diffusion.signature_bins must be >= 2");
  netembed_train_config().validate();
  if (netembed.epochs < 10) throw ConfigError("netembed.epochs must be >= 10");
  if (netembed.structural_cap < 1) throw ConfigError("netembed.structural_cap must be >= 1");
  kge_train_config().validate();
  if (retrofit.k < 1) throw ConfigError("retrofit.k must be >= 1");
  if (!(retrofit.alpha > 0.0)) throw ConfigError("retrofit.alpha must be > 0");
  if (retrofit.iters < 1) throw ConfigError("retrofit.iters must be >= 1");
  if (!(retrofit.tol >= 0.0)) throw ConfigError("retrofit.tol must be >= 0");
  if (eval.hits.empty()) throw ConfigError("eval.hits must list at least one k");
  for (int k : eval.hits) {
    if (k < 1) throw ConfigError("eval.hits entries must be >= 1");
  }
  if (eval.resamples < 1) throw ConfigError("eval.resamples must be >= 1");
  if (!(eval.significance_alpha > 0.0 && eval.significance_alpha < 1.0)) {
    throw ConfigError("eval.significance_alpha must lie in (0, 1)");
  }
}

TrainConfig PipelineConfig::netembed_train_config() const {
  TrainConfig t;
  t.dim = netembed.dim;
  t.epochs = netembed.epochs;
  t.pairs_per_node_per_epoch = netembed.pairs_per_node;
  t.negatives = netembed.negatives;
  t.initial_learning_rate = netembed.learning_rate;
  t.min_learning_rate = netembed.min_learning_rate;
  t.seed = netembed.seed;
  t.threads = netembed.threads;
  return t;
}

KgeTrainConfig PipelineConfig::kge_train_config() const {
  KgeTrainConfig k;
  k.model = kge.model;
  k.dim = kge.dim;
  k.batch_size = kge.batch_size;
  k.epochs = kge.epochs;
  k.margin = kge.margin;
  k.learning_rate = kge.learning_rate;
  k.lr_decay = kge.lr_decay;
  k.optimizer = kge.optimizer;
  k.seed = kge.seed;
  return k;
}

HeatKernelConfig PipelineConfig::heat_config() const {
  HeatKernelConfig h;
  h.scale = diffusion.scale;
  h.method = diffusion.method;
  h.chebyshev_degree = diffusion.chebyshev_degree;
  h.clip_epsilon = diffusion.clip_epsilon;
  return h;
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::string PipelineConfig::hash() const { return hex64(fnv1a(to_text())); }

PipelineConfig parse_config(std::string_view text, PipelineConfig base) {
  std::istringstream in{std::string(text)};
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    try {
      base.set(key, std::string_view(t).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_env_overrides(PipelineConfig& cfg, const std::function<const char*(const char*)>& getenv_fn) {
  for (const auto& key : PipelineConfig::keys()) {
    std::string var = "MOHONE_";
    for (char c : key) var += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = getenv_fn(var.c_str())) cfg.set(key, v);
  }
}

WorkspaceLock::WorkspaceLock(const std::filesystem::path& dir) : path_(dir / ".mohone.lock") {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw ConfigError("workspace " + dir.string() + " is locked by another mohone process (" + path_.string() +
                      "): " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto w = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

WorkspaceLock::~WorkspaceLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void set_log_stream(std::ostream* os) { g_log = os; }

Workspace Workspace::open(const std::filesystem::path& dir) {
  require(dir / artifacts::kDataset, "graph-build");
  require(dir / artifacts::kEntities, "graph-build");
  require(dir / artifacts::kRelations, "graph-build");
  const auto meta = read_json(dir / artifacts::kDataset);
  Workspace ws;
  ws.dir = dir;
  ws.train.entities = Vocabulary::from_tokens(read_lines(dir / artifacts::kEntities));
  ws.train.relations = Vocabulary::from_tokens(read_lines(dir / artifacts::kRelations));
  ws.vocab_hash = ws.train.entities.hash() ^ (ws.train.relations.hash() * 31);
  if (meta.value("vocab_hash", "") != hex64(ws.vocab_hash)) {
    throw DataError(dir.string() + ": vocabulary files do not match dataset.json; rerun `mohone graph-build`");
  }
  auto map_split = [&](const char* key) {
    const auto labeled = read_labeled_triples(meta.at(key).get<std::string>());
    auto m = map_triples(labeled, ws.train.entities, ws.train.relations);
    if (m.unknown) throw DataError(std::string(key) + " split has tokens outside the workspace vocabulary");
    return m.triples;
  };
  ws.train.triples = map_split("train");
  ws.valid = map_split("valid");
  ws.test = map_split("test");
  return ws;
}

void stage_graph_build(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  run_stage("graph-build", [&] {
    if (cfg.dataset.train.empty() || cfg.dataset.valid.empty() || cfg.dataset.test.empty()) {
      throw ConfigError("dataset.train, dataset.valid and dataset.test must all be set");
    }
    std::filesystem::create_directories(dir);
    TripleStore store;
    append_triples(store, read_labeled_triples(cfg.dataset.train));
    const std::size_t train_count = store.triples.size();
    append_triples(store, read_labeled_triples(cfg.dataset.valid));
    append_triples(store, read_labeled_triples(cfg.dataset.test));
    store.triples.resize(train_count);

    // Train-only projection; valid/test entities still get (isolated) nodes.
    const UndirectedGraph g = project_graph(store);
    const std::uint64_t vocab_hash = store.entities.hash() ^ (store.relations.hash() * 31);

    StagedOutput ents(dir / artifacts::kEntities), rels(dir / artifacts::kRelations), graph(dir / artifacts::kGraph),
        meta(dir / artifacts::kDataset);
    write_lines(ents.path(), store.entities.tokens());
    write_lines(rels.path(), store.relations.tokens());
    write_edge_list(g, graph.path());
    auto abs = [](const std::filesystem::path& p) { return std::filesystem::absolute(p).lexically_normal().string(); };
    write_json(meta.path(), {{"name", cfg.dataset.name},
                             {"train", abs(cfg.dataset.train)},
                             {"valid", abs(cfg.dataset.valid)},
                             {"test", abs(cfg.dataset.test)},
                             {"num_entities", store.entities.size()},
                             {"num_relations", store.relations.size()},
                             {"num_train_triples", train_count},
                             {"num_edges", g.num_edges()},
                             {"vocab_hash", hex64(vocab_hash)},
                             {"config_hash", cfg.hash()}});
    ents.commit();
    rels.commit();
    graph.commit();
    meta.commit();
    write_lines(dir / artifacts::kResolvedConfig, {cfg.to_text()});
  });
}

void stage_diffuse(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  run_stage("diffuse", [&] {
    require(dir / artifacts::kGraph, "graph-build");
    const UndirectedGraph g = read_edge_list(dir / artifacts::kGraph);
    const HeatDiffusionMatrix psi = heat_matrix(normalized_laplacian(g), cfg.heat_config());
    const auto sigs = heat_signatures(psi, cfg.diffusion.signature_bins, cfg.netembed.threads);
    StagedOutput psi_out(dir / artifacts::kPsi), sig_out(dir / artifacts::kSignatures);
    write_psi(psi, psi_out.path());
    write_signatures(sigs, sig_out.path());
    psi_out.commit();
    sig_out.commit();
  });
}

void stage_embed(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  run_stage("embed", [&] {
    require(dir / artifacts::kEntities, "graph-build");
    const auto tokens = read_lines(dir / artifacts::kEntities);
    PairSampler sampler = [&] {
      if (cfg.netembed.mode == SamplerMode::kShnb) {
        require(dir / artifacts::kPsi, "diffuse");
        return build_shnb_sampler(read_psi(dir / artifacts::kPsi));
      }
      require(dir / artifacts::kSignatures, "diffuse");
      return build_structural_sampler(read_signatures(dir / artifacts::kSignatures), cfg.netembed.structural_cap,
                                      cfg.netembed.threads);
    }();
    if (sampler.num_nodes() != tokens.size()) {
      throw DataError("diffusion artifact has " + std::to_string(sampler.num_nodes()) + " nodes but the vocabulary has " +
                      std::to_string(tokens.size()) + "; rerun `mohone diffuse`");
    }
    const auto emb = train_embeddings(sampler, cfg.netembed_train_config());
    StagedOutput out(dir / artifacts::kNetwork);
    write_word2vec(out.path(), tokens, emb.vectors);
    out.commit();
  });
}

void stage_kge_train(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  run_stage("kge-train", [&] {
    const Workspace ws = Workspace::open(dir);
    const auto kcfg = cfg.kge_train_config();
    const KGEmbedding emb = train_kge(ws.train, kcfg);
    StagedOutput out(dir / artifacts::kBaseKge);
    write_kge(out.path(), emb, ws.train, kcfg, {ws.vocab_hash, cfg.hash()});
    out.commit();
  });
}

void stage_retrofit(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  run_stage("retrofit", [&] {
    require(dir / artifacts::kBaseKge / "model.json", "kge-train");
    require(dir / artifacts::kNetwork, "embed");
    const LoadedKge base = read_kge(dir / artifacts::kBaseKge);
    const LabeledEmbeddings network = read_word2vec(dir / artifacts::kNetwork);
    if (network.tokens != base.entities.tokens()) {
      throw DataError("network embedding tokens do not match the base KGE entity vocabulary");
    }
    RetrofitProblem problem;
    problem.q_hat = base.embedding.entities;
    problem.neighbors = build_neighbor_sets(network.vectors, std::min(cfg.retrofit.k, network.tokens.size() - 1));
    problem.alpha = Eigen::VectorXd::Constant(problem.q_hat.rows(), cfg.retrofit.alpha);
    problem.max_iters = cfg.retrofit.iters;
    problem.tol = cfg.retrofit.tol;
    const RetrofitResult result = retrofit(problem);

    StagedOutput out(dir / artifacts::kRetrofit);
    std::filesystem::create_directories(out.path());
    write_word2vec(out.path() / "entities.vec", base.entities.tokens(), result.q);
    write_convergence_log(result.log, out.path() / "convergence.json");
    out.commit();
  });
}

void stage_relearn(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  run_stage("relearn", [&] {
    require(dir / artifacts::kRetrofit / "entities.vec", "retrofit");
    require(dir / artifacts::kBaseKge / "model.json", "kge-train");
    const Workspace ws = Workspace::open(dir);
    const LoadedKge base = read_kge(dir / artifacts::kBaseKge);
    const LabeledEmbeddings q = read_word2vec(dir / artifacts::kRetrofit / "entities.vec");
    if (q.tokens != ws.train.entities.tokens()) {
      throw DataError("retrofitted entity tokens do not match the workspace vocabulary");
    }
    auto kcfg = cfg.kge_train_config();
    kcfg.model = base.embedding.model;
    kcfg.dim = base.embedding.dim;
    const KGEmbedding emb = relearn_relations(ws.train, q.vectors, kcfg);
    StagedOutput out(dir / artifacts::kInfusedKge);
    write_kge(out.path(), emb, ws.train, kcfg, {ws.vocab_hash, cfg.hash()});
    out.commit();
  });
}

nlohmann::json stage_eval(const PipelineConfig& cfg, const std::filesystem::path& dir,
                          const std::filesystem::path& kge_dir, const std::string& name) {
  return run_stage("eval", [&] {
    require(kge_dir / "model.json", "kge-train` or `mohone relearn");
    const Workspace ws = Workspace::open(dir);
    const LoadedKge kge = read_kge(kge_dir);
    if (kge.vocab_hash != ws.vocab_hash) {
      throw ConfigError("embedding artifact " + kge_dir.string() + " was built for a different vocabulary");
    }
    // Map through the artifact's own vocabulary so foreign embedding files work too.
    auto remap = [&](const std::vector<Triple>& ts) {
      std::vector<LabeledTriple> labeled;
      labeled.reserve(ts.size());
      for (const auto& t : ts) {
        labeled.push_back({ws.train.entities.token(t.head), ws.train.relations.token(t.relation),
                           ws.train.entities.token(t.tail)});
      }
      return map_triples(labeled, kge.entities, kge.relations);
    };
    const MappedSplit test = remap(ws.test);
    FilterIndex filter(remap(ws.train.triples).triples);
    filter.add(remap(ws.valid).triples);
    filter.add(test.triples);
    EvalOptions opts;
    opts.hits_at = cfg.eval.hits;
    opts.threads = cfg.eval.threads;
    const EvalResult r = evaluate(make_scorer(kge.embedding), kge.entities.size(), test.triples, filter, opts,
                                  2 * test.unknown);
    nlohmann::json hits;
    for (const auto& [k, v] : r.hits) hits[std::to_string(k)] = v;
    nlohmann::json report{{"model", to_string(kge.embedding.model)},
                          {"dataset", read_json(dir / artifacts::kDataset).value("name", "")},
                          {"mrr", r.mrr},
                          {"hits", hits},
                          {"skipped", r.skipped},
                          {"n_queries", r.num_queries()},
                          {"config_hash", cfg.hash()},
                          {"vocab_hash", hex64(kge.vocab_hash)}};
    const auto eval_dir = dir / artifacts::kEvalDir;
    std::filesystem::create_directories(eval_dir);
    StagedOutput json_out(eval_dir / (name + ".json")), csv_out(eval_dir / (name + "_ranks.csv"));
    write_json(json_out.path(), report);
    write_rank_csv(r, csv_out.path());
    json_out.commit();
    csv_out.commit();
    return report;
  });
}

nlohmann::json stage_report(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  return run_stage("report", [&] {
    const auto eval_dir = dir / artifacts::kEvalDir;
    for (const char* f : {"baseline.json", "baseline_ranks.csv", "infused.json", "infused_ranks.csv"}) {
      require(eval_dir / f, "eval");
    }
    const auto baseline = read_json(eval_dir / "baseline.json");
    const auto infused = read_json(eval_dir / "infused.json");
    if (baseline.value("vocab_hash", "") != infused.value("vocab_hash", "")) {
      throw ConfigError("refusing to compare evaluations built on different vocabularies");
    }
    const auto rr_base = read_rank_csv(eval_dir / "baseline_ranks.csv");
    const auto rr_inf = read_rank_csv(eval_dir / "infused_ranks.csv");
    const auto sig = paired_significance(rr_inf, rr_base, cfg.eval.resamples, cfg.eval.significance_alpha);
    nlohmann::json report{{"baseline", baseline},
                          {"infused", infused},
                          {"significance",
                           {{"test", "paired_bootstrap"},
                            {"resamples", cfg.eval.resamples},
                            {"alpha", cfg.eval.significance_alpha},
                            {"mean_rr_difference", sig.mean_difference},
                            {"p_value", sig.p_value},
                            {"significant", sig.significant}}},
                          {"config_hash", cfg.hash()}};
    StagedOutput out(dir / artifacts::kReport);
    write_json(out.path(), report);
    out.commit();
    return report;
  });
}

nlohmann::json run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  stage_graph_build(cfg, dir);
  stage_diffuse(cfg, dir);
  stage_embed(cfg, dir);
  stage_kge_train(cfg, dir);
  stage_retrofit(cfg, dir);
  stage_relearn(cfg, dir);
  stage_eval(cfg, dir, dir / artifacts::kBaseKge, "baseline");
  stage_eval(cfg, dir, dir / artifacts::kInfusedKge, "infused");
  return stage_report(cfg, dir);
}

}  // namespace mohone
