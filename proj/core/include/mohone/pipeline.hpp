#pragma once

#include "mohone/diffusion.hpp"
#include "mohone/eval.hpp"
#include "mohone/kge.hpp"
#include "mohone/netembed.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mohone {

struct PipelineConfig {
  struct Dataset {
    std::filesystem::path train, valid, test;
    std::string name = "dataset";
  } dataset;

  struct Diffusion {
    double scale = 5.0;
    DiffusionMethod method = DiffusionMethod::kExact;
    int chebyshev_degree = 30;
    double clip_epsilon = 1e-12;
    std::size_t signature_bins = kDefaultSignatureBins;
  } diffusion;

  struct NetEmbed {
    SamplerMode mode = SamplerMode::kShnb;
    std::size_t dim = 100;
    std::size_t epochs = 10;
    std::size_t pairs_per_node = 20;
    std::size_t negatives = 5;
    double learning_rate = 0.025;
    double min_learning_rate = 1e-4;
    std::size_t structural_cap = kDefaultStructuralCap;
    std::uint64_t seed = 1;
    unsigned threads = 1;
  } netembed;

  struct Kge {
    KgeModel model = KgeModel::kTransE;
    std::size_t dim = 100;
    std::size_t batch_size = 100;
    std::size_t epochs = 500;
    double margin = 1.0;
    double learning_rate = 0.01;
    double lr_decay = 0.0;
    Optimizer optimizer = Optimizer::kSgd;
    std::uint64_t seed = 1;
  } kge;

  struct Retrofit {
    std::size_t k = 10;
    double alpha = 1.0;
    std::size_t iters = 10;
    double tol = 1e-3;
  } retrofit;

  struct Eval {
    std::vector<int> hits{1, 3, 10};
    std::size_t resamples = 10000;
    double significance_alpha = 0.05;
    unsigned threads = 1;
  } eval;

  /// Sets one field by its dotted key ("diffusion.scale"). Throws ConfigError.
  void set(std::string_view key, std::string_view value);
  /// Every key known to `set`, in the order `to_text` writes them.
  static std::vector<std::string> keys();

  void validate() const;

  TrainConfig netembed_train_config() const;
  KgeTrainConfig kge_train_config() const;
  HeatKernelConfig heat_config() const;

  /// Resolved "key = value" text; parse_config(to_text()) reproduces the config.
  std::string to_text() const;
  /// Hex FNV-1a of to_text().
  std::string hash() const;
};

/// Parses "key = value" lines. "[section]" headers prefix subsequent keys;
/// '#' starts a comment.
PipelineConfig parse_config(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Applies MOHONE_<SECTION>_<KEY> variables (e.g. MOHONE_DIFFUSION_SCALE).
/// `getenv` is injectable for tests.
void apply_env_overrides(PipelineConfig& cfg,
                         const std::function<const char*(const char*)>& getenv_fn);

/// Canonical artifact names inside a workspace directory.
namespace artifacts {
inline constexpr const char* kDataset = "dataset.json";
inline constexpr const char* kEntities = "entities.tsv";
inline constexpr const char* kRelations = "relations.tsv";
inline constexpr const char* kGraph = "graph.edges";
inline constexpr const char* kPsi = "psi.bin";
inline constexpr const char* kSignatures = "signatures.json";
inline constexpr const char* kNetwork = "network.vec";
inline constexpr const char* kBaseKge = "kge_base";
inline constexpr const char* kRetrofit = "retrofit";
inline constexpr const char* kInfusedKge = "kge_infused";
inline constexpr const char* kEvalDir = "eval";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kResolvedConfig = "config.resolved";
}  // namespace artifacts

/// Exclusive lock on a workspace directory for the lifetime of the object.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(const std::filesystem::path& dir);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Per-stage timing and memory lines go here; nullptr silences them.
void set_log_stream(std::ostream* os);

/// Dataset triples re-mapped through the workspace vocabulary.
struct Workspace {
  std::filesystem::path dir;
  TripleStore train;  // vocabularies cover all splits
  std::vector<Triple> valid;
  std::vector<Triple> test;
  std::uint64_t vocab_hash = 0;

  static Workspace open(const std::filesystem::path& dir);
};

// Stage entry points; each reads its inputs from and writes its outputs to `dir`.
void stage_graph_build(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_diffuse(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_embed(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_kge_train(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_retrofit(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_relearn(const PipelineConfig& cfg, const std::filesystem::path& dir);
/// Evaluates the KGE artifact directory `kge_dir`, writing eval/<name>.json and eval/<name>_ranks.csv.
nlohmann::json stage_eval(const PipelineConfig& cfg, const std::filesystem::path& dir,
                          const std::filesystem::path& kge_dir, const std::string& name);
nlohmann::json stage_report(const PipelineConfig& cfg, const std::filesystem::path& dir);

/// graph -> diffuse -> embed -> kge-train -> retrofit -> relearn -> eval x2 -> report.
nlohmann::json run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& dir);

}  // namespace mohone
