// mohone: command line front end for the network-infused KG embedding pipeline.
//
// Every subcommand works on a workspace directory (--workdir). Settings resolve as
// defaults < config file (--config, else the workspace's config.resolved) <
// MOHONE_* environment variables < --set key=value < dedicated flags.

#include "mohone/error.hpp"
#include "mohone/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Common {
  fs::path workdir;
  std::string config_file;
  std::vector<std::string> sets;
  // Flag name -> config key, filled by subcommands.
  std::map<std::string, std::string> flag_values;
};

mohone::PipelineConfig resolve(const Common& common) {
  mohone::PipelineConfig cfg;
  if (!common.config_file.empty()) {
    cfg = mohone::load_config(common.config_file);
  } else if (fs::exists(common.workdir / mohone::artifacts::kResolvedConfig)) {
    cfg = mohone::load_config(common.workdir / mohone::artifacts::kResolvedConfig);
  }
  mohone::apply_env_overrides(cfg, [](const char* name) { return std::getenv(name); });
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw mohone::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : common.flag_values) cfg.set(key, value);
  return cfg;
}

void write_resolved(const mohone::PipelineConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / mohone::artifacts::kResolvedConfig) << cfg.to_text();
}

// Binds a string flag whose value, when given, overrides `key`.
void bind(CLI::App* app, Common& common, const std::string& flag, const std::string& key, const std::string& help,
          bool required = false) {
  auto* opt = app->add_option_function<std::string>(
      flag, [&common, key](const std::string& v) { common.flag_values[key] = v; }, help);
  if (required) opt->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mohone: heat-kernel network embeddings infused into knowledge graph embeddings"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-w,--workdir", common.workdir, "Workspace directory holding all artifacts")->required();
    sub->add_option("-c,--config", common.config_file, "Config file (key = value lines)");
    sub->add_option("--set", common.sets, "Override any config key: --set diffusion.scale=2");
  };

  auto* graph = app.add_subcommand("graph-build", "Load triples, build vocabularies and the undirected graph");
  add_common(graph);
  bind(graph, common, "--train", "dataset.train", "Training triples (head<TAB>relation<TAB>tail)");
  bind(graph, common, "--valid", "dataset.valid", "Validation triples");
  bind(graph, common, "--test", "dataset.test", "Test triples");
  bind(graph, common, "--name", "dataset.name", "Dataset name recorded in reports");

  auto* diffuse = app.add_subcommand("diffuse", "Compute the heat diffusion matrix and heat signatures");
  add_common(diffuse);
  bind(diffuse, common, "--scale", "diffusion.scale", "Heat kernel scale s");
  bind(diffuse, common, "--method", "diffusion.method", "exact | chebyshev");
  bind(diffuse, common, "--degree", "diffusion.chebyshev_degree", "Chebyshev polynomial degree K");
  bind(diffuse, common, "--bins", "diffusion.signature_bins", "Heat signature histogram bins");

  auto* embed = app.add_subcommand("embed", "Train network embeddings from the diffusion artifacts");
  add_common(embed);
  bind(embed, common, "--mode", "netembed.mode", "shnb | structural");
  bind(embed, common, "--dim", "netembed.dim", "Embedding dimension");
  bind(embed, common, "--epochs", "netembed.epochs", "Training epochs (>= 10)");
  bind(embed, common, "--threads", "netembed.threads", "Worker threads (1 = deterministic)");
  bind(embed, common, "--seed", "netembed.seed", "RNG seed", true);

  auto* kge = app.add_subcommand("kge-train", "Train the base knowledge graph embedding");
  add_common(kge);
  bind(kge, common, "--model", "kge.model", "transe | distmult | complex");
  bind(kge, common, "--dim", "kge.dim", "Embedding dimension");
  bind(kge, common, "--epochs", "kge.epochs", "Training epochs");
  bind(kge, common, "--batch-size", "kge.batch_size", "Mini-batch size");
  bind(kge, common, "--lr", "kge.learning_rate", "Learning rate");
  bind(kge, common, "--optimizer", "kge.optimizer", "sgd | adagrad");
  bind(kge, common, "--margin", "kge.margin", "TransE margin");
  bind(kge, common, "--seed", "kge.seed", "RNG seed", true);

  auto* retro = app.add_subcommand("retrofit", "Infuse base entity embeddings with network neighbors");
  add_common(retro);
  bind(retro, common, "--k", "retrofit.k", "Nearest neighbors per entity");
  bind(retro, common, "--alpha", "retrofit.alpha", "Weight of the base embedding term (> 0)");
  bind(retro, common, "--iters", "retrofit.iters", "Maximum Gauss-Seidel sweeps");
  bind(retro, common, "--tol", "retrofit.tol", "Relative change threshold");

  auto* relearn = app.add_subcommand("relearn", "Retrain relation embeddings against the infused entities");
  add_common(relearn);
  bind(relearn, common, "--epochs", "kge.epochs", "Training epochs");
  bind(relearn, common, "--seed", "kge.seed", "RNG seed");

  auto* eval = app.add_subcommand("eval", "Filtered link prediction (MRR, Hits@k) for one embedding artifact");
  add_common(eval);
  std::string which = "baseline";
  std::string embeddings;
  eval->add_option("--which", which, "baseline (kge_base) or infused (kge_infused)")
      ->check(CLI::IsMember({"baseline", "infused"}));
  eval->add_option("--embeddings", embeddings, "Evaluate this KGE artifact directory instead");
  bind(eval, common, "--threads", "eval.threads", "Worker threads");

  auto* report = app.add_subcommand("report", "Compare baseline and infused evaluations with a paired bootstrap");
  add_common(report);
  bind(report, common, "--resamples", "eval.resamples", "Bootstrap resamples");

  auto* run = app.add_subcommand("run", "Run every stage end to end");
  add_common(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(mohone::ExitCode::kConfig);
  }

  try {
    const mohone::WorkspaceLock lock(common.workdir);
    mohone::PipelineConfig cfg = resolve(common);
    const fs::path& dir = common.workdir;

    if (graph->parsed()) {
      mohone::stage_graph_build(cfg, dir);
    } else if (diffuse->parsed()) {
      mohone::stage_diffuse(cfg, dir);
    } else if (embed->parsed()) {
      cfg.validate();
      mohone::stage_embed(cfg, dir);
    } else if (kge->parsed()) {
      mohone::stage_kge_train(cfg, dir);
    } else if (retro->parsed()) {
      mohone::stage_retrofit(cfg, dir);
    } else if (relearn->parsed()) {
      mohone::stage_relearn(cfg, dir);
    } else if (eval->parsed()) {
      const fs::path kge_dir = embeddings.empty()
                                   ? dir / (which == "baseline" ? mohone::artifacts::kBaseKge : mohone::artifacts::kInfusedKge)
                                   : fs::path(embeddings);
      std::cout << mohone::stage_eval(cfg, dir, kge_dir, which).dump(2) << '\n';
    } else if (report->parsed()) {
      std::cout << mohone::stage_report(cfg, dir).dump(2) << '\n';
    } else if (run->parsed()) {
      std::cout << mohone::run_pipeline(cfg, dir).dump(2) << '\n';
    }
    write_resolved(cfg, dir);
  } catch (const mohone::Error& e) {
    std::cerr << "mohone: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "mohone: " << e.what() << '\n';
    return static_cast<int>(mohone::ExitCode::kData);
  }
  return 0;
}
