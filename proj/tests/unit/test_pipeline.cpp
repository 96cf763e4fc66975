#include "mohone/diffusion.hpp"
#include "mohone/embedding_io.hpp"
#include "mohone/error.hpp"
#include "mohone/pipeline.hpp"
#include "mohone/retrofit.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

using namespace mohone;
using namespace mohone::testing;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path root;
  explicit Scratch(const std::string& name) : root(fs::temp_directory_path() / ("mohone_pipeline_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small fast configuration over a synthetic community KG in `data`.
PipelineConfig toy_config(const fs::path& data) {
  CommunityKgSpec spec;
  spec.communities = 4;
  spec.community_size = 8;
  spec.relations = 3;
  spec.triples_per_entity = 3;
  const auto splits = write_community_kg(data, spec);
  PipelineConfig cfg;
  cfg.dataset.train = splits.train;
  cfg.dataset.valid = splits.valid;
  cfg.dataset.test = splits.test;
  cfg.dataset.name = "toy";
  cfg.netembed.dim = 8;
  cfg.kge.dim = 8;
  cfg.kge.epochs = 20;
  cfg.kge.batch_size = 16;
  cfg.retrofit.k = 3;
  cfg.eval.resamples = 500;
  return cfg;
}

void run_stages(const PipelineConfig& cfg, const fs::path& dir) {
  stage_graph_build(cfg, dir);
  stage_diffuse(cfg, dir);
  stage_embed(cfg, dir);
  stage_kge_train(cfg, dir);
  stage_retrofit(cfg, dir);
  stage_relearn(cfg, dir);
  stage_eval(cfg, dir, dir / artifacts::kBaseKge, "baseline");
  stage_eval(cfg, dir, dir / artifacts::kInfusedKge, "infused");
  stage_report(cfg, dir);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

int run_cli(const std::string& args) {
  const char* cli = std::getenv("MOHONE_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "MOHONE_CLI must point at the mohone binary");
  const int status = std::system((std::string(cli) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config text round trips") {
  PipelineConfig cfg;
  cfg.diffusion.scale = 0.1;
  cfg.netembed.mode = SamplerMode::kStructural;
  cfg.kge.model = KgeModel::kComplEx;
  cfg.eval.hits = {1, 5};
  cfg.retrofit.alpha = 1.0 / 3;
  const auto back = parse_config(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.retrofit.alpha == cfg.retrofit.alpha);
  CHECK(back.hash() == cfg.hash());
  cfg.kge.seed = 2;
  CHECK(back.hash() != cfg.hash());
  CHECK(PipelineConfig::keys().size() > 20);
}

TEST_CASE("config parsing") {
  const auto cfg = parse_config(R"(
# comment line
[diffusion]
scale = 2.5   # trailing comment
method = chebyshev
[kge]
model = distmult
retrofit.k = 4
)");
  CHECK(cfg.diffusion.scale == 2.5);
  CHECK(cfg.diffusion.method == DiffusionMethod::kChebyshev);
  CHECK(cfg.kge.model == KgeModel::kDistMult);
  CHECK(cfg.retrofit.k == 4);
  CHECK_THROWS_AS(parse_config("diffusion.nope = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("diffusion.scale = fast"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words"), ConfigError);
  CHECK_THROWS_AS(parse_config("kge.epochs = -3"), ConfigError);
}

TEST_CASE("environment overrides") {
  PipelineConfig cfg;
  const std::map<std::string, std::string> env{{"MOHONE_DIFFUSION_SCALE", "0.5"}, {"MOHONE_KGE_MODEL", "complex"}};
  apply_env_overrides(cfg, [&](const char* name) -> const char* {
    const auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  CHECK(cfg.diffusion.scale == 0.5);
  CHECK(cfg.kge.model == KgeModel::kComplEx);
}

TEST_CASE("validation") {
  PipelineConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.netembed.epochs = 9;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.retrofit.alpha = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.eval.significance_alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("end-to-end pipeline") {
  set_log_stream(nullptr);
  Scratch s("e2e");
  const auto cfg = toy_config(s.root / "data");
  const auto report = run_pipeline(cfg, s.root / "a");

  SUBCASE("report schema") {
    for (const char* block : {"baseline", "infused"}) {
      REQUIRE(report.contains(block));
      CHECK(report[block].contains("mrr"));
      CHECK(report[block]["hits"].contains("10"));
      CHECK(report[block]["dataset"] == "toy");
      CHECK(report[block]["config_hash"] == cfg.hash());
    }
    CHECK(report["significance"].contains("p_value"));
    CHECK(fs::exists(s.root / "a" / artifacts::kReport));
    for (const auto& e : fs::recursive_directory_iterator(s.root / "a"))
      CHECK(e.path().string().find(".partial") == std::string::npos);
  }
  SUBCASE("rerun is bitwise identical") {
    run_pipeline(cfg, s.root / "b");
    const auto a = snapshot(s.root / "a"), b = snapshot(s.root / "b");
    REQUIRE(a.size() == b.size());
    for (const auto& [name, content] : a) {
      CAPTURE(name);
      CHECK(b.at(name) == content);
    }
  }
  SUBCASE("standalone stages match the pipeline") {
    run_stages(cfg, s.root / "c");
    CHECK(slurp(s.root / "c" / artifacts::kReport) == slurp(s.root / "a" / artifacts::kReport));
  }
  SUBCASE("eval refuses artifacts from another vocabulary") {
    auto other = toy_config(s.root / "data2");
    CommunityKgSpec spec;
    spec.communities = 3;
    spec.community_size = 7;
    const auto splits = write_community_kg(s.root / "data2", spec);
    other.dataset.train = splits.train;
    other.dataset.valid = splits.valid;
    other.dataset.test = splits.test;
    stage_graph_build(other, s.root / "d");
    stage_kge_train(other, s.root / "d");
    try {
      stage_eval(cfg, s.root / "a", s.root / "d" / artifacts::kBaseKge, "foreign");
      FAIL("expected a vocabulary mismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ExitCode::kConfig);
    }
  }
  SUBCASE("retrofit log is written") {
    const auto log = nlohmann::json::parse(slurp(s.root / "a" / artifacts::kRetrofit / "convergence.json"));
    CHECK(log.size() >= 1);
    CHECK(log.size() <= cfg.retrofit.iters);
  }
}

TEST_CASE("stage errors name the missing producer") {
  set_log_stream(nullptr);
  Scratch s("missing");
  PipelineConfig cfg;
  try {
    stage_diffuse(cfg, s.root);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ExitCode::kData);
    CHECK(std::string(e.what()).find("stage diffuse") != std::string::npos);
    CHECK(std::string(e.what()).find("mohone graph-build") != std::string::npos);
  }
  CHECK_THROWS_AS(stage_graph_build(cfg, s.root), Error);
}

TEST_CASE("diffusion artifacts") {
  set_log_stream(nullptr);
  Scratch s("diffuse");
  auto cfg = toy_config(s.root / "data");
  stage_graph_build(cfg, s.root / "ws");
  SUBCASE("zero scale writes the identity") {
    cfg.diffusion.scale = 0;
    stage_diffuse(cfg, s.root / "ws");
    const auto psi = read_psi(s.root / "ws" / artifacts::kPsi);
    CHECK(psi.psi == Eigen::MatrixXd::Identity(psi.psi.rows(), psi.psi.cols()));
  }
  SUBCASE("embed accepts a Chebyshev kernel") {
    cfg.diffusion.method = DiffusionMethod::kChebyshev;
    stage_diffuse(cfg, s.root / "ws");
    stage_embed(cfg, s.root / "ws");
    const auto net = read_word2vec(s.root / "ws" / artifacts::kNetwork);
    CHECK(net.vectors.cols() == 8);
  }
}

TEST_CASE("structural mode on a barbell KG groups entities by role") {
  set_log_stream(nullptr);
  Scratch s("barbell");
  const NodeId clique = 5, bridge = 1, n = 2 * clique + bridge;
  const auto edges = barbell_edges(clique, bridge);
  {
    std::ofstream train(s.root / "train.tsv");
    for (auto [u, v] : edges) train << "n" << u << "\tlink\tn" << v << '\n';
    std::ofstream(s.root / "valid.tsv") << "n0\tlink\tn1\n";
    std::ofstream(s.root / "test.tsv") << "n1\tlink\tn2\n";
  }
  PipelineConfig cfg;
  cfg.dataset.train = s.root / "train.tsv";
  cfg.dataset.valid = s.root / "valid.tsv";
  cfg.dataset.test = s.root / "test.tsv";
  cfg.netembed.mode = SamplerMode::kStructural;
  cfg.netembed.dim = 16;
  cfg.netembed.epochs = 30;
  cfg.kge.dim = 16;
  cfg.kge.epochs = 50;
  cfg.retrofit.k = 3;
  cfg.eval.resamples = 100;
  run_pipeline(cfg, s.root / "ws");

  const auto roles = barbell_roles(clique, bridge);
  const auto net = read_word2vec(s.root / "ws" / artifacts::kNetwork);
  const auto q = read_word2vec(s.root / "ws" / artifacts::kRetrofit / "entities.vec");
  auto role_of = [&](const std::string& token) { return roles[std::stoul(token.substr(1))]; };
  // Every attachment node's nearest network neighbor is the other attachment node.
  const auto nb = build_neighbor_sets(net.vectors, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (role_of(net.tokens[i]) != 1) continue;
    CHECK(role_of(net.tokens[nb[i][0].index]) == 1);
  }
  // Retrofitting moves the two attachment entities towards each other.
  const auto base = read_word2vec(s.root / "ws" / artifacts::kBaseKge / "entities.vec");
  std::vector<std::size_t> attach;
  for (std::size_t i = 0; i < n; ++i)
    if (role_of(base.tokens[i]) == 1) attach.push_back(i);
  REQUIRE(attach.size() == 2);
  const auto a = static_cast<Eigen::Index>(attach[0]), b = static_cast<Eigen::Index>(attach[1]);
  CHECK(cosine(q.vectors, a, b) > cosine(base.vectors, a, b));
}

TEST_CASE("workspace lock is exclusive") {
  Scratch s("lock");
  {
    const WorkspaceLock first(s.root);
    CHECK_THROWS_AS(WorkspaceLock(s.root), ConfigError);
  }
  CHECK_NOTHROW(WorkspaceLock(s.root));
}

TEST_CASE("command line") {
  Scratch s("cli");
  const auto cfg = toy_config(s.root / "data");
  std::ofstream(s.root / "toy.conf") << cfg.to_text();
  const std::string ws = (s.root / "ws").string();
  const std::string common = "-w " + ws + " -c " + (s.root / "toy.conf").string();

  SUBCASE("exit codes") {
    CHECK(run_cli("") == 2);
    CHECK(run_cli("embed -w " + ws) == 2);
    CHECK(run_cli("graph-build " + common + " --set diffusion.bogus=1") == 2);
    CHECK(run_cli("graph-build -w " + ws + " --train /nonexistent --valid /nonexistent --test /nonexistent") == 3);
    CHECK(run_cli("diffuse -w " + (s.root / "empty").string()) == 3);
    CHECK(run_cli("graph-build " + common + " --set diffusion.scale=-1") == 0);
    CHECK(run_cli("diffuse -w " + ws) == 2);
  }
  SUBCASE("subcommands reproduce the library pipeline") {
    REQUIRE(run_cli("graph-build " + common) == 0);
    CHECK(run_cli("diffuse -w " + ws) == 0);
    CHECK(run_cli("embed -w " + ws + " --seed 1") == 0);
    CHECK(run_cli("kge-train -w " + ws + " --seed 1") == 0);
    CHECK(run_cli("retrofit -w " + ws) == 0);
    CHECK(run_cli("relearn -w " + ws) == 0);
    CHECK(run_cli("eval -w " + ws + " --which baseline") == 0);
    CHECK(run_cli("eval -w " + ws + " --which infused") == 0);
    CHECK(run_cli("report -w " + ws) == 0);
    set_log_stream(nullptr);
    run_pipeline(cfg, s.root / "lib");
    const auto cli_report = nlohmann::json::parse(slurp(s.root / "ws" / artifacts::kReport));
    const auto lib_report = nlohmann::json::parse(slurp(s.root / "lib" / artifacts::kReport));
    CHECK(cli_report["baseline"]["mrr"] == lib_report["baseline"]["mrr"]);
    CHECK(cli_report["infused"]["mrr"] == lib_report["infused"]["mrr"]);
    CHECK(cli_report["significance"]["p_value"] == lib_report["significance"]["p_value"]);
  }
  SUBCASE("environment and --set land in the resolved config") {
    REQUIRE(run_cli("graph-build " + common) == 0);
    ::setenv("MOHONE_DIFFUSION_SCALE", "0.25", 1);
    const int rc = run_cli("diffuse -w " + ws + " --set diffusion.chebyshev_degree=12");
    ::unsetenv("MOHONE_DIFFUSION_SCALE");
    REQUIRE(rc == 0);
    const auto resolved = load_config(s.root / "ws" / artifacts::kResolvedConfig);
    CHECK(resolved.diffusion.scale == 0.25);
    CHECK(resolved.diffusion.chebyshev_degree == 12);
    CHECK(read_psi(s.root / "ws" / artifacts::kPsi).scale == 0.25);
  }
}
