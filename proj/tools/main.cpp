#include <cstdint>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nnchain/commands.hpp"
#include "nnchain/linkage.hpp"

namespace {

const char* const kGaussianHelp =
    "gaussian datasets: five blobs hold 90% of the points, split evenly; blob means are "
    "uniform in the side 5*sqrt(n) grid; point offsets are Gaussian with sigma = sqrt(n)/6 "
    "per coordinate, so the nominal blob diameter sqrt(n) (six sigma) bounds about 99.7% of "
    "each blob's mass; the remaining 10% are uniform background over the same grid.";

nnchain::LinkageKind linkage_of(const std::string& name) {
  const auto kind = nnchain::parse_linkage(name);
  if (!kind) throw CLI::ValidationError("--linkage", "unknown linkage: " + name);
  return *kind;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical agglomerative clustering over nearest-neighbor chains"};
  app.require_subcommand(1);
  const std::vector<std::string> kLinkages = {"comp", "ward", "avg1", "avg2"};

  nnchain::ClusterConfig cluster_cfg;
  std::string cluster_linkage = "ward";
  std::int64_t cluster_cache = -1;
  CLI::App* cluster = app.add_subcommand("cluster", "cluster a point file and export the dendrogram");
  cluster->add_option("--input", cluster_cfg.input, "point file to cluster")->required();
  cluster->add_option("--output", cluster_cfg.output, "dendrogram path (default: stdout)");
  cluster->add_option("--linkage", cluster_linkage, "linkage kind")
      ->check(CLI::IsMember(kLinkages))
      ->capture_default_str();
  cluster->add_option("--cache-size", cluster_cache,
                      "cached distances per cluster (default: 64 for avg1, 0 otherwise)")
      ->check(CLI::NonNegativeNumber);
  cluster->add_option("--threads", cluster_cfg.threads, "worker threads (default: all available)")
      ->check(CLI::NonNegativeNumber);
  cluster->add_option("--stats", cluster_cfg.stats_path, "write a run statistics report here");

  nnchain::GenConfig gen_cfg;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic point file");
  gen->footer(kGaussianHelp);
  gen->add_option("--kind", gen_cfg.kind, "dataset family")
      ->check(CLI::IsMember({"uniform", "gaussian"}))
      ->capture_default_str();
  gen->add_option("--n", gen_cfg.n, "number of points")->required();
  gen->add_option("--dims", gen_cfg.dims, "dimension")->capture_default_str();
  gen->add_option("--seed", gen_cfg.seed, "generator seed")->capture_default_str();
  gen->add_option("--output", gen_cfg.output, "point file path (default: stdout)");

  nnchain::VerifyConfig verify_cfg;
  std::string verify_linkage = "ward";
  std::int64_t verify_cache = -1;
  CLI::App* verify = app.add_subcommand(
      "verify", "compare against the exact reference implementation (n <= 4096)");
  verify->add_option("--input", verify_cfg.input, "point file to verify")->required();
  verify->add_option("--linkage", verify_linkage, "linkage kind")
      ->check(CLI::IsMember(kLinkages))
      ->capture_default_str();
  verify->add_option("--cache-size", verify_cache,
                     "cached distances per cluster (default: 64 for avg1, 0 otherwise)")
      ->check(CLI::NonNegativeNumber);
  verify->add_option("--threads", verify_cfg.threads, "worker threads (default: all available)")
      ->check(CLI::NonNegativeNumber);
  verify->add_option("--dendrogram", verify_cfg.dendrogram,
                     "check this exported dendrogram instead of running the engine");

  nnchain::BenchConfig bench_cfg;
  std::vector<std::string> bench_linkages;
  std::vector<std::int64_t> bench_caches;
  CLI::App* bench = app.add_subcommand("bench", "time the engine over a configuration grid");
  bench->footer(
      "each cell reports the smallest of three walls; speedup is relative to the first "
      "--threads value; tree_hash covers merge structure and sizes (not heights), which is "
      "the configuration-independent fingerprint.");
  bench->add_option("--input", bench_cfg.input, "point file (default: generate one)");
  bench->add_option("--kind", bench_cfg.kind, "generated dataset family")
      ->check(CLI::IsMember({"uniform", "gaussian"}))
      ->capture_default_str();
  bench->add_option("--n", bench_cfg.n, "generated point count")->capture_default_str();
  bench->add_option("--dims", bench_cfg.dims, "generated dimension")->capture_default_str();
  bench->add_option("--seed", bench_cfg.seed, "generator seed")->capture_default_str();
  bench->add_option("--linkage", bench_linkages, "linkage kinds to time (repeatable)")
      ->check(CLI::IsMember(kLinkages));
  bench->add_option("--cache-size", bench_caches, "cache sizes to time (repeatable)")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--threads", bench_cfg.threads, "thread counts to time (repeatable)")
      ->check(CLI::PositiveNumber);

  int rc = nnchain::kExitOk;
  cluster->callback([&] {
    cluster_cfg.kind = linkage_of(cluster_linkage);
    if (cluster_cache >= 0) cluster_cfg.cache_size = static_cast<std::uint32_t>(cluster_cache);
    rc = nnchain::cmd_cluster(cluster_cfg);
  });
  gen->callback([&] { rc = nnchain::cmd_gen(gen_cfg); });
  verify->callback([&] {
    verify_cfg.kind = linkage_of(verify_linkage);
    if (verify_cache >= 0) verify_cfg.cache_size = static_cast<std::uint32_t>(verify_cache);
    rc = nnchain::cmd_verify(verify_cfg);
  });
  bench->callback([&] {
    for (const std::string& name : bench_linkages) bench_cfg.kinds.push_back(linkage_of(name));
    for (std::int64_t s : bench_caches) {
      if (s < 0) throw CLI::ValidationError("--cache-size", "must be non-negative");
      bench_cfg.cache_sizes.push_back(static_cast<std::uint32_t>(s));
    }
    rc = nnchain::cmd_bench(bench_cfg);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? nnchain::kExitOk : nnchain::kExitUsage;
  }
  return rc;
}
