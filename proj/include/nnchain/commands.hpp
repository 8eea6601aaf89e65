#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nnchain/linkage.hpp"

namespace nnchain {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitVerifyFail = 3;

// 64 for avg1 (its pairwise mean has no summary-statistics shortcut, so cached
// heights pay for themselves); 0 for the other kinds.
std::uint32_t default_cache_size(LinkageKind kind);

struct ClusterConfig {
  std::string input;
  std::string output;      // empty: stdout
  std::string stats_path;  // empty: no stats report
  LinkageKind kind = LinkageKind::kWard;
  std::optional<std::uint32_t> cache_size;
  int threads = 0;  // 0: all available
};
int cmd_cluster(const ClusterConfig& cfg);

struct GenConfig {
  std::string kind = "uniform";  // uniform | gaussian
  std::size_t n = 0;
  std::size_t dims = 2;
  std::uint64_t seed = 1;
  std::string output;  // empty: stdout
};
int cmd_gen(const GenConfig& cfg);

struct VerifyConfig {
  std::string input;
  LinkageKind kind = LinkageKind::kWard;
  std::optional<std::uint32_t> cache_size;
  int threads = 0;
  std::string dendrogram;  // optional exported matrix to check instead of a fresh run
};
int cmd_verify(const VerifyConfig& cfg);

struct BenchConfig {
  std::string input;  // empty: generate the dataset below
  std::string kind = "uniform";
  std::size_t n = 10000;
  std::size_t dims = 2;
  std::uint64_t seed = 1;
  std::vector<LinkageKind> kinds;          // empty: {ward}
  std::vector<std::uint32_t> cache_sizes;  // empty: per-kind default
  std::vector<int> threads;                // empty: {1, hardware threads}
};
int cmd_bench(const BenchConfig& cfg);

}  // namespace nnchain
