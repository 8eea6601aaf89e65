#include "nnchain/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <span>
#include <stdexcept>
#include <thread>
#include <utility>

#include "nnchain/chain.hpp"
#include "nnchain/dataset.hpp"
#include "nnchain/io.hpp"
#include "nnchain/oracle.hpp"

namespace nnchain {

namespace {

template <class Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}

PointSet make_dataset(const std::string& kind, std::size_t n, std::size_t dims,
                      std::uint64_t seed) {
  if (kind == "uniform") return gen_uniform(n, dims, seed);
  if (kind == "gaussian") return gen_gaussian_disc(n, dims, seed);
  throw std::invalid_argument("unknown dataset kind: " + kind);
}

// Cophenetic matrix (condensed) of an exported linkage matrix. Node n+k is
// defined by row k, so every cross pair of the two child leaf sets joins at
// that row's height.
std::vector<double> cophenetic_of_rows(std::span<const LinkageRow> rows, std::size_t n) {
  std::vector<std::vector<index_t>> members(n + rows.size());
  for (std::size_t i = 0; i < n; ++i) members[i] = {static_cast<index_t>(i)};
  std::vector<double> out(n * (n - 1) / 2, 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const LinkageRow& r = rows[k];
    std::vector<index_t>& ma = members[r.a];
    std::vector<index_t>& mb = members[r.b];
    for (index_t x : ma)
      for (index_t y : mb) out[condensed_index(n, std::min(x, y), std::max(x, y))] = r.height;
    std::vector<index_t> merged = std::move(ma);
    merged.insert(merged.end(), mb.begin(), mb.end());
    mb.clear();
    mb.shrink_to_fit();
    members[n + k] = std::move(merged);
  }
  return out;
}

// FNV-1a over the merge structure (children and sizes). Heights are excluded
// on purpose: the merge tree is the bitwise-stable determinism invariant,
// while cached heights may differ from direct ones in the last unit of
// precision across cache configurations.
std::uint64_t tree_hash(std::span<const LinkageRow> rows, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  const auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(n);
  for (const LinkageRow& r : rows) {
    mix(r.a);
    mix(r.b);
    mix(r.size);
  }
  return h;
}

}  // namespace

std::uint32_t default_cache_size(LinkageKind kind) {
  return kind == LinkageKind::kAvg1 ? 64u : 0u;
}

int cmd_cluster(const ClusterConfig& cfg) {
  return guarded([&]() -> int {
    const PointSet ps = load_points(cfg.input);
    RunOptions opts;
    opts.kind = cfg.kind;
    opts.cache_size = cfg.cache_size.value_or(default_cache_size(cfg.kind));
    opts.threads = cfg.threads;
    opts.collect_round_table = true;
    const RunResult res = run(ps, opts);
    if (cfg.output.empty()) {
      write_linkage_matrix(std::cout, res.dendrogram);
    } else {
      save_linkage_matrix(cfg.output, res.dendrogram);
    }
    if (!cfg.stats_path.empty()) {
      const std::vector<std::pair<std::string, std::string>> header = {
          {"input", cfg.input},
          {"n", std::to_string(ps.n)},
          {"dims", std::to_string(ps.d)},
          {"linkage", linkage_name(cfg.kind)},
          {"cache_size", std::to_string(opts.cache_size)},
          {"threads", std::to_string(cfg.threads)},
      };
      std::ofstream out(cfg.stats_path);
      if (!out) throw std::runtime_error(cfg.stats_path + ": cannot open for writing");
      write_stats_report(out, header, res.stats);
      out.flush();
      if (!out) throw std::runtime_error(cfg.stats_path + ": write failed");
    }
    return kExitOk;
  });
}

int cmd_gen(const GenConfig& cfg) {
  return guarded([&]() -> int {
    const PointSet ps = make_dataset(cfg.kind, cfg.n, cfg.dims, cfg.seed);
    if (cfg.output.empty()) {
      write_points(std::cout, ps);
    } else {
      save_points(cfg.output, ps);
    }
    return kExitOk;
  });
}

int cmd_verify(const VerifyConfig& cfg) {
  int verdict = kExitOk;
  const int rc = guarded([&]() -> int {
    const PointSet ps = load_points(cfg.input);
    if (ps.n > 4096) {
      std::cerr << "refused: n=" << ps.n
                << " exceeds the 4096-point verification guard (the reference "
                   "algorithm is cubic); verify a smaller sample instead\n";
      return kExitData;
    }
    const Dendrogram reference = naive_hac(ps, cfg.kind);
    const std::vector<double> want = cophenetic_distances(reference);
    std::vector<double> got;
    if (!cfg.dendrogram.empty()) {
      got = cophenetic_of_rows(load_linkage_matrix(cfg.dendrogram, ps.n), ps.n);
    } else {
      RunOptions opts;
      opts.kind = cfg.kind;
      opts.cache_size = cfg.cache_size.value_or(default_cache_size(cfg.kind));
      opts.threads = cfg.threads;
      got = cophenetic_distances(run(ps, opts).dendrogram);
    }
    constexpr double kTol = 1e-9;
    double max_rel = 0.0;
    bool have_bad = false;
    std::size_t bad_i = 0, bad_j = 0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < ps.n; ++i)
      for (std::size_t j = i + 1; j < ps.n; ++j, ++idx) {
        const double rel = std::abs(got[idx] - want[idx]) / std::max(1.0, std::abs(want[idx]));
        if (rel > max_rel) {
          max_rel = rel;
          if (rel > kTol && !have_bad) {
            have_bad = true;
            bad_i = i;
            bad_j = j;
          }
        }
      }
    std::cout << (max_rel <= kTol ? "PASS" : "FAIL") << " max_relative_deviation "
              << format_double(max_rel) << '\n';
    if (max_rel > kTol) {
      const std::size_t bad = condensed_index(ps.n, bad_i, bad_j);
      std::cout << "first_differing_pair " << bad_i << ' ' << bad_j << " got "
                << format_double(got[bad]) << " reference " << format_double(want[bad]) << '\n';
      verdict = kExitVerifyFail;
    }
    return kExitOk;
  });
  return rc != kExitOk ? rc : verdict;
}

int cmd_bench(const BenchConfig& cfg) {
  return guarded([&]() -> int {
    const PointSet ps = cfg.input.empty()
                            ? make_dataset(cfg.kind, cfg.n, cfg.dims, cfg.seed)
                            : load_points(cfg.input);
    std::vector<LinkageKind> kinds = cfg.kinds;
    if (kinds.empty()) kinds = {LinkageKind::kWard};
    std::vector<int> threads = cfg.threads;
    if (threads.empty()) {
      threads = {1};
      const int hw = static_cast<int>(std::thread::hardware_concurrency());
      if (hw > 1) threads.push_back(hw);
    }
    constexpr int kRuns = 3;  // report the smallest of three walls per cell
    std::printf("linkage cache_size threads best_ms speedup tree_hash\n");
    for (LinkageKind kind : kinds) {
      std::vector<std::uint32_t> sizes = cfg.cache_sizes;
      if (sizes.empty()) sizes = {default_cache_size(kind)};
      for (std::uint32_t s : sizes) {
        double base_ms = 0.0;
        for (std::size_t ti = 0; ti < threads.size(); ++ti) {
          RunOptions opts;
          opts.kind = kind;
          opts.cache_size = s;
          opts.threads = threads[ti];
          opts.collect_round_table = false;
          double best_ms = 0.0;
          std::uint64_t hash = 0;
          for (int rep = 0; rep < kRuns; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            const RunResult res = run(ps, opts);
            const auto t1 = std::chrono::steady_clock::now();
            const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            if (rep == 0 || ms < best_ms) best_ms = ms;
            hash = tree_hash(linkage_matrix(res.dendrogram), ps.n);
          }
          if (ti == 0) base_ms = best_ms;
          std::printf("%s %u %d %.3f %.3f %016" PRIx64 "\n", linkage_name(kind), s, threads[ti],
                      best_ms, base_ms / best_ms, hash);
        }
      }
    }
    return kExitOk;
  });
}

}  // namespace nnchain
