#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nnchain/chain.hpp"
#include "nnchain/dendrogram.hpp"
#include "nnchain/points.hpp"

namespace nnchain {

// Shortest decimal form that round-trips a 64-bit real exactly.
std::string format_double(double v);

// Text point files: one point per line, comma or whitespace delimited, an
// optional single non-numeric header line. Parse failures throw
// std::runtime_error naming the offending line.
PointSet parse_points(std::istream& in);
PointSet load_points(const std::string& path);
void write_points(std::ostream& out, const PointSet& ps);
void save_points(const std::string& path, const PointSet& ps);

// One dendrogram merge in export form. Leaves are nodes 0..n-1; the k-th
// exported row defines internal node n+k from child nodes a < b.
struct LinkageRow {
  std::uint32_t a;
  std::uint32_t b;
  double height;
  std::uint32_t size;
};

// Rows in ascending (height, round, cluster id) order. Heights never decrease
// along ancestry and a parent's round strictly exceeds both children's, so
// this order is topological even through runs of equal heights; the id
// components make it a total order, hence byte-stable output.
std::vector<LinkageRow> linkage_matrix(const Dendrogram& dg);
void write_linkage_matrix(std::ostream& out, const Dendrogram& dg);
void save_linkage_matrix(const std::string& path, const Dendrogram& dg);

// Reads back an exported matrix for n points, validating structure (node ids
// in range and used once, consistent sizes, finite non-negative heights).
std::vector<LinkageRow> parse_linkage_matrix(std::istream& in, std::size_t n);
std::vector<LinkageRow> load_linkage_matrix(const std::string& path, std::size_t n);

// Line-oriented "key value" pairs followed by a per-round table.
void write_stats_report(std::ostream& out,
                        std::span<const std::pair<std::string, std::string>> header,
                        const RunStats& stats);

}  // namespace nnchain
