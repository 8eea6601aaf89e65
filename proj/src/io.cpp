#include "nnchain/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nnchain {

namespace {

[[noreturn]] void fail_line(std::size_t lineno, const std::string& what) {
  throw std::runtime_error("line " + std::to_string(lineno) + ": " + what);
}

bool parse_token_double(const std::string& tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

bool parse_token_u32(const std::string& tok, std::uint32_t& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::string s = line;
  for (char& ch : s)
    if (ch == ',' || ch == '\t' || ch == '\r') ch = ' ';
  std::istringstream ls(s);
  std::vector<std::string> toks;
  std::string tok;
  while (ls >> tok) toks.push_back(tok);
  return toks;
}

template <class Fn>
void with_rethrow_path(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  return in;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

PointSet parse_points(std::istream& in) {
  std::vector<double> coords;
  std::size_t d = 0;
  std::size_t rows = 0;
  bool saw_content = false;  // header is only allowed as the first non-blank line
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::vector<std::string> toks = split_fields(line);
    if (toks.empty()) continue;
    std::vector<double> vals(toks.size());
    bool numeric = true;
    for (std::size_t k = 0; k < toks.size(); ++k)
      if (!parse_token_double(toks[k], vals[k])) {
        numeric = false;
        break;
      }
    if (!numeric) {
      if (!saw_content) {
        saw_content = true;
        continue;
      }
      fail_line(lineno, "non-numeric value");
    }
    saw_content = true;
    for (double v : vals)
      if (!std::isfinite(v)) fail_line(lineno, "non-finite value");
    if (rows == 0) {
      d = vals.size();
    } else if (vals.size() != d) {
      fail_line(lineno, "expected " + std::to_string(d) + " values, got " +
                            std::to_string(vals.size()));
    }
    coords.insert(coords.end(), vals.begin(), vals.end());
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("no data points in input");
  return PointSet(rows, d, std::move(coords));
}

PointSet load_points(const std::string& path) {
  std::ifstream in = open_in(path);
  PointSet ps;
  with_rethrow_path(path, [&] { ps = parse_points(in); });
  return ps;
}

void write_points(std::ostream& out, const PointSet& ps) {
  for (std::size_t i = 0; i < ps.n; ++i) {
    const double* row = ps.row(i);
    for (std::size_t k = 0; k < ps.d; ++k) {
      if (k) out << ' ';
      out << format_double(row[k]);
    }
    out << '\n';
  }
}

void save_points(const std::string& path, const PointSet& ps) {
  std::ofstream out = open_out(path);
  write_points(out, ps);
  out.flush();
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::vector<LinkageRow> linkage_matrix(const Dendrogram& dg) {
  const std::size_t n = dg.n;
  std::vector<std::size_t> order(dg.merges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const Merge& mx = dg.merges[x];
    const Merge& my = dg.merges[y];
    if (mx.height != my.height) return mx.height < my.height;
    if (mx.round != my.round) return mx.round < my.round;
    if (mx.left != my.left) return mx.left < my.left;
    return mx.right < my.right;
  });
  std::vector<std::uint32_t> label(n);
  std::iota(label.begin(), label.end(), std::uint32_t{0});
  std::vector<LinkageRow> rows;
  rows.reserve(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Merge& m = dg.merges[order[k]];
    std::uint32_t a = label[m.left];
    std::uint32_t b = label[m.right];
    if (a > b) std::swap(a, b);
    rows.push_back({a, b, m.height, m.size});
    label[m.left] = static_cast<std::uint32_t>(n + k);
  }
  return rows;
}

void write_linkage_matrix(std::ostream& out, const Dendrogram& dg) {
  for (const LinkageRow& r : linkage_matrix(dg))
    out << r.a << ' ' << r.b << ' ' << format_double(r.height) << ' ' << r.size << '\n';
}

void save_linkage_matrix(const std::string& path, const Dendrogram& dg) {
  std::ofstream out = open_out(path);
  write_linkage_matrix(out, dg);
  out.flush();
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::vector<LinkageRow> parse_linkage_matrix(std::istream& in, std::size_t n) {
  if (n == 0) throw std::runtime_error("dendrogram for zero points");
  const std::size_t expect = n - 1;
  std::vector<LinkageRow> rows;
  rows.reserve(expect);
  std::vector<std::uint32_t> node_size(n + expect, 0);
  std::vector<char> used(n + expect, 0);
  for (std::size_t i = 0; i < n; ++i) node_size[i] = 1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::vector<std::string> toks = split_fields(line);
    if (toks.empty()) continue;
    if (rows.size() == expect) fail_line(lineno, "more than n-1 rows");
    if (toks.size() != 4) fail_line(lineno, "expected 4 fields, got " + std::to_string(toks.size()));
    LinkageRow r{};
    if (!parse_token_u32(toks[0], r.a) || !parse_token_u32(toks[1], r.b))
      fail_line(lineno, "invalid child id");
    if (!parse_token_double(toks[2], r.height) || !std::isfinite(r.height) || r.height < 0.0)
      fail_line(lineno, "invalid height");
    if (!parse_token_u32(toks[3], r.size)) fail_line(lineno, "invalid size");
    const std::uint32_t next_id = static_cast<std::uint32_t>(n + rows.size());
    if (r.a >= r.b) fail_line(lineno, "children must satisfy a < b");
    if (r.b >= next_id) fail_line(lineno, "child id refers to an undefined node");
    if (used[r.a] || used[r.b]) fail_line(lineno, "node used as a child twice");
    if (r.size != node_size[r.a] + node_size[r.b])
      fail_line(lineno, "size does not match children");
    used[r.a] = used[r.b] = 1;
    node_size[next_id] = r.size;
    rows.push_back(r);
  }
  if (rows.size() != expect)
    throw std::runtime_error("expected " + std::to_string(expect) + " rows, got " +
                             std::to_string(rows.size()));
  return rows;
}

std::vector<LinkageRow> load_linkage_matrix(const std::string& path, std::size_t n) {
  std::ifstream in = open_in(path);
  std::vector<LinkageRow> rows;
  with_rethrow_path(path, [&] { rows = parse_linkage_matrix(in, n); });
  return rows;
}

void write_stats_report(std::ostream& out,
                        std::span<const std::pair<std::string, std::string>> header,
                        const RunStats& stats) {
  for (const auto& [key, value] : header) out << key << ' ' << value << '\n';
  out << "rounds " << stats.rounds << '\n';
  out << "point_dist_evals " << stats.point_dist_evals << '\n';
  out << "cluster_dist_evals " << stats.cluster_dist_evals << '\n';
  out << "work_measure " << format_double(stats.work_measure) << '\n';
  char buf[64];
  const auto secs = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  out << "t_init " << secs(stats.t_init) << '\n';
  out << "t_nn " << secs(stats.t_nn) << '\n';
  out << "t_merge " << secs(stats.t_merge) << '\n';
  out << "t_update " << secs(stats.t_update) << '\n';
  std::size_t peak = 0;
  for (const RoundRow& r : stats.round_table) peak = std::max<std::size_t>(peak, r.active);
  out << "peak_active " << peak << '\n';
  out << "round active terminals merges\n";
  for (const RoundRow& r : stats.round_table)
    out << r.round << ' ' << r.active << ' ' << r.terminals << ' ' << r.merges << '\n';
}

}  // namespace nnchain
