#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gridwalk/engine.hpp"

namespace gridwalk {

// One CSV row.
struct Metrics {
  Method method = Method::Active;
  std::size_t n = 0;
  std::size_t tasks = 0;
  std::uint64_t seed = 0;
  double c_r = 0.0;
  double m_r = 0.0;
  double t_sequential = 0.0;
  double t_distributed = 0.0;
  double efficiency_pct = 0.0;
  MessageCounts msgs;
  std::uint64_t replicated = 0;
  double t_propagate = -1.0;
  bool complete = false;
  std::uint64_t trace_hash = 0;  // not part of the CSV

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

// t_seq / (t_dist * n) * 100
double efficiency(double t_seq, double t_dist, std::size_t n);

// Sum over tasks of (completions - 1).
std::uint64_t count_replicated(std::span<const Completion> completions);
std::uint64_t count_replicated(const RunResult& r);

Metrics measure(const SimConfig& cfg, const RunResult& r);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
};

Stat mean_std(std::span<const double> xs);

struct SummaryRow {
  Method method = Method::Active;
  std::size_t n = 0;
  std::size_t tasks = 0;
  double c_r = 0.0;
  double m_r = 0.0;
  std::size_t runs = 0;
  Stat efficiency_pct;
  Stat t_distributed;
  Stat messages;  // all classes
  Stat replicated;
};

// Groups by (method, n, tasks, c_r, m_r); output sorted by that key and
// independent of input order. Throws InvalidParameter on empty input.
std::vector<SummaryRow> summarize(std::span<const Metrics> runs);

// Total order on rows, used to sort sweep output.
bool row_less(const Metrics& a, const Metrics& b);

std::string csv_header();
std::string to_csv_row(const Metrics& m);
void write_csv(std::ostream& out, std::span<const Metrics> rows);
// Throws InvalidParameter naming the offending line.
std::vector<Metrics> read_csv(std::istream& in);

}  // namespace gridwalk
