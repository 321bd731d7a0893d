#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gridwalk/engine.hpp"
#include "gridwalk/metrics.hpp"

namespace gridwalk {

// "a,b,c" and "start:stop:step" (inclusive) forms, mixed freely.
std::vector<std::size_t> parse_count_list(const std::string& text);
std::vector<Method> parse_method_list(const std::string& text);

struct ExperimentSpec {
  std::vector<Method> methods{Method::Active};
  std::vector<std::size_t> node_counts{100};
  std::vector<std::size_t> task_counts{1000};
  std::size_t repetitions = 1;
  std::uint64_t base_seed = 1;  // repetition r uses base_seed + r
  SimConfig base;               // template for every cell
  std::size_t jobs = 1;

  void validate() const;
  std::size_t cell_count() const;
};

// One config per (method, n, tasks, repetition), in spec order.
std::vector<SimConfig> expand(const ExperimentSpec& spec);

// Runs every cell; rows come back sorted by row_less whatever the
// scheduling across workers.
std::vector<Metrics> run_experiment(const ExperimentSpec& spec);

struct Comparison {
  std::size_t n = 0;
  std::size_t tasks = 0;
  double c_r = 0.0;
  double m_r = 0.0;
  std::size_t runs = 0;
  double d_efficiency = 0.0;       // candidate - baseline, mean percentage points
  double message_ratio = 1.0;      // candidate / baseline, means of totals
  double replication_ratio = 1.0;  // candidate / baseline, means
};

// Per (n, tasks, c_r, m_r). Throws InvalidParameter ("missing baseline")
// when a configuration lacks either method.
std::vector<Comparison> compare(std::span<const Metrics> rows, Method baseline,
                                Method candidate);

void write_comparison(std::ostream& out, std::span<const Comparison> rows, Method baseline,
                      Method candidate);

void write_summary(std::ostream& out, std::span<const SummaryRow> rows);

// Entry point of the command-line tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gridwalk
