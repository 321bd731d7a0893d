#include "gridwalk/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gridwalk/errors.hpp"

namespace gridwalk {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(text);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

std::size_t to_count(const std::string& s, const std::string& context) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (s.empty() || s.front() == '-') throw std::invalid_argument(s);
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw InvalidParameter("bad count '" + s + "' in '" + context + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::size_t> parse_count_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() == 1) {
      out.push_back(to_count(parts[0], text));
    } else if (parts.size() == 3) {
      const auto start = to_count(parts[0], text);
      const auto stop = to_count(parts[1], text);
      const auto step = to_count(parts[2], text);
      if (step == 0 || start > stop) throw InvalidParameter("bad range '" + item + "'");
      for (auto v = start; v <= stop; v += step) out.push_back(v);
    } else {
      throw InvalidParameter("bad list item '" + item + "'");
    }
  }
  if (out.empty()) throw InvalidParameter("empty list '" + text + "'");
  return out;
}

std::vector<Method> parse_method_list(const std::string& text) {
  std::vector<Method> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_method(item));
  if (out.empty()) throw InvalidParameter("empty method list");
  return out;
}

void ExperimentSpec::validate() const {
  if (methods.empty() || node_counts.empty() || task_counts.empty())
    throw InvalidParameter("experiment lists must be non-empty");
  if (repetitions == 0) throw InvalidParameter("repetitions must be at least 1");
}

std::size_t ExperimentSpec::cell_count() const {
  return methods.size() * node_counts.size() * task_counts.size() * repetitions;
}

std::vector<SimConfig> expand(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<SimConfig> cells;
  cells.reserve(spec.cell_count());
  for (Method m : spec.methods)
    for (std::size_t n : spec.node_counts)
      for (std::size_t t : spec.task_counts)
        for (std::size_t r = 0; r < spec.repetitions; ++r) {
          SimConfig cfg = spec.base;
          cfg.method.method = m;
          cfg.nodes = n;
          cfg.tasks = t;
          cfg.seed = spec.base_seed + r;
          cfg.trace = nullptr;
          cfg.validate();
          cells.push_back(std::move(cfg));
        }
  return cells;
}

std::vector<Metrics> run_experiment(const ExperimentSpec& spec) {
  const auto cells = expand(spec);
  std::vector<Metrics> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        rows[i] = measure(cells[i], run(cells[i]));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(spec.jobs, 1, std::max<std::size_t>(cells.size(), 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

std::vector<Comparison> compare(std::span<const Metrics> rows, Method baseline, Method candidate) {
  using Key = std::tuple<std::size_t, std::size_t, double, double>;
  struct Acc {
    std::vector<double> eff, msg, rep;
  };
  std::map<Key, std::map<Method, Acc>> groups;
  for (const auto& m : rows) {
    auto& acc = groups[Key{m.n, m.tasks, m.c_r, m.m_r}][m.method];
    acc.eff.push_back(m.efficiency_pct);
    acc.msg.push_back(static_cast<double>(m.msgs.total()));
    acc.rep.push_back(static_cast<double>(m.replicated));
  }
  auto ratio = [](double num, double den) {
    if (den == 0.0) return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return num / den;
  };
  std::vector<Comparison> out;
  for (const auto& [key, by_method] : groups) {
    const auto [n, tasks, c_r, m_r] = key;
    auto b = by_method.find(baseline);
    auto c = by_method.find(candidate);
    const auto where = fmt::format("n={} tasks={} c_r={} m_r={}", n, tasks, c_r, m_r);
    if (b == by_method.end()) throw InvalidParameter(fmt::format("missing baseline '{}' for {}", to_string(baseline), where));
    if (c == by_method.end()) throw InvalidParameter(fmt::format("missing candidate '{}' for {}", to_string(candidate), where));
    Comparison row;
    row.n = n;
    row.tasks = tasks;
    row.c_r = c_r;
    row.m_r = m_r;
    row.runs = std::min(b->second.eff.size(), c->second.eff.size());
    row.d_efficiency = mean_std(c->second.eff).mean - mean_std(b->second.eff).mean;
    row.message_ratio = ratio(mean_std(c->second.msg).mean, mean_std(b->second.msg).mean);
    row.replication_ratio = ratio(mean_std(c->second.rep).mean, mean_std(b->second.rep).mean);
    out.push_back(row);
  }
  if (out.empty()) throw InvalidParameter("no rows to compare");
  return out;
}

void write_comparison(std::ostream& out, std::span<const Comparison> rows, Method baseline,
                      Method candidate) {
  out << fmt::format("# {} vs {}\n", to_string(candidate), to_string(baseline));
  out << "n,tasks,c_r,m_r,runs,d_efficiency,message_ratio,replication_ratio\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{:.4f},{:.4f},{:.4f}\n", r.n, r.tasks, r.c_r, r.m_r, r.runs,
                       r.d_efficiency, r.message_ratio, r.replication_ratio);
}

void write_summary(std::ostream& out, std::span<const SummaryRow> rows) {
  out << fmt::format("{:<7}{:>7}{:>8}{:>8}{:>8}{:>6}  {:>16}  {:>18}  {:>16}\n", "method", "n", "tasks",
                     "c_r", "m_r", "runs", "efficiency %", "messages", "replicated");
  for (const auto& r : rows)
    out << fmt::format("{:<7}{:>7}{:>8}{:>8}{:>8}{:>6}  {:>7.2f} +- {:<5.2f}  {:>9.0f} +- {:<6.0f}  {:>7.1f} +- {:<5.1f}\n",
                       to_string(r.method), r.n, r.tasks, r.c_r, r.m_r, r.runs, r.efficiency_pct.mean,
                       r.efficiency_pct.std, r.messages.mean, r.messages.std, r.replicated.mean,
                       r.replicated.std);
}

namespace {

// Reads "key = value" lines ('#' comments) and turns them into "--key=value"
// arguments placed ahead of the command line, so explicit flags win.
std::vector<std::string> config_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidParameter(fmt::format("{}:{}: expected key = value", path, lineno));
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config")
      throw InvalidParameter(fmt::format("{}:{}: bad key", path, lineno));
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

struct CommonFlags {
  std::string nodes = "100";
  std::string tasks = "1000";
  std::size_t reps = 1;
  std::optional<std::uint64_t> seed;
  double cr = 1000.0;
  double mr = 1500.0;
  double timeout = 0.0;
  std::string topology = "random:0.1";
  double mu = 4.605170185988092;
  double sigma = 0.5;
  std::vector<std::string> crashes;
  std::string out;
  std::string trace;
  std::size_t jobs = 1;
  bool reclaim = false;
  bool no_propagate = false;
  double max_time = 1e7;
  double msg_hop = 1.0;
};

void add_common(CLI::App& app, CommonFlags& f) {
  app.add_option("--nodes", f.nodes, "Node count(s): list or start:stop:step")->capture_default_str();
  app.add_option("--tasks", f.tasks, "Task count(s): list or start:stop:step")->capture_default_str();
  app.add_option("--reps", f.reps, "Repetitions per cell (seeds seed..seed+reps-1)")->capture_default_str();
  app.add_option("--seed", f.seed, "Base seed (falls back to GRIDWALK_SEED, then 1)");
  app.add_option("--cr", f.cr, "Refresh coefficient c_r")->capture_default_str();
  app.add_option("--mr", f.mr, "Minimum refresh value m_r")->capture_default_str();
  app.add_option("--timeout", f.timeout, "Feedback timeout (default 2*n message hops)");
  app.add_option("--topology", f.topology, "ring | complete | random:<p>")->capture_default_str();
  app.add_option("--mu", f.mu, "Log-scale mean of task lengths")->capture_default_str();
  app.add_option("--sigma", f.sigma, "Log-scale std of task lengths")->capture_default_str();
  app.add_option("--crash", f.crashes, "Crash plan entry t@node (repeatable)");
  app.add_option("--out", f.out, "CSV output path (default stdout)");
  app.add_option("--trace", f.trace, "Event trace output path (single run only)");
  app.add_option("--jobs", f.jobs, "Parallel workers")->capture_default_str();
  app.add_flag("--reclaim", f.reclaim, "Idle nodes re-run in-progress tasks");
  app.add_flag("--no-propagate", f.no_propagate, "Stop at t_dist; t_propagate is reported as -1");
  app.add_option("--max-time", f.max_time, "Simulation time cap")->capture_default_str();
  app.add_option("--msg-hop", f.msg_hop, "Time per diffusion/feedback hop")->capture_default_str();
  app.add_option("--config", "Flat key = value file mirroring flag names");
}

ExperimentSpec build_spec(const CommonFlags& f, std::vector<Method> methods) {
  ExperimentSpec spec;
  spec.methods = std::move(methods);
  spec.node_counts = parse_count_list(f.nodes);
  spec.task_counts = parse_count_list(f.tasks);
  spec.repetitions = f.reps;
  if (f.seed) {
    spec.base_seed = *f.seed;
  } else if (const char* env = std::getenv("GRIDWALK_SEED"); env && *env) {
    spec.base_seed = to_count(env, "GRIDWALK_SEED");
  }
  spec.jobs = f.jobs;
  SimConfig& b = spec.base;
  b.method.refresh_coefficient = f.cr;
  b.method.min_refresh = f.mr;
  b.method.feedback_timeout = f.timeout;
  b.topology = TopologyModel::parse(f.topology);
  b.mu = f.mu;
  b.sigma = f.sigma;
  for (const auto& c : f.crashes) b.crashes.push_back(CrashSpec::parse(c));
  b.reclaim_in_progress = f.reclaim;
  b.track_propagation = !f.no_propagate;
  b.max_time = f.max_time;
  b.msg_hop_cost = f.msg_hop;
  spec.validate();
  return spec;
}

int emit_runs(const ExperimentSpec& spec, const CommonFlags& f, std::ostream& out, std::ostream& err) {
  std::vector<Metrics> rows;
  std::vector<std::string> hashes;
  if (!f.trace.empty()) {
    if (spec.cell_count() != 1) throw InvalidParameter("--trace needs exactly one run");
    std::ofstream trace(f.trace);
    if (!trace) throw InvalidParameter("cannot write trace '" + f.trace + "'");
    SimConfig cfg = expand(spec).front();
    cfg.trace = &trace;
    const RunResult r = run(cfg);
    rows.push_back(measure(cfg, r));
    hashes.push_back(format_trace_hash(r.trace_hash));
  } else {
    rows = run_experiment(spec);
    if (rows.size() == 1) hashes.push_back(format_trace_hash(rows.front().trace_hash));
  }

  std::ostream* summary = &err;
  std::ofstream file;
  if (!f.out.empty()) {
    file.open(f.out);
    if (!file) throw InvalidParameter("cannot write '" + f.out + "'");
    write_csv(file, rows);
    summary = &out;
  } else {
    write_csv(out, rows);
  }
  write_summary(*summary, summarize(rows));
  for (const auto& h : hashes) *summary << "trace hash " << h << '\n';
  for (const auto& m : rows)
    if (!m.complete)
      *summary << fmt::format("warning: {} n={} tasks={} seed={} hit max-time\n", to_string(m.method), m.n,
                              m.tasks, m.seed);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);

  try {
    // Expand --config before parsing so explicit flags override the file.
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string path;
      std::size_t span = 0;
      if (args[i] == "--config" && i + 1 < args.size()) {
        path = args[i + 1];
        span = 2;
      } else if (args[i].rfind("--config=", 0) == 0) {
        path = args[i].substr(9);
        span = 1;
      } else {
        continue;
      }
      auto extra = config_args(path);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + span));
      // Keep the subcommand name first.
      const std::size_t at = std::min<std::size_t>(1, args.size());
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), extra.begin(), extra.end());
      break;
    }

    CLI::App app{"Random-walk task management simulator"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    CommonFlags run_flags;
    std::string method = "active";
    auto* run_cmd = app.add_subcommand("run", "Run one configuration (optionally repeated)");
    run_cmd->add_option("--method", method, "active | ds | df | dm")->capture_default_str();
    add_common(*run_cmd, run_flags);

    CommonFlags sweep_flags;
    std::string methods = "active,dm";
    auto* sweep_cmd = app.add_subcommand("sweep", "Run every (method, nodes, tasks, rep) cell");
    sweep_cmd->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
    add_common(*sweep_cmd, sweep_flags);

    std::string csv_path;
    std::string baseline = "active";
    std::string candidate = "dm";
    auto* cmp_cmd = app.add_subcommand("compare", "Per-configuration deltas between two methods");
    cmp_cmd->add_option("csv", csv_path, "CSV produced by run or sweep")->required();
    cmp_cmd->add_option("--baseline", baseline)->capture_default_str();
    cmp_cmd->add_option("--candidate", candidate)->capture_default_str();

    // CLI11 wants argv order with the program name first, reversed.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      return app.exit(e, out, err);
    }

    if (run_cmd->parsed()) {
      if (parse_count_list(run_flags.nodes).size() != 1 || parse_count_list(run_flags.tasks).size() != 1)
        throw InvalidParameter("run takes a single --nodes and --tasks value; use sweep for lists");
      return emit_runs(build_spec(run_flags, {parse_method(method)}), run_flags, out, err);
    }
    if (sweep_cmd->parsed()) return emit_runs(build_spec(sweep_flags, parse_method_list(methods)), sweep_flags, out, err);
    if (cmp_cmd->parsed()) {
      std::ifstream in(csv_path);
      if (!in) throw InvalidParameter("cannot open '" + csv_path + "'");
      const auto rows = read_csv(in);
      const auto b = parse_method(baseline);
      const auto c = parse_method(candidate);
      write_comparison(out, compare(rows, b, c), b, c);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace gridwalk
