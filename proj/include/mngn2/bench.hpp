#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mngn2/core.hpp"
#include "mngn2/problems.hpp"
#include "mngn2/solver.hpp"

namespace mngn2 {

/// One batch of repeated solves from randomized starting points. Trial t
/// draws its start from the counter stream keyed by (seed, t, coordinate),
/// so results are reproducible regardless of execution order or thread
/// count; stream_tag = 0 means all methods share the same starts.
struct TrialSpec {
  TestProblem problem;
  Method method = Method::Mngn2AlphaBetaDelta;
  SolveOptions options;
  Index n_trials = 100;
  std::uint64_t seed = 0;
  double x0_low = -5.0;
  double x0_high = 5.0;
  std::uint64_t stream_tag = 0;
};

struct TrialRecord {
  Index seed_index = 0;
  bool converged = false;
  Index iterations = 0;
  double norm = 0.0;  // ||x~|| or ||L x~||; NaN when the trial failed
  std::string failure_reason;
};

struct BenchSummary {
  std::optional<double> avg_iterations;
  std::optional<double> avg_norm;
  Index n_success = 0;
  std::vector<TrialRecord> trials;
};

/// Averages over the converged records only; absent when none converged.
inline std::tuple<std::optional<double>, std::optional<double>, Index> summarize(
    const std::vector<TrialRecord>& records) {
  if (records.empty()) throw InvalidInputError("summarize: no records");
  double it_sum = 0.0, norm_sum = 0.0;
  Index successes = 0;
  for (const TrialRecord& rec : records) {
    if (!rec.converged) continue;
    ++successes;
    it_sum += static_cast<double>(rec.iterations);
    norm_sum += rec.norm;
  }
  if (successes == 0) return {std::nullopt, std::nullopt, 0};
  const double cnt = static_cast<double>(successes);
  return {it_sum / cnt, norm_sum / cnt, successes};
}

inline Vector trial_start(const TrialSpec& spec, Index trial) {
  const Index n = spec.problem.problem.var_dim;
  Vector x0(n);
  for (Index i = 0; i < n; ++i) {
    const double u = rng::uniform01(spec.seed, static_cast<std::uint64_t>(trial),
                                    static_cast<std::uint64_t>(i), spec.stream_tag);
    x0(i) = spec.x0_low + (spec.x0_high - spec.x0_low) * u;
  }
  return x0;
}

inline BenchSummary run_trials(const TrialSpec& spec, int jobs = 1) {
  if (spec.n_trials < 1) throw InvalidInputError("run_trials: n_trials must be >= 1");
  if (!(spec.x0_low < spec.x0_high)) throw InvalidInputError("run_trials: bad start range");

  SolveOptions options = spec.options;
  options.method = spec.method;

  std::vector<TrialRecord> records(static_cast<std::size_t>(spec.n_trials));
  auto run_one = [&](Index t) {
    TrialRecord rec;
    rec.seed_index = t;
    try {
      const SolveResult res = solve(spec.problem.problem, trial_start(spec, t), options);
      rec.converged = res.converged;
      rec.iterations = res.iterations;
      if (res.converged) {
        rec.norm = options.regularizer ? (*options.regularizer * res.x_final).norm()
                                       : res.x_final.norm();
      } else {
        rec.norm = std::numeric_limits<double>::quiet_NaN();
        rec.failure_reason = res.failure_reason ? to_string(*res.failure_reason) : "unknown";
      }
    } catch (const std::exception& e) {
      rec.converged = false;
      rec.norm = std::numeric_limits<double>::quiet_NaN();
      rec.failure_reason = e.what();
    }
    records[static_cast<std::size_t>(t)] = std::move(rec);
  };

  if (jobs <= 1) {
    for (Index t = 0; t < spec.n_trials; ++t) run_one(t);
  } else {
    std::vector<std::thread> pool;
    std::atomic<Index> next{0};
    const int workers = std::min<int>(jobs, static_cast<int>(spec.n_trials));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (Index t = next.fetch_add(1); t < spec.n_trials; t = next.fetch_add(1))
          run_one(t);
      });
    for (std::thread& th : pool) th.join();
  }

  BenchSummary summary;
  summary.trials = std::move(records);
  std::tie(summary.avg_iterations, summary.avg_norm, summary.n_success) =
      summarize(summary.trials);
  return summary;
}

// ---------------------------------------------------------------------------
// Export formats. One row per method run; trial records ride along in the
// JSON form so box plots can be rebuilt externally.

struct BenchRow {
  std::string method;
  BenchSummary summary;
};

namespace detail {

inline std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace detail

inline std::string export_csv(const std::vector<BenchRow>& rows) {
  std::string out = "method,iterations,norm,success\n";
  for (const BenchRow& row : rows) {
    out += row.method;
    out += ',';
    if (row.summary.avg_iterations) out += detail::format_double("%.10g", *row.summary.avg_iterations);
    out += ',';
    if (row.summary.avg_norm) out += detail::format_double("%.10g", *row.summary.avg_norm);
    out += ',';
    out += std::to_string(row.summary.n_success);
    out += '\n';
  }
  return out;
}

inline std::string export_table(const std::vector<BenchRow>& rows) {
  std::size_t width = 10;
  for (const BenchRow& row : rows) width = std::max(width, row.method.size() + 2);
  std::string out = "method";
  out.append(width - 6, ' ');
  out += "iterations  norm      success\n";
  for (const BenchRow& row : rows) {
    std::string line = row.method;
    line.append(width - row.method.size(), ' ');
    const std::string iters =
        row.summary.avg_iterations ? detail::format_double("%.0f", *row.summary.avg_iterations) : "--";
    const std::string norm =
        row.summary.avg_norm ? detail::format_double("%.4f", *row.summary.avg_norm) : "--";
    line += iters;
    line.append(iters.size() < 12 ? 12 - iters.size() : 1, ' ');
    line += norm;
    line.append(norm.size() < 10 ? 10 - norm.size() : 1, ' ');
    line += std::to_string(row.summary.n_success);
    out += line;
    out += '\n';
  }
  return out;
}

inline nlohmann::json trial_to_json(const std::string& method, const TrialRecord& rec) {
  nlohmann::json j;
  j["method"] = method;
  j["seed_index"] = rec.seed_index;
  j["converged"] = rec.converged;
  j["iterations"] = rec.iterations;
  if (std::isfinite(rec.norm))
    j["norm"] = rec.norm;
  else
    j["norm"] = nullptr;
  j["failure_reason"] = rec.converged ? nlohmann::json(nullptr) : nlohmann::json(rec.failure_reason);
  return j;
}

inline std::string export_json(const nlohmann::json& spec_info,
                               const std::vector<BenchRow>& rows) {
  nlohmann::json doc;
  doc["spec"] = spec_info;
  doc["rows"] = nlohmann::json::array();
  doc["trials"] = nlohmann::json::array();
  for (const BenchRow& row : rows) {
    nlohmann::json r;
    r["method"] = row.method;
    r["iterations"] =
        row.summary.avg_iterations ? nlohmann::json(*row.summary.avg_iterations) : nlohmann::json(nullptr);
    r["norm"] = row.summary.avg_norm ? nlohmann::json(*row.summary.avg_norm) : nlohmann::json(nullptr);
    r["success"] = row.summary.n_success;
    doc["rows"].push_back(std::move(r));
    for (const TrialRecord& rec : row.summary.trials)
      doc["trials"].push_back(trial_to_json(row.method, rec));
  }
  return doc.dump(2) + "\n";
}

enum class ExportFormat { Table, Csv, Json };

inline std::string export_summary(const BenchSummary& summary, ExportFormat format,
                                  const std::string& method_label,
                                  const nlohmann::json& spec_info = {}) {
  const std::vector<BenchRow> rows{{method_label, summary}};
  switch (format) {
    case ExportFormat::Table: return export_table(rows);
    case ExportFormat::Csv: return export_csv(rows);
    case ExportFormat::Json: return export_json(spec_info, rows);
  }
  throw InvalidInputError("export_summary: unknown format");
}

}  // namespace mngn2
