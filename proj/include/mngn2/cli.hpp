#pragma once

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mngn2/bench.hpp"
#include "mngn2/problems.hpp"
#include "mngn2/solver.hpp"

namespace mngn2::cli {

inline const std::map<std::string, Method>& method_names() {
  static const std::map<std::string, Method> names = {
      {"mngn", Method::Mngn},
      {"mngn2-a", Method::Mngn2Alpha},
      {"mngn2-ab", Method::Mngn2AlphaBeta},
      {"mngn2-abd", Method::Mngn2AlphaBetaDelta},
      {"ckb1", Method::Ckb1},
      {"ckb2", Method::Ckb2},
      {"rckb1", Method::Rckb1},
      {"rckb2", Method::Rckb2},
  };
  return names;
}

inline std::string method_list() {
  std::string out;
  for (const auto& [name, _] : method_names()) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

inline Method parse_method(const std::string& name) {
  auto it = method_names().find(name);
  if (it == method_names().end())
    throw InvalidInputError("unknown method '" + name + "' (valid: " + method_list() + ")");
  return it->second;
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  return parts;
}

inline Vector parse_number_list(const std::string& s, Index n, const char* what) {
  const std::vector<std::string> parts = split_csv(s);
  if (n >= 0 && static_cast<Index>(parts.size()) != n)
    throw InvalidInputError(std::string(what) + ": expected " + std::to_string(n) +
                            " comma-separated values, got " + std::to_string(parts.size()));
  Vector v(static_cast<Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    try {
      std::size_t used = 0;
      v(static_cast<Index>(i)) = std::stod(parts[i], &used);
      if (used != parts[i].size()) throw std::invalid_argument(parts[i]);
    } catch (const std::exception&) {
      throw InvalidInputError(std::string(what) + ": bad number '" + parts[i] + "'");
    }
  }
  return v;
}

/// Parameter-vector shorthands: ones, two-e (2e), first2 ((2,0,...,0)^T),
/// zero, "<scalar>e" (e.g. 1.7e), or an explicit comma list.
inline Vector parse_param_vector(const std::string& s, Index n, const char* what) {
  if (s == "ones") return Vector::Ones(n);
  if (s == "two-e") return Vector::Constant(n, 2.0);
  if (s == "zero") return Vector::Zero(n);
  if (s == "first2") {
    Vector v = Vector::Zero(n);
    v(0) = 2.0;
    return v;
  }
  if (s.size() > 1 && s.back() == 'e') {
    const std::string head = s.substr(0, s.size() - 1);
    try {
      std::size_t used = 0;
      const double scale = std::stod(head, &used);
      if (used == head.size()) return Vector::Constant(n, scale);
    } catch (const std::exception&) {
      // fall through to the comma-list parse
    }
  }
  return parse_number_list(s, n, what);
}

struct ProblemFlags {
  std::string id;
  Index m = 8;
  Index n = 10;
  std::string a = "ones";
  std::string c = "two-e";
  double delta = 0.7;
  double gamma = 2.0;
};

inline TestProblem build_problem(const ProblemFlags& pf) {
  if (pf.id == "robot") return make_robot();
  if (pf.id == "paraboloid") return make_paraboloid();
  if (pf.id == "circle2d") return make_circle2d(pf.delta, pf.gamma);
  const Vector a = parse_param_vector(pf.a, pf.n, "--a");
  const Vector c = parse_param_vector(pf.c, pf.n, "--c");
  if (pf.id == "ellipsoid-product") return make_ellipsoid_product(pf.m, pf.n, a, c);
  if (pf.id == "sphere-planes") return make_sphere_planes(pf.m, pf.n, a, c);
  if (pf.id == "chain") return make_chain(pf.m, pf.n, a, c);
  throw InvalidInputError(
      "unknown problem '" + pf.id +
      "' (valid: robot, paraboloid, circle2d, ellipsoid-product, sphere-planes, chain)");
}

inline std::optional<Matrix> build_regularizer(const std::string& kind, Index n) {
  if (kind == "none" || kind.empty()) return std::nullopt;
  if (kind == "identity") return Matrix::Identity(n, n);
  if (kind == "d1") return derivative_operator(1, n);
  if (kind == "d2") return derivative_operator(2, n);
  throw InvalidInputError("unknown regularizer '" + kind + "' (valid: none, identity, d1, d2)");
}

inline ExportFormat parse_format(const std::string& s) {
  if (s == "table") return ExportFormat::Table;
  if (s == "csv") return ExportFormat::Csv;
  if (s == "json") return ExportFormat::Json;
  throw InvalidInputError("unknown output format '" + s + "' (valid: table, csv, json)");
}

struct CommonFlags {
  ProblemFlags problem;
  std::string xbar = "zero";
  std::string l_kind = "none";
  double tol = 1e-8;
  Index max_iter = 500;
  double eta = 0.0;
  bool eta_set = false;
  std::string log_base = "natural";
};

inline SolveOptions build_options(const CommonFlags& cf, Method method, Index n) {
  SolveOptions options;
  options.method = method;
  options.stop_tol = cf.tol;
  options.max_iter = cf.max_iter;
  if (cf.xbar != "zero") options.model_profile = parse_param_vector(cf.xbar, n, "--xbar");
  if (auto l = build_regularizer(cf.l_kind, n)) options.regularizer = compact_qr_reduce(*l);
  if (method == Method::Mngn2AlphaBeta) {
    if (!cf.eta_set)
      throw InvalidInputError("method mngn2-ab requires --eta (fixed residual-increase factor)");
    options.fixed_eta = cf.eta;
  }
  if (cf.log_base == "natural")
    options.log_base = LogBase::Natural;
  else if (cf.log_base == "base10")
    options.log_base = LogBase::Base10;
  else
    throw InvalidInputError("unknown log base '" + cf.log_base + "' (valid: natural, base10)");
  return options;
}

namespace detail {

inline std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

inline std::string vec_to_string(const Vector& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v(i));
  }
  return out;
}

inline nlohmann::json spec_to_json(const CommonFlags& cf, Index trials, std::uint64_t seed,
                                   bool shared_starts) {
  nlohmann::json spec;
  spec["problem"] = cf.problem.id;
  spec["m"] = cf.problem.m;
  spec["n"] = cf.problem.n;
  spec["a"] = cf.problem.a;
  spec["c"] = cf.problem.c;
  if (cf.problem.id == "circle2d") {
    spec["delta"] = cf.problem.delta;
    spec["gamma"] = cf.problem.gamma;
  }
  spec["xbar"] = cf.xbar;
  spec["L"] = cf.l_kind;
  spec["tol"] = cf.tol;
  spec["max_iter"] = cf.max_iter;
  spec["trials"] = trials;
  spec["seed"] = seed;
  spec["shared_starts"] = shared_starts;
  return spec;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Minimal-norm Gauss-Newton solver and benchmark driver", "mngn2"};
  app.require_subcommand(1);

  CommonFlags cf;
  std::string method_arg, methods_arg = "mngn2-abd";
  std::string x0_arg;
  std::string output_arg = "table";
  std::string out_path;
  Index trials = 100;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool trace = false;
  bool independent_starts = false;

  auto add_problem_flags = [&](CLI::App* cmd) {
    cmd->add_option("--problem", cf.problem.id,
                    "problem id: robot, paraboloid, circle2d, ellipsoid-product, "
                    "sphere-planes, chain")
        ->required();
    cmd->add_option("--m", cf.problem.m, "residual dimension (parametric problems)");
    cmd->add_option("--n", cf.problem.n, "variable dimension (parametric problems)");
    cmd->add_option("--a", cf.problem.a, "semiaxes: ones or comma list");
    cmd->add_option("--c", cf.problem.c, "center: two-e, first2, or comma list");
    cmd->add_option("--delta", cf.problem.delta, "circle2d curvature parameter");
    cmd->add_option("--gamma", cf.problem.gamma, "circle2d center parameter");
  };
  auto add_solver_flags = [&](CLI::App* cmd) {
    cmd->add_option("--xbar", cf.xbar, "model profile: zero, <scalar>e, or comma list");
    cmd->add_option("--L", cf.l_kind, "regularizer: none, identity, d1, d2");
    cmd->add_option("--tol", cf.tol, "stop tolerance");
    cmd->add_option("--max-iter", cf.max_iter, "iteration budget");
    cmd->add_option("--eta", cf.eta, "fixed residual-increase factor (mngn2-ab)")
        ->each([&](const std::string&) { cf.eta_set = true; });
    cmd->add_option("--log-base", cf.log_base, "regression log base: natural, base10");
  };

  CLI::App* solve_cmd = app.add_subcommand("solve", "run one solve from a given start");
  add_problem_flags(solve_cmd);
  add_solver_flags(solve_cmd);
  solve_cmd->add_option("--method", method_arg, "method: " + method_list())->required();
  solve_cmd->add_option("--x0", x0_arg, "starting point, comma list")->required();
  solve_cmd->add_flag("--trace", trace, "print the per-iteration trace");
  solve_cmd->add_option("--output", output_arg, "output format: table, json");
  solve_cmd->add_option("--out", out_path, "write output to a file");

  CLI::App* bench_cmd = app.add_subcommand("bench", "repeated randomized solves");
  add_problem_flags(bench_cmd);
  add_solver_flags(bench_cmd);
  double x0_low = -5.0, x0_high = 5.0;
  bench_cmd->add_option("--methods", methods_arg, "comma list of methods: " + method_list());
  bench_cmd->add_option("--trials", trials, "number of randomized trials");
  bench_cmd->add_option("--seed", seed, "RNG seed");
  bench_cmd->add_option("--x0-low", x0_low, "lower bound of the start components");
  bench_cmd->add_option("--x0-high", x0_high, "upper bound of the start components");
  bench_cmd->add_option("--jobs", jobs, "parallel trial workers");
  bench_cmd->add_flag("--independent-starts", independent_starts,
                      "per-method start streams instead of shared starts");
  bench_cmd->add_option("--output", output_arg, "output format: table, csv, json");
  bench_cmd->add_option("--out", out_path, "write output to a file");

  CLI::App* check_cmd = app.add_subcommand("check", "problem self-checks");
  add_problem_flags(check_cmd);
  check_cmd->add_option("--seed", seed, "RNG seed for the check points");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 1;
  }

  std::string buffer;
  int code = 0;
  try {
    if (solve_cmd->parsed()) {
      const TestProblem tp = build_problem(cf.problem);
      const Index n = tp.problem.var_dim;
      const Method method = parse_method(method_arg);
      const SolveOptions options = build_options(cf, method, n);
      const Vector x0 = parse_number_list(x0_arg, n, "--x0");
      const SolveResult res = solve(tp.problem, x0, options);
      const double sol_norm = options.regularizer
                                  ? (*options.regularizer * res.x_final).norm()
                                  : res.x_final.norm();
      const ExportFormat format = parse_format(output_arg);
      if (format == ExportFormat::Json) {
        nlohmann::json doc;
        doc["problem"] = tp.name;
        doc["method"] = method_arg;
        doc["converged"] = res.converged;
        doc["iterations"] = res.iterations;
        doc["norm"] = sol_norm;
        doc["residual_norm"] = tp.problem.residual_norm(res.x_final);
        doc["x_final"] = std::vector<double>(res.x_final.data(),
                                             res.x_final.data() + res.x_final.size());
        doc["failure_reason"] =
            res.failure_reason ? nlohmann::json(to_string(*res.failure_reason))
                               : nlohmann::json(nullptr);
        if (trace) {
          doc["trace"] = nlohmann::json::array();
          for (const IterationRecord& rec : res.trace)
            doc["trace"].push_back({{"k", rec.k},
                                    {"alpha", rec.alpha},
                                    {"beta", rec.beta},
                                    {"eta", rec.eta},
                                    {"rank", rec.rank},
                                    {"residual", rec.residual_norm},
                                    {"norm", rec.solution_norm},
                                    {"step", rec.step_norm}});
        }
        buffer = doc.dump(2) + "\n";
      } else if (format == ExportFormat::Table) {
        buffer += "problem: " + tp.name + " (m=" + std::to_string(tp.problem.residual_dim) +
                  ", n=" + std::to_string(tp.problem.var_dim) + ")\n";
        buffer += "method: " + method_arg + "\n";
        if (trace) {
          buffer += "    k      alpha       beta        eta  rank    residual        norm        step\n";
          for (const IterationRecord& rec : res.trace) {
            char line[160];
            std::snprintf(line, sizeof(line),
                          "%5lld %10.4g %10.4g %10.4g %5lld %11.5g %11.6g %11.5g\n",
                          static_cast<long long>(rec.k), rec.alpha, rec.beta, rec.eta,
                          static_cast<long long>(rec.rank), rec.residual_norm,
                          rec.solution_norm, rec.step_norm);
            buffer += line;
          }
        }
        buffer += std::string("converged: ") + (res.converged ? "yes" : "no") + " (" +
                  std::to_string(res.iterations) + " iterations)\n";
        if (!res.converged && res.failure_reason)
          buffer += std::string("failure: ") + to_string(*res.failure_reason) + "\n";
        buffer += "norm: " + detail::fmt(sol_norm, "%.6f") + "\n";
        buffer += "residual: " + detail::fmt(tp.problem.residual_norm(res.x_final)) + "\n";
        buffer += "x_final: " + detail::vec_to_string(res.x_final) + "\n";
      } else {
        throw InvalidInputError("solve supports --output table or json");
      }
      code = res.converged ? 0 : 2;
    } else if (bench_cmd->parsed()) {
      const TestProblem tp = build_problem(cf.problem);
      const Index n = tp.problem.var_dim;
      const ExportFormat format = parse_format(output_arg);
      std::vector<BenchRow> rows;
      for (const std::string& name : split_csv(methods_arg)) {
        const Method method = parse_method(name);
        TrialSpec spec;
        spec.problem = tp;
        spec.method = method;
        spec.options = build_options(cf, method, n);
        spec.n_trials = trials;
        spec.seed = seed;
        spec.x0_low = x0_low;
        spec.x0_high = x0_high;
        spec.stream_tag =
            independent_starts ? rng::splitmix64(std::hash<std::string>{}(name)) : 0;
        rows.push_back({name, run_trials(spec, jobs)});
      }
      switch (format) {
        case ExportFormat::Table: buffer = export_table(rows); break;
        case ExportFormat::Csv: buffer = export_csv(rows); break;
        case ExportFormat::Json:
          buffer = export_json(
              detail::spec_to_json(cf, trials, seed, !independent_starts), rows);
          break;
      }
    } else if (check_cmd->parsed()) {
      const TestProblem tp = build_problem(cf.problem);
      bool all_ok = true;
      auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        buffer += std::string(ok ? "PASS" : "FAIL") + " " + name;
        if (!detail.empty()) buffer += " (" + detail + ")";
        buffer += "\n";
        all_ok = all_ok && ok;
      };
      if (tp.problem.jacobian) {
        double worst = 0.0;
        for (Index pt = 0; pt < 20; ++pt) {
          Vector x(tp.problem.var_dim);
          for (Index i = 0; i < x.size(); ++i)
            x(i) = -5.0 + 10.0 * rng::uniform01(seed, static_cast<std::uint64_t>(pt),
                                                static_cast<std::uint64_t>(i), 0xC0FFEE);
          const Matrix ja = tp.problem.jacobian(x);
          const Matrix jf = fd_jacobian(tp.problem, x, mngn2::detail::fd_default_step());
          worst = std::max(worst, (ja - jf).norm() / (1.0 + ja.norm()));
        }
        report("jacobian-vs-finite-differences", worst <= 1e-6,
               "max relative deviation " + detail::fmt(worst, "%.3g"));
      }
      if (tp.known_solution) {
        const double resid = tp.problem.residual_norm(*tp.known_solution);
        report("known-solution-residual", resid <= 1e-8, "residual " + detail::fmt(resid, "%.3g"));
        if (tp.known_norm) {
          const double dev = std::abs(tp.known_solution->norm() - *tp.known_norm);
          report("known-solution-norm", dev <= 1e-4, "deviation " + detail::fmt(dev, "%.3g"));
        }
      }
      code = all_ok ? 0 : 2;
    }
  } catch (const InvalidInputError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) {
      err << "error: cannot open '" << out_path << "' for writing\n";
      return 2;
    }
    f << buffer;
  } else {
    out << buffer;
  }
  return code;
}

inline int run_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, out, err);
}

}  // namespace mngn2::cli
