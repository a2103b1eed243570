#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "mngn2/core.hpp"
#include "mngn2/linalg.hpp"
#include "mngn2/rank.hpp"
#include "mngn2/relaxation.hpp"

namespace mngn2 {

/// Nonlinear least-squares problem min ||F(x) - b||^2 with m residuals and
/// n unknowns. The Jacobian evaluator is optional; when absent a central
/// finite-difference approximation is used.
struct Problem {
  Index residual_dim = 0;  // m
  Index var_dim = 0;       // n
  std::function<Vector(const Vector&)> f;
  std::function<Matrix(const Vector&)> jacobian;
  Vector b;  // empty means zero

  Vector residual(const Vector& x) const {
    Vector r = f(x);
    if (b.size() > 0) r -= b;
    return r;
  }
  double residual_norm(const Vector& x) const { return residual(x).norm(); }
};

namespace detail {

inline Matrix central_difference_jacobian(const Problem& problem, const Vector& x,
                                          double h_rel) {
  Matrix jac(problem.residual_dim, problem.var_dim);
  Vector xp = x, xm = x;
  for (Index j = 0; j < problem.var_dim; ++j) {
    const double h = h_rel * (1.0 + std::abs(x(j)));
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    jac.col(j) = (problem.f(xp) - problem.f(xm)) / (2.0 * h);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return jac;
}

inline double fd_default_step() {
  return std::cbrt(kMachineEps);
}

}  // namespace detail

enum class Method {
  Mngn,                // alpha by Armijo on s~, beta fixed at 1
  Mngn2Alpha,          // beta_k = alpha_k, Armijo applied to s~ - t
  Mngn2AlphaBeta,      // accept/halve beta loop, delta = eta * rho, fixed eta
  Mngn2AlphaBetaDelta, // accept/halve beta loop, delta = rho^eta, adaptive eta
  Ckb1,                // x + s~ - gamma_k P x, gamma_k = 0.5^(k+1), fixed rank
  Ckb2,                // same with gamma_k = 0.5^(2^k)
  Rckb1,               // CKB1 with per-iteration rank estimation
  Rckb2,               // CKB2 with per-iteration rank estimation
};

struct SolveOptions {
  Method method = Method::Mngn2AlphaBetaDelta;
  double stop_tol = 1e-8;
  Index max_iter = 500;
  RankParams rank_params{};
  Vector model_profile;               // empty means zero
  std::optional<Matrix> regularizer;  // L, p <= n, full row rank
  std::optional<double> fixed_eta;    // required by Mngn2AlphaBeta
  DeltaMode delta_mode = DeltaMode::AdaptivePower;
  LogBase log_base = LogBase::Natural;
  bool keep_iterates = false;  // store x0, x1, ... in the result
};

struct IterationRecord {
  Index k = 0;
  double alpha = 1.0;
  double beta = 1.0;  // gamma_k for the CKB variants
  double eta = 0.0;
  Index rank = 0;
  double residual_norm = 0.0;
  double solution_norm = 0.0;  // ||x - xbar|| or ||L (x - xbar)||
  double step_norm = 0.0;
  bool projection_suppressed = false;  // beta loop hit the floor unaccepted
};

enum class FailureReason { MaxIter, LineSearchExhausted, FactorizationFailure, Diverged };

inline const char* to_string(FailureReason r) {
  switch (r) {
    case FailureReason::MaxIter: return "max-iter";
    case FailureReason::LineSearchExhausted: return "line-search-exhausted";
    case FailureReason::FactorizationFailure: return "factorization-error";
    case FailureReason::Diverged: return "diverged";
  }
  return "unknown";
}

struct SolveResult {
  Vector x_final;
  bool converged = false;
  Index iterations = 0;
  std::vector<IterationRecord> trace;
  std::optional<FailureReason> failure_reason;
  std::vector<Vector> iterates;  // filled only when options.keep_iterates
};

struct StepDecomposition {
  Vector s_tilde;  // minimal-(L-)norm Gauss-Newton step
  Vector t;        // null-space correction
  NullSpaceBasis basis;
};

/// Minimal-norm step from the SVD of J: s~ = -sum_{i<=rank} (g_i / sigma_i) v_i
/// with g = U^T r, and t = V2 V2^T (x - xbar).
inline StepDecomposition min_norm_step(const SvdFactors& f, const Vector& r,
                                       const Vector& x, const Vector& xbar, Index rank) {
  const Index n = f.v.rows();
  if (rank < 0 || rank > f.sigma.size())
    throw InvalidInputError("min_norm_step: rank out of range");
  const Vector g = f.u.transpose() * r;
  Vector s_tilde = Vector::Zero(n);
  for (Index i = 0; i < rank; ++i) {
    if (f.sigma(i) == 0.0)
      throw InconsistentRankError("min_norm_step: zero singular value within rank");
    s_tilde -= (g(i) / f.sigma(i)) * f.v.col(i);
  }
  NullSpaceBasis basis{f.v.rightCols(n - rank), BasisKind::Orthonormal};
  Vector t = basis.columns * (basis.columns.transpose() * (x - xbar));
  return {std::move(s_tilde), std::move(t), std::move(basis)};
}

inline StepDecomposition min_norm_step(const Matrix& j, const Vector& r, const Vector& x,
                                       const Vector& xbar, Index rank) {
  return min_norm_step(svd(j), r, x, xbar, rank);
}

/// Minimal-L-norm step from the GSVD of (J, L). The tail components of the
/// transformed step are -g_i / c or -g_i (identity block), with the index
/// shift g_{i-n+m} when m < n; t and s~ come from the two-right-hand-side
/// solve against W^{-1}.
inline StepDecomposition min_L_norm_step(const GsvdFactors& f, const Vector& r,
                                         const Vector& x, const Vector& xbar, Index rank) {
  const auto& lay = f.layout;
  if (rank < lay.d || rank > lay.r)
    throw InvalidInputError("min_L_norm_step: rank out of range");
  const Vector g = f.u.transpose() * r;
  Vector y_tail(rank);
  for (Index i = lay.n - rank; i < lay.n; ++i) {
    const Index ui = i - (lay.n - lay.r);  // row of Sigma_J, index into g
    const double divisor = i < lay.n - lay.d ? f.c(ui) : 1.0;
    if (divisor == 0.0)
      throw InconsistentRankError("min_L_norm_step: zero c-value within rank");
    y_tail(i - (lay.n - rank)) = -g(ui) / divisor;
  }
  ObliqueStep st = oblique_null_projection_and_step(f, x - xbar, y_tail, rank);
  return {std::move(st.s_tilde), std::move(st.t), oblique_null_basis(f, rank)};
}

inline StepDecomposition min_L_norm_step(const Matrix& j, const Matrix& l, const Vector& r,
                                         const Vector& x, const Vector& xbar, Index rank) {
  return min_L_norm_step(gsvd(j, l), r, x, xbar, rank);
}

/// CKB relaxation sequences: gamma_k = 0.5^(k+1) (variant 1) or 0.5^(2^k)
/// (variant 2, underflowing to zero for large k).
inline double ckb_gamma(Index k, int variant) {
  if (k < 0 || (variant != 1 && variant != 2))
    throw InvalidInputError("ckb_gamma: bad arguments");
  return variant == 1 ? std::pow(0.5, static_cast<double>(k + 1))
                      : std::pow(0.5, std::exp2(static_cast<double>(k)));
}

/// Stop test: relative change of the iterate or a small Gauss-Newton step.
inline bool check_convergence(const Vector& x_prev, const Vector& x_next,
                              double alpha_stilde_norm, double tol) {
  if (tol <= 0.0) throw InvalidInputError("check_convergence: tol must be positive");
  return (x_next - x_prev).norm() < tol * x_next.norm() || alpha_stilde_norm < tol;
}

namespace detail {

inline bool uses_rank_estimation(Method m) {
  return m == Method::Mngn2Alpha || m == Method::Mngn2AlphaBeta ||
         m == Method::Mngn2AlphaBetaDelta || m == Method::Rckb1 || m == Method::Rckb2;
}

inline bool is_ckb(Method m) {
  return m == Method::Ckb1 || m == Method::Ckb2 || m == Method::Rckb1 ||
         m == Method::Rckb2;
}

inline int ckb_variant(Method m) {
  return m == Method::Ckb1 || m == Method::Rckb1 ? 1 : 2;
}

}  // namespace detail

inline SolveResult solve(const Problem& problem, const Vector& x0,
                         const SolveOptions& options) {
  const Index m = problem.residual_dim, n = problem.var_dim;
  if (m <= 0 || n <= 0 || !problem.f) throw InvalidInputError("solve: malformed problem");
  if (x0.size() != n) throw InvalidInputError("solve: x0 has wrong dimension");
  if (options.stop_tol <= 0.0 || options.max_iter < 1)
    throw InvalidInputError("solve: bad stopping parameters");
  if (options.method == Method::Mngn2AlphaBeta && !options.fixed_eta)
    throw InvalidInputError("solve: Mngn2AlphaBeta requires fixed_eta");
  if (options.regularizer &&
      (options.regularizer->cols() != n || options.regularizer->rows() > n))
    throw InvalidInputError("solve: regularizer must be p x n with p <= n");
  if (options.model_profile.size() != 0 && options.model_profile.size() != n)
    throw InvalidInputError("solve: model profile has wrong dimension");

  const Vector xbar =
      options.model_profile.size() == n ? options.model_profile : Vector::Zero(n);
  const bool use_l = options.regularizer.has_value();
  const Method method = options.method;
  const bool ckb = detail::is_ckb(method);
  // CKB projects the iterate itself, not the offset from the model profile.
  const Vector proj_center = ckb ? Vector::Zero(n) : xbar;

  auto jac_at = [&](const Vector& x) {
    return problem.jacobian ? problem.jacobian(x)
                            : detail::central_difference_jacobian(
                                  problem, x, detail::fd_default_step());
  };
  auto rnorm_at = [&](const Vector& x) { return problem.residual_norm(x); };
  auto solution_norm = [&](const Vector& x) {
    return use_l ? (*options.regularizer * (x - xbar)).norm() : (x - xbar).norm();
  };

  const DeltaMode mode = method == Method::Mngn2AlphaBeta
                             ? DeltaMode::FixedMultiplicative
                             : options.delta_mode;
  EtaState eta_state(method == Method::Mngn2AlphaBeta ? *options.fixed_eta : 0.125,
                     options.log_base);
  BetaState beta_state;

  SolveResult result;
  result.x_final = x0;
  Vector x = x0;
  bool last_exhausted = false;
  if (options.keep_iterates) result.iterates.push_back(x);

  for (Index k = 1; k <= options.max_iter; ++k) {
    const Vector rv = problem.residual(x);
    if (!rv.allFinite()) {
      result.failure_reason = FailureReason::Diverged;
      break;
    }
    const double rho = rv.norm();

    const Matrix jac = jac_at(x);
    if (!jac.allFinite()) {
      result.failure_reason = FailureReason::Diverged;
      break;
    }

    StepDecomposition step;
    Index rank = 0;
    try {
      if (use_l) {
        const GsvdFactors f = gsvd(jac, *options.regularizer);
        rank = detail::uses_rank_estimation(method)
                   ? estimate_rank_gsvd(f, options.rank_params)
                   : f.layout.r;
        step = min_L_norm_step(f, rv, x, proj_center, rank);
      } else {
        const SvdFactors f = svd(jac);
        rank = detail::uses_rank_estimation(method)
                   ? estimate_rank_svd(f.sigma, options.rank_params)
                   : f.sigma.size();
        step = min_norm_step(f, rv, x, proj_center, rank);
      }
    } catch (const InconsistentRankError&) {
      result.failure_reason = FailureReason::FactorizationFailure;
      break;
    } catch (const FactorizationError&) {
      result.failure_reason = FailureReason::FactorizationFailure;
      break;
    }

    const Vector& s_tilde = step.s_tilde;
    const Vector& t = step.t;
    if (!s_tilde.allFinite() || !t.allFinite()) {
      result.failure_reason = FailureReason::Diverged;
      break;
    }

    double alpha = 1.0;
    double beta_rec = 1.0;
    double eta_rec = 0.0;
    bool suppressed = false;
    Vector x_next;
    double rho_next = 0.0;

    if (ckb) {
      const double gamma = ckb_gamma(k - 1, detail::ckb_variant(method));
      x_next = x + s_tilde - gamma * t;
      rho_next = rnorm_at(x_next);
      beta_rec = gamma;
    } else {
      const double js_sq = (jac * s_tilde).squaredNorm();
      const Vector dir = method == Method::Mngn2Alpha ? (s_tilde - t).eval() : s_tilde;
      const ArmijoResult ar = armijo_goldstein(rnorm_at, x, dir, js_sq, rho * rho);
      alpha = ar.alpha;
      last_exhausted = ar.exhausted;

      switch (method) {
        case Method::Mngn:
          x_next = x + alpha * s_tilde - t;
          rho_next = rnorm_at(x_next);
          break;
        case Method::Mngn2Alpha:
          x_next = x + alpha * (s_tilde - t);
          rho_next = rnorm_at(x_next);
          beta_rec = alpha;
          break;
        case Method::Mngn2AlphaBeta:
        case Method::Mngn2AlphaBetaDelta: {
          const Vector x_gn = x + alpha * s_tilde;
          if (method == Method::Mngn2AlphaBetaDelta)
            eta_state = update_eta(std::move(eta_state), static_cast<std::size_t>(k - 1));
          const double eta_now = eta_state.eta();
          auto delta = [&](double rho_t) { return residual_increase(rho_t, eta_now, mode); };
          BetaOutcome out = select_beta(beta_state, x_gn, t, rnorm_at, delta);
          beta_state = out.state;
          x_next = std::move(out.x_next);
          rho_next = out.rho_next;
          beta_rec = beta_state.beta;
          eta_rec = eta_now;
          suppressed = out.suppressed;
          // The regression window tracks the residuals of the accepted
          // iterates. Feeding it the Gauss-Newton point residuals instead
          // makes the slope read their much deeper dips, halving eta during
          // every plunge and opening the acceptance wide enough for the
          // projection to throw near-converged iterates back out.
          if (method == Method::Mngn2AlphaBetaDelta) eta_state.push_residual(rho_next);
          break;
        }
        default:
          break;
      }
    }

    if (!x_next.allFinite() || !std::isfinite(rho_next)) {
      result.failure_reason = FailureReason::Diverged;
      break;
    }

    IterationRecord rec;
    rec.k = k;
    rec.alpha = alpha;
    rec.beta = beta_rec;
    rec.eta = eta_rec;
    rec.rank = rank;
    rec.residual_norm = rho_next;
    rec.solution_norm = solution_norm(x_next);
    rec.step_norm = (x_next - x).norm();
    rec.projection_suppressed = suppressed;
    result.trace.push_back(rec);

    const bool converged =
        check_convergence(x, x_next, alpha * s_tilde.norm(), options.stop_tol);
    x = std::move(x_next);
    if (options.keep_iterates) result.iterates.push_back(x);
    if (converged) {
      result.converged = true;
      break;
    }
  }

  result.x_final = x;
  result.iterations = static_cast<Index>(result.trace.size());
  if (!result.converged && !result.failure_reason)
    result.failure_reason = last_exhausted ? FailureReason::LineSearchExhausted
                                           : FailureReason::MaxIter;
  return result;
}

}  // namespace mngn2
