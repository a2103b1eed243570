#include <catch2/catch.hpp>

#include <cmath>

#include "mngn2/problems.hpp"
#include "mngn2/solver.hpp"
#include "test_support.hpp"

using namespace mngn2;
using testsup::random_matrix;
using testsup::random_vector;

TEST_CASE("min_norm_step on a hand-computable wide system", "[solver]") {
  Matrix j(1, 2);
  j << 1, 0;
  Vector r(1);
  r << 2;
  Vector x(2);
  x << 0, 5;
  const StepDecomposition step = min_norm_step(j, r, x, Vector::Zero(2), 1);
  REQUIRE(step.s_tilde(0) == Approx(-2.0).margin(1e-14));
  REQUIRE(step.s_tilde(1) == Approx(0.0).margin(1e-14));
  REQUIRE(step.t(0) == Approx(0.0).margin(1e-14));
  REQUIRE(step.t(1) == Approx(5.0).margin(1e-14));
  REQUIRE(step.basis.kind == BasisKind::Orthonormal);
}

TEST_CASE("min_norm_step correction vanishes at the model profile", "[solver]") {
  const Matrix j = random_matrix(3, 5, 80);
  const Vector x = random_vector(5, 81);
  const StepDecomposition step = min_norm_step(j, random_vector(3, 82), x, x, 3);
  REQUIRE(step.t.norm() == 0.0);
}

TEST_CASE("min_norm_step matches the pseudoinverse oracle", "[solver]") {
  const Matrix j = random_matrix(8, 10, 83);
  const Vector r = random_vector(8, 84);
  const Vector x = random_vector(10, 85);
  const Vector xbar = random_vector(10, 86);
  const StepDecomposition step = min_norm_step(j, r, x, xbar, 8);

  const Vector oracle = -j.completeOrthogonalDecomposition().pseudoInverse() * r;
  REQUIRE((step.s_tilde - oracle).norm() <= 1e-10 * (1.0 + oracle.norm()));
  REQUIRE((j * step.t).norm() <= 1e-10 * j.norm());
  REQUIRE(std::abs(step.s_tilde.dot(step.t)) <=
          1e-12 * (1.0 + step.s_tilde.norm() * step.t.norm()));
}

TEST_CASE("min_norm_step rejects a rank past a zero singular value", "[solver]") {
  Matrix j(2, 2);
  j << 3, 0, 0, 0;
  REQUIRE_THROWS_AS(min_norm_step(j, Vector::Ones(2), Vector::Ones(2), Vector::Zero(2), 2),
                    InconsistentRankError);
}

TEST_CASE("min_L_norm_step with L = I agrees with the SVD path", "[solver]") {
  const Matrix j = random_matrix(8, 10, 87);
  const Vector r = random_vector(8, 88);
  const Vector x = random_vector(10, 89);
  const Vector xbar = random_vector(10, 90);
  const StepDecomposition svd_step = min_norm_step(j, r, x, xbar, 8);
  const StepDecomposition gsvd_step =
      min_L_norm_step(j, Matrix::Identity(10, 10), r, x, xbar, 8);
  REQUIRE((svd_step.s_tilde - gsvd_step.s_tilde).norm() <=
          1e-8 * (1.0 + svd_step.s_tilde.norm()));
  REQUIRE((svd_step.t - gsvd_step.t).norm() <= 1e-8 * (1.0 + svd_step.t.norm()));
}

TEST_CASE("min_L_norm_step has no correction at full rank", "[solver]") {
  const Matrix j = random_matrix(10, 10, 91);
  const StepDecomposition step = min_L_norm_step(
      j, derivative_operator(2, 10), random_vector(10, 92), random_vector(10, 93),
      Vector::Zero(10), 10);
  REQUIRE(step.t.norm() <= 1e-12);
}

TEST_CASE("min_L_norm_step annihilates the oblique component after a full update",
          "[solver]") {
  const TestProblem tp =
      make_sphere_planes(8, 10, Vector::Ones(10), Vector::Constant(10, 2.0));
  const Matrix l = derivative_operator(2, 10);
  const Vector x = random_vector(10, 94);
  const Matrix jac = tp.problem.jacobian(x);
  const Vector r = tp.problem.residual(x);
  const GsvdFactors f = gsvd(jac, l);
  const Index rank = estimate_rank_gsvd(f);
  const StepDecomposition step = min_L_norm_step(f, r, x, Vector::Zero(10), rank);

  // With alpha = beta = 1 the next iterate is obliquely orthogonal to N(J).
  const Vector x_next = x + step.s_tilde - step.t;
  const Matrix w1hat = f.winv.topRows(10 - rank);
  REQUIRE((w1hat * x_next).norm() <= 1e-8 * (1.0 + x_next.norm()));

  // t does not move the linearized residual.
  REQUIRE((jac * (step.s_tilde - step.t) - jac * step.s_tilde).norm() <=
          1e-10 * jac.norm() * (1.0 + step.t.norm()));

  // The L-seminorm of the corrected point never exceeds the uncorrected one.
  REQUIRE((l * (x + step.s_tilde - step.t)).norm() <=
          (l * (x + step.s_tilde)).norm() + 1e-10);
}

TEST_CASE("ckb relaxation sequences", "[solver]") {
  REQUIRE(ckb_gamma(0, 1) == Approx(0.5));
  REQUIRE(ckb_gamma(0, 2) == Approx(0.5));
  REQUIRE(ckb_gamma(2, 1) == Approx(0.125));
  REQUIRE(ckb_gamma(2, 2) == Approx(0.0625));
  REQUIRE(ckb_gamma(5000, 2) == 0.0);  // underflow is acceptable
}

TEST_CASE("convergence test covers both stop conditions", "[solver]") {
  Vector x(2);
  x << 1, 1;
  REQUIRE(check_convergence(x, x, 1.0, 1e-8));
  REQUIRE(check_convergence(x, 2 * x, 1e-9, 1e-8));
  Vector y(2);
  y << 1.1, 1.0;
  Vector z(2);
  z << 1.0, 1.0;
  REQUIRE_FALSE(check_convergence(y, z, 1.0, 1e-8));
}

TEST_CASE("camp convex-combination form equals the rearranged ckb form", "[solver]") {
  // (1-g)[x + s] + g[x + s - P x] = x + s - g P x, checked on random data.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix a = random_matrix(8, 10, 200 + seed);
    const SvdFactors f = svd(a);
    const Matrix v2 = f.v.rightCols(3);
    const Matrix p = v2 * v2.transpose();
    const Vector x = random_vector(10, 300 + seed);
    const Vector s = random_vector(10, 400 + seed);
    const double gamma = rng::uniform01(seed, 1, 2);
    const Vector camp = (1.0 - gamma) * (x + s) + gamma * (x + s - p * x);
    const Vector ckb = x + s - gamma * (p * x);
    REQUIRE((camp - ckb).norm() <= 1e-12 * (1.0 + ckb.norm()));
  }
}

TEST_CASE("solve reaches the paraboloid minimal-norm solution", "[solver]") {
  const TestProblem tp = make_paraboloid();
  Vector x0(3);
  x0 << 0, 3, 3;
  SolveOptions options;
  options.method = Method::Mngn2AlphaBetaDelta;
  const SolveResult res = solve(tp.problem, x0, options);
  REQUIRE(res.converged);
  REQUIRE(std::abs(res.x_final.norm() - 3.681558) <= 5e-3);
  REQUIRE(res.iterations == static_cast<Index>(res.trace.size()));
}

TEST_CASE("solve stops immediately when already at a solution", "[solver]") {
  Problem prob;
  prob.residual_dim = 2;
  prob.var_dim = 2;
  Matrix a(2, 2);
  a << 2, 1, 0, 1;
  Vector x0(2);
  x0 << 1, 2;
  prob.f = [a](const Vector& x) { return Vector(a * x); };
  prob.jacobian = [a](const Vector&) { return a; };
  prob.b = a * x0;
  const SolveResult res = solve(prob, x0, SolveOptions{});
  REQUIRE(res.converged);
  REQUIRE(res.iterations == 1);
  REQUIRE(res.trace.back().step_norm <= 1e-12);
}

TEST_CASE("solve converges to the rank-deficient sphere-planes solution", "[solver]") {
  Vector c = Vector::Zero(3);
  c(0) = 2.0;
  const TestProblem tp = make_sphere_planes(2, 3, Vector::Ones(3), c);
  Vector x0(3);
  x0 << 0, 3, 3;
  SolveOptions options;
  options.method = Method::Mngn2AlphaBetaDelta;
  const SolveResult res = solve(tp.problem, x0, options);
  REQUIRE(res.converged);
  REQUIRE((res.x_final - Vector::Unit(3, 0)).norm() <= 1e-4);
}

TEST_CASE("beta relaxation engages on the strongly curved circle problem", "[solver]") {
  const TestProblem tp = make_circle2d(0.75, 2.0);
  Vector x0(2);
  x0 << -3.5, 4.25;
  SolveOptions options;
  options.method = Method::Mngn2AlphaBetaDelta;
  const SolveResult res = solve(tp.problem, x0, options);
  REQUIRE(res.converged);
  bool halved = false;
  for (const IterationRecord& rec : res.trace) halved = halved || rec.beta < 1.0;
  REQUIRE(halved);
}

TEST_CASE("solve trace invariants along a run with kept iterates", "[solver]") {
  const TestProblem tp =
      make_ellipsoid_product(8, 10, Vector::Ones(10), Vector::Constant(10, 2.0));
  Vector x0 = 5.0 * random_vector(10, 95);
  SolveOptions options;
  options.method = Method::Mngn2AlphaBetaDelta;
  options.keep_iterates = true;
  const SolveResult res = solve(tp.problem, x0, options);
  REQUIRE(res.converged);
  REQUIRE(res.iterates.size() == res.trace.size() + 1);

  for (std::size_t k = 0; k < res.trace.size(); ++k) {
    const IterationRecord& rec = res.trace[k];
    const Vector& x = res.iterates[k];
    const Vector& x_next = res.iterates[k + 1];

    // alpha and beta are exact powers of two in range.
    int exp = 0;
    REQUIRE(std::frexp(rec.alpha, &exp) == 0.5);
    REQUIRE(rec.alpha <= 1.0);
    REQUIRE(rec.alpha >= std::ldexp(1.0, -30));
    REQUIRE(std::frexp(rec.beta, &exp) == 0.5);
    REQUIRE(rec.beta <= 1.0);
    REQUIRE(rec.beta > 1e-8);

    // Reconstruct the step quantities at x and recheck the accepted
    // inequalities exactly as the solver tested them.
    const Matrix jac = tp.problem.jacobian(x);
    const Vector r = tp.problem.residual(x);
    const SvdFactors f = svd(jac);
    const StepDecomposition step = min_norm_step(f, r, x, Vector::Zero(10), rec.rank);
    const double js_sq = (jac * step.s_tilde).squaredNorm();
    const double lhs = r.squaredNorm() -
                       std::pow(tp.problem.residual_norm(x + rec.alpha * step.s_tilde), 2);
    REQUIRE(lhs >= 0.5 * rec.alpha * js_sq - 1e-12 * (1.0 + r.squaredNorm()));

    // Armijo monotonicity at the Gauss-Newton point.
    REQUIRE(tp.problem.residual_norm(x + rec.alpha * step.s_tilde) <=
            tp.problem.residual_norm(x) + 1e-12);

    // Null-space annihilation of t, relative to the truncated spectrum: the
    // correction lives in the span of the singular directions past the
    // estimated rank, so J t is bounded by the first truncated value.
    const double sigma_tail = rec.rank < f.sigma.size() ? f.sigma(rec.rank) : 0.0;
    REQUIRE((jac * step.t).norm() <=
            sigma_tail * step.t.norm() + 1e-10 * jac.norm() * (1.0 + step.t.norm()));

    // Acceptance soundness of the beta loop (only for non-suppressed exits).
    if (!rec.projection_suppressed) {
      const double rho_tilde =
          tp.problem.residual_norm(x + rec.alpha * step.s_tilde) + kMachineEps;
      REQUIRE(rec.residual_norm <=
              rho_tilde +
                  residual_increase(rho_tilde, rec.eta, DeltaMode::AdaptivePower) +
                  1e-12);
    }

    // Projection annihilation whenever the full correction was accepted.
    if (rec.beta == 1.0) {
      const Matrix v2 = f.v.rightCols(10 - rec.rank);
      REQUIRE((v2.transpose() * x_next).norm() <= 1e-9 * (1.0 + x_next.norm()));
    }
  }

  // The final record satisfies the convergence test.
  const IterationRecord& fin = res.trace.back();
  const Vector& x_prev = res.iterates[res.trace.size() - 1];
  const Vector& x_fin = res.iterates[res.trace.size()];
  const StepDecomposition last_step =
      min_norm_step(tp.problem.jacobian(x_prev), tp.problem.residual(x_prev), x_prev,
                    Vector::Zero(10), fin.rank);
  REQUIRE(check_convergence(x_prev, x_fin, fin.alpha * last_step.s_tilde.norm(), 1e-8));
}

TEST_CASE("solve falls back to finite differences without an analytic Jacobian",
          "[solver]") {
  TestProblem tp = make_paraboloid();
  tp.problem.jacobian = nullptr;
  Vector x0(3);
  x0 << 0, 3, 3;
  const SolveResult res = solve(tp.problem, x0, SolveOptions{});
  REQUIRE(res.converged);
  REQUIRE(std::abs(res.x_final.norm() - 3.681558) <= 5e-3);
}

TEST_CASE("solve validates its inputs", "[solver]") {
  const TestProblem tp = make_paraboloid();
  SolveOptions options;
  REQUIRE_THROWS_AS(solve(tp.problem, Vector::Zero(2), options), InvalidInputError);
  options.stop_tol = 0.0;
  REQUIRE_THROWS_AS(solve(tp.problem, Vector::Zero(3), options), InvalidInputError);
  options.stop_tol = 1e-8;
  options.model_profile = Vector::Zero(4);
  REQUIRE_THROWS_AS(solve(tp.problem, Vector::Zero(3), options), InvalidInputError);
  options.model_profile = Vector();
  options.regularizer = Matrix::Identity(4, 4);
  REQUIRE_THROWS_AS(solve(tp.problem, Vector::Zero(3), options), InvalidInputError);
}

TEST_CASE("fixed-eta relaxation works on the seminorm path", "[solver]") {
  const TestProblem tp =
      make_sphere_planes(8, 10, Vector::Ones(10), Vector::Constant(10, 2.0));
  SolveOptions options;
  options.method = Method::Mngn2AlphaBeta;
  options.fixed_eta = 2.0;
  options.regularizer = derivative_operator(2, 10);
  const SolveResult res = solve(tp.problem, 2.0 * random_vector(10, 97), options);
  REQUIRE(!res.trace.empty());
  if (res.converged)
    REQUIRE((*options.regularizer * res.x_final).norm() <= 1.0);
}

TEST_CASE("mngn2-ab requires a fixed eta", "[solver]") {
  const TestProblem tp = make_paraboloid();
  SolveOptions options;
  options.method = Method::Mngn2AlphaBeta;
  REQUIRE_THROWS_AS(solve(tp.problem, Vector::Zero(3), options), InvalidInputError);
  options.fixed_eta = 2.0;
  const SolveResult res = solve(tp.problem, Vector::Zero(3), options);
  REQUIRE(res.converged);
}

TEST_CASE("solve reports divergence on a blowing-up iteration", "[solver]") {
  // Undamped CKB on the strongly curved circle overshoots and the residual
  // grows without bound on many starts; any failure must be tagged, never
  // thrown.
  const TestProblem tp = make_circle2d(0.75, 2.0);
  SolveOptions options;
  options.method = Method::Ckb2;
  options.max_iter = 200;
  int failures = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Vector x0(2);
    x0 << -5.0 + 10.0 * rng::uniform01(s, 0, 0), -5.0 + 10.0 * rng::uniform01(s, 0, 1);
    const SolveResult res = solve(tp.problem, x0, options);
    if (!res.converged) {
      ++failures;
      REQUIRE(res.failure_reason.has_value());
    }
  }
  SUCCEED("failures tagged: " + std::to_string(failures));
}

TEST_CASE("solve under a seminorm tracks ||L(x - xbar)|| in the trace", "[solver]") {
  const TestProblem tp =
      make_sphere_planes(8, 10, Vector::Ones(10), Vector::Constant(10, 2.0));
  SolveOptions options;
  options.method = Method::Mngn2AlphaBetaDelta;
  options.regularizer = derivative_operator(2, 10);
  options.keep_iterates = true;
  Vector x0 = 2.0 * random_vector(10, 96);
  const SolveResult res = solve(tp.problem, x0, options);
  REQUIRE(!res.trace.empty());
  for (std::size_t k = 0; k < res.trace.size(); ++k) {
    const double expected = (*options.regularizer * res.iterates[k + 1]).norm();
    REQUIRE(res.trace[k].solution_norm == Approx(expected).margin(1e-12));
  }
}
