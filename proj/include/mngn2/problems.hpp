#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "mngn2/core.hpp"
#include "mngn2/solver.hpp"

namespace mngn2 {

/// A built-in benchmark problem with analytic Jacobian and, where the
/// geometry admits one, the closed-form minimal-norm solution.
struct TestProblem {
  Problem problem;
  std::string name;
  std::optional<Vector> known_solution;
  std::optional<double> known_norm;
};

enum class RegularizerKind { Identity, FirstDifference, SecondDifference };

/// Discrete derivative operators: D1 is (n-1) x n with stencil (1, -1),
/// D2 is (n-2) x n with stencil (1, -2, 1).
inline Matrix derivative_operator(int order, Index n) {
  if (order != 1 && order != 2) throw InvalidInputError("derivative_operator: order must be 1 or 2");
  if (n <= order) throw InvalidInputError("derivative_operator: n too small");
  Matrix d = Matrix::Zero(n - order, n);
  for (Index i = 0; i < n - order; ++i) {
    if (order == 1) {
      d(i, i) = 1.0;
      d(i, i + 1) = -1.0;
    } else {
      d(i, i) = 1.0;
      d(i, i + 1) = -2.0;
      d(i, i + 2) = 1.0;
    }
  }
  return d;
}

/// Reduces a regularizer with more rows than columns to its n x n triangular
/// factor: ||R x|| = ||L x|| for all x. Inputs with p <= n pass through.
inline Matrix compact_qr_reduce(const Matrix& l) {
  const Index n = l.cols();
  if (l.rows() <= n) return l;
  Eigen::HouseholderQR<Matrix> qr(l);
  return qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
}

/// Central-difference Jacobian with per-coordinate step h * (1 + |x_i|).
inline Matrix fd_jacobian(const Problem& problem, const Vector& x, double h) {
  if (h <= 0.0) throw InvalidInputError("fd_jacobian: h must be positive");
  Matrix jac = detail::central_difference_jacobian(problem, x, h);
  if (!jac.allFinite()) throw FactorizationError("fd_jacobian: non-finite evaluation");
  return jac;
}

/// Inverse kinematics of a redundant parallel robot, F: R^4 -> R^2 with
/// (X, Y) = (3, 3), A = 2, H = 10 and data vector b = 0.
inline TestProblem make_robot() {
  constexpr double X = 3.0, Y = 3.0, A = 2.0, H = 10.0;
  Problem prob;
  prob.residual_dim = 2;
  prob.var_dim = 4;
  prob.f = [](const Vector& x) {
    Vector fx(2);
    const double dx1 = X - A * std::cos(x(0)), dy1 = Y - A * std::sin(x(0));
    const double dx2 = X - A * std::cos(x(2)) - H, dy2 = Y - A * std::sin(x(2));
    fx(0) = dx1 * dx1 + dy1 * dy1 - x(1) * x(1);
    fx(1) = dx2 * dx2 + dy2 * dy2 - x(3) * x(3);
    return fx;
  };
  prob.jacobian = [](const Vector& x) {
    Matrix jac = Matrix::Zero(2, 4);
    jac(0, 0) = 2 * A * (X - A * std::cos(x(0))) * std::sin(x(0)) -
                2 * A * (Y - A * std::sin(x(0))) * std::cos(x(0));
    jac(0, 1) = -2 * x(1);
    jac(1, 2) = 2 * A * (X - A * std::cos(x(2)) - H) * std::sin(x(2)) -
                2 * A * (Y - A * std::sin(x(2))) * std::cos(x(2));
    jac(1, 3) = -2 * x(3);
    return jac;
  };
  return {std::move(prob), "robot", std::nullopt, std::nullopt};
}

/// Elliptic paraboloid F(x) = x3 - (x1-1)^2 - 2 (x2-2)^2 - 3 with vertex
/// (1, 2, 3); the minimal-norm zero has norm 3.681558.
inline TestProblem make_paraboloid() {
  Problem prob;
  prob.residual_dim = 1;
  prob.var_dim = 3;
  prob.f = [](const Vector& x) {
    Vector fx(1);
    fx(0) = x(2) - (x(0) - 1) * (x(0) - 1) - 2 * (x(1) - 2) * (x(1) - 2) - 3;
    return fx;
  };
  prob.jacobian = [](const Vector& x) {
    Matrix jac(1, 3);
    jac(0, 0) = -2 * (x(0) - 1);
    jac(0, 1) = -4 * (x(1) - 2);
    jac(0, 2) = 1.0;
    return jac;
  };
  // Minimal-norm point from the stationarity system x = mu * grad(g), which
  // reduces to the contraction mu = 3 + (1+2mu)^-2 + 8 (1+4mu)^-2.
  double mu = 3.0;
  for (int i = 0; i < 64; ++i)
    mu = 3.0 + 1.0 / ((1 + 2 * mu) * (1 + 2 * mu)) + 8.0 / ((1 + 4 * mu) * (1 + 4 * mu));
  Vector xdag(3);
  xdag << 2 * mu / (1 + 2 * mu), 8 * mu / (1 + 4 * mu), mu;
  return {std::move(prob), "paraboloid", xdag, 3.681558};
}

/// Circle residual F(x) = delta^2 [(x1-gamma)^2 + (x2-gamma)^2] - 1; the
/// solution locus is the circle of radius 1/delta centered at (gamma, gamma).
/// Strong curvature (large delta) defeats the undamped projection step.
inline TestProblem make_circle2d(double delta, double gamma) {
  if (delta == 0.0) throw InvalidInputError("make_circle2d: delta must be nonzero");
  Problem prob;
  prob.residual_dim = 1;
  prob.var_dim = 2;
  prob.f = [delta, gamma](const Vector& x) {
    Vector fx(1);
    const double u = x(0) - gamma, v = x(1) - gamma;
    fx(0) = delta * delta * (u * u + v * v) - 1.0;
    return fx;
  };
  prob.jacobian = [delta, gamma](const Vector& x) {
    Matrix jac(1, 2);
    jac(0, 0) = 2 * delta * delta * (x(0) - gamma);
    jac(0, 1) = 2 * delta * delta * (x(1) - gamma);
    return jac;
  };
  return {std::move(prob), "circle2d", std::nullopt, std::nullopt};
}

namespace detail {

inline double ellipsoid_s(const Vector& x, const Vector& a, const Vector& c) {
  double s = -1.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double u = (x(j) - c(j)) / a(j);
    s += u * u;
  }
  return s;
}

inline void require_ellipsoid_params(Index m, Index n, const Vector& a, const Vector& c) {
  if (m < 1 || m > n) throw InvalidInputError("ellipsoid family: need 1 <= m <= n");
  if (a.size() != n || c.size() != n)
    throw InvalidInputError("ellipsoid family: a and c must have length n");
  if ((a.array() == 0.0).any())
    throw InvalidInputError("ellipsoid family: semiaxes must be nonzero");
}

inline bool is_ones(const Vector& v) { return (v.array() == 1.0).all(); }

inline bool is_two_ones(const Vector& v) { return (v.array() == 2.0).all(); }

inline bool is_first_two(const Vector& v) {
  return v(0) == 2.0 && (v.size() == 1 || (v.tail(v.size() - 1).array() == 0.0).all());
}

}  // namespace detail

/// F_i(x) = 1/2 S(x) (x_i^2 + 1) with the n-ellipsoid S(x); the Jacobian is
/// S D_{m,n}(x) + y z^T and drops to rank 1 on the solution locus S(x) = 0.
inline TestProblem make_ellipsoid_product(Index m, Index n, const Vector& a, const Vector& c) {
  detail::require_ellipsoid_params(m, n, a, c);
  Problem prob;
  prob.residual_dim = m;
  prob.var_dim = n;
  prob.f = [m, a, c](const Vector& x) {
    const double s = detail::ellipsoid_s(x, a, c);
    Vector fx(m);
    for (Index i = 0; i < m; ++i) fx(i) = 0.5 * s * (x(i) * x(i) + 1.0);
    return fx;
  };
  prob.jacobian = [m, n, a, c](const Vector& x) {
    const double s = detail::ellipsoid_s(x, a, c);
    Vector y(m), z(n);
    for (Index i = 0; i < m; ++i) y(i) = x(i) * x(i) + 1.0;
    for (Index j = 0; j < n; ++j) z(j) = (x(j) - c(j)) / (a(j) * a(j));
    Matrix jac = y * z.transpose();
    for (Index i = 0; i < m; ++i) jac(i, i) += s * x(i);
    return jac;
  };
  std::optional<Vector> known;
  std::optional<double> norm;
  if (detail::is_ones(a) && detail::is_two_ones(c)) {
    const double xi = 2.0 - std::sqrt(double(n)) / double(n);
    known = Vector::Constant(n, xi);
    norm = 2.0 * std::sqrt(double(n)) - 1.0;
  } else if (detail::is_ones(a) && detail::is_first_two(c)) {
    known = Vector::Unit(n, 0);
    norm = 1.0;
  }
  return {std::move(prob), "ellipsoid-product", known, norm};
}

/// F_i(x) = S(x) (x_i - c_i); the Jacobian S I_{m x n} + 2 y z^T is diagonal
/// plus rank one, with the single singular value 2 ||y|| ||z|| when S(x) = 0.
inline TestProblem make_sphere_planes(Index m, Index n, const Vector& a, const Vector& c) {
  detail::require_ellipsoid_params(m, n, a, c);
  Problem prob;
  prob.residual_dim = m;
  prob.var_dim = n;
  prob.f = [m, a, c](const Vector& x) {
    const double s = detail::ellipsoid_s(x, a, c);
    Vector fx(m);
    for (Index i = 0; i < m; ++i) fx(i) = s * (x(i) - c(i));
    return fx;
  };
  prob.jacobian = [m, n, a, c](const Vector& x) {
    const double s = detail::ellipsoid_s(x, a, c);
    Vector y(m), z(n);
    for (Index i = 0; i < m; ++i) y(i) = x(i) - c(i);
    for (Index j = 0; j < n; ++j) z(j) = (x(j) - c(j)) / (a(j) * a(j));
    Matrix jac = 2.0 * y * z.transpose();
    for (Index i = 0; i < m; ++i) jac(i, i) += s;
    return jac;
  };
  std::optional<Vector> known;
  std::optional<double> norm;
  if (detail::is_ones(a) && detail::is_two_ones(c)) {
    // The minimizer switches between the plane intersection and the sphere
    // at m = n - sqrt(n) + 1/4.
    const double nd = static_cast<double>(n);
    if (static_cast<double>(m) < nd - std::sqrt(nd) + 0.25) {
      Vector x = Vector::Zero(n);
      x.head(m).setConstant(2.0);
      known = x;
      norm = 2.0 * std::sqrt(static_cast<double>(m));
    } else {
      known = Vector::Constant(n, 2.0 - std::sqrt(nd) / nd);
      norm = 2.0 * std::sqrt(nd) - 1.0;
    }
  } else if (detail::is_ones(a) && detail::is_first_two(c)) {
    known = Vector::Unit(n, 0);
    norm = 1.0;
  }
  return {std::move(prob), "sphere-planes", known, norm};
}

/// F_1 = S(x), F_i = x_{i-1} (x_i - c_i): bidiagonal-plus-first-row Jacobian;
/// rank deficient at the minimal-norm solution when c = (2, 0, ..., 0).
inline TestProblem make_chain(Index m, Index n, const Vector& a, const Vector& c) {
  if (m < 2) throw InvalidInputError("make_chain: need m >= 2");
  detail::require_ellipsoid_params(m, n, a, c);
  Problem prob;
  prob.residual_dim = m;
  prob.var_dim = n;
  prob.f = [m, a, c](const Vector& x) {
    Vector fx(m);
    fx(0) = detail::ellipsoid_s(x, a, c);
    for (Index i = 1; i < m; ++i) fx(i) = x(i - 1) * (x(i) - c(i));
    return fx;
  };
  prob.jacobian = [m, n, a, c](const Vector& x) {
    Matrix jac = Matrix::Zero(m, n);
    for (Index j = 0; j < n; ++j) jac(0, j) = 2.0 * (x(j) - c(j)) / (a(j) * a(j));
    for (Index i = 1; i < m; ++i) {
      jac(i, i - 1) = x(i) - c(i);
      jac(i, i) = x(i - 1);
    }
    return jac;
  };
  std::optional<Vector> known;
  std::optional<double> norm;
  if (detail::is_ones(a) && detail::is_two_ones(c)) {
    const double xi = 2.0 - 1.0 / std::sqrt(static_cast<double>(n - m + 1));
    Vector x(n);
    x(0) = xi;
    x.segment(1, m - 1).setConstant(2.0);
    x.tail(n - m).setConstant(xi);
    known = x;
    norm = x.norm();
  } else if (detail::is_ones(a) && detail::is_first_two(c)) {
    known = Vector::Unit(n, 0);
    norm = 1.0;
  }
  return {std::move(prob), "chain", known, norm};
}

}  // namespace mngn2
