#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "mngn2/core.hpp"

namespace mngn2 {

/// Full singular value decomposition A = U * diag(sigma) * V^T.
struct SvdFactors {
  Matrix u;      // m x m orthogonal
  Vector sigma;  // min(m,n) values, nonincreasing
  Matrix v;      // n x n orthogonal
};

/// Block sizes of the generalized factorization. r is the structural rank
/// bound min(m,n); the effective rank of J is decided per iteration by the
/// rank module, never here. d = n - p is the size of the identity block of
/// Sigma_J (the directions L does not see).
struct GsvdLayout {
  Index m = 0;
  Index n = 0;
  Index p = 0;
  Index r = 0;
  Index d = 0;
};

/// GSVD of a pair (J, L): J = U * Sigma_J * Winv, L = V * Sigma_L * Winv,
/// with c_i^2 + s_i^2 = 1. c is nondecreasing, s nonincreasing; both have
/// length r - d and describe the middle column block. The leading n - r
/// columns of W span directions where J vanishes structurally (m < n), the
/// trailing d columns are the null space of L.
struct GsvdFactors {
  Matrix u;     // m x m orthogonal
  Matrix v;     // p x p orthogonal
  Matrix winv;  // n x n nonsingular, W^{-1}
  Vector c;     // r - d, nondecreasing, in (0,1)
  Vector s;     // r - d, nonincreasing, in (0,1)
  GsvdLayout layout;

  /// Assembles the m x n Sigma_J from the stored values and block layout.
  Matrix sigma_j() const {
    Matrix sj = Matrix::Zero(layout.m, layout.n);
    const Index off = layout.n - layout.r;
    for (Index i = 0; i < layout.r; ++i)
      sj(i, off + i) = i < layout.r - layout.d ? c(i) : 1.0;
    return sj;
  }

  /// Assembles the p x n Sigma_L.
  Matrix sigma_l() const {
    Matrix sl = Matrix::Zero(layout.p, layout.n);
    const Index head = layout.n - layout.r;
    for (Index i = 0; i < layout.p; ++i)
      sl(i, i) = i < head ? 1.0 : s(i - head);
    return sl;
  }
};

enum class BasisKind { Orthonormal, Oblique };

/// Columns spanning N(J): V_2 on the SVD path (orthonormal), W_1 on the
/// GSVD path (oblique, paired with the row block \hat{W}_1 of W^{-1}).
struct NullSpaceBasis {
  Matrix columns;  // n x k
  BasisKind kind = BasisKind::Orthonormal;
};

inline SvdFactors svd(const Matrix& a) {
  if (a.size() == 0) throw InvalidInputError("svd: empty matrix");
  if (!a.allFinite()) throw InvalidInputError("svd: non-finite entries");
  Eigen::JacobiSVD<Matrix> dec(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (dec.info() != Eigen::Success)
    throw FactorizationError("svd: iteration failed to converge");
  return {dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

namespace detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

// Relative threshold on the smallest singular value of [J; L] below which the
// pair is declared degenerate, i.e. N(J) and N(L) intersect nontrivially.
inline constexpr double kDegenerateRelTol = 1e-10;

// Orthonormal completion of the trailing columns of a matrix whose leading
// `filled` columns are already orthonormal.
inline void complete_orthonormal(Matrix& u, Index filled) {
  const Index m = u.rows();
  if (filled >= u.cols()) return;
  Eigen::HouseholderQR<Matrix> qr(u.leftCols(filled));
  Matrix full = qr.householderQ() * Matrix::Identity(m, m);
  u.rightCols(u.cols() - filled) = full.rightCols(m - filled).leftCols(u.cols() - filled);
}

// Two-sweep Gram-Schmidt pass over the first `count` columns, processed from
// the last (most reliable, largest Sigma_J weight) to the first. Columns that
// cancel entirely are replaced by a fresh direction orthogonal to the rest.
inline void reorthogonalize_columns(Matrix& u, Index count) {
  const Index m = u.rows();
  for (Index j = count - 1; j >= 0; --j) {
    Vector v = u.col(j);
    for (int sweep = 0; sweep < 2; ++sweep)
      for (Index jj = j + 1; jj < count; ++jj) v -= u.col(jj).dot(v) * u.col(jj);
    double nrm = v.norm();
    if (nrm < 0.5) {
      Index best = 0;
      double best_nrm = -1.0;
      for (Index cand = 0; cand < m; ++cand) {
        Vector w = Vector::Unit(m, cand);
        for (Index jj = j + 1; jj < count; ++jj) w -= u.col(jj).dot(w) * u.col(jj);
        if (w.norm() > best_nrm) {
          best_nrm = w.norm();
          best = cand;
        }
      }
      v = Vector::Unit(m, best);
      for (int sweep = 0; sweep < 2; ++sweep)
        for (Index jj = j + 1; jj < count; ++jj) v -= u.col(jj).dot(v) * u.col(jj);
      nrm = v.norm();
    }
    u.col(j) = v / nrm;
  }
}

}  // namespace detail

/// GSVD of (J, L) built from a QR factorization of the stacked matrix [J; L]
/// followed by a CS decomposition of the orthonormal-factor blocks. The
/// small-c block of the CS decomposition is refined through a secondary SVD
/// (with the matching polar correction on the V side), since normalizing
/// near-null columns directly would destroy the orthogonality of U.
inline GsvdFactors gsvd(const Matrix& j, const Matrix& l) {
  const Index m = j.rows(), n = j.cols(), p = l.rows();
  if (m == 0 || n == 0 || p == 0) throw InvalidInputError("gsvd: empty factor");
  if (l.cols() != n) throw InvalidInputError("gsvd: column count mismatch");
  if (p > n) throw InvalidInputError("gsvd: L has more rows than columns, reduce by compact QR first");
  if (m + p < n) throw InvalidInputError("gsvd: m + p < n");
  if (!j.allFinite() || !l.allFinite()) throw InvalidInputError("gsvd: non-finite entries");

  const Index q = std::min(m, n);
  const Index d = n - p;

  Matrix stack(m + p, n);
  stack.topRows(m) = j;
  stack.bottomRows(p) = l;

  {
    Eigen::JacobiSVD<Matrix> probe(stack);
    const Vector& sv = probe.singularValues();
    if (sv(0) <= 0.0 || sv(n - 1) < detail::kDegenerateRelTol * sv(0))
      throw DegeneratePairError("gsvd: N(J) and N(L) intersect (stacked pair is rank deficient)");
  }

  Eigen::HouseholderQR<Matrix> qr(stack);
  const Matrix qthin = qr.householderQ() * Matrix::Identity(m + p, n);
  const Matrix rfac = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  const Matrix q1 = qthin.topRows(m);
  const Matrix q2 = qthin.bottomRows(p);

  // CS step 1: SVD of the L-side block fixes Z and V, with s descending.
  Eigen::JacobiSVD<Matrix> svd2(q2, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix v = svd2.matrixU();  // p x p
  Matrix z = svd2.matrixV();  // n x n
  Vector s_all = Vector::Zero(n);
  s_all.head(p) = svd2.singularValues().cwiseMin(1.0);

  Matrix b = q1 * z;  // columns are exactly orthogonal with norms c_i

  // Split at 1/sqrt(2): columns with s >= 1/sqrt(2) carry small c values.
  Index k = 0;
  while (k < n && s_all(k) >= detail::kInvSqrt2) ++k;

  Vector c_all(n);
  std::vector<Vector> ucand(n);  // empty where the column has no U direction

  if (k > 0) {
    // CS step 2: refine the small-c block. B1 = U1 * diag(cb) * G^T; rotating
    // the Z block by G makes the J side diagonal, and the polar factor of
    // diag(s) * G restores diagonality on the L side.
    const Matrix b1 = b.leftCols(k);
    Eigen::JacobiSVD<Matrix> svdb(b1, Eigen::ComputeThinU | Eigen::ComputeFullV);
    const Index kk = std::min(m, k);
    const Vector cb = svdb.singularValues();  // kk values, descending
    const Matrix g = svdb.matrixV();          // k x k

    Eigen::JacobiSVD<Matrix> pol(s_all.head(k).asDiagonal() * g,
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Matrix vrot = pol.matrixU() * pol.matrixV().transpose();

    const Matrix zb = z.leftCols(k) * g;
    const Matrix vb = v.leftCols(k) * vrot;
    const Matrix ub = svdb.matrixU();  // m x kk

    // Reverse to ascending c; zero-padded columns (k > m) come first.
    for (Index i = 0; i < k; ++i) {
      const Index src = k - 1 - i;
      z.col(i) = zb.col(src);
      v.col(i) = vb.col(src);
      if (src < kk) {
        c_all(i) = std::min(cb(src), 1.0);
        ucand[static_cast<std::size_t>(i)] = ub.col(src);
      } else {
        c_all(i) = 0.0;
      }
      s_all(i) = std::sqrt(1.0 - c_all(i) * c_all(i));
    }
  }
  for (Index i = k; i < n; ++i) {
    c_all(i) = std::sqrt(1.0 - s_all(i) * s_all(i));
    const double nrm = b.col(i).norm();
    if (nrm > 0.0) ucand[static_cast<std::size_t>(i)] = b.col(i) / nrm;
  }

  // Paper ordering: c ascending, s descending. Only the first p columns are
  // sortable (they own a V column); the last d columns are the exact (1, 0)
  // pairs from N(L) and stay in place.
  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index bcol) {
    if (c_all(a) != c_all(bcol)) return c_all(a) < c_all(bcol);
    return s_all(a) > s_all(bcol);
  });

  GsvdFactors out;
  out.layout = {m, n, p, q, d};
  out.u = Matrix::Zero(m, m);
  out.v = Matrix(p, p);
  Matrix zfinal(n, n);
  Vector cfinal(n), sfinal(n);
  for (Index i = 0; i < p; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    zfinal.col(i) = z.col(src);
    out.v.col(i) = v.col(src);
    cfinal(i) = c_all(src);
    sfinal(i) = s_all(src);
    if (i >= n - q) {
      if (ucand[static_cast<std::size_t>(src)].size() == 0)
        throw FactorizationError("gsvd: missing U direction for a retained column");
      out.u.col(i - (n - q)) = ucand[static_cast<std::size_t>(src)];
    }
  }
  for (Index i = p; i < n; ++i) {
    zfinal.col(i) = z.col(i);
    cfinal(i) = 1.0;
    sfinal(i) = 0.0;
    out.u.col(i - (n - q)) = ucand[static_cast<std::size_t>(i)];
  }
  // Near-null directions of the small-c block come out of its SVD arbitrary;
  // they carry ~zero weight in Sigma_J but must not spoil U's orthogonality.
  detail::reorthogonalize_columns(out.u, q);
  detail::complete_orthonormal(out.u, q);

  out.winv = zfinal.transpose() * rfac;
  out.c = cfinal.segment(n - q, q - d);
  out.s = sfinal.segment(n - q, q - d);
  return out;
}

/// Orthogonal projection of v onto span(basis) for an orthonormal basis:
/// computes V2 * (V2^T * v).
inline Vector orthogonal_null_projection(const NullSpaceBasis& basis, const Vector& v) {
  if (basis.kind != BasisKind::Orthonormal)
    throw InvalidInputError("orthogonal_null_projection: basis must be orthonormal");
  if (basis.columns.rows() != v.size())
    throw InvalidInputError("orthogonal_null_projection: dimension mismatch");
  return basis.columns * (basis.columns.transpose() * v);
}

struct ObliqueStep {
  Vector t;        // W_1 * \hat{W}_1 * (x - xbar), the null-space correction
  Vector s_tilde;  // minimal-L-norm Gauss-Newton step
};

/// Solves W^{-1} [t, s_tilde] = [[\hat{W}_1 (x - xbar), 0], [0, y_tail]]
/// through one LU factorization of W^{-1} with two right-hand sides.
inline ObliqueStep oblique_null_projection_and_step(const GsvdFactors& f,
                                                    const Vector& x_minus_xbar,
                                                    const Vector& y_tail, Index rank) {
  const Index n = f.layout.n;
  if (x_minus_xbar.size() != n)
    throw InvalidInputError("oblique step: x - xbar has wrong size");
  if (rank < f.layout.d || rank > f.layout.r)
    throw InvalidInputError("oblique step: rank inconsistent with layout");
  if (y_tail.size() != rank) throw InvalidInputError("oblique step: y_tail has wrong size");

  const Index nullity = n - rank;
  Eigen::PartialPivLU<Matrix> lu(f.winv);
  Matrix rhs = Matrix::Zero(n, 2);
  rhs.col(0).head(nullity) = (f.winv * x_minus_xbar).head(nullity);
  rhs.col(1).tail(rank) = y_tail;
  const Matrix sol = lu.solve(rhs);
  if (!sol.allFinite())
    throw FactorizationError("oblique step: singular W^{-1}");
  return {sol.col(0), sol.col(1)};
}

/// First n - rank columns of W, obtained by LU solves against W^{-1}.
inline NullSpaceBasis oblique_null_basis(const GsvdFactors& f, Index rank) {
  const Index n = f.layout.n;
  const Index nullity = n - rank;
  Eigen::PartialPivLU<Matrix> lu(f.winv);
  Matrix w1 = lu.solve(Matrix::Identity(n, n).leftCols(nullity));
  if (!w1.allFinite()) throw FactorizationError("oblique basis: singular W^{-1}");
  return {std::move(w1), BasisKind::Oblique};
}

}  // namespace mngn2
