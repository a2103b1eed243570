#pragma once

#include <cmath>
#include <limits>

#include "mngn2/core.hpp"
#include "mngn2/linalg.hpp"

namespace mngn2 {

/// Gap-heuristic parameters: a jump sigma_i / sigma_{i+1} > gap_ratio marks a
/// candidate rank boundary, provided the retained value exceeds value_floor.
struct RankParams {
  double gap_ratio = 1e2;
  double value_floor = 1e-8;
};

/// Numerical rank of a spectrum sorted nonincreasing. Returns the full length
/// q when no qualifying gap exists (ratio above gap_ratio with the retained
/// value above the floor); otherwise cuts at the first qualifying gap, the
/// one separating the large values from everything below. On multi-scale
/// spectra this keeps the rank smallest, so the small trailing values that
/// would amplify the Gauss-Newton step are never kept: cutting at the widest
/// gap instead traps the iteration once a cluster of near-zero values opens
/// an even wider gap against the numerically-zero tail. A zero trailing
/// value makes the ratio +inf.
inline Index estimate_rank_svd(const Vector& sigma, const RankParams& params = {}) {
  const Index q = sigma.size();
  if (q == 0) throw InvalidInputError("estimate_rank_svd: empty spectrum");
  for (Index i = 0; i + 1 < q; ++i) {
    if (!(sigma(i) > params.value_floor)) continue;
    const double ratio = sigma(i + 1) == 0.0 ? std::numeric_limits<double>::infinity()
                                             : sigma(i) / sigma(i + 1);
    if (ratio > params.gap_ratio) return i + 1;
  }
  return q;
}

/// Mirror of estimate_rank_svd for the GSVD c-values (sorted nondecreasing):
/// the gap separates small leading c's from large trailing ones, scanning
/// from the large end, and the d identity-block columns of Sigma_J always
/// count toward the rank.
inline Index estimate_rank_gsvd(const Vector& c, Index d, const RankParams& params = {}) {
  const Index len = c.size();
  if (len == 0) {
    if (d == 0) throw InvalidInputError("estimate_rank_gsvd: empty c-block");
    return d;
  }
  for (Index i = len - 2; i >= 0; --i) {
    if (!(c(i + 1) > params.value_floor)) continue;
    const double ratio = c(i) == 0.0 ? std::numeric_limits<double>::infinity()
                                     : c(i + 1) / c(i);
    if (ratio > params.gap_ratio) return (len - (i + 1)) + d;
  }
  return len + d;
}

inline Index estimate_rank_gsvd(const GsvdFactors& f, const RankParams& params = {}) {
  return estimate_rank_gsvd(f.c, f.layout.d, params);
}

}  // namespace mngn2
