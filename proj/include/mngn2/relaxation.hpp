#pragma once

#include <cmath>
#include <deque>
#include <utility>

#include "mngn2/core.hpp"

namespace mngn2 {

/// Residual-increase models for the projection acceptance test:
/// delta = eta * rho (fixed multiplicative) or delta = rho^eta (adaptive power).
enum class DeltaMode { FixedMultiplicative, AdaptivePower };

enum class LogBase { Natural, Base10 };

inline double residual_increase(double rho, double eta, DeltaMode mode) {
  return mode == DeltaMode::FixedMultiplicative ? eta * rho : std::pow(rho, eta);
}

struct ArmijoResult {
  double alpha = 1.0;
  bool exhausted = false;  // no i <= 30 satisfied the decrease condition
};

/// Armijo-Goldstein step length: the largest alpha = 2^-i, i = 0,1,...,30,
/// with ||r_k||^2 - ||r(x + alpha s)||^2 >= 1/2 alpha ||J_k s~||^2. When the
/// scan is exhausted the smallest alpha is returned flagged; the solver's
/// small-step stop test then governs.
template <typename ResidualNormAt>
ArmijoResult armijo_goldstein(ResidualNormAt&& residual_norm_at, const Vector& x,
                              const Vector& s, double js_norm_sq, double r_norm_sq) {
  for (int i = 0; i <= 30; ++i) {
    const double alpha = std::ldexp(1.0, -i);
    const double rn = residual_norm_at(x + alpha * s);
    if (r_norm_sq - rn * rn >= 0.5 * alpha * js_norm_sq) return {alpha, false};
  }
  return {std::ldexp(1.0, -30), true};
}

/// State of the adaptive residual-increase tolerance. eta starts at 1/8 and
/// is doubled when the last k_res Gauss-Newton residuals stagnate (regression
/// slope M > -1e-2) and halved when they decay steeply (M < -1/2).
class EtaState {
 public:
  static constexpr int kResWindow = 5;

  explicit EtaState(double eta = 0.125, LogBase base = LogBase::Natural)
      : eta_(eta), base_(base) {}

  double eta() const { return eta_; }
  double slope_min() const { return slope_min_; }
  double slope_max() const { return slope_max_; }
  const std::deque<double>& history() const { return history_; }

  /// Appends a Gauss-Newton point residual norm, keeping the last k_res.
  void push_residual(double theta) {
    history_.push_back(theta);
    if (history_.size() > kResWindow) history_.pop_front();
  }

  /// Least-squares slope of (j, log theta_j), j = 1..k_res, through the
  /// precomputed 2x2 normal equations. Zero residuals are floored at the
  /// machine epsilon before taking the logarithm.
  double regression_slope() const {
    // For abscissae 1..w: sum_j = w(w+1)/2, sum_j2 = w(w+1)(2w+1)/6.
    constexpr double w = kResWindow;
    constexpr double sum_j = w * (w + 1) / 2;
    constexpr double sum_j2 = w * (w + 1) * (2 * w + 1) / 6;
    constexpr double det = w * sum_j2 - sum_j * sum_j;
    double sum_y = 0.0, sum_jy = 0.0;
    double j = 1.0;
    for (double theta : history_) {
      const double y = logval(theta > 0.0 ? theta : kMachineEps);
      sum_y += y;
      sum_jy += j * y;
      j += 1.0;
    }
    return (w * sum_jy - sum_j * sum_y) / det;
  }

  void apply_slope(double m) {
    if (m > slope_min_)
      eta_ *= 2.0;
    else if (m < slope_max_)
      eta_ *= 0.5;
  }

 private:
  double logval(double x) const {
    return base_ == LogBase::Natural ? std::log(x) : std::log10(x);
  }

  double eta_;
  double slope_min_ = -1e-2;
  double slope_max_ = -0.5;
  std::deque<double> history_;
  LogBase base_;
};

/// One pass of the adaptive eta update: a no-op until k_res residuals from
/// previous iterations are available.
inline EtaState update_eta(EtaState state, std::size_t k) {
  if (k >= EtaState::kResWindow && state.history().size() >= EtaState::kResWindow)
    state.apply_slope(state.regression_slope());
  return state;
}

/// Projection relaxation parameter: always an exact power of two in
/// (1e-8, 1]; starts at 1, halved on rejection, tentatively doubled once per
/// iteration while below 1.
struct BetaState {
  double beta = 1.0;
};

struct BetaOutcome {
  BetaState state;
  Vector x_next;
  double rho_next = 0.0;
  bool suppressed = false;  // beta hit the floor with the test still failing
};

/// Accept/halve loop for the projected iterate x~ - beta t. On entry a beta
/// below 1 is doubled; then beta is halved until
/// ||r(x_next)|| <= rho~ + delta(rho~), where rho~ = ||r(x~)|| + eps_M.
template <typename ResidualNormAt, typename Delta>
BetaOutcome select_beta(BetaState state, const Vector& x_tilde, const Vector& t,
                        ResidualNormAt&& residual_norm_at, Delta&& delta) {
  if (state.beta < 1.0) state.beta *= 2.0;
  const double rho_tilde = residual_norm_at(x_tilde) + kMachineEps;
  const double allowance = delta(rho_tilde);
  Vector x_next = x_tilde - state.beta * t;
  double rho_next = residual_norm_at(x_next);
  bool suppressed = false;
  while (rho_next > rho_tilde + allowance) {
    if (state.beta * 0.5 <= 1e-8) {
      suppressed = true;
      break;
    }
    state.beta *= 0.5;
    x_next = x_tilde - state.beta * t;
    rho_next = residual_norm_at(x_next);
  }
  return {state, std::move(x_next), rho_next, suppressed};
}

}  // namespace mngn2
