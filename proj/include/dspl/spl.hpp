#ifndef DSPL_SPL_HPP_
#define DSPL_SPL_HPP_

#include <span>
#include <vector>

namespace dspl {

/// Self-paced learning pace state.
struct SplState {
  double lambda = 0.6;    // model age
  double vartheta = 0.75; // mature age, in (0, 1)
  double order = 2.0;     // polynomial order t > 1
  double omega = 0.9;     // age updating rate, in (0, 1)

  void validate() const;

  /// Below this loss a sample gets full weight.
  double full_weight_threshold() const { return lambda * (1.0 / vartheta - 1.0); }
  /// Above this loss a sample gets zero weight.
  double zero_weight_threshold() const { return lambda / vartheta; }
};

/// Per-sample soft polynomial regularizer lambda (u^t / t - u / vartheta).
double regularizer_value(double u, const SplState& state);

/// Closed-form minimizer of u R + regularizer_value(u) over u in [0, 1].
double solve_weight(double loss, const SplState& state);

void solve_weights(std::span<const double> losses, const SplState& state,
                   std::span<double> weights);

/// Brute-force minimizer over a uniform grid on [0, 1] with `steps` intervals.
/// Test oracle for solve_weight.
double oracle_weight(double loss, const SplState& state, int steps = 100000);

struct ReferenceWeights {
  double hard = 0.0;         // 1 below lambda, 0 above
  double soft_linear = 0.0;  // max(0, 1 - R / lambda)
};

ReferenceWeights reference_schemes(double loss, double lambda);

/// lambda <- lambda / omega.
SplState update_age(const SplState& state);

}  // namespace dspl

#endif  // DSPL_SPL_HPP_
