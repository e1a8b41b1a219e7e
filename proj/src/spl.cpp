#include "dspl/spl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dspl/tensor.hpp"

namespace dspl {

void SplState::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("model age lambda must be > 0");
  if (!(vartheta > 0.0 && vartheta < 1.0)) throw ConfigError("mature age vartheta must be in (0,1)");
  if (!(order > 1.0 && order <= 8.0))
    throw ConfigError("polynomial order t must be in (1, 8], got " + std::to_string(order));
  if (!(omega > 0.0 && omega < 1.0)) throw ConfigError("age updating rate omega must be in (0,1)");
}

double regularizer_value(double u, const SplState& s) {
  return s.lambda * (std::pow(u, s.order) / s.order - u / s.vartheta);
}

double solve_weight(double loss, const SplState& s) {
  if (loss < s.full_weight_threshold()) return 1.0;
  if (loss > s.zero_weight_threshold()) return 0.0;
  // (lambda/vartheta - R)/lambda rather than 1/vartheta - R/lambda: exactly 0 at
  // the upper threshold, where the root below has unbounded slope.
  const double base = (s.zero_weight_threshold() - loss) / s.lambda;
  if (base <= 0.0) return 0.0;
  const double u = std::pow(base, 1.0 / (s.order - 1.0));
  return u > 1.0 ? 1.0 : u;
}

void solve_weights(std::span<const double> losses, const SplState& state,
                   std::span<double> weights) {
  if (losses.size() != weights.size())
    throw ContractError("solve_weights: losses and weights differ in length");
  for (std::size_t i = 0; i < losses.size(); ++i) weights[i] = solve_weight(losses[i], state);
}

double oracle_weight(double loss, const SplState& state, int steps) {
  // log(k / steps) is shared by every call with the same grid; u^t = exp(t log u)
  // is several times cheaper than pow and agrees to a few ulp.
  thread_local std::vector<double> log_grid;
  if (log_grid.size() != static_cast<std::size_t>(steps) + 1) {
    log_grid.assign(static_cast<std::size_t>(steps) + 1, 0.0);
    for (int k = 1; k <= steps; ++k) log_grid[k] = std::log(static_cast<double>(k) / steps);
  }
  const double t = state.order;
  double best_u = 0.0;
  double best = 0.0;  // objective at u = 0
  for (int k = 1; k <= steps; ++k) {
    const double u = static_cast<double>(k) / steps;
    const double obj = u * loss + state.lambda * (std::exp(t * log_grid[k]) / t - u / state.vartheta);
    if (obj < best) {
      best = obj;
      best_u = u;
    }
  }
  return best_u;
}

ReferenceWeights reference_schemes(double loss, double lambda) {
  return {loss < lambda ? 1.0 : 0.0, std::max(0.0, 1.0 - loss / lambda)};
}

SplState update_age(const SplState& state) {
  SplState next = state;
  next.lambda = state.lambda / state.omega;
  return next;
}

}  // namespace dspl
