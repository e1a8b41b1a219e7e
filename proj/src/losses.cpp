#include "dspl/losses.hpp"

#include <cmath>

#include "dspl/tensor.hpp"

namespace dspl {

void LossParams::validate() const {
  if (!(margin > 0.0)) throw ConfigError("margin M must be > 0");
  if (!(gamma > 0.0)) throw ConfigError("sharpness gamma must be > 0");
  if (!(zeta >= 0.0)) throw ConfigError("symmetric weight zeta must be >= 0");
  if (!(xi >= 0.0)) throw ConfigError("parameter weight xi must be >= 0");
}

namespace {

void check_lengths(std::span<const double> a, std::span<const double> p,
                   std::span<const double> n) {
  if (a.size() != p.size() || a.size() != n.size())
    throw ContractError("triplet embeddings differ in length: " + std::to_string(a.size()) +
                        ", " + std::to_string(p.size()) + ", " + std::to_string(n.size()));
}

}  // namespace

RelativeTerm relative_term(std::span<const double> anchor, std::span<const double> positive,
                           std::span<const double> negative, double margin) {
  check_lengths(anchor, positive, negative);
  RelativeTerm r;
  r.argument = margin + squared_distance(anchor, positive) - squared_distance(anchor, negative);
  r.active = r.argument > 0.0;
  r.value = r.active ? r.argument : 0.0;
  return r;
}

double softplus(double z, double gamma) {
  const double gz = gamma * z;
  if (gz > 30.0) return z + std::log1p(std::exp(-gz)) / gamma;
  return std::log1p(std::exp(gz)) / gamma;
}

double softplus_slope(double z, double gamma) {
  const double gz = gamma * z;
  if (gz >= 0.0) return 1.0 / (1.0 + std::exp(-gz));
  const double e = std::exp(gz);
  return e / (1.0 + e);
}

SymmetricTerm symmetric_term(std::span<const double> anchor, std::span<const double> positive,
                             std::span<const double> negative, double gamma) {
  check_lengths(anchor, positive, negative);
  if (!(gamma > 0.0)) throw ContractError("symmetric_term: gamma must be > 0");
  SymmetricTerm s;
  s.deviation = squared_distance(positive, negative) - squared_distance(anchor, negative);
  s.abs_deviation = std::abs(s.deviation);
  s.value = softplus(s.abs_deviation, gamma);
  s.strength = softplus_slope(s.abs_deviation, gamma);
  return s;
}

LossBreakdown evaluate_triplet(std::span<const double> anchor, std::span<const double> positive,
                               std::span<const double> negative, const LossParams& params) {
  return {relative_term(anchor, positive, negative, params.margin),
          symmetric_term(anchor, positive, negative, params.gamma)};
}

void accumulate_triplet_grad(std::span<const double> a, std::span<const double> p,
                             std::span<const double> n, const LossBreakdown& loss,
                             const LossParams& params, double weight, GradientMode mode,
                             std::span<double> ga, std::span<double> gp, std::span<double> gn) {
  check_lengths(a, p, n);
  if (ga.size() != a.size() || gp.size() != a.size() || gn.size() != a.size())
    throw ContractError("gradient buffers do not match the embedding length");

  // dT/da = 2(n - p), dT/dp = -2(a - p), dT/dn = 2(a - n)
  const double wr = loss.relative.active ? weight : 0.0;
  // dD/da = -2(a - n), dD/dp = 2(p - n), dD/dn = 2(a - p); sign(0) = 0
  const double sgn = loss.symmetric.deviation > 0.0   ? 1.0
                     : loss.symmetric.deviation < 0.0 ? -1.0
                                                      : 0.0;
  const double ws = params.zeta * loss.symmetric.strength * sgn;
  const double wl = (mode == GradientMode::PaperLiteral) ? wr : 0.0;

  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ap = a[i] - p[i];
    const double an = a[i] - n[i];
    const double pn = p[i] - n[i];
    ga[i] += wr * 2.0 * (n[i] - p[i]) + ws * (-2.0 * an);
    gp[i] += wr * (-2.0 * ap) + ws * (2.0 * pn) - wl * 2.0 * pn;
    gn[i] += wr * (2.0 * an) + ws * (2.0 * ap) + wl * 2.0 * pn;
  }
}

GradientTriple triplet_grad(std::span<const double> anchor, std::span<const double> positive,
                            std::span<const double> negative, const LossParams& params,
                            double weight, GradientMode mode) {
  const auto loss = evaluate_triplet(anchor, positive, negative, params);
  GradientTriple g{std::vector<double>(anchor.size(), 0.0),
                   std::vector<double>(anchor.size(), 0.0),
                   std::vector<double>(anchor.size(), 0.0)};
  accumulate_triplet_grad(anchor, positive, negative, loss, params, weight, mode, g.anchor,
                          g.positive, g.negative);
  return g;
}

}  // namespace dspl
