#ifndef DSPL_LOSSES_HPP_
#define DSPL_LOSSES_HPP_

#include <span>
#include <vector>

namespace dspl {

/// Margin M, sharpness gamma, symmetric weight zeta, parameter weight xi.
struct LossParams {
  double margin = 1.1;
  double gamma = 0.9;
  double zeta = 0.1;
  double xi = 0.01;

  void validate() const;
};

struct RelativeTerm {
  double value = 0.0;  // R
  double argument = 0.0;  // T = M + |a-p|^2 - |a-n|^2
  bool active = false;
};

struct SymmetricTerm {
  double value = 0.0;      // S
  double deviation = 0.0;  // D = |p-n|^2 - |a-n|^2
  double abs_deviation = 0.0;  // Z
  double strength = 0.5;   // eta
};

struct LossBreakdown {
  RelativeTerm relative;
  SymmetricTerm symmetric;
};

/// Hinge on margin plus anchor-positive minus anchor-negative squared distance.
RelativeTerm relative_term(std::span<const double> anchor, std::span<const double> positive,
                           std::span<const double> negative, double margin);

/// Softplus penalty (1/gamma) ln(1 + exp(gamma Z)) on the gap between the two
/// distances that involve the negative.
SymmetricTerm symmetric_term(std::span<const double> anchor, std::span<const double> positive,
                             std::span<const double> negative, double gamma);

/// (1/gamma) ln(1 + exp(gamma z)), stable for large gamma z.
double softplus(double z, double gamma);
/// exp(gamma z) / (1 + exp(gamma z)), stable for large |gamma z|.
double softplus_slope(double z, double gamma);

LossBreakdown evaluate_triplet(std::span<const double> anchor, std::span<const double> positive,
                               std::span<const double> negative, const LossParams& params);

enum class GradientMode {
  Exact,
  /// Adds the extra -2(f_p - f_n) pathway term to dR, transcribed as published.
  PaperLiteral,
};

struct GradientTriple {
  std::vector<double> anchor;
  std::vector<double> positive;
  std::vector<double> negative;
};

/// Gradient of u*R + zeta*S with respect to the three embeddings.
GradientTriple triplet_grad(std::span<const double> anchor, std::span<const double> positive,
                            std::span<const double> negative, const LossParams& params,
                            double weight, GradientMode mode);

/// Same as triplet_grad but reuses an already evaluated breakdown and adds the
/// result into the output spans.
void accumulate_triplet_grad(std::span<const double> anchor, std::span<const double> positive,
                             std::span<const double> negative, const LossBreakdown& loss,
                             const LossParams& params, double weight, GradientMode mode,
                             std::span<double> grad_anchor, std::span<double> grad_positive,
                             std::span<double> grad_negative);

}  // namespace dspl

#endif  // DSPL_LOSSES_HPP_
