#pragma once

#include <span>
#include <string>

#include "aftmed/rng.hpp"

namespace aftmed {

enum class LawKind { standard_normal, extreme_value_min, convolved };

std::string law_name(LawKind kind);

// Residual law of a location-scale survival model on the log-time scale.
//
// standard_normal     lognormal times
// extreme_value_min   Weibull times (minimum Gumbel residual)
// convolved           outcome_scale * component + mediator_coef * Normal(0, mediator_sd^2),
//                     the reduced-form residual left after marginalizing a
//                     normally distributed mediator out of the outcome model.
//
// The convolved law has no closed form; its density and survival are adaptive
// Gauss-Kronrod integrals over the component variable truncated to the
// component's [1e-12, 1 - 1e-12] quantile range, absolute tolerance 1e-10.
class ErrorLaw {
 public:
  static ErrorLaw standard_normal();
  static ErrorLaw extreme_value_min();
  static ErrorLaw convolved(LawKind outcome_component, double outcome_scale,
                            double mediator_coef, double mediator_sd);

  LawKind kind() const { return kind_; }
  LawKind outcome_component() const { return component_; }
  double outcome_scale() const { return outcome_scale_; }
  double mediator_coef() const { return mediator_coef_; }
  double mediator_sd() const { return mediator_sd_; }

  double density(double x) const;
  // Closed form (never -inf) for the fittable kinds; the convolved kind logs
  // its quadrature density floored at 1e-300.
  double log_density(double x) const;
  double density_derivative(double x) const;
  // d/dx log density; closed form for the fittable kinds, ratio for convolved.
  double log_density_derivative(double x) const;

  double survival(double x) const;
  double cdf(double x) const;  // identically 1 - survival(x)
  double log_survival(double x) const;
  double log_cdf(double x) const;
  double hazard(double x) const;  // exp(log_density - log_survival)

  double quantile(double p) const;  // p in (0, 1)
  double mean() const;
  double variance() const;

  double sample(RngStream& rng) const;
  void sample(RngStream& rng, std::span<double> out) const;

 private:
  ErrorLaw() = default;

  LawKind kind_ = LawKind::standard_normal;
  LawKind component_ = LawKind::extreme_value_min;
  double outcome_scale_ = 1.0;
  double mediator_coef_ = 0.0;
  double mediator_sd_ = 1.0;
};

}  // namespace aftmed
