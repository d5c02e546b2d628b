#include "aftmed/error_law.hpp"

#include <cmath>
#include <stdexcept>

#include "aftmed/normal.hpp"
#include "aftmed/quadrature.hpp"

namespace aftmed {

namespace {

constexpr double kDensityFloor = 1e-300;
constexpr double kConvolvedTol = 1e-10;
constexpr double kTailProb = 1e-12;
constexpr double kEulerGamma = 0.57721566490153286061;
constexpr double kPiSqOver6 = 1.64493406684822643647;

// Minimum extreme value: F(x) = 1 - exp(-e^x).
double ev_logpdf(double x) { return x - std::exp(x); }
double ev_pdf(double x) { return std::exp(ev_logpdf(x)); }
double ev_logsf(double x) { return -std::exp(x); }
double ev_sf(double x) { return std::exp(-std::exp(x)); }
double ev_logcdf(double x) {
  const double t = std::exp(x);
  if (t < 1e-4) {
    // F = t - t^2/2 + t^3/6 - ...; log F = x + log1p(-t/2 + t^2/6)
    return x + std::log1p(t * (-0.5 + t / 6.0));
  }
  return std::log(-std::expm1(-t));
}
double ev_quantile(double p) { return std::log(-std::log1p(-p)); }

}  // namespace

std::string law_name(LawKind kind) {
  switch (kind) {
    case LawKind::standard_normal:
      return "standard_normal";
    case LawKind::extreme_value_min:
      return "extreme_value_min";
    case LawKind::convolved:
      return "convolved";
  }
  return "unknown";
}

ErrorLaw ErrorLaw::standard_normal() {
  ErrorLaw law;
  law.kind_ = LawKind::standard_normal;
  return law;
}

ErrorLaw ErrorLaw::extreme_value_min() {
  ErrorLaw law;
  law.kind_ = LawKind::extreme_value_min;
  return law;
}

ErrorLaw ErrorLaw::convolved(LawKind outcome_component, double outcome_scale,
                             double mediator_coef, double mediator_sd) {
  if (outcome_component == LawKind::convolved) {
    throw std::invalid_argument("convolved law: component must be a base law");
  }
  if (!(outcome_scale > 0.0)) {
    throw std::invalid_argument("convolved law: outcome scale must be positive");
  }
  if (mediator_coef == 0.0 || !std::isfinite(mediator_coef)) {
    throw std::invalid_argument(
        "convolved law: mediator coefficient of zero gives a degenerate "
        "convolution; use the base law instead");
  }
  if (!(mediator_sd > 0.0)) {
    throw std::invalid_argument("convolved law: mediator sd must be positive");
  }
  ErrorLaw law;
  law.kind_ = LawKind::convolved;
  law.component_ = outcome_component;
  law.outcome_scale_ = outcome_scale;
  law.mediator_coef_ = mediator_coef;
  law.mediator_sd_ = mediator_sd;
  return law;
}

namespace {

struct ComponentOps {
  double (*pdf)(double);
  double (*quantile)(double);
};

ComponentOps component_ops(LawKind kind) {
  if (kind == LawKind::standard_normal) {
    return {&norm_pdf, &norm_quantile};
  }
  return {&ev_pdf, &ev_quantile};
}

}  // namespace

double ErrorLaw::density(double x) const {
  switch (kind_) {
    case LawKind::standard_normal:
      return norm_pdf(x);
    case LawKind::extreme_value_min:
      return ev_pdf(x);
    case LawKind::convolved:
      break;
  }
  // Integrate the normal kernel of mediator_coef * xi over the component
  // variable e: the density of outcome_scale * e + mediator_coef * xi.
  const ComponentOps ops = component_ops(component_);
  const double lo = ops.quantile(kTailProb);
  const double hi = ops.quantile(1.0 - kTailProb);
  const double b = std::abs(mediator_coef_) * mediator_sd_;
  const double s = outcome_scale_;
  auto integrand = [&](double e) {
    return norm_pdf((x - s * e) / b) / b * ops.pdf(e);
  };
  return integrate_or_throw(integrand, lo, hi, kConvolvedTol).value;
}

double ErrorLaw::log_density(double x) const {
  switch (kind_) {
    case LawKind::standard_normal:
      return norm_logpdf(x);
    case LawKind::extreme_value_min:
      return ev_logpdf(x);
    case LawKind::convolved:
      return std::log(std::max(density(x), kDensityFloor));
  }
  return 0.0;
}

double ErrorLaw::density_derivative(double x) const {
  switch (kind_) {
    case LawKind::standard_normal:
      return -x * norm_pdf(x);
    case LawKind::extreme_value_min:
      return (1.0 - std::exp(x)) * ev_pdf(x);
    case LawKind::convolved: {
      const double h = 1e-5;
      return (density(x + h) - density(x - h)) / (2.0 * h);
    }
  }
  return 0.0;
}

double ErrorLaw::log_density_derivative(double x) const {
  switch (kind_) {
    case LawKind::standard_normal:
      return -x;
    case LawKind::extreme_value_min:
      return 1.0 - std::exp(x);
    case LawKind::convolved:
      return density_derivative(x) / std::max(density(x), kDensityFloor);
  }
  return 0.0;
}

double ErrorLaw::survival(double x) const {
  switch (kind_) {
    case LawKind::standard_normal:
      return norm_sf(x);
    case LawKind::extreme_value_min:
      return ev_sf(x);
    case LawKind::convolved:
      break;
  }
  // P(s*e + b*xi > x) = E_e[ normal survival at (x - s*e)/b ].
  const ComponentOps ops = component_ops(component_);
  const double lo = ops.quantile(kTailProb);
  const double hi = ops.quantile(1.0 - kTailProb);
  const double b = std::abs(mediator_coef_) * mediator_sd_;
  const double s = outcome_scale_;
  auto integrand = [&](double e) {
    return norm_sf((x - s * e) / b) * ops.pdf(e);
  };
  const double v = integrate_or_throw(integrand, lo, hi, kConvolvedTol).value;
  return std::min(1.0, std::max(0.0, v));
}

double ErrorLaw::cdf(double x) const { return 1.0 - survival(x); }

double ErrorLaw::log_survival(double x) const {
  switch (kind_) {
    case LawKind::standard_normal:
      return norm_logsf(x);
    case LawKind::extreme_value_min:
      return ev_logsf(x);
    case LawKind::convolved:
      return std::log(std::max(survival(x), kDensityFloor));
  }
  return 0.0;
}

double ErrorLaw::log_cdf(double x) const {
  switch (kind_) {
    case LawKind::standard_normal:
      return norm_logcdf(x);
    case LawKind::extreme_value_min:
      return ev_logcdf(x);
    case LawKind::convolved:
      return std::log(std::max(cdf(x), kDensityFloor));
  }
  return 0.0;
}

double ErrorLaw::hazard(double x) const {
  // Gumbel-min: log f - log S = (x - e^x) + e^x, which rounds to 0 once e^x
  // swamps x; the exact hazard e^x needs no subtraction.
  if (kind_ == LawKind::extreme_value_min) return std::exp(x);
  return std::exp(log_density(x) - log_survival(x));
}

double ErrorLaw::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("quantile: p must lie in (0, 1)");
  }
  switch (kind_) {
    case LawKind::standard_normal:
      return norm_quantile(p);
    case LawKind::extreme_value_min:
      return ev_quantile(p);
    case LawKind::convolved:
      break;
  }
  // Bisection on the quadrature CDF; bracket expanded from mean +- sd.
  const double m = mean();
  const double sd = std::sqrt(variance());
  double lo = m - 8.0 * sd, hi = m + 8.0 * sd;
  while (cdf(lo) > p) lo -= 4.0 * sd;
  while (cdf(hi) < p) hi += 4.0 * sd;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double ErrorLaw::mean() const {
  switch (kind_) {
    case LawKind::standard_normal:
      return 0.0;
    case LawKind::extreme_value_min:
      return -kEulerGamma;
    case LawKind::convolved: {
      const double cm =
          component_ == LawKind::standard_normal ? 0.0 : -kEulerGamma;
      return outcome_scale_ * cm;
    }
  }
  return 0.0;
}

double ErrorLaw::variance() const {
  switch (kind_) {
    case LawKind::standard_normal:
      return 1.0;
    case LawKind::extreme_value_min:
      return kPiSqOver6;
    case LawKind::convolved: {
      const double cv =
          component_ == LawKind::standard_normal ? 1.0 : kPiSqOver6;
      return outcome_scale_ * outcome_scale_ * cv +
             mediator_coef_ * mediator_coef_ * mediator_sd_ * mediator_sd_;
    }
  }
  return 1.0;
}

double ErrorLaw::sample(RngStream& rng) const {
  switch (kind_) {
    case LawKind::standard_normal:
      return rng.normal();
    case LawKind::extreme_value_min:
      return rng.gumbel_min();
    case LawKind::convolved: {
      const double e = component_ == LawKind::standard_normal
                           ? rng.normal()
                           : rng.gumbel_min();
      return outcome_scale_ * e + mediator_coef_ * (mediator_sd_ * rng.normal());
    }
  }
  return 0.0;
}

void ErrorLaw::sample(RngStream& rng, std::span<double> out) const {
  for (double& x : out) {
    x = sample(rng);
  }
}

}  // namespace aftmed
