#include "aftmed/score_oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "aftmed/errors.hpp"
#include "aftmed/normal.hpp"
#include "aftmed/quadrature.hpp"

namespace aftmed {

namespace {

constexpr double kTailMass = 1e-12;
// Conditional (closed-form) integrals are driven well below the outer
// tolerance so the adaptive pass over the mixing variable never chases their
// residual noise.
constexpr double kInnerTol = 1e-13;
constexpr int kMaxExtensionSteps = 400;
constexpr int kMaxNewtonIterations = 60;
constexpr int kMaxHalvings = 40;
constexpr double kJacobianStep = 1e-6;

ErrorLaw make_standard(LawKind kind) {
  switch (kind) {
    case LawKind::standard_normal:
      return ErrorLaw::standard_normal();
    case LawKind::extreme_value_min:
      return ErrorLaw::extreme_value_min();
    default:
      throw std::invalid_argument(
          "censoring family must be standard_normal or extreme_value_min");
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

void validate_config(const ScoreBiasConfig& cfg) {
  if (cfg.assumed_law.kind() == LawKind::convolved) {
    throw std::invalid_argument("assumed residual law must be a fittable law");
  }
  if (!(cfg.true_scale > 0.0) || !std::isfinite(cfg.true_scale)) {
    throw std::invalid_argument("true residual scale must be positive");
  }
  if (!(cfg.assumed_scale > 0.0) || !std::isfinite(cfg.assumed_scale)) {
    throw std::invalid_argument("assumed residual scale must be positive");
  }
  if (!(cfg.exposure_prob > 0.0) || !(cfg.exposure_prob < 1.0)) {
    throw std::invalid_argument("exposure probability must lie in (0, 1)");
  }
  require_finite(cfg.true_intercept, "true intercept");
  require_finite(cfg.true_exposure, "true exposure coefficient");
  require_finite(cfg.probe_intercept, "probe intercept");
  require_finite(cfg.probe_exposure, "probe exposure coefficient");
  if (cfg.censor.kind == CensorSpec::Kind::fixed) {
    require_finite(cfg.censor.log_time, "log censoring time");
  }
  if (cfg.censor.kind == CensorSpec::Kind::law) {
    require_finite(cfg.censor.location, "censoring location");
    if (!(cfg.censor.scale > 0.0) || !std::isfinite(cfg.censor.scale)) {
      throw std::invalid_argument("censoring scale must be positive");
    }
    make_standard(cfg.censor.family);
  }
  if (!(cfg.truncation_time >= 0.0) || !std::isfinite(cfg.truncation_time)) {
    throw std::invalid_argument("truncation time must be finite and >= 0");
  }
}

struct ArmTerms {
  double location = 0.0;  // expected per-subject d loglik / d mu
  double scale = 0.0;     // expected per-subject d loglik / d log sigma
  QuadratureResult diag;
};

// Expected working-model scores for one exposure arm. A convolved data law
// (component residual plus an independent normal term) is handled by
// conditioning on the normal term: given that mixing value the residual
// follows the plain component law with a shifted location, so every
// conditional integrand is closed form, and one adaptive pass over the
// normal mixing density recovers the marginal expectation. Integration
// limits start at the 1e-12 tail quantiles of whichever law supplies the
// integration variable and are pushed outward until the integrand itself is
// negligible.
class Oracle {
 public:
  Oracle(const ScoreBiasConfig& cfg, double intercept, double exposure,
         double log_scale, double quad_tol)
      : cfg_(cfg),
        intercept_(intercept),
        exposure_(exposure),
        scale_(std::exp(log_scale)),
        tol_(quad_tol),
        component_(cfg.true_law),
        censor_family_(ErrorLaw::standard_normal()) {
    if (!(scale_ > 0.0) || !std::isfinite(scale_)) {
      throw std::invalid_argument("assumed residual scale must be positive");
    }
    if (cfg_.true_law.kind() == LawKind::convolved) {
      component_ = make_standard(cfg_.true_law.outcome_component());
      component_scale_ = cfg_.true_scale * cfg_.true_law.outcome_scale();
      shift_scale_ = cfg_.true_scale *
                     std::abs(cfg_.true_law.mediator_coef()) *
                     cfg_.true_law.mediator_sd();
      xi_lo_ = norm_quantile(kTailMass);
      xi_hi_ = -xi_lo_;
    } else {
      component_scale_ = cfg_.true_scale;
      shift_scale_ = 0.0;
    }
    e_lo_ = component_.quantile(kTailMass);
    e_hi_ = component_.quantile(1.0 - kTailMass);
    if (cfg_.censor.kind == CensorSpec::Kind::law) {
      censor_family_ = make_standard(cfg_.censor.family);
      c_lo_ = censor_family_.quantile(kTailMass);
      c_hi_ = censor_family_.quantile(1.0 - kTailMass);
    }
  }

  ArmTerms censoring_arm(int x, bool want_scale) const {
    const double mu_true = cfg_.true_intercept + cfg_.true_exposure * x;
    const double mu_assumed = intercept_ + exposure_ * x;
    ArmTerms arm;
    arm.location = mixture(mu_true, arm.diag, [&](double mu, QuadratureResult& d) {
      return conditional_censoring(mu, mu_assumed, Component::location, d);
    });
    if (want_scale) {
      arm.scale = mixture(mu_true, arm.diag, [&](double mu, QuadratureResult& d) {
        return conditional_censoring(mu, mu_assumed, Component::scale, d);
      });
    }
    return arm;
  }

  ArmTerms truncation_arm(int x, bool want_scale) const {
    if (!(cfg_.truncation_time > 0.0)) {
      return censoring_arm(x, want_scale);
    }
    const double mu_true = cfg_.true_intercept + cfg_.true_exposure * x;
    const double mu_assumed = intercept_ + exposure_ * x;
    const double entry = std::log(cfg_.truncation_time);

    const double mass =
        cfg_.true_law.survival((entry - mu_true) / cfg_.true_scale);
    if (!(mass > 1e-8)) {
      throw QuadratureError(
          "left truncation leaves too little response mass to evaluate");
    }

    ArmTerms arm;
    arm.location = mixture(mu_true, arm.diag, [&](double mu, QuadratureResult& d) {
      return conditional_entry_integral(mu, mu_assumed, Component::location,
                                        entry, d);
    });
    arm.location /= mass;
    if (want_scale) {
      arm.scale = mixture(mu_true, arm.diag, [&](double mu, QuadratureResult& d) {
        return conditional_entry_integral(mu, mu_assumed, Component::scale,
                                          entry, d);
      });
      arm.scale /= mass;
    }

    const double z = (entry - mu_assumed) / scale_;
    const double hazard = cfg_.assumed_law.hazard(z);
    arm.location -= hazard / scale_;
    if (want_scale) {
      arm.scale -= z * hazard;
    }
    return arm;
  }

 private:
  enum class Component { location, scale };

  struct NoFactor {
    double operator()(double) const { return 1.0; }
  };

  static double infinity() { return std::numeric_limits<double>::infinity(); }

  double inner_tol() const { return shift_scale_ > 0.0 ? kInnerTol : tol_; }

  // d/d mu and d/d log sigma of the assumed log density at standardized z.
  double observed_term(double z, Component which) const {
    const double slope = cfg_.assumed_law.log_density_derivative(z);
    return which == Component::location ? -slope / scale_ : -z * slope - 1.0;
  }

  double censored_term(double z, Component which) const {
    const double hazard = cfg_.assumed_law.hazard(z);
    return which == Component::location ? hazard / scale_ : z * hazard;
  }

  // Marginalizes a conditional arm quantity over the normal mixing variable
  // of a convolved data law; pass-through when the law needs no mixing.
  template <class Conditional>
  double mixture(double mu_base, QuadratureResult& diag,
                 Conditional&& conditional) const {
    if (shift_scale_ == 0.0) {
      return conditional(mu_base, diag);
    }
    auto integrand = [&](double xi) {
      const double weight = norm_pdf(xi);
      if (!(weight > 0.0)) {
        return 0.0;
      }
      return weight * conditional(mu_base + shift_scale_ * xi, diag);
    };
    double lo = xi_lo_;
    double hi = xi_hi_;
    const double step = 0.05 * (xi_hi_ - xi_lo_);
    extend_down(integrand, lo, step);
    extend_up(integrand, hi, step, infinity());
    const QuadratureResult outer = integrate(integrand, lo, hi, tol_);
    diag.abs_error += outer.abs_error;
    diag.converged = diag.converged && outer.converged;
    return outer.value;
  }

  // Expected score contribution for one arm conditional on the (possibly
  // shifted) true location, under the configured censoring mechanism.
  double conditional_censoring(double mu_true, double mu_assumed,
                               Component which, QuadratureResult& diag) const {
    switch (cfg_.censor.kind) {
      case CensorSpec::Kind::fixed: {
        const double gamma = cfg_.censor.log_time;
        const double cap = (gamma - mu_true) / component_scale_;
        double value = observed_integral(mu_true, mu_assumed, which,
                                         NoFactor{}, cap, diag);
        const double z = (gamma - mu_assumed) / scale_;
        value += component_.survival(cap) * censored_term(z, which);
        return value;
      }
      case CensorSpec::Kind::law: {
        auto at_risk = [this](double response) {
          return censor_family_.survival(
              (response - cfg_.censor.location) / cfg_.censor.scale);
        };
        return observed_integral(mu_true, mu_assumed, which, at_risk,
                                 infinity(), diag) +
               censored_integral(mu_true, mu_assumed, which, diag);
      }
      case CensorSpec::Kind::none:
      default:
        return observed_integral(mu_true, mu_assumed, which, NoFactor{},
                                 infinity(), diag);
    }
  }

  // Observed-score integral restricted to responses at or above the entry
  // time (the numerator of a left-truncated expectation).
  double conditional_entry_integral(double mu_true, double mu_assumed,
                                    Component which, double entry,
                                    QuadratureResult& diag) const {
    auto integrand = [&, this](double e) {
      const double density = component_.density(e);
      if (!(density > 0.0)) {
        return 0.0;
      }
      const double response = mu_true + component_scale_ * e;
      const double z = (response - mu_assumed) / scale_;
      return observed_term(z, which) * density;
    };
    const double floor = (entry - mu_true) / component_scale_;
    double lo = std::max(e_lo_, floor);
    double hi = e_hi_;
    const double step = 0.05 * (e_hi_ - e_lo_);
    if (floor < e_lo_) {
      extend_down(integrand, lo, step);
      lo = std::max(lo, floor);
    }
    extend_up(integrand, hi, step, infinity());
    if (!(hi > lo)) {
      return 0.0;
    }
    return accumulate(integrate(integrand, lo, hi, inner_tol()), diag);
  }

  template <class AtRisk>
  double observed_integral(double mu_true, double mu_assumed, Component which,
                           AtRisk at_risk, double cap,
                           QuadratureResult& diag) const {
    auto integrand = [&, this](double e) {
      const double density = component_.density(e);
      if (!(density > 0.0)) {
        return 0.0;
      }
      const double response = mu_true + component_scale_ * e;
      const double z = (response - mu_assumed) / scale_;
      return observed_term(z, which) * density * at_risk(response);
    };
    double lo = e_lo_;
    double hi = std::min(e_hi_, cap);
    if (!(hi > lo)) {
      return 0.0;
    }
    const double step = 0.05 * (e_hi_ - e_lo_);
    extend_down(integrand, lo, step);
    extend_up(integrand, hi, step, cap);
    return accumulate(integrate(integrand, lo, hi, inner_tol()), diag);
  }

  double censored_integral(double mu_true, double mu_assumed, Component which,
                           QuadratureResult& diag) const {
    auto integrand = [&, this](double u) {
      const double density = censor_family_.density(u);
      if (!(density > 0.0)) {
        return 0.0;
      }
      const double cutoff = cfg_.censor.location + cfg_.censor.scale * u;
      const double survive =
          component_.survival((cutoff - mu_true) / component_scale_);
      if (!(survive > 0.0)) {
        return 0.0;
      }
      const double z = (cutoff - mu_assumed) / scale_;
      return censored_term(z, which) * density * survive;
    };
    double lo = c_lo_;
    double hi = c_hi_;
    const double step = 0.05 * (c_hi_ - c_lo_);
    extend_down(integrand, lo, step);
    extend_up(integrand, hi, step, infinity());
    return accumulate(integrate(integrand, lo, hi, inner_tol()), diag);
  }

  template <class F>
  void extend_down(F& f, double& lo, double step) const {
    for (int i = 0; std::abs(f(lo)) > tol_ / 100.0; ++i) {
      if (i >= kMaxExtensionSteps) {
        throw QuadratureError(
            "integrand does not vanish at the lower integration limit");
      }
      lo -= step;
    }
  }

  template <class F>
  void extend_up(F& f, double& hi, double step, double cap) const {
    if (hi >= cap) {
      return;
    }
    for (int i = 0; std::abs(f(hi)) > tol_ / 100.0; ++i) {
      if (i >= kMaxExtensionSteps) {
        throw QuadratureError(
            "integrand does not vanish at the upper integration limit");
      }
      hi = std::min(cap, hi + step);
      if (hi >= cap) {
        return;
      }
    }
  }

  static double accumulate(const QuadratureResult& part,
                           QuadratureResult& diag) {
    diag.abs_error += part.abs_error;
    diag.evaluations += part.evaluations;
    diag.converged = diag.converged && part.converged;
    return part.value;
  }

  const ScoreBiasConfig& cfg_;
  double intercept_;
  double exposure_;
  double scale_;
  double tol_;
  // Data law decomposition: component residual times component_scale_, plus
  // shift_scale_ times an independent standard normal (zero when the law is
  // not convolved).
  ErrorLaw component_;
  double component_scale_ = 1.0;
  double shift_scale_ = 0.0;
  ErrorLaw censor_family_;
  double e_lo_ = 0.0;
  double e_hi_ = 0.0;
  double c_lo_ = 0.0;
  double c_hi_ = 0.0;
  double xi_lo_ = 0.0;
  double xi_hi_ = 0.0;
};

enum class Mechanism { censoring, truncation };

Mechanism probe_mechanism(const ScoreBiasConfig& cfg) {
  if (cfg.truncation_time > 0.0) {
    if (cfg.censor.kind != CensorSpec::Kind::none) {
      throw std::invalid_argument(
          "combined censoring and truncation is not supported here");
    }
    return Mechanism::truncation;
  }
  return Mechanism::censoring;
}

struct SystemEval {
  Eigen::VectorXd values;
  QuadratureResult diag;
};

// Expected score system (intercept, exposure, log scale) at working-model
// parameters theta, averaged over the binary exposure arms.
SystemEval evaluate_system(const ScoreBiasConfig& cfg, Mechanism mechanism,
                           double intercept, double exposure, double log_scale,
                           double quad_tol) {
  Oracle oracle(cfg, intercept, exposure, log_scale, quad_tol);
  const ArmTerms unexposed = mechanism == Mechanism::censoring
                                 ? oracle.censoring_arm(0, true)
                                 : oracle.truncation_arm(0, true);
  const ArmTerms exposed = mechanism == Mechanism::censoring
                               ? oracle.censoring_arm(1, true)
                               : oracle.truncation_arm(1, true);
  const double p = cfg.exposure_prob;
  SystemEval eval;
  eval.values.resize(3);
  eval.values << (1.0 - p) * unexposed.location + p * exposed.location,
      p * exposed.location,
      (1.0 - p) * unexposed.scale + p * exposed.scale;
  eval.diag = unexposed.diag;
  eval.diag += exposed.diag;
  return eval;
}

ProbeResult solve_expected_scores(const ScoreBiasConfig& cfg,
                                  bool solve_exposure, double tolerance) {
  validate_config(cfg);
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("tolerance must be positive");
  }
  const Mechanism mechanism = probe_mechanism(cfg);
  const double quad_tol = tolerance / 10.0;

  ProbeResult result;
  result.intercept = cfg.probe_intercept;
  result.exposure = cfg.probe_exposure;
  result.log_scale = std::log(cfg.assumed_scale);

  const int dims = solve_exposure ? 3 : 2;
  auto pack = [&](Eigen::VectorXd& theta) {
    theta(0) = result.intercept;
    if (solve_exposure) {
      theta(1) = result.exposure;
    }
    theta(dims - 1) = result.log_scale;
  };
  auto unpack = [&](const Eigen::VectorXd& theta) {
    result.intercept = theta(0);
    if (solve_exposure) {
      result.exposure = theta(1);
    }
    result.log_scale = theta(dims - 1);
  };
  auto residuals = [&](const Eigen::VectorXd& theta) {
    const double exposure = solve_exposure ? theta(1) : cfg.probe_exposure;
    SystemEval eval = evaluate_system(cfg, mechanism, theta(0), exposure,
                                      theta(dims - 1), quad_tol);
    result.evaluations += eval.diag.evaluations;
    if (!eval.diag.converged) {
      throw QuadratureError("expected score quadrature did not converge");
    }
    Eigen::VectorXd out(dims);
    if (solve_exposure) {
      out = eval.values;
    } else {
      out << eval.values(0), eval.values(2);
    }
    return out;
  };

  Eigen::VectorXd theta(dims);
  pack(theta);
  Eigen::VectorXd f = residuals(theta);

  for (int iter = 0; iter < kMaxNewtonIterations; ++iter) {
    result.iterations = iter;
    result.max_abs_score = f.cwiseAbs().maxCoeff();
    if (result.max_abs_score < tolerance) {
      result.converged = true;
      unpack(theta);
      return result;
    }

    Eigen::MatrixXd jacobian(dims, dims);
    for (int j = 0; j < dims; ++j) {
      Eigen::VectorXd shifted = theta;
      shifted(j) += kJacobianStep;
      jacobian.col(j) = (residuals(shifted) - f) / kJacobianStep;
    }
    Eigen::VectorXd direction = jacobian.partialPivLu().solve(-f);
    if (!direction.allFinite()) {
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h) {
      Eigen::VectorXd candidate = theta + step * direction;
      Eigen::VectorXd fc = residuals(candidate);
      if (fc.allFinite() &&
          fc.squaredNorm() < f.squaredNorm() * (1.0 - 1e-4 * step)) {
        theta = candidate;
        f = fc;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      break;
    }
  }

  result.max_abs_score = f.cwiseAbs().maxCoeff();
  result.converged = result.max_abs_score < tolerance;
  unpack(theta);
  return result;
}

ScoreBiasResult combination_result(const ScoreBiasConfig& cfg,
                                   const ArmTerms& exposed,
                                   const ArmTerms& unexposed) {
  if (!exposed.diag.converged || !unexposed.diag.converged) {
    throw QuadratureError("expected score quadrature did not converge");
  }
  const double p = cfg.exposure_prob;
  ScoreBiasResult result;
  result.expected_score_beta =
      p * (1.0 - p) * (exposed.location - unexposed.location);
  result.quadrature_abs_error =
      p * (1.0 - p) * (exposed.diag.abs_error + unexposed.diag.abs_error);
  result.evaluations =
      exposed.diag.evaluations + unexposed.diag.evaluations;
  return result;
}

}  // namespace

CensorSpec CensorSpec::fixed(double time) {
  if (!(time > 0.0)) {
    throw std::invalid_argument("censoring time must be positive");
  }
  if (std::isinf(time)) {
    return none();
  }
  CensorSpec spec;
  spec.kind = Kind::fixed;
  spec.log_time = std::log(time);
  return spec;
}

CensorSpec CensorSpec::from_law(LawKind family, double location,
                                double scale) {
  make_standard(family);
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(location)) {
    throw std::invalid_argument("censoring law needs finite location and "
                                "positive scale");
  }
  CensorSpec spec;
  spec.kind = Kind::law;
  spec.family = family;
  spec.location = location;
  spec.scale = scale;
  return spec;
}

ScoreBiasResult expected_score_right_censoring(const ScoreBiasConfig& config,
                                               double tolerance) {
  validate_config(config);
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("tolerance must be positive");
  }
  if (config.truncation_time > 0.0) {
    throw std::invalid_argument(
        "right-censoring evaluation does not accept a truncation time");
  }
  Oracle oracle(config, config.probe_intercept, config.probe_exposure,
                std::log(config.assumed_scale), tolerance / 4.0);
  return combination_result(config, oracle.censoring_arm(1, false),
                            oracle.censoring_arm(0, false));
}

ScoreBiasResult expected_score_left_truncation(const ScoreBiasConfig& config,
                                               double tolerance) {
  validate_config(config);
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("tolerance must be positive");
  }
  if (config.censor.kind != CensorSpec::Kind::none) {
    throw std::invalid_argument(
        "left-truncation evaluation does not accept a censoring mechanism");
  }
  Oracle oracle(config, config.probe_intercept, config.probe_exposure,
                std::log(config.assumed_scale), tolerance / 4.0);
  return combination_result(config, oracle.truncation_arm(1, false),
                            oracle.truncation_arm(0, false));
}

ProbeResult mle_limit_probe(const ScoreBiasConfig& config, double tolerance) {
  return solve_expected_scores(config, true, tolerance);
}

ProbeResult mle_limit_profile(const ScoreBiasConfig& config,
                              double tolerance) {
  return solve_expected_scores(config, false, tolerance);
}

}  // namespace aftmed
