#pragma once

#include <cstddef>

#include "aftmed/error_law.hpp"

namespace aftmed {

// Right-censoring mechanism for the population score calculations.
//   none  : no censoring (the C -> +inf boundary).
//   fixed : every subject shares one censoring time C > 0.
//   law   : log C = location + scale * e_c with e_c drawn from `family`;
//           this matches the calibrated mechanism used by the simulator.
struct CensorSpec {
  enum class Kind { none, fixed, law };

  Kind kind = Kind::none;
  double log_time = 0.0;  // log C when kind == fixed
  LawKind family = LawKind::extreme_value_min;
  double location = 0.0;
  double scale = 1.0;

  static CensorSpec none() { return CensorSpec{}; }

  // time > 0; +inf collapses to the uncensored boundary.
  static CensorSpec fixed(double time);

  static CensorSpec from_law(LawKind family, double location, double scale);
};

// Population-level description of a (possibly misspecified) AFT analysis of
// log T = intercept + exposure * X + residual, with binary X ~
// Bernoulli(exposure_prob).
//
// The data-generating residual is true_scale * E with E ~ true_law; the
// working model assumes residual assumed_scale * E' with E' ~ assumed_law.
// Probe values are the working-model parameters at which expected scores are
// evaluated (for the solvers they are the starting point).
struct ScoreBiasConfig {
  ErrorLaw true_law = ErrorLaw::standard_normal();
  double true_scale = 1.0;
  ErrorLaw assumed_law = ErrorLaw::standard_normal();
  double assumed_scale = 1.0;

  double true_intercept = 0.0;
  double true_exposure = 0.0;
  double probe_intercept = 0.0;
  double probe_exposure = 0.0;

  double exposure_prob = 0.5;

  CensorSpec censor = CensorSpec::none();
  double truncation_time = 0.0;  // left-truncation time V; 0 = none
};

// Expected value (per subject, at the probe parameters) of the profiled
// exposure score U_beta - p * U_alpha, which for binary X equals
// p(1-p) * [g(1) - g(0)] with g(x) the expected location score given X = x.
// A nonzero value at the working model's uncensored limit certifies that the
// limit shifts under the mechanism, i.e. the reduced-form fit is inconsistent.
struct ScoreBiasResult {
  double expected_score_beta = 0.0;
  double quadrature_abs_error = 0.0;
  std::size_t evaluations = 0;
};

// Expected profiled exposure score under right censoring (config.censor).
// Throws std::invalid_argument if config.truncation_time > 0 here.
ScoreBiasResult expected_score_right_censoring(const ScoreBiasConfig& config,
                                               double tolerance);

// Expected profiled exposure score under left truncation at
// config.truncation_time. Throws std::invalid_argument if config.censor is
// active.
ScoreBiasResult expected_score_left_truncation(const ScoreBiasConfig& config,
                                               double tolerance);

// Limiting working-model parameters: the root of the expected score system
// in (intercept, exposure, log scale), found by damped Newton from the probe
// values. `exposure` minus the true reduced-form slope is the asymptotic bias
// that finite-sample simulations should approach.
struct ProbeResult {
  double intercept = 0.0;
  double exposure = 0.0;
  double log_scale = 0.0;
  double max_abs_score = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t evaluations = 0;
};

ProbeResult mle_limit_probe(const ScoreBiasConfig& config,
                            double tolerance = 1e-8);

// Profile variant: exposure is pinned at config.probe_exposure and only
// (intercept, log scale) are solved. Used to evaluate the expected score "at
// beta held to its true value with the intercept at its limiting value".
ProbeResult mle_limit_profile(const ScoreBiasConfig& config,
                              double tolerance = 1e-8);

}  // namespace aftmed
