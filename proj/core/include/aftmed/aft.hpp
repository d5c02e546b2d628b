#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "aftmed/dataset.hpp"
#include "aftmed/error_law.hpp"

namespace aftmed {

// Regressor selection. Column order is fixed: intercept, then exposure,
// then mediator, then the dataset's covariates — each when included.
struct DesignSpec {
  bool exposure = true;
  bool mediator = false;
  bool covariates = true;
};

std::vector<std::string> design_names(const DesignSpec& design,
                                      const Dataset& dataset);
Eigen::MatrixXd design_matrix(const DesignSpec& design, const Dataset& dataset);

// A fittable location-scale model on log time: log T = x'b + sigma * eps.
// The residual law must be standard_normal or extreme_value_min; the
// convolved law exists to characterize misspecification, not to be fit.
struct AftSpec {
  LawKind law = LawKind::standard_normal;
  DesignSpec design;
};

struct AftParams {
  Eigen::VectorXd coefficients;
  double log_scale = 0.0;

  double sigma() const { return std::exp(log_scale); }
};

struct AftFit {
  std::vector<std::string> coefficient_names;
  Eigen::VectorXd coefficients;
  double log_scale = 0.0;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double max_abs_score = 0.0;
  // Inverse negative Hessian over (coefficients..., log_scale); valid only
  // when covariance_available.
  Eigen::MatrixXd covariance;
  bool covariance_available = false;

  double sigma() const { return std::exp(log_scale); }
  AftParams params() const { return {coefficients, log_scale}; }
  // Index into coefficients/covariance; throws if the name is absent.
  std::size_t index_of(const std::string& name) const;
};

// Sum over subjects of the censoring-appropriate log-likelihood term with
// z = (log t - x'b) / sigma:
//   exact t         log f0(z) - log sigma
//   right-censored  log S0(z)
//   interval (l,r)  log(F0(z_r) - F0(z_l)), stable log-difference
//   truncation V>0  minus log S0(z_V)
// Interval terms whose probability underflows are floored at 1e-300 and
// counted in *floored_intervals when provided.
double loglik(const AftSpec& spec, const AftParams& params,
              const Dataset& dataset, int* floored_intervals = nullptr);

// Analytic gradient of loglik in (coefficients..., log_scale).
Eigen::VectorXd score(const AftSpec& spec, const AftParams& params,
                      const Dataset& dataset);

// Newton maximization with ridge-stabilized steps and a step-halving line
// search. Converged when max |score| < 1e-8 and the relative log-likelihood
// change < 1e-12, capped at 200 iterations. The Hessian is a central finite
// difference of the analytic score (step 1e-6).
AftFit fit(const AftSpec& spec, const Dataset& dataset,
           const std::optional<AftParams>& init = std::nullopt);

struct LinearFit {
  std::vector<std::string> coefficient_names;
  Eigen::VectorXd coefficients;
  double residual_sd = 0.0;           // divisor n - p
  Eigen::MatrixXd covariance;         // residual_sd^2 * (X'X)^-1

  std::size_t index_of(const std::string& name) const;
};

// Ordinary least squares on intercept + exposure + covariates. Response is
// the mediator when mediator_as_response, otherwise log observed time with
// censoring ignored (censoring times as exact, intervals at their geometric
// midpoint) — the initializer used by fit() and the uncensored-normal
// reference fit.
LinearFit fit_linear(const Dataset& dataset, bool mediator_as_response);

}  // namespace aftmed
