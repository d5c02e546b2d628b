#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "aftmed/aft.hpp"
#include "aftmed/dataset.hpp"

namespace aftmed {

// Exposure levels being compared; effects scale with a - a_star.
struct Contrast {
  double a = 1.0;
  double a_star = 0.0;

  double delta() const { return a - a_star; }
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
};

struct BootstrapConfig {
  std::size_t replicates = 500;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

// Nonparametric bootstrap over subjects; replicate b draws from the stream
// (seed, b), so results are independent of scheduling and worker count.
// Resamples whose fits fail or do not converge are dropped and counted; more
// than 5% dropped fails the run. Confidence intervals are sample percentiles.
struct BootstrapResult {
  std::size_t replicates_requested = 0;
  std::size_t replicates_used = 0;
  std::size_t dropped = 0;
  // Set when replicates_used < 40 / (1 - ci_level): the tail order statistics
  // behind the percentile bounds are then too sparse to be reliable.
  bool ci_underpowered = false;

  double se_nde = 0.0;
  double se_nie_product = 0.0;
  double se_nie_difference = 0.0;
  double se_total_product = 0.0;
  double se_total_difference = 0.0;
  ConfidenceInterval ci_nde;
  ConfidenceInterval ci_nie_product;
  ConfidenceInterval ci_nie_difference;
  ConfidenceInterval ci_total_product;
  ConfidenceInterval ci_total_difference;
};

// The five-effect decomposition. Identities hold by construction:
// total_product = nde + nie_product and nie_difference = total_difference -
// nde, both exactly. Delta-method standard errors (with normal-approximation
// intervals) cover nde, nie_product, and total_difference; nie_difference and
// total_product carry bootstrap standard errors and percentile intervals when
// a bootstrap was run.
struct MediationEstimates {
  Contrast contrast;
  double ci_level = 0.95;
  // All three model fits converged with usable observed-information
  // covariance. When false the point estimates are still reported but the
  // delta-method fields are NaN.
  bool converged = false;

  double nde = 0.0;
  double nie_product = 0.0;
  double nie_difference = 0.0;
  double total_product = 0.0;
  double total_difference = 0.0;

  double se_nde = 0.0;
  double se_nie_product = 0.0;
  double se_total_difference = 0.0;
  ConfidenceInterval ci_nde;
  ConfidenceInterval ci_nie_product;
  ConfidenceInterval ci_total_difference;

  std::optional<double> se_nie_difference;
  std::optional<double> se_total_product;
  std::optional<ConfidenceInterval> ci_nie_difference;
  std::optional<ConfidenceInterval> ci_total_product;
  std::size_t bootstrap_replicates_used = 0;
  std::size_t bootstrap_dropped = 0;
  bool bootstrap_ci_underpowered = false;

  // Under the extreme-value law the reduced model is misspecified once the
  // outcome is censored, so the reduced-form total effect is flagged and the
  // product-route total should be preferred.
  bool total_difference_flagged = false;
};

// Indirect effect by the product rule: alpha_a * beta_m * (a - a_star).
// Throws if the outcome fit has no mediator coefficient.
double product_nie(const LinearFit& mediator_fit, const AftFit& full_fit,
                   Contrast contrast);

// Indirect effect by the difference rule: (tau_a - beta_a) * (a - a_star).
// The reduced fit must share the full fit's design minus the mediator.
double difference_nie(const AftFit& reduced_fit, const AftFit& full_fit,
                      Contrast contrast);

// Direct effect: beta_a * (a - a_star).
double nde(const AftFit& full_fit, Contrast contrast);

// Delta-method standard error of the product alpha_a * beta_m, treating the
// two model fits as independent (no cross-covariance term):
// sqrt(alpha_a^2 var(beta_m) + beta_m^2 var(alpha_a)).
double delta_se_product(const LinearFit& mediator_fit, const AftFit& full_fit);

BootstrapResult bootstrap(const Dataset& dataset, LawKind law,
                          Contrast contrast, const BootstrapConfig& config,
                          double ci_level = 0.95);

// Fits the outcome model (exposure + mediator + covariates), the reduced
// model (exposure + covariates), and the linear mediator model, then
// assembles the decomposition above.
MediationEstimates analyze(
    const Dataset& dataset, LawKind law, Contrast contrast,
    const std::optional<BootstrapConfig>& bootstrap_config = std::nullopt,
    double ci_level = 0.95);

// Aggregation helpers shared with the simulation layer and tests.
double sample_sd(const std::vector<double>& values);      // divisor m - 1
double percentile(std::vector<double> values, double q);  // linear interpolation

}  // namespace aftmed
