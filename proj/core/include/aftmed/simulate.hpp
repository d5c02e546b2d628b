#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aftmed/dataset.hpp"
#include "aftmed/error_law.hpp"
#include "aftmed/rng.hpp"

namespace aftmed {

// Interval lengths are drawn from this categorical distribution on the
// response (log-time) scale; a zero length leaves the outcome exact.
// Probabilities must sum to 1.
struct IntervalScheme {
  std::vector<double> lengths{0.5, 1.0, 2.0, 4.0};
  std::vector<double> probabilities{0.25, 0.40, 0.25, 0.10};

  double mean_length() const;
  void validate() const;
};

enum class CensoringKind { none, right_only, right_and_interval };

struct CensoringScheme {
  CensoringKind kind = CensoringKind::none;
  double target_fraction = 0.0;  // right-censored fraction to calibrate to
  IntervalScheme intervals;      // used when kind == right_and_interval
};

// Data-generating process:
//   A ~ Bernoulli(exposure_prob)
//   M = alpha0 + alpha_a A + mediator_sd * N(0, 1)
//   response = beta0 + beta_a A + beta_m M + sigma * eps,  eps ~ outcome_law
//   stored event time = exp(response)
// so the fitted log-time models see the response scale directly: a normal
// outcome law makes the response itself Gaussian, the extreme-value law makes
// the event time Weibull.
struct SimScenario {
  std::string name = "custom";
  LawKind outcome_law = LawKind::standard_normal;
  double alpha0 = 0.0;
  double alpha_a = -0.5;
  double mediator_sd = 1.0;
  double beta0 = 180.0;
  double beta_a = 4.0;
  double beta_m = -4.0;
  double sigma = 1.0;
  double exposure_prob = 0.5;
  CensoringScheme censoring;
  std::size_t n = 800;
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;

  // True indirect effect for the unit exposure contrast.
  double true_ie() const { return alpha_a * beta_m; }
  // Reduced-form (mediator-marginalized) coefficients.
  double reduced_intercept() const { return beta0 + beta_m * alpha0; }
  double reduced_exposure() const { return beta_a + beta_m * alpha_a; }
  double marginal_response_sd() const;

  static SimScenario normal_scenario();
  static SimScenario weibull_scenario();
  void validate() const;
};

// Right-censoring law on the response scale: log C = location + scale * e
// with e drawn from the family law. Calibrated against a pilot sample so the
// censored fraction hits the scenario target.
struct CensorModel {
  bool active = false;
  LawKind family = LawKind::standard_normal;
  double location = 0.0;
  double scale = 1.0;
  double pilot_fraction = 0.0;  // censored fraction achieved on the pilot
};

// One censoring draw per response; time <= C stays exact, otherwise the
// outcome is right-censored at C.
std::vector<SurvivalOutcome> apply_right_censoring(
    const std::vector<double>& responses, const CensorModel& model,
    RngStream& rng);

// Interval-censors each exact outcome: draw a length L, a position
// U ~ uniform(0,1), and replace the exact response w with the interval
// (w - U L, w + (1-U) L); L = 0 keeps the outcome exact. Endpoints map back
// through exp, so times stay positive by construction. Censored outcomes
// pass through unchanged.
std::vector<SurvivalOutcome> apply_interval_censoring(
    std::vector<SurvivalOutcome> outcomes, const IntervalScheme& scheme,
    RngStream& rng);

struct SimSummary {
  std::string scenario;
  std::size_t n = 0;
  std::size_t replicate_count = 0;  // converged replicates
  std::size_t nonconverged_count = 0;

  // Monte Carlo means of the two indirect-effect estimators and the
  // reduced-model exposure coefficient (the total-effect estimator).
  double mean_nie_product = 0.0;
  double mean_nie_difference = 0.0;
  double mean_total_reduced = 0.0;

  // |mean_p - mean_d| / |mean_p| over the Monte Carlo means, and the
  // mean-based |mean - truth| / |truth| proportion biases.
  double abs_prop_difference = 0.0;
  double prop_bias_product = 0.0;
  double prop_bias_difference = 0.0;

  // Sample variances over converged replicates.
  double var_nie_product = 0.0;
  double var_nie_difference = 0.0;
  double var_total_reduced = 0.0;

  double mean_censored_fraction = 0.0;
};

// Owns a validated scenario plus its calibrated censoring model. Replicate r
// draws everything from the stream (seed, r), so datasets and estimates are
// reproducible regardless of execution order or worker count.
class SimEngine {
 public:
  explicit SimEngine(SimScenario scenario);

  const SimScenario& scenario() const { return scenario_; }
  const CensorModel& censor_model() const { return censor_; }

  Dataset generate(std::size_t replicate_index) const;

  struct Replicate {
    bool converged = false;
    double nde = 0.0;
    double nie_product = 0.0;
    double nie_difference = 0.0;
    double total_reduced = 0.0;
    double censored_fraction = 0.0;
    std::string error;
  };

  // Per-replicate estimates in replicate order.
  std::vector<Replicate> run_replicates(std::size_t workers = 1) const;

  // Reduces an ordered replicate log; more than 1% non-convergence aborts.
  SimSummary summarize(const std::vector<Replicate>& replicates) const;

  SimSummary run(std::size_t workers = 1) const;

 private:
  SimScenario scenario_;
  ErrorLaw outcome_law_ = ErrorLaw::standard_normal();
  CensorModel censor_;
};

// Tidy long-format CSV: scenario,n,metric,value — one row per summary metric.
void emit_figure_data(const std::vector<SimSummary>& summaries,
                      const std::filesystem::path& path);

}  // namespace aftmed
