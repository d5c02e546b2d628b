// Mediation decomposition: effect identities, contrast scaling, delta and
// bootstrap standard errors, and scheduling-independent bootstrap streams.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "aftmed/aft.hpp"
#include "aftmed/dataset.hpp"
#include "aftmed/errors.hpp"
#include "aftmed/mediation.hpp"
#include "aftmed/rng.hpp"

using namespace aftmed;

namespace {

// Mediated normal-outcome data with a fixed censoring time. True effects for
// contrast (1,0): nde = beta_a, nie = alpha_a * beta_m.
Dataset mediated_dataset(std::size_t n, std::uint64_t seed,
                         double censor_fraction_knob) {
  RngStream rng(seed, 0);
  std::vector<Subject> subjects;
  subjects.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Subject s;
    s.exposure = (rng.uniform() < 0.5) ? 1.0 : 0.0;
    s.mediator = 0.2 - 0.5 * s.exposure + rng.normal();
    const double response = 2.0 + 0.7 * s.exposure - 0.6 * s.mediator +
                            0.8 * rng.normal();
    // Exponential-ish censor time on the response scale.
    const double c = censor_fraction_knob - std::log(rng.uniform());
    if (response <= c) {
      s.outcome = SurvivalOutcome::exact(std::exp(response));
    } else {
      s.outcome = SurvivalOutcome::right_censored(std::exp(c));
    }
    subjects.push_back(std::move(s));
  }
  return Dataset(std::move(subjects));
}

bool ci_equal(const ConfidenceInterval& a, const ConfidenceInterval& b) {
  return a.lower == b.lower && a.upper == b.upper;
}

}  // namespace

TEST_CASE("aggregation helpers: sample sd and type-7 percentiles") {
  CHECK(sample_sd({4.0, 4.0, 4.0, 4.0}) == 0.0);
  // Hand value: sd of {1,2,3,4} with divisor m-1.
  CHECK(sample_sd({1.0, 2.0, 3.0, 4.0}) ==
        doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-14));

  std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 5.0);
  CHECK(percentile(v, 0.5) == 3.0);
  CHECK(percentile(v, 0.25) == 2.0);           // h = (m-1) q lands on index 1
  CHECK(percentile(v, 0.1) == doctest::Approx(1.4).epsilon(1e-14));
  // Order must not matter.
  std::vector<double> shuffled{5.0, 1.0, 4.0, 2.0, 3.0};
  CHECK(percentile(shuffled, 0.1) == doctest::Approx(1.4).epsilon(1e-14));
  // Constant vectors pin both tails.
  std::vector<double> flat{7.0, 7.0, 7.0};
  CHECK(percentile(flat, 0.025) == 7.0);
  CHECK(percentile(flat, 0.975) == 7.0);
}

TEST_CASE("effect helpers agree with direct arithmetic on the fits") {
  const Dataset data = mediated_dataset(900, 17, 3.2);

  AftSpec full;
  full.law = LawKind::standard_normal;
  full.design.mediator = true;
  AftSpec reduced;
  reduced.law = LawKind::standard_normal;
  reduced.design.mediator = false;

  const AftFit full_fit = fit(full, data);
  const AftFit reduced_fit = fit(reduced, data);
  const LinearFit mediator_fit = fit_linear(data, true);
  REQUIRE(full_fit.converged);
  REQUIRE(reduced_fit.converged);

  const Contrast unit{1.0, 0.0};
  const double alpha_a = mediator_fit.coefficients[mediator_fit.index_of("exposure")];
  const double beta_a = full_fit.coefficients[full_fit.index_of("exposure")];
  const double beta_m = full_fit.coefficients[full_fit.index_of("mediator")];
  const double tau_a = reduced_fit.coefficients[reduced_fit.index_of("exposure")];

  CHECK(nde(full_fit, unit) == beta_a);
  CHECK(product_nie(mediator_fit, full_fit, unit) == alpha_a * beta_m);
  CHECK(difference_nie(reduced_fit, full_fit, unit) == tau_a - beta_a);

  const double va = mediator_fit.covariance(
      static_cast<Eigen::Index>(mediator_fit.index_of("exposure")),
      static_cast<Eigen::Index>(mediator_fit.index_of("exposure")));
  const double vb = full_fit.covariance(
      static_cast<Eigen::Index>(full_fit.index_of("mediator")),
      static_cast<Eigen::Index>(full_fit.index_of("mediator")));
  CHECK(delta_se_product(mediator_fit, full_fit) ==
        doctest::Approx(std::sqrt(alpha_a * alpha_a * vb + beta_m * beta_m * va))
            .epsilon(1e-12));

  // Doubling the contrast doubles every effect exactly.
  const Contrast twice{2.0, 0.0};
  CHECK(nde(full_fit, twice) == 2.0 * nde(full_fit, unit));
  CHECK(product_nie(mediator_fit, full_fit, twice) ==
        2.0 * product_nie(mediator_fit, full_fit, unit));
  CHECK(difference_nie(reduced_fit, full_fit, twice) ==
        2.0 * difference_nie(reduced_fit, full_fit, unit));
}

TEST_CASE("analyze enforces the decomposition identities exactly") {
  const Dataset data = mediated_dataset(700, 5, 3.0);
  const MediationEstimates est =
      analyze(data, LawKind::standard_normal, Contrast{1.0, 0.0});

  REQUIRE(est.converged);
  CHECK(est.total_product == est.nde + est.nie_product);
  CHECK(est.nie_difference == est.total_difference - est.nde);
  CHECK(std::isfinite(est.se_nde));
  CHECK(est.se_nde > 0.0);
  CHECK(est.se_nie_product > 0.0);
  CHECK(est.se_total_difference > 0.0);
  CHECK(est.ci_nde.lower < est.nde);
  CHECK(est.ci_nde.upper > est.nde);
  // No bootstrap requested: the bootstrap-only fields stay empty.
  CHECK_FALSE(est.se_nie_difference.has_value());
  CHECK_FALSE(est.se_total_product.has_value());
  CHECK(est.bootstrap_replicates_used == 0);

  // Point estimates sit near the generating truths.
  CHECK(std::abs(est.nde - 0.7) < 0.2);
  CHECK(std::abs(est.nie_product - 0.3) < 0.2);

  // Normal-law censoring keeps the reduced-form total trustworthy.
  CHECK_FALSE(est.total_difference_flagged);
}

TEST_CASE("contrast antisymmetry flips every effect") {
  const Dataset data = mediated_dataset(500, 29, 2.8);
  const MediationEstimates pos =
      analyze(data, LawKind::standard_normal, Contrast{1.0, 0.0});
  const MediationEstimates neg =
      analyze(data, LawKind::standard_normal, Contrast{0.0, 1.0});
  CHECK(pos.nde == -neg.nde);
  CHECK(pos.nie_product == -neg.nie_product);
  CHECK(pos.nie_difference == -neg.nie_difference);
  CHECK(pos.total_product == -neg.total_product);
  CHECK(pos.total_difference == -neg.total_difference);
}

TEST_CASE("extreme-value law flags the reduced-form total under censoring") {
  const Dataset censored = mediated_dataset(500, 31, 2.8);
  const MediationEstimates flagged =
      analyze(censored, LawKind::extreme_value_min, Contrast{1.0, 0.0});
  CHECK(flagged.total_difference_flagged);

  // Fully observed data leaves nothing to flag.
  std::vector<Subject> exact_rows;
  RngStream rng(32, 0);
  for (int i = 0; i < 400; ++i) {
    Subject s;
    s.exposure = (i % 2 == 0) ? 1.0 : 0.0;
    s.mediator = 0.1 - 0.4 * s.exposure + rng.normal();
    s.outcome = SurvivalOutcome::exact(
        std::exp(1.0 + 0.5 * s.exposure - 0.5 * s.mediator +
                 0.6 * rng.gumbel_min()));
    exact_rows.push_back(std::move(s));
  }
  const MediationEstimates clean = analyze(
      Dataset(std::move(exact_rows)), LawKind::extreme_value_min,
      Contrast{1.0, 0.0});
  CHECK_FALSE(clean.total_difference_flagged);
}

TEST_CASE("bootstrap is deterministic in seed and worker count") {
  const Dataset data = mediated_dataset(350, 101, 3.0);
  BootstrapConfig cfg;
  cfg.replicates = 80;
  cfg.seed = 12;

  cfg.workers = 1;
  const BootstrapResult serial = bootstrap(
      data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg);
  cfg.workers = 3;
  const BootstrapResult threaded = bootstrap(
      data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg);

  CHECK(serial.se_nde == threaded.se_nde);
  CHECK(serial.se_nie_product == threaded.se_nie_product);
  CHECK(serial.se_nie_difference == threaded.se_nie_difference);
  CHECK(serial.se_total_product == threaded.se_total_product);
  CHECK(serial.se_total_difference == threaded.se_total_difference);
  CHECK(ci_equal(serial.ci_nie_difference, threaded.ci_nie_difference));
  CHECK(ci_equal(serial.ci_total_product, threaded.ci_total_product));
  CHECK(serial.replicates_used == threaded.replicates_used);
  CHECK(serial.dropped == threaded.dropped);

  cfg.seed = 13;
  cfg.workers = 1;
  const BootstrapResult other = bootstrap(
      data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg);
  CHECK(other.se_nde != serial.se_nde);
}

TEST_CASE("bootstrap percentile intervals come from the replicate draws") {
  const Dataset data = mediated_dataset(300, 55, 3.0);
  BootstrapConfig cfg;
  cfg.replicates = 120;
  cfg.seed = 9;
  const BootstrapResult boot = bootstrap(
      data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg, 0.90);
  CHECK(boot.replicates_requested == 120);
  CHECK(boot.replicates_used + boot.dropped == 120);
  CHECK(boot.ci_nde.lower < boot.ci_nde.upper);
  CHECK(boot.ci_nie_difference.lower < boot.ci_nie_difference.upper);
  CHECK(boot.se_nie_difference > 0.0);
  // 120 < 40 / (1 - 0.90) = 400: the tails are too sparse and must say so.
  CHECK(boot.ci_underpowered);
}

TEST_CASE("underpowered flag follows the replicate budget rule") {
  const Dataset data = mediated_dataset(300, 56, 3.0);
  BootstrapConfig cfg;
  cfg.seed = 2;

  cfg.replicates = 900;  // >= 40 / 0.05 = 800 at the default 95% level
  const BootstrapResult big = bootstrap(
      data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg);
  CHECK(big.replicates_used > 800);
  CHECK_FALSE(big.ci_underpowered);

  cfg.replicates = 500;  // the default budget is honest about 95% tails
  const BootstrapResult small = bootstrap(
      data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg);
  CHECK(small.ci_underpowered);
}

TEST_CASE("excessive bootstrap drop rate aborts the analysis") {
  // One exact outcome among right-censored rows: resamples that miss it
  // violate the dataset invariant, so ~(1 - 1/n)^n of replicates drop, far
  // over the 5% budget.
  std::vector<Subject> subjects;
  RngStream rng(3, 0);
  for (int i = 0; i < 20; ++i) {
    Subject s;
    s.exposure = (i % 2 == 0) ? 1.0 : 0.0;
    s.mediator = rng.normal();
    if (i == 0) {
      s.outcome = SurvivalOutcome::exact(2.0);
    } else {
      s.outcome = SurvivalOutcome::right_censored(1.0 + rng.uniform());
    }
    subjects.push_back(std::move(s));
  }
  const Dataset data(std::move(subjects));
  BootstrapConfig cfg;
  cfg.replicates = 100;
  cfg.seed = 4;
  CHECK_THROWS_AS(
      bootstrap(data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg),
      FitError);
}

TEST_CASE("analyze with a bootstrap fills the bootstrap-route fields") {
  const Dataset data = mediated_dataset(400, 88, 3.1);
  BootstrapConfig cfg;
  cfg.replicates = 60;
  cfg.seed = 21;
  const MediationEstimates est = analyze(
      data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg);
  REQUIRE(est.converged);
  REQUIRE(est.se_nie_difference.has_value());
  REQUIRE(est.se_total_product.has_value());
  REQUIRE(est.ci_nie_difference.has_value());
  REQUIRE(est.ci_total_product.has_value());
  CHECK(*est.se_nie_difference > 0.0);
  CHECK(*est.se_total_product > 0.0);
  CHECK(est.bootstrap_replicates_used + est.bootstrap_dropped == 60);
  CHECK(est.bootstrap_ci_underpowered);  // 60 < 800

  // Bootstrap reruns with the same seed reproduce the same estimates.
  const MediationEstimates again = analyze(
      data, LawKind::standard_normal, Contrast{1.0, 0.0}, cfg);
  CHECK(*again.se_nie_difference == *est.se_nie_difference);
  CHECK(again.ci_nie_difference->lower == est.ci_nie_difference->lower);
}
