// Simulation engine: scenario truths, censoring mechanics and calibration,
// replicate determinism across worker counts, and summary reduction.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aftmed/dataset.hpp"
#include "aftmed/errors.hpp"
#include "aftmed/rng.hpp"
#include "aftmed/simulate.hpp"

using namespace aftmed;
namespace fs = std::filesystem;

namespace {

bool replicates_equal(const std::vector<SimEngine::Replicate>& a,
                      const std::vector<SimEngine::Replicate>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].converged != b[i].converged) return false;
    if (a[i].nde != b[i].nde) return false;
    if (a[i].nie_product != b[i].nie_product) return false;
    if (a[i].nie_difference != b[i].nie_difference) return false;
    if (a[i].total_reduced != b[i].total_reduced) return false;
    if (a[i].censored_fraction != b[i].censored_fraction) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("scenario presets carry their design constants") {
  const SimScenario normal = SimScenario::normal_scenario();
  CHECK(normal.true_ie() == doctest::Approx(2.0));
  CHECK(normal.reduced_exposure() == doctest::Approx(6.0));
  CHECK(normal.reduced_intercept() == doctest::Approx(180.0));
  CHECK(normal.outcome_law == LawKind::standard_normal);
  CHECK(normal.censoring.kind == CensoringKind::right_only);
  CHECK(normal.censoring.target_fraction == doctest::Approx(0.70));
  // Marginal response sd: sqrt(6^2/4 + 16 + 1).
  CHECK(normal.marginal_response_sd() ==
        doctest::Approx(std::sqrt(26.0)).epsilon(1e-12));

  const SimScenario weibull = SimScenario::weibull_scenario();
  CHECK(weibull.true_ie() == doctest::Approx(0.18));
  CHECK(weibull.reduced_exposure() == doctest::Approx(0.68));
  CHECK(weibull.outcome_law == LawKind::extreme_value_min);
  CHECK(weibull.censoring.kind == CensoringKind::right_only);
  CHECK(weibull.censoring.target_fraction == doctest::Approx(0.30));
}

TEST_CASE("scenario validation rejects broken configurations") {
  SimScenario s = SimScenario::normal_scenario();
  SUBCASE("exposure probability inside (0,1)") {
    s.exposure_prob = 0.0;
    CHECK_THROWS(s.validate());
  }
  SUBCASE("convolved outcome law is not generable") {
    s.outcome_law = LawKind::convolved;
    CHECK_THROWS(s.validate());
  }
  SUBCASE("interval probabilities must sum to one") {
    s.censoring.kind = CensoringKind::right_and_interval;
    s.censoring.intervals.probabilities = {0.5, 0.2, 0.2, 0.2};
    CHECK_THROWS(s.validate());
  }
  SUBCASE("positive scale and mediator sd") {
    s.sigma = 0.0;
    CHECK_THROWS(s.validate());
  }
}

TEST_CASE("interval scheme mean length is the probability-weighted sum") {
  IntervalScheme scheme;
  CHECK(scheme.mean_length() == doctest::Approx(0.25 * 0.5 + 0.4 * 1.0 +
                                                0.25 * 2.0 + 0.1 * 4.0));
}

TEST_CASE("right-censoring replaces only outcomes past the drawn time") {
  // A near-degenerate censor law pins log C at its location.
  CensorModel model;
  model.active = true;
  model.family = LawKind::standard_normal;
  model.location = 1.0;
  model.scale = 1e-12;
  RngStream rng(1, 0);
  const std::vector<double> responses{0.2, 0.9, 1.5, 3.0};
  const auto outcomes = apply_right_censoring(responses, model, rng);
  REQUIRE(outcomes.size() == 4);
  CHECK(outcomes[0].kind == OutcomeKind::exact);
  CHECK(outcomes[0].time == doctest::Approx(std::exp(0.2)));
  CHECK(outcomes[1].kind == OutcomeKind::exact);
  CHECK(outcomes[2].kind == OutcomeKind::right_censored);
  CHECK(outcomes[2].time == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
  CHECK(outcomes[3].kind == OutcomeKind::right_censored);

  // An inactive model is the identity.
  CensorModel off;
  RngStream rng2(1, 0);
  const auto untouched = apply_right_censoring(responses, off, rng2);
  for (std::size_t i = 0; i < untouched.size(); ++i) {
    CHECK(untouched[i].kind == OutcomeKind::exact);
    CHECK(untouched[i].time == doctest::Approx(std::exp(responses[i])));
  }
}

TEST_CASE("interval censoring brackets exact outcomes and spares the rest") {
  IntervalScheme fixed_len;
  fixed_len.lengths = {2.0};
  fixed_len.probabilities = {1.0};

  std::vector<SurvivalOutcome> outcomes;
  outcomes.push_back(SurvivalOutcome::exact(std::exp(1.0)));
  outcomes.push_back(SurvivalOutcome::right_censored(std::exp(0.4)));
  outcomes.push_back(SurvivalOutcome::exact(std::exp(-0.7)));

  RngStream rng(9, 0);
  const auto result = apply_interval_censoring(outcomes, fixed_len, rng);
  REQUIRE(result.size() == 3);
  for (std::size_t i : {std::size_t{0}, std::size_t{2}}) {
    const double original = (i == 0) ? 1.0 : -0.7;
    CHECK(result[i].kind == OutcomeKind::interval_censored);
    const double lo = std::log(result[i].time);
    const double hi = std::log(result[i].upper);
    CHECK(hi - lo == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(lo <= original + 1e-12);
    CHECK(hi >= original - 1e-12);
  }
  CHECK(result[1].kind == OutcomeKind::right_censored);
  CHECK(result[1].time == doctest::Approx(std::exp(0.4)));

  // A zero-length draw keeps the outcome exact.
  IntervalScheme zero_len;
  zero_len.lengths = {0.0};
  zero_len.probabilities = {1.0};
  RngStream rng2(9, 1);
  const auto untouched = apply_interval_censoring(outcomes, zero_len, rng2);
  CHECK(untouched[0].kind == OutcomeKind::exact);
  CHECK(untouched[2].kind == OutcomeKind::exact);
}

TEST_CASE("censoring calibration hits its target fraction") {
  SUBCASE("normal scenario, 70% right") {
    const SimEngine engine(SimScenario::normal_scenario());
    CHECK(engine.censor_model().active);
    CHECK(std::abs(engine.censor_model().pilot_fraction - 0.70) <= 0.02);
    const Dataset data = engine.generate(0);
    const CensoringSummary s = summarize(data);
    CHECK(s.n == 800);
    CHECK(std::abs(s.right_censored_fraction - 0.70) < 0.06);
  }
  SUBCASE("weibull scenario, 30% right") {
    SimScenario scenario = SimScenario::weibull_scenario();
    scenario.n = 20000;
    const SimEngine engine(scenario);
    const Dataset data = engine.generate(3);
    const CensoringSummary s = summarize(data);
    CHECK(std::abs(s.right_censored_fraction - 0.30) < 0.02);
  }
  SUBCASE("right-and-interval mixes both kinds") {
    SimScenario scenario = SimScenario::normal_scenario();
    scenario.censoring.kind = CensoringKind::right_and_interval;
    scenario.n = 4000;
    const SimEngine engine(scenario);
    const Dataset data = engine.generate(1);
    const CensoringSummary s = summarize(data);
    CHECK(s.right_censored_count > 0);
    CHECK(s.interval_censored_count > 0);
    CHECK(std::abs(s.right_censored_fraction - 0.70) < 0.05);
    // Every default interval length is positive, so each non-right-censored
    // row becomes an interval.
    CHECK(s.exact_count == 0);
    CHECK(std::abs(s.interval_censored_fraction - 0.30) < 0.05);
  }
}

TEST_CASE("datasets and replicates are deterministic by (seed, index)") {
  SimScenario scenario = SimScenario::weibull_scenario();
  scenario.n = 200;
  scenario.replicates = 10;
  scenario.seed = 33;
  const SimEngine engine(scenario);

  const Dataset first = engine.generate(5);
  const Dataset again = engine.generate(5);
  REQUIRE(first.size() == again.size());
  bool identical = true;
  for (std::size_t i = 0; i < first.size(); ++i) {
    identical = identical &&
                first.subjects()[i].outcome.time ==
                    again.subjects()[i].outcome.time &&
                first.subjects()[i].exposure == again.subjects()[i].exposure &&
                first.subjects()[i].mediator == again.subjects()[i].mediator;
  }
  CHECK(identical);

  const auto serial = engine.run_replicates(1);
  const auto threaded = engine.run_replicates(4);
  REQUIRE(serial.size() == 10);
  CHECK(replicates_equal(serial, threaded));

  // A fresh engine with the same scenario reproduces the same replicates.
  const SimEngine rebuilt(scenario);
  CHECK(replicates_equal(serial, rebuilt.run_replicates(2)));

  // Different seeds decouple the streams.
  scenario.seed = 34;
  const SimEngine other(scenario);
  CHECK_FALSE(replicates_equal(serial, other.run_replicates(1)));
}

TEST_CASE("summarize reduces replicates with the documented formulas") {
  SimScenario scenario = SimScenario::weibull_scenario();
  scenario.censoring.kind = CensoringKind::none;
  scenario.censoring.target_fraction = 0.0;
  scenario.n = 100;
  scenario.replicates = 4;
  const SimEngine engine(scenario);

  std::vector<SimEngine::Replicate> reps(4);
  const double p[] = {0.17, 0.19, 0.18, 0.20};
  const double d[] = {0.10, 0.12, 0.11, 0.13};
  const double t[] = {0.60, 0.70, 0.65, 0.75};
  for (int i = 0; i < 4; ++i) {
    reps[i].converged = true;
    reps[i].nie_product = p[i];
    reps[i].nie_difference = d[i];
    reps[i].total_reduced = t[i];
    reps[i].censored_fraction = 0.25;
  }
  const SimSummary s = engine.summarize(reps);
  CHECK(s.replicate_count == 4);
  CHECK(s.nonconverged_count == 0);
  CHECK(s.mean_nie_product == doctest::Approx(0.185).epsilon(1e-14));
  CHECK(s.mean_nie_difference == doctest::Approx(0.115).epsilon(1e-14));
  CHECK(s.mean_total_reduced == doctest::Approx(0.675).epsilon(1e-14));
  // Gap between the Monte Carlo means, relative to the product mean.
  CHECK(s.abs_prop_difference ==
        doctest::Approx(std::abs(0.185 - 0.115) / 0.185).epsilon(1e-12));
  // Truth for the weibull preset is 0.18.
  CHECK(s.prop_bias_product ==
        doctest::Approx(std::abs(0.185 - 0.18) / 0.18).epsilon(1e-10));
  CHECK(s.prop_bias_difference ==
        doctest::Approx(std::abs(0.115 - 0.18) / 0.18).epsilon(1e-10));
  // Sample variance with divisor m - 1: deviations from 0.185 are
  // {-0.015, 0.005, -0.005, 0.015}.
  CHECK(s.var_nie_product == doctest::Approx(5e-4 / 3.0).epsilon(1e-10));
  CHECK(s.mean_censored_fraction == doctest::Approx(0.25));
}

TEST_CASE("summarize fails loudly past the nonconvergence budget") {
  SimScenario scenario = SimScenario::weibull_scenario();
  scenario.censoring.kind = CensoringKind::none;
  scenario.n = 100;
  scenario.replicates = 100;
  const SimEngine engine(scenario);

  std::vector<SimEngine::Replicate> reps(100);
  for (auto& r : reps) {
    r.converged = true;
    r.nie_product = 0.18;
    r.nie_difference = 0.18;
    r.total_reduced = 0.68;
  }
  reps[7].converged = false;
  CHECK_NOTHROW(engine.summarize(reps));  // 1% is within budget
  reps[8].converged = false;
  CHECK_THROWS_AS(engine.summarize(reps), SimulationError);  // 2% is not
}

TEST_CASE("an uncensored run keeps both estimators equal per replicate") {
  SimScenario scenario = SimScenario::normal_scenario();
  scenario.censoring.kind = CensoringKind::none;
  scenario.censoring.target_fraction = 0.0;
  scenario.n = 300;
  scenario.replicates = 6;
  scenario.seed = 19;
  const SimEngine engine(scenario);
  CHECK_FALSE(engine.censor_model().active);
  for (const auto& r : engine.run_replicates(1)) {
    REQUIRE(r.converged);
    CHECK(r.censored_fraction == 0.0);
    CHECK(std::abs(r.nie_product - r.nie_difference) < 1e-8);
  }
}

TEST_CASE("figure data lands as tidy long-format csv") {
  SimScenario scenario = SimScenario::weibull_scenario();
  scenario.censoring.kind = CensoringKind::none;
  scenario.n = 120;
  scenario.replicates = 3;
  scenario.seed = 77;
  const SimEngine engine(scenario);
  const SimSummary summary = engine.run(1);

  const fs::path path =
      fs::temp_directory_path() / "aftmed_test_figure_data.csv";
  emit_figure_data({summary}, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "scenario,n,metric,value");
  std::size_t rows = 0;
  bool all_tagged = true;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    all_tagged = all_tagged && line.rfind("weibull,120,", 0) == 0;
  }
  CHECK(rows >= 10);  // one per summary metric
  CHECK(all_tagged);
  fs::remove(path);
}
