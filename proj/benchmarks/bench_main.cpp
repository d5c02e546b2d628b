// Microbenchmarks for the numerical hot paths: model fitting across
// censoring mixes and residual laws, the convolution law's quadrature-backed
// density and tail, the expected-score evaluation, and end-to-end simulation
// replicate throughput.

#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "aftmed/aft.hpp"
#include "aftmed/dataset.hpp"
#include "aftmed/error_law.hpp"
#include "aftmed/mediation.hpp"
#include "aftmed/rng.hpp"
#include "aftmed/score_oracle.hpp"
#include "aftmed/simulate.hpp"

namespace {

using namespace aftmed;

// Mediated survival data with ~25% right and ~20% interval censoring.
Dataset make_dataset(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0);
  std::vector<Subject> subjects;
  subjects.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Subject s;
    s.exposure = (rng.uniform() < 0.5) ? 1.0 : 0.0;
    s.mediator = 0.1 - 0.4 * s.exposure + rng.normal();
    s.covariates = {rng.normal()};
    const double response = 1.5 + 0.6 * s.exposure - 0.5 * s.mediator +
                            0.2 * s.covariates[0] + 0.7 * rng.normal();
    const double u = rng.uniform();
    if (u < 0.25) {
      s.outcome = SurvivalOutcome::right_censored(
          std::exp(response) * (0.3 + 0.6 * rng.uniform()));
    } else if (u < 0.45) {
      s.outcome = SurvivalOutcome::interval(std::exp(response - 0.3),
                                            std::exp(response + 0.4));
    } else {
      s.outcome = SurvivalOutcome::exact(std::exp(response));
    }
    subjects.push_back(std::move(s));
  }
  return Dataset(std::move(subjects), {"age"});
}

void BM_FitOutcomeModel(benchmark::State& state, LawKind law) {
  const Dataset data = make_dataset(static_cast<std::size_t>(state.range(0)),
                                    4501);
  DesignSpec design;
  design.mediator = true;
  const AftSpec spec{law, design};
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit(spec, data));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_FitOutcomeModel, normal, LawKind::standard_normal)
    ->Arg(800)
    ->Arg(4000)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_FitOutcomeModel, weibull, LawKind::extreme_value_min)
    ->Arg(800)
    ->Arg(4000)
    ->Unit(benchmark::kMillisecond);

void BM_ConvolvedLogDensity(benchmark::State& state) {
  const ErrorLaw law =
      ErrorLaw::convolved(LawKind::extreme_value_min, 0.25, -0.6, 1.0);
  double x = -3.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(law.log_density(x));
    x += 0.1;
    if (x > 3.0) {
      x = -3.0;
    }
  }
}
BENCHMARK(BM_ConvolvedLogDensity)->Unit(benchmark::kMicrosecond);

void BM_ConvolvedSurvival(benchmark::State& state) {
  const ErrorLaw law =
      ErrorLaw::convolved(LawKind::extreme_value_min, 0.25, -0.6, 1.0);
  double x = -3.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(law.survival(x));
    x += 0.1;
    if (x > 3.0) {
      x = -3.0;
    }
  }
}
BENCHMARK(BM_ConvolvedSurvival)->Unit(benchmark::kMicrosecond);

void BM_ExpectedScore(benchmark::State& state) {
  ScoreBiasConfig cfg;
  cfg.true_law =
      ErrorLaw::convolved(LawKind::extreme_value_min, 0.25, -0.6, 1.0);
  cfg.assumed_law = ErrorLaw::extreme_value_min();
  cfg.assumed_scale =
      std::sqrt(cfg.true_law.variance() / cfg.assumed_law.variance());
  cfg.true_intercept = 4.0;
  cfg.true_exposure = 0.68;
  cfg.probe_intercept = 4.0;
  cfg.probe_exposure = 0.68;
  cfg.censor = CensorSpec::from_law(LawKind::extreme_value_min, 4.77, 0.25);
  for (auto _ : state) {
    benchmark::DoNotOptimize(expected_score_right_censoring(cfg, 1e-8));
  }
}
BENCHMARK(BM_ExpectedScore)->Unit(benchmark::kMillisecond);

void BM_SimulationReplicate(benchmark::State& state, LawKind law) {
  SimScenario scenario = law == LawKind::standard_normal
                             ? SimScenario::normal_scenario()
                             : SimScenario::weibull_scenario();
  scenario.n = static_cast<std::size_t>(state.range(0));
  scenario.replicates = 1;
  scenario.seed = 77;
  const SimEngine engine(scenario);
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.run_replicates(1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_SimulationReplicate, normal, LawKind::standard_normal)
    ->Arg(800)
    ->Arg(4000)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SimulationReplicate, weibull, LawKind::extreme_value_min)
    ->Arg(800)
    ->Arg(4000)
    ->Unit(benchmark::kMillisecond);

void BM_BootstrapMediation(benchmark::State& state) {
  const Dataset data = make_dataset(240, 9903);
  const Contrast contrast{1.0, 0.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(analyze(data, LawKind::extreme_value_min,
                                     contrast, BootstrapConfig{20, 5, 1}));
  }
}
BENCHMARK(BM_BootstrapMediation)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
