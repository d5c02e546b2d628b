#include "aftmed/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "aftmed/errors.hpp"
#include "aftmed/mediation.hpp"
#include "aftmed/parallel.hpp"

namespace aftmed {

namespace {

constexpr std::uint64_t kCalibrationStream = 0xFFFFFFFF00000001ull;
constexpr std::size_t kPilotSize = 1000000;
constexpr double kCalibrationTolerance = 0.02;
constexpr double kNonconvergenceLimit = 0.01;

ErrorLaw residual_law(LawKind kind) {
  switch (kind) {
    case LawKind::standard_normal:
      return ErrorLaw::standard_normal();
    case LawKind::extreme_value_min:
      return ErrorLaw::extreme_value_min();
    case LawKind::convolved:
      break;
  }
  throw std::invalid_argument(
      "scenario laws must be standard_normal or extreme_value_min");
}

double draw_length(const IntervalScheme& scheme, RngStream& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < scheme.lengths.size(); ++i) {
    cum += scheme.probabilities[i];
    if (u <= cum) return scheme.lengths[i];
  }
  return scheme.lengths.back();
}

}  // namespace

double IntervalScheme::mean_length() const {
  validate();
  double m = 0.0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    m += lengths[i] * probabilities[i];
  }
  return m;
}

void IntervalScheme::validate() const {
  if (lengths.empty() || lengths.size() != probabilities.size()) {
    throw std::invalid_argument(
        "interval scheme needs equally many lengths and probabilities");
  }
  double sum = 0.0;
  for (double l : lengths) {
    if (!std::isfinite(l) || l < 0.0) {
      throw std::invalid_argument(
          "interval lengths must be finite and nonnegative");
    }
  }
  for (double p : probabilities) {
    if (!std::isfinite(p) || p < 0.0) {
      throw std::invalid_argument(
          "interval probabilities must be finite and nonnegative");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("interval probabilities must sum to 1");
  }
}

double SimScenario::marginal_response_sd() const {
  const double tau = reduced_exposure();
  const double var = tau * tau * exposure_prob * (1.0 - exposure_prob) +
                     beta_m * beta_m * mediator_sd * mediator_sd +
                     sigma * sigma * residual_law(outcome_law).variance();
  return std::sqrt(var);
}

SimScenario SimScenario::normal_scenario() {
  SimScenario s;
  s.name = "normal";
  s.outcome_law = LawKind::standard_normal;
  s.alpha0 = 0.0;
  s.alpha_a = -0.5;
  s.mediator_sd = 1.0;
  s.beta0 = 180.0;
  s.beta_a = 4.0;
  s.beta_m = -4.0;
  s.sigma = 1.0;
  s.censoring.kind = CensoringKind::right_only;
  s.censoring.target_fraction = 0.70;
  return s;
}

SimScenario SimScenario::weibull_scenario() {
  SimScenario s;
  s.name = "weibull";
  s.outcome_law = LawKind::extreme_value_min;
  s.alpha0 = 0.0;
  s.alpha_a = -0.3;
  s.mediator_sd = 1.0;
  s.beta0 = 4.0;
  s.beta_a = 0.5;
  s.beta_m = -0.6;
  s.sigma = 0.25;
  s.censoring.kind = CensoringKind::right_only;
  s.censoring.target_fraction = 0.30;
  return s;
}

void SimScenario::validate() const {
  residual_law(outcome_law);  // rejects the convolved kind
  if (!(exposure_prob > 0.0 && exposure_prob < 1.0)) {
    throw std::invalid_argument("exposure_prob must lie in (0, 1)");
  }
  if (n < 2) throw std::invalid_argument("n must be at least 2");
  if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("sigma must be positive");
  }
  if (!(mediator_sd > 0.0) || !std::isfinite(mediator_sd)) {
    throw std::invalid_argument("mediator_sd must be positive");
  }
  for (double v : {alpha0, alpha_a, beta0, beta_a, beta_m}) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("scenario coefficients must be finite");
    }
  }
  if (censoring.kind != CensoringKind::none) {
    if (!(censoring.target_fraction > 0.0 &&
          censoring.target_fraction < 1.0)) {
      throw std::invalid_argument("target_fraction must lie in (0, 1)");
    }
  }
  if (censoring.kind == CensoringKind::right_and_interval) {
    censoring.intervals.validate();
  }
}

std::vector<SurvivalOutcome> apply_right_censoring(
    const std::vector<double>& responses, const CensorModel& model,
    RngStream& rng) {
  std::vector<SurvivalOutcome> outcomes;
  outcomes.reserve(responses.size());
  if (!model.active) {
    for (double w : responses) {
      outcomes.push_back(SurvivalOutcome::exact(std::exp(w)));
    }
    return outcomes;
  }
  const ErrorLaw family = residual_law(model.family);
  for (double w : responses) {
    const double wc = model.location + model.scale * family.sample(rng);
    if (w > wc) {
      outcomes.push_back(SurvivalOutcome::right_censored(std::exp(wc)));
    } else {
      outcomes.push_back(SurvivalOutcome::exact(std::exp(w)));
    }
  }
  return outcomes;
}

std::vector<SurvivalOutcome> apply_interval_censoring(
    std::vector<SurvivalOutcome> outcomes, const IntervalScheme& scheme,
    RngStream& rng) {
  scheme.validate();
  for (SurvivalOutcome& o : outcomes) {
    if (o.kind != OutcomeKind::exact) continue;
    const double length = draw_length(scheme, rng);
    if (length == 0.0) continue;
    const double u = rng.uniform();
    const double w = std::log(o.time);
    o = SurvivalOutcome::interval(std::exp(w - u * length),
                                  std::exp(w + (1.0 - u) * length));
  }
  return outcomes;
}

SimEngine::SimEngine(SimScenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  outcome_law_ = residual_law(scenario_.outcome_law);
  if (scenario_.censoring.kind == CensoringKind::none) return;

  censor_.active = true;
  censor_.family = scenario_.outcome_law;
  censor_.scale = scenario_.outcome_law == LawKind::standard_normal
                      ? scenario_.marginal_response_sd()
                      : scenario_.sigma;

  // Pilot sample on a stream reserved for calibration. Censored means
  // response > location + scale * e, so the location hitting the target
  // fraction is the (1 - target) pilot quantile of response - scale * e.
  RngStream pilot(scenario_.seed, kCalibrationStream);
  const ErrorLaw family = residual_law(censor_.family);
  std::vector<double> d(kPilotSize);
  for (double& v : d) {
    const double a = pilot.uniform() < scenario_.exposure_prob ? 1.0 : 0.0;
    const double m = scenario_.alpha0 + scenario_.alpha_a * a +
                     scenario_.mediator_sd * pilot.normal();
    const double w = scenario_.beta0 + scenario_.beta_a * a +
                     scenario_.beta_m * m +
                     scenario_.sigma * outcome_law_.sample(pilot);
    v = w - censor_.scale * family.sample(pilot);
  }
  censor_.location =
      percentile(d, 1.0 - scenario_.censoring.target_fraction);
  std::size_t censored = 0;
  for (double v : d) censored += v > censor_.location ? 1 : 0;
  censor_.pilot_fraction =
      static_cast<double>(censored) / static_cast<double>(kPilotSize);
  if (std::abs(censor_.pilot_fraction - scenario_.censoring.target_fraction) >
      kCalibrationTolerance) {
    throw SimulationError(
        "censoring calibration achieved " +
        std::to_string(censor_.pilot_fraction) + " against target " +
        std::to_string(scenario_.censoring.target_fraction));
  }
}

Dataset SimEngine::generate(std::size_t replicate_index) const {
  RngStream rng(scenario_.seed, replicate_index);
  const std::size_t n = scenario_.n;
  std::vector<double> exposures(n), mediators(n), responses(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform() < scenario_.exposure_prob ? 1.0 : 0.0;
    const double m = scenario_.alpha0 + scenario_.alpha_a * a +
                     scenario_.mediator_sd * rng.normal();
    exposures[i] = a;
    mediators[i] = m;
    responses[i] = scenario_.beta0 + scenario_.beta_a * a +
                   scenario_.beta_m * m +
                   scenario_.sigma * outcome_law_.sample(rng);
  }

  std::vector<SurvivalOutcome> outcomes;
  if (censor_.active) {
    outcomes = apply_right_censoring(responses, censor_, rng);
    if (scenario_.censoring.kind == CensoringKind::right_and_interval) {
      outcomes = apply_interval_censoring(
          std::move(outcomes), scenario_.censoring.intervals, rng);
    }
  } else {
    outcomes.reserve(n);
    for (double w : responses) {
      outcomes.push_back(SurvivalOutcome::exact(std::exp(w)));
    }
  }

  std::vector<Subject> subjects(n);
  for (std::size_t i = 0; i < n; ++i) {
    subjects[i].outcome = outcomes[i];
    subjects[i].exposure = exposures[i];
    subjects[i].mediator = mediators[i];
  }
  return Dataset(std::move(subjects), {});
}

std::vector<SimEngine::Replicate> SimEngine::run_replicates(
    std::size_t workers) const {
  std::vector<Replicate> slots(scenario_.replicates);
  parallel_for(scenario_.replicates, workers, [&](std::size_t r) {
    Replicate& slot = slots[r];
    try {
      const Dataset data = generate(r);
      slot.censored_fraction =
          aftmed::summarize(data).right_censored_fraction;
      const MediationEstimates est =
          analyze(data, scenario_.outcome_law, Contrast{1.0, 0.0});
      slot.converged = est.converged;
      slot.nde = est.nde;
      slot.nie_product = est.nie_product;
      slot.nie_difference = est.nie_difference;
      slot.total_reduced = est.total_difference;
    } catch (const std::exception& e) {
      slot.converged = false;
      slot.error = e.what();
    }
  });
  return slots;
}

SimSummary SimEngine::summarize(
    const std::vector<Replicate>& replicates) const {
  std::vector<double> nie_p, nie_d, total;
  nie_p.reserve(replicates.size());
  nie_d.reserve(replicates.size());
  total.reserve(replicates.size());
  double censored = 0.0;
  std::string first_error;
  for (const Replicate& r : replicates) {
    if (!r.converged) {
      if (first_error.empty() && !r.error.empty()) first_error = r.error;
      continue;
    }
    nie_p.push_back(r.nie_product);
    nie_d.push_back(r.nie_difference);
    total.push_back(r.total_reduced);
    censored += r.censored_fraction;
  }

  SimSummary out;
  out.scenario = scenario_.name;
  out.n = scenario_.n;
  out.replicate_count = nie_p.size();
  out.nonconverged_count = replicates.size() - nie_p.size();
  const double limit =
      kNonconvergenceLimit * static_cast<double>(replicates.size());
  if (out.replicate_count == 0 ||
      static_cast<double>(out.nonconverged_count) > limit) {
    std::string what = "simulation: " + std::to_string(out.nonconverged_count) +
                       " of " + std::to_string(replicates.size()) +
                       " replicates failed to converge";
    if (!first_error.empty()) what += "; first failure: " + first_error;
    throw SimulationError(what);
  }

  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  out.mean_nie_product = mean(nie_p);
  out.mean_nie_difference = mean(nie_d);
  out.mean_total_reduced = mean(total);
  const double mean_gap =
      std::abs(out.mean_nie_product - out.mean_nie_difference);
  out.abs_prop_difference =
      mean_gap == 0.0 ? 0.0 : mean_gap / std::abs(out.mean_nie_product);
  const double ie = scenario_.true_ie();
  out.prop_bias_product = std::abs(out.mean_nie_product - ie) / std::abs(ie);
  out.prop_bias_difference =
      std::abs(out.mean_nie_difference - ie) / std::abs(ie);
  const double sd_p = sample_sd(nie_p);
  const double sd_d = sample_sd(nie_d);
  const double sd_t = sample_sd(total);
  out.var_nie_product = sd_p * sd_p;
  out.var_nie_difference = sd_d * sd_d;
  out.var_total_reduced = sd_t * sd_t;
  out.mean_censored_fraction =
      censored / static_cast<double>(out.replicate_count);
  return out;
}

SimSummary SimEngine::run(std::size_t workers) const {
  return summarize(run_replicates(workers));
}

void emit_figure_data(const std::vector<SimSummary>& summaries,
                      const std::filesystem::path& path) {
  if (summaries.empty()) {
    throw std::invalid_argument("no summaries to emit");
  }
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << "scenario,n,metric,value\n";
  char buf[40];
  const auto row = [&](const SimSummary& s, const char* metric, double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << s.scenario << ',' << s.n << ',' << metric << ',' << buf << '\n';
  };
  for (const SimSummary& s : summaries) {
    row(s, "mean_nie_product", s.mean_nie_product);
    row(s, "mean_nie_difference", s.mean_nie_difference);
    row(s, "mean_total_reduced", s.mean_total_reduced);
    row(s, "abs_prop_difference", s.abs_prop_difference);
    row(s, "prop_bias_product", s.prop_bias_product);
    row(s, "prop_bias_difference", s.prop_bias_difference);
    row(s, "var_nie_product", s.var_nie_product);
    row(s, "var_nie_difference", s.var_nie_difference);
    row(s, "var_total_reduced", s.var_total_reduced);
    row(s, "mean_censored_fraction", s.mean_censored_fraction);
    row(s, "replicate_count", static_cast<double>(s.replicate_count));
    row(s, "nonconverged_count", static_cast<double>(s.nonconverged_count));
  }
  if (!out) {
    throw DataError("write failed for " + path.string());
  }
}

}  // namespace aftmed
