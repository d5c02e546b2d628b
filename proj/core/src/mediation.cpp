#include "aftmed/mediation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "aftmed/errors.hpp"
#include "aftmed/normal.hpp"
#include "aftmed/parallel.hpp"
#include "aftmed/rng.hpp"

namespace aftmed {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_reduced_design(const AftFit& reduced_fit, const AftFit& full_fit) {
  std::vector<std::string> expected;
  for (const std::string& name : full_fit.coefficient_names) {
    if (name != "mediator") expected.push_back(name);
  }
  if (reduced_fit.coefficient_names != expected) {
    throw std::invalid_argument(
        "reduced and full fits do not share an exposure/covariate design");
  }
}

ConfidenceInterval normal_ci(double estimate, double se, double level) {
  const double z = norm_quantile(0.5 + level / 2.0);
  return {estimate - z * se, estimate + z * se};
}

}  // namespace

double product_nie(const LinearFit& mediator_fit, const AftFit& full_fit,
                   Contrast contrast) {
  const double alpha_a =
      mediator_fit.coefficients[static_cast<Eigen::Index>(
          mediator_fit.index_of("exposure"))];
  const double beta_m = full_fit.coefficients[static_cast<Eigen::Index>(
      full_fit.index_of("mediator"))];
  return alpha_a * beta_m * contrast.delta();
}

double difference_nie(const AftFit& reduced_fit, const AftFit& full_fit,
                      Contrast contrast) {
  check_reduced_design(reduced_fit, full_fit);
  const double tau_a = reduced_fit.coefficients[static_cast<Eigen::Index>(
      reduced_fit.index_of("exposure"))];
  const double beta_a = full_fit.coefficients[static_cast<Eigen::Index>(
      full_fit.index_of("exposure"))];
  return (tau_a - beta_a) * contrast.delta();
}

double nde(const AftFit& full_fit, Contrast contrast) {
  return full_fit.coefficients[static_cast<Eigen::Index>(
             full_fit.index_of("exposure"))] *
         contrast.delta();
}

double delta_se_product(const LinearFit& mediator_fit,
                        const AftFit& full_fit) {
  if (!full_fit.covariance_available) {
    throw FitError("outcome-model covariance unavailable for the delta method");
  }
  const auto ia =
      static_cast<Eigen::Index>(mediator_fit.index_of("exposure"));
  const auto im = static_cast<Eigen::Index>(full_fit.index_of("mediator"));
  const double alpha_a = mediator_fit.coefficients[ia];
  const double beta_m = full_fit.coefficients[im];
  const double var_alpha_a = mediator_fit.covariance(ia, ia);
  const double var_beta_m = full_fit.covariance(im, im);
  return std::sqrt(alpha_a * alpha_a * var_beta_m +
                   beta_m * beta_m * var_alpha_a);
}

double sample_sd(const std::vector<double>& values) {
  const std::size_t m = values.size();
  if (m < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(m - 1));
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) {
    throw std::invalid_argument("percentile of an empty sample");
  }
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("percentile level must lie in [0, 1]");
  }
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

BootstrapResult bootstrap(const Dataset& dataset, LawKind law,
                          Contrast contrast, const BootstrapConfig& config,
                          double ci_level) {
  if (config.replicates < 2) {
    throw std::invalid_argument("bootstrap requires at least 2 replicates");
  }
  if (!(ci_level > 0.0 && ci_level < 1.0)) {
    throw std::invalid_argument("ci_level must lie in (0, 1)");
  }

  struct Slot {
    bool ok = false;
    double estimates[5] = {};
    std::string error;
  };
  const std::size_t n = dataset.size();
  const auto& subjects = dataset.subjects();
  std::vector<Slot> slots(config.replicates);

  parallel_for(config.replicates, config.workers, [&](std::size_t b) {
    Slot& slot = slots[b];
    try {
      RngStream rng(config.seed, b);
      std::vector<Subject> resampled;
      resampled.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        resampled.push_back(subjects[rng.uniform_index(n)]);
      }
      Dataset boot(std::move(resampled), dataset.covariate_names());
      const MediationEstimates est =
          analyze(boot, law, contrast, std::nullopt, ci_level);
      if (!est.converged) return;  // dropped
      slot.estimates[0] = est.nde;
      slot.estimates[1] = est.nie_product;
      slot.estimates[2] = est.nie_difference;
      slot.estimates[3] = est.total_product;
      slot.estimates[4] = est.total_difference;
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.error = e.what();  // dropped
    }
  });

  std::vector<double> kept[5];
  std::string first_error;
  for (const Slot& slot : slots) {
    if (slot.ok) {
      for (int k = 0; k < 5; ++k) kept[k].push_back(slot.estimates[k]);
    } else if (first_error.empty() && !slot.error.empty()) {
      first_error = slot.error;
    }
  }

  BootstrapResult out;
  out.replicates_requested = config.replicates;
  out.replicates_used = kept[0].size();
  out.dropped = config.replicates - out.replicates_used;
  const double drop_limit = 0.05 * static_cast<double>(config.replicates);
  if (out.replicates_used < 2 ||
      static_cast<double>(out.dropped) > drop_limit) {
    std::string what = "bootstrap dropped " + std::to_string(out.dropped) +
                       " of " + std::to_string(config.replicates) +
                       " resamples";
    if (!first_error.empty()) what += "; first failure: " + first_error;
    throw FitError(what);
  }
  out.ci_underpowered =
      static_cast<double>(out.replicates_used) < 40.0 / (1.0 - ci_level);

  const double q_lo = (1.0 - ci_level) / 2.0;
  const double q_hi = 1.0 - q_lo;
  double* ses[5] = {&out.se_nde, &out.se_nie_product, &out.se_nie_difference,
                    &out.se_total_product, &out.se_total_difference};
  ConfidenceInterval* cis[5] = {&out.ci_nde, &out.ci_nie_product,
                                &out.ci_nie_difference, &out.ci_total_product,
                                &out.ci_total_difference};
  for (int k = 0; k < 5; ++k) {
    *ses[k] = sample_sd(kept[k]);
    cis[k]->lower = percentile(kept[k], q_lo);
    cis[k]->upper = percentile(kept[k], q_hi);
  }
  return out;
}

MediationEstimates analyze(
    const Dataset& dataset, LawKind law, Contrast contrast,
    const std::optional<BootstrapConfig>& bootstrap_config, double ci_level) {
  if (!(ci_level > 0.0 && ci_level < 1.0)) {
    throw std::invalid_argument("ci_level must lie in (0, 1)");
  }
  AftSpec full_spec{law, DesignSpec{true, true, true}};
  AftSpec reduced_spec{law, DesignSpec{true, false, true}};
  const AftFit full = fit(full_spec, dataset);
  const AftFit reduced = fit(reduced_spec, dataset);
  const LinearFit mediator = fit_linear(dataset, true);

  MediationEstimates out;
  out.contrast = contrast;
  out.ci_level = ci_level;
  // Fully observed data keeps the reduced-form exposure coefficient
  // consistent even under the extreme-value law (the convolution shift is
  // absorbed by intercept and scale); censoring is what breaks it.
  const CensoringSummary censoring = summarize(dataset);
  out.total_difference_flagged =
      law == LawKind::extreme_value_min &&
      (censoring.right_censored_count + censoring.interval_censored_count) > 0;

  const double d = contrast.delta();
  out.nde = nde(full, contrast);
  out.nie_product = product_nie(mediator, full, contrast);
  out.total_product = out.nde + out.nie_product;
  out.total_difference = reduced.coefficients[static_cast<Eigen::Index>(
                             reduced.index_of("exposure"))] *
                         d;
  out.nie_difference = out.total_difference - out.nde;

  out.converged = full.converged && reduced.converged &&
                  full.covariance_available && reduced.covariance_available;
  if (out.converged) {
    const auto ie_full = static_cast<Eigen::Index>(full.index_of("exposure"));
    const auto ie_red =
        static_cast<Eigen::Index>(reduced.index_of("exposure"));
    const double ad = std::abs(d);
    out.se_nde = ad * std::sqrt(full.covariance(ie_full, ie_full));
    out.se_nie_product = ad * delta_se_product(mediator, full);
    out.se_total_difference =
        ad * std::sqrt(reduced.covariance(ie_red, ie_red));
    out.ci_nde = normal_ci(out.nde, out.se_nde, ci_level);
    out.ci_nie_product =
        normal_ci(out.nie_product, out.se_nie_product, ci_level);
    out.ci_total_difference =
        normal_ci(out.total_difference, out.se_total_difference, ci_level);
  } else {
    out.se_nde = out.se_nie_product = out.se_total_difference = kNan;
    out.ci_nde = out.ci_nie_product = out.ci_total_difference = {kNan, kNan};
  }

  if (bootstrap_config) {
    const BootstrapResult boot =
        bootstrap(dataset, law, contrast, *bootstrap_config, ci_level);
    out.se_nie_difference = boot.se_nie_difference;
    out.se_total_product = boot.se_total_product;
    out.ci_nie_difference = boot.ci_nie_difference;
    out.ci_total_product = boot.ci_total_product;
    out.bootstrap_replicates_used = boot.replicates_used;
    out.bootstrap_dropped = boot.dropped;
    out.bootstrap_ci_underpowered = boot.ci_underpowered;
  }
  return out;
}

}  // namespace aftmed
