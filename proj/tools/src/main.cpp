// Command-line front end: fit single models, run a full mediation analysis,
// drive the simulation engine, and evaluate the limiting score calculations.
//
// Exit codes: 0 success, 1 usage, 2 data, 3 fit, 4 simulation, 5 quadrature.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "aftmed/aft.hpp"
#include "aftmed/csv.hpp"
#include "aftmed/dataset.hpp"
#include "aftmed/error_law.hpp"
#include "aftmed/errors.hpp"
#include "aftmed/mediation.hpp"
#include "aftmed/run_manifest.hpp"
#include "aftmed/score_oracle.hpp"
#include "aftmed/simulate.hpp"
#include "aftmed/version.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitFit = 3;
constexpr int kExitSimulation = 4;
constexpr int kExitQuadrature = 5;

aftmed::LawKind parse_law(const std::string& name) {
  if (name == "normal") {
    return aftmed::LawKind::standard_normal;
  }
  if (name == "weibull") {
    return aftmed::LawKind::extreme_value_min;
  }
  throw std::invalid_argument("unknown law name: " + name);
}

aftmed::ErrorLaw standard_law(aftmed::LawKind kind) {
  return kind == aftmed::LawKind::standard_normal
             ? aftmed::ErrorLaw::standard_normal()
             : aftmed::ErrorLaw::extreme_value_min();
}

std::string format_value(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

// Strips leading/trailing spaces and tabs.
std::string trim(const std::string& text) {
  const std::size_t first = text.find_first_not_of(" \t\r");
  if (first == std::string::npos) {
    return "";
  }
  const std::size_t last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

// Parses a decimal number, rejecting trailing junk.
double parse_double(const std::string& text) {
  const std::string t = trim(text);
  std::size_t pos = 0;
  const double value = std::stod(t, &pos);
  if (pos != t.size()) {
    throw std::invalid_argument("not a number: '" + text + "'");
  }
  return value;
}

// Reads a key-value config file: one `key = value` pair per line, blank
// lines and lines starting with '#' ignored.
std::vector<std::pair<std::string, std::string>> read_key_value_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw aftmed::DataError("cannot open config file: " + path);
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') {
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw aftmed::DataError(path + ":" + std::to_string(line_no) +
                              ": expected key = value");
    }
    pairs.emplace_back(trim(stripped.substr(0, eq)),
                       trim(stripped.substr(eq + 1)));
  }
  return pairs;
}

// Splits a comma-separated list into trimmed nonempty entries.
std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t end = comma == std::string::npos ? text.size() : comma;
    const std::string item = trim(text.substr(start, end - start));
    if (!item.empty()) {
      out.push_back(item);
    }
    if (comma == std::string::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

// Shared --*-col flags describing how a CSV maps onto the survival layout.
// A --schema key-value file can set the same names; explicit flags win.
struct SchemaFlags {
  std::string exposure = "exposure";
  std::string mediator = "mediator";
  std::string time1 = "time1";
  std::string time2 = "time2";
  std::string truncation;
  std::vector<std::string> covariates;
  std::string schema_file;

  void attach(CLI::App* cmd) {
    opt_exposure_ =
        cmd->add_option("--exposure-col", exposure, "Exposure column name")
            ->capture_default_str();
    opt_mediator_ =
        cmd->add_option("--mediator-col", mediator, "Mediator column name")
            ->capture_default_str();
    opt_time1_ =
        cmd->add_option("--time-col", time1,
                        "Event/censoring time column (lower interval endpoint)")
            ->capture_default_str();
    opt_time2_ =
        cmd->add_option("--time2-col", time2,
                        "Upper endpoint column; NA means right-censored, equal "
                        "means exact; pass an empty string for exact-only files")
            ->capture_default_str();
    opt_truncation_ =
        cmd->add_option("--truncation-col", truncation,
                        "Left-truncation time column (empty: no truncation)");
    opt_covariates_ =
        cmd->add_option("--covariate-col", covariates,
                        "Extra covariate column; repeat or comma-separate")
            ->delimiter(',');
    cmd->add_option("--schema", schema_file,
                    "Key-value file naming the columns (keys: exposure, "
                    "mediator, time, time2, truncation, covariates); explicit "
                    "--*-col flags override it");
  }

  aftmed::CsvSchema schema() const {
    aftmed::CsvSchema s{exposure, mediator, time1, time2, truncation,
                        covariates};
    if (!schema_file.empty()) {
      overlay_schema_file(s);
    }
    return s;
  }

  void record(aftmed::RunManifest& manifest) const {
    if (!schema_file.empty()) {
      manifest.set_option("schema", schema_file);
    }
    const aftmed::CsvSchema s = schema();
    manifest.set_option("exposure_col", s.exposure);
    manifest.set_option("mediator_col", s.mediator);
    manifest.set_option("time_col", s.time1);
    manifest.set_option("time2_col", s.time2);
    if (!s.truncation.empty()) {
      manifest.set_option("truncation_col", s.truncation);
    }
    for (std::size_t i = 0; i < s.covariates.size(); ++i) {
      manifest.set_option("covariate_col_" + std::to_string(i),
                          s.covariates[i]);
    }
  }

 private:
  // Applies the schema file to every field whose flag was not given
  // explicitly on the command line.
  void overlay_schema_file(aftmed::CsvSchema& s) const {
    for (const auto& [key, value] : read_key_value_file(schema_file)) {
      if (key == "exposure") {
        if (opt_exposure_->count() == 0) s.exposure = value;
      } else if (key == "mediator") {
        if (opt_mediator_->count() == 0) s.mediator = value;
      } else if (key == "time") {
        if (opt_time1_->count() == 0) s.time1 = value;
      } else if (key == "time2") {
        if (opt_time2_->count() == 0) s.time2 = value;
      } else if (key == "truncation") {
        if (opt_truncation_->count() == 0) s.truncation = value;
      } else if (key == "covariates") {
        if (opt_covariates_->count() == 0) s.covariates = split_list(value);
      } else {
        throw aftmed::DataError(schema_file + ": unknown schema key '" + key +
                                "'");
      }
    }
  }

  CLI::Option* opt_exposure_ = nullptr;
  CLI::Option* opt_mediator_ = nullptr;
  CLI::Option* opt_time1_ = nullptr;
  CLI::Option* opt_time2_ = nullptr;
  CLI::Option* opt_truncation_ = nullptr;
  CLI::Option* opt_covariates_ = nullptr;
};

void emit_json(const ordered_json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) {
    throw aftmed::DataError("cannot open output file for writing: " + out_path);
  }
  out << doc.dump(2) << '\n';
  if (!out) {
    throw aftmed::DataError("failed while writing output file: " + out_path);
  }
}

void write_manifest(aftmed::RunManifest& manifest, const std::string& path) {
  if (path.empty()) {
    return;
  }
  manifest.finish();
  manifest.write(path);
}

ordered_json censoring_json(const aftmed::CensoringSummary& summary) {
  return ordered_json{{"n", summary.n},
                      {"exact", summary.exact_count},
                      {"right_censored", summary.right_censored_count},
                      {"interval_censored", summary.interval_censored_count},
                      {"truncated", summary.truncated_count},
                      {"right_censored_fraction",
                       summary.right_censored_fraction}};
}

ordered_json interval_json(const aftmed::ConfidenceInterval& ci) {
  return ordered_json::array({ci.lower, ci.upper});
}

// ---------------------------------------------------------------------- fit

struct FitOptions {
  std::string data;
  std::string model = "outcome";
  std::string law = "weibull";
  std::string out;
  std::string manifest;
  SchemaFlags schema;
};

int run_fit(const FitOptions& opt) {
  aftmed::RunManifest manifest("fit");
  manifest.set_option("data", opt.data);
  manifest.set_option("model", opt.model);
  manifest.set_option("law", opt.law);
  opt.schema.record(manifest);

  const aftmed::Dataset data = aftmed::read_csv(opt.data, opt.schema.schema());
  const aftmed::CensoringSummary summary = aftmed::summarize(data);

  ordered_json doc;
  doc["command"] = "fit";
  doc["model"] = opt.model;
  doc["censoring"] = censoring_json(summary);

  bool converged = true;
  if (opt.model == "mediator") {
    const aftmed::LinearFit fit = aftmed::fit_linear(data, true);
    ordered_json coef = ordered_json::object();
    for (std::size_t i = 0; i < fit.coefficient_names.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      coef[fit.coefficient_names[i]] = {
          {"estimate", fit.coefficients(k)},
          {"se", std::sqrt(fit.covariance(k, k))}};
    }
    doc["coefficients"] = coef;
    doc["residual_sd"] = fit.residual_sd;
  } else {
    aftmed::DesignSpec design;
    design.mediator = (opt.model == "outcome");
    const aftmed::AftSpec spec{parse_law(opt.law), design};
    const aftmed::AftFit fit = aftmed::fit(spec, data);

    doc["law"] = opt.law;
    ordered_json coef = ordered_json::object();
    for (std::size_t i = 0; i < fit.coefficient_names.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      ordered_json entry{{"estimate", fit.coefficients(k)}};
      if (fit.covariance_available) {
        entry["se"] = std::sqrt(fit.covariance(k, k));
      }
      coef[fit.coefficient_names[i]] = entry;
    }
    doc["coefficients"] = coef;
    const auto scale_index =
        static_cast<Eigen::Index>(fit.coefficient_names.size());
    ordered_json log_scale{{"estimate", fit.log_scale}};
    if (fit.covariance_available) {
      log_scale["se"] = std::sqrt(fit.covariance(scale_index, scale_index));
    }
    doc["log_scale"] = log_scale;
    doc["scale"] = fit.sigma();
    doc["loglik"] = fit.loglik;
    doc["converged"] = fit.converged;
    doc["iterations"] = fit.iterations;
    doc["max_abs_score"] = fit.max_abs_score;
    converged = fit.converged;
  }

  emit_json(doc, opt.out);
  write_manifest(manifest, opt.manifest);
  return converged ? kExitOk : kExitFit;
}

// ------------------------------------------------------------------ mediate

struct MediateOptions {
  std::string data;
  std::string law = "weibull";
  double a = 1.0;
  double a_star = 0.0;
  std::string contrast;
  std::size_t bootstrap = 500;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  double ci_level = 0.95;
  std::string out;
  std::string manifest;
  SchemaFlags schema;
};

ordered_json effect_json(double estimate, const char* method,
                         std::optional<double> se,
                         std::optional<aftmed::ConfidenceInterval> ci) {
  ordered_json entry;
  entry["estimate"] = estimate;
  entry["time_ratio"] = std::exp(estimate);
  entry["se_method"] = method;
  if (se) {
    entry["se"] = *se;
  }
  if (ci) {
    entry["ci"] = interval_json(*ci);
    entry["time_ratio_ci"] =
        ordered_json::array({std::exp(ci->lower), std::exp(ci->upper)});
  }
  return entry;
}

int run_mediate(const MediateOptions& opt) {
  double a = opt.a;
  double a_star = opt.a_star;
  if (!opt.contrast.empty()) {
    const std::size_t comma = opt.contrast.find(',');
    if (comma == std::string::npos) {
      throw std::invalid_argument(
          "--contrast expects two comma-separated exposure levels, e.g. 1,0");
    }
    a = parse_double(opt.contrast.substr(0, comma));
    a_star = parse_double(opt.contrast.substr(comma + 1));
  }

  aftmed::RunManifest manifest("mediate");
  manifest.set_option("data", opt.data);
  manifest.set_option("law", opt.law);
  manifest.set_option("a", a);
  manifest.set_option("a_star", a_star);
  manifest.set_option("bootstrap", static_cast<double>(opt.bootstrap));
  manifest.set_option("ci_level", opt.ci_level);
  manifest.set_seed(opt.seed);
  opt.schema.record(manifest);

  const aftmed::Dataset data = aftmed::read_csv(opt.data, opt.schema.schema());
  const aftmed::Contrast contrast{a, a_star};
  std::optional<aftmed::BootstrapConfig> boot;
  if (opt.bootstrap > 0) {
    boot = aftmed::BootstrapConfig{opt.bootstrap, opt.seed, opt.workers};
  }
  const aftmed::MediationEstimates est = aftmed::analyze(
      data, parse_law(opt.law), contrast, boot, opt.ci_level);

  const bool delta_ok = est.converged;
  ordered_json effects;
  effects["nde"] = effect_json(
      est.nde, "delta",
      delta_ok ? std::optional<double>(est.se_nde) : std::nullopt,
      delta_ok ? std::optional<aftmed::ConfidenceInterval>(est.ci_nde)
               : std::nullopt);
  effects["nie_product"] = effect_json(
      est.nie_product, "delta",
      delta_ok ? std::optional<double>(est.se_nie_product) : std::nullopt,
      delta_ok ? std::optional<aftmed::ConfidenceInterval>(est.ci_nie_product)
               : std::nullopt);
  effects["nie_difference"] =
      effect_json(est.nie_difference,
                  est.se_nie_difference ? "bootstrap" : "none",
                  est.se_nie_difference, est.ci_nie_difference);
  effects["total_product"] = effect_json(
      est.total_product, est.se_total_product ? "bootstrap" : "none",
      est.se_total_product, est.ci_total_product);
  ordered_json total_difference = effect_json(
      est.total_difference, "delta",
      delta_ok ? std::optional<double>(est.se_total_difference) : std::nullopt,
      delta_ok
          ? std::optional<aftmed::ConfidenceInterval>(est.ci_total_difference)
          : std::nullopt);
  total_difference["flagged"] = est.total_difference_flagged;
  if (est.total_difference_flagged) {
    total_difference["note"] =
        "reduced-model residual law is misspecified once outcomes are "
        "censored; prefer total_product and nie_product";
  }
  effects["total_difference"] = total_difference;

  ordered_json doc;
  doc["command"] = "mediate";
  doc["law"] = opt.law;
  doc["censoring"] = censoring_json(aftmed::summarize(data));
  doc["contrast"] = ordered_json{
      {"a", a}, {"a_star", a_star}, {"delta", contrast.delta()}};
  doc["ci_level"] = est.ci_level;
  doc["converged"] = est.converged;
  doc["effects"] = effects;
  if (boot) {
    doc["bootstrap"] = ordered_json{
        {"requested", boot->replicates},
        {"used", est.bootstrap_replicates_used},
        {"dropped", est.bootstrap_dropped},
        {"ci_underpowered", est.bootstrap_ci_underpowered}};
    manifest.record_nonconvergence("bootstrap", est.bootstrap_dropped);
  }

  emit_json(doc, opt.out);
  write_manifest(manifest, opt.manifest);
  return est.converged ? kExitOk : kExitFit;
}

// ----------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string scenario = "normal";
  std::string config;
  std::size_t n = 0;
  std::size_t replicates = 0;
  std::uint64_t seed = 1;
  std::string censoring;
  double target = -1.0;
  std::size_t workers = 1;
  std::string out;
  std::string replicate_out;
  std::string manifest;
};

aftmed::SimScenario preset_scenario(const std::string& name) {
  return name == "weibull" ? aftmed::SimScenario::weibull_scenario()
                           : aftmed::SimScenario::normal_scenario();
}

aftmed::CensoringKind parse_censoring_kind(const std::string& value) {
  if (value == "none") {
    return aftmed::CensoringKind::none;
  }
  if (value == "right") {
    return aftmed::CensoringKind::right_only;
  }
  if (value == "right-interval") {
    return aftmed::CensoringKind::right_and_interval;
  }
  throw aftmed::DataError("unknown censoring kind: '" + value +
                          "' (expected none, right, or right-interval)");
}

// Builds a scenario from a key-value file. Every generator field has a key
// named after it; unset keys keep the uncensored defaults.
aftmed::SimScenario scenario_from_config(const std::string& path) {
  aftmed::SimScenario scenario;
  std::vector<double> lengths;
  std::vector<double> probabilities;
  for (const auto& [key, value] : read_key_value_file(path)) {
    if (key == "name") {
      scenario.name = value;
    } else if (key == "outcome_law") {
      if (value == "weibull") {
        scenario.outcome_law = aftmed::LawKind::extreme_value_min;
      } else if (value == "normal") {
        scenario.outcome_law = aftmed::LawKind::standard_normal;
      } else {
        throw aftmed::DataError("unknown outcome_law: '" + value +
                                "' (expected normal or weibull)");
      }
    } else if (key == "alpha0") {
      scenario.alpha0 = parse_double(value);
    } else if (key == "alpha_a") {
      scenario.alpha_a = parse_double(value);
    } else if (key == "mediator_sd") {
      scenario.mediator_sd = parse_double(value);
    } else if (key == "beta0") {
      scenario.beta0 = parse_double(value);
    } else if (key == "beta_a") {
      scenario.beta_a = parse_double(value);
    } else if (key == "beta_m") {
      scenario.beta_m = parse_double(value);
    } else if (key == "sigma") {
      scenario.sigma = parse_double(value);
    } else if (key == "exposure_prob") {
      scenario.exposure_prob = parse_double(value);
    } else if (key == "censoring") {
      scenario.censoring.kind = parse_censoring_kind(value);
    } else if (key == "target_fraction") {
      scenario.censoring.target_fraction = parse_double(value);
    } else if (key == "interval_lengths") {
      for (const std::string& item : split_list(value)) {
        lengths.push_back(parse_double(item));
      }
    } else if (key == "interval_probabilities") {
      for (const std::string& item : split_list(value)) {
        probabilities.push_back(parse_double(item));
      }
    } else if (key == "n") {
      scenario.n = static_cast<std::size_t>(parse_double(value));
    } else if (key == "replicates") {
      scenario.replicates = static_cast<std::size_t>(parse_double(value));
    } else if (key == "seed") {
      scenario.seed = static_cast<std::uint64_t>(parse_double(value));
    } else {
      throw aftmed::DataError(path + ": unknown scenario key '" + key + "'");
    }
  }
  if (!lengths.empty() || !probabilities.empty()) {
    scenario.censoring.intervals.lengths = lengths;
    scenario.censoring.intervals.probabilities = probabilities;
  }
  return scenario;
}

void write_replicates_csv(const std::vector<aftmed::SimEngine::Replicate>& reps,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw aftmed::DataError("cannot open output file for writing: " + path);
  }
  out << "replicate,converged,nde,nie_product,nie_difference,total_reduced,"
         "censored_fraction\n";
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const auto& r = reps[i];
    out << i << ',' << (r.converged ? 1 : 0) << ',' << format_value(r.nde)
        << ',' << format_value(r.nie_product) << ','
        << format_value(r.nie_difference) << ','
        << format_value(r.total_reduced) << ','
        << format_value(r.censored_fraction) << '\n';
  }
  if (!out) {
    throw aftmed::DataError("failed while writing output file: " + path);
  }
}

int run_simulate(const CLI::App* cmd, const SimulateOptions& opt) {
  aftmed::SimScenario scenario = opt.config.empty()
                                     ? preset_scenario(opt.scenario)
                                     : scenario_from_config(opt.config);
  if (cmd->count("--n") > 0) {
    scenario.n = opt.n;
  }
  if (cmd->count("--replicates") > 0) {
    scenario.replicates = opt.replicates;
  }
  if (cmd->count("--seed") > 0) {
    scenario.seed = opt.seed;
  }
  if (!opt.censoring.empty()) {
    scenario.censoring.kind = parse_censoring_kind(opt.censoring);
  }
  if (opt.target >= 0.0) {
    scenario.censoring.target_fraction = opt.target;
  }

  aftmed::RunManifest manifest("simulate");
  if (!opt.config.empty()) {
    manifest.set_option("config", opt.config);
  }
  manifest.set_option("scenario", scenario.name);
  manifest.set_option("n", static_cast<double>(scenario.n));
  manifest.set_option("replicates", static_cast<double>(scenario.replicates));
  manifest.set_option("censoring",
                      scenario.censoring.kind == aftmed::CensoringKind::none
                          ? "none"
                          : (scenario.censoring.kind ==
                                     aftmed::CensoringKind::right_only
                                 ? "right"
                                 : "right-interval"));
  manifest.set_option("target_fraction", scenario.censoring.target_fraction);
  manifest.set_seed(scenario.seed);

  const aftmed::SimEngine engine(scenario);
  const std::vector<aftmed::SimEngine::Replicate> replicates =
      engine.run_replicates(opt.workers);
  if (!opt.replicate_out.empty()) {
    write_replicates_csv(replicates, opt.replicate_out);
  }
  std::size_t nonconverged = 0;
  for (const auto& r : replicates) {
    if (!r.converged) {
      ++nonconverged;
    }
  }
  manifest.record_nonconvergence("replicates", nonconverged);

  aftmed::SimSummary summary;
  try {
    summary = engine.summarize(replicates);
  } catch (const aftmed::SimulationError&) {
    write_manifest(manifest, opt.manifest);
    throw;
  }
  if (!opt.out.empty()) {
    aftmed::emit_figure_data({summary}, opt.out);
  }

  ordered_json doc;
  doc["command"] = "simulate";
  doc["scenario"] = summary.scenario;
  doc["n"] = summary.n;
  doc["replicates_converged"] = summary.replicate_count;
  doc["replicates_nonconverged"] = summary.nonconverged_count;
  doc["censor_model"] = ordered_json{
      {"active", engine.censor_model().active},
      {"location", engine.censor_model().location},
      {"scale", engine.censor_model().scale},
      {"pilot_fraction", engine.censor_model().pilot_fraction}};
  doc["true_indirect_effect"] = scenario.true_ie();
  doc["mean_nie_product"] = summary.mean_nie_product;
  doc["mean_nie_difference"] = summary.mean_nie_difference;
  doc["mean_total_reduced"] = summary.mean_total_reduced;
  doc["abs_prop_difference"] = summary.abs_prop_difference;
  doc["prop_bias_product"] = summary.prop_bias_product;
  doc["prop_bias_difference"] = summary.prop_bias_difference;
  doc["var_nie_product"] = summary.var_nie_product;
  doc["var_nie_difference"] = summary.var_nie_difference;
  doc["var_total_reduced"] = summary.var_total_reduced;
  doc["mean_censored_fraction"] = summary.mean_censored_fraction;
  std::cout << doc.dump(2) << '\n';

  write_manifest(manifest, opt.manifest);
  return kExitOk;
}

// --------------------------------------------------------------- score-bias

struct ScoreBiasOptions {
  std::string mode = "expected-score";
  std::string scenario;
  std::string true_law = "normal";
  std::string component = "weibull";
  double outcome_scale = 1.0;
  double mediator_coef = 0.0;
  double mediator_sd = 1.0;
  double true_scale = 1.0;
  std::string assumed_law = "weibull";
  double assumed_scale = 0.0;  // 0: match the true residual variance
  double alpha = 0.0;
  double beta = 0.0;
  double probe_alpha = std::numeric_limits<double>::quiet_NaN();
  double probe_beta = std::numeric_limits<double>::quiet_NaN();
  double exposure_prob = 0.5;
  double censor_time = 0.0;
  std::string censor_family;
  double censor_location = 0.0;
  double censor_scale = 1.0;
  std::string censoring;  // preset override: none|right
  double target = -1.0;
  double truncation_time = 0.0;
  double tolerance = 1e-8;
  std::vector<double> grid_quantiles;
  std::vector<double> grid_betas;
  std::string grid_variable = "censor";
  std::string out;
  std::string manifest;
};

aftmed::ScoreBiasConfig build_score_config(const CLI::App* cmd,
                                           const ScoreBiasOptions& opt) {
  aftmed::ScoreBiasConfig cfg;
  if (!opt.scenario.empty()) {
    aftmed::SimScenario scenario = preset_scenario(opt.scenario);
    if (opt.target >= 0.0) {
      scenario.censoring.target_fraction = opt.target;
    }
    if (opt.censoring == "none") {
      scenario.censoring.kind = aftmed::CensoringKind::none;
    }
    cfg.true_law =
        aftmed::ErrorLaw::convolved(scenario.outcome_law, scenario.sigma,
                                    scenario.beta_m, scenario.mediator_sd);
    cfg.true_scale = 1.0;
    cfg.true_intercept = scenario.reduced_intercept();
    cfg.true_exposure = scenario.reduced_exposure();
    cfg.exposure_prob = scenario.exposure_prob;
    cfg.assumed_law = standard_law(cmd->count("--assumed-law") > 0
                                       ? parse_law(opt.assumed_law)
                                       : scenario.outcome_law);
    if (scenario.censoring.kind != aftmed::CensoringKind::none) {
      scenario.censoring.kind = aftmed::CensoringKind::right_only;
      const aftmed::SimEngine engine(scenario);
      const aftmed::CensorModel& model = engine.censor_model();
      cfg.censor = aftmed::CensorSpec::from_law(model.family, model.location,
                                                model.scale);
    }
  } else {
    if (opt.true_law == "convolved") {
      cfg.true_law = aftmed::ErrorLaw::convolved(
          parse_law(opt.component), opt.outcome_scale, opt.mediator_coef,
          opt.mediator_sd);
    } else {
      cfg.true_law = standard_law(parse_law(opt.true_law));
    }
    cfg.true_scale = opt.true_scale;
    cfg.assumed_law = standard_law(parse_law(opt.assumed_law));
    cfg.true_intercept = opt.alpha;
    cfg.true_exposure = opt.beta;
    cfg.exposure_prob = opt.exposure_prob;
    if (opt.censor_time > 0.0) {
      cfg.censor = aftmed::CensorSpec::fixed(opt.censor_time);
    } else if (!opt.censor_family.empty()) {
      cfg.censor = aftmed::CensorSpec::from_law(
          parse_law(opt.censor_family), opt.censor_location, opt.censor_scale);
    }
  }
  cfg.truncation_time = opt.truncation_time;

  if (opt.assumed_scale > 0.0) {
    cfg.assumed_scale = opt.assumed_scale;
  } else {
    const double true_var =
        cfg.true_scale * cfg.true_scale * cfg.true_law.variance();
    cfg.assumed_scale = std::sqrt(true_var / cfg.assumed_law.variance());
  }
  cfg.probe_intercept =
      std::isnan(opt.probe_alpha) ? cfg.true_intercept : opt.probe_alpha;
  cfg.probe_exposure =
      std::isnan(opt.probe_beta) ? cfg.true_exposure : opt.probe_beta;
  return cfg;
}

ordered_json law_json(const aftmed::ErrorLaw& law) {
  ordered_json doc{{"kind", aftmed::law_name(law.kind())}};
  if (law.kind() == aftmed::LawKind::convolved) {
    doc["outcome_component"] = aftmed::law_name(law.outcome_component());
    doc["outcome_scale"] = law.outcome_scale();
    doc["mediator_coef"] = law.mediator_coef();
    doc["mediator_sd"] = law.mediator_sd();
  }
  return doc;
}

ordered_json censor_json(const aftmed::CensorSpec& censor) {
  switch (censor.kind) {
    case aftmed::CensorSpec::Kind::none:
      return ordered_json{{"kind", "none"}};
    case aftmed::CensorSpec::Kind::fixed:
      return ordered_json{{"kind", "fixed"},
                          {"log_time", censor.log_time},
                          {"time", std::exp(censor.log_time)}};
    default:
      return ordered_json{{"kind", "law"},
                          {"family", aftmed::law_name(censor.family)},
                          {"location", censor.location},
                          {"scale", censor.scale}};
  }
}

// The q-quantile of the marginal distribution of log event time under the
// true data-generating model (binary exposure mixed analytically).
double marginal_log_time_quantile(const aftmed::ScoreBiasConfig& cfg,
                                  double q) {
  const auto cdf = [&cfg](double c) {
    const double z0 = (c - cfg.true_intercept) / cfg.true_scale;
    const double z1 =
        (c - cfg.true_intercept - cfg.true_exposure) / cfg.true_scale;
    return (1.0 - cfg.exposure_prob) * cfg.true_law.cdf(z0) +
           cfg.exposure_prob * cfg.true_law.cdf(z1);
  };
  const double pull = cfg.true_scale * cfg.true_law.quantile(q);
  double lo = cfg.true_intercept + std::min(0.0, cfg.true_exposure) + pull - 1;
  double hi = cfg.true_intercept + std::max(0.0, cfg.true_exposure) + pull + 1;
  while (cdf(lo) > q) {
    lo -= 8.0;
  }
  while (cdf(hi) < q) {
    hi += 8.0;
  }
  for (int i = 0; i < 200 && lo < hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Bias-surface mode: one CSV row per (quantile, exposure coefficient) pair.
// The quantile places the fixed censoring time (or truncation entry) on the
// marginal log-time distribution; quantile 1 (censor) / 0 (truncation) means
// the mechanism is absent.
int run_score_bias_grid(const CLI::App* cmd, const ScoreBiasOptions& opt) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const bool censor_grid = opt.grid_variable == "censor";
  const bool probe_beta_pinned = cmd->count("--probe-beta") > 0;

  aftmed::ScoreBiasConfig base = build_score_config(cmd, opt);
  base.censor = aftmed::CensorSpec::none();
  base.truncation_time = 0.0;

  aftmed::RunManifest manifest("score-bias");
  manifest.set_option("mode", "grid");
  manifest.set_option("grid_variable", opt.grid_variable);
  for (std::size_t i = 0; i < opt.grid_quantiles.size(); ++i) {
    manifest.set_option("grid_quantile_" + std::to_string(i),
                        opt.grid_quantiles[i]);
  }
  for (std::size_t i = 0; i < opt.grid_betas.size(); ++i) {
    manifest.set_option("grid_beta_" + std::to_string(i), opt.grid_betas[i]);
  }
  if (!opt.scenario.empty()) {
    manifest.set_option("scenario", opt.scenario);
  }
  manifest.set_option("tolerance", opt.tolerance);
  manifest.set_option("true_intercept", base.true_intercept);
  manifest.set_option("assumed_scale", base.assumed_scale);

  const std::vector<double> betas =
      opt.grid_betas.empty() ? std::vector<double>{base.true_exposure}
                             : opt.grid_betas;

  std::ostringstream csv;
  csv << "variable,quantile,beta,log_threshold,expected_score,"
         "quadrature_abs_error,probe_intercept,probe_exposure,"
         "probe_log_scale,probe_bias,probe_converged\n";
  int rc = kExitOk;
  for (const double beta : betas) {
    for (const double q : opt.grid_quantiles) {
      aftmed::ScoreBiasConfig cfg = base;
      cfg.true_exposure = beta;
      if (!probe_beta_pinned) {
        cfg.probe_exposure = beta;
      }
      double log_threshold;
      if (censor_grid) {
        if (q < 1.0) {
          log_threshold = marginal_log_time_quantile(cfg, q);
          cfg.censor = aftmed::CensorSpec::fixed(std::exp(log_threshold));
        } else {
          log_threshold = kInf;
        }
      } else {
        if (q > 0.0) {
          log_threshold = marginal_log_time_quantile(cfg, q);
          cfg.truncation_time = std::exp(log_threshold);
        } else {
          log_threshold = -kInf;
        }
      }

      const aftmed::ScoreBiasResult score =
          cfg.truncation_time > 0.0
              ? aftmed::expected_score_left_truncation(cfg, opt.tolerance)
              : aftmed::expected_score_right_censoring(cfg, opt.tolerance);
      const aftmed::ProbeResult probe =
          aftmed::mle_limit_probe(cfg, opt.tolerance);
      if (!probe.converged) {
        rc = kExitQuadrature;
      }

      csv << opt.grid_variable << ',' << format_value(q) << ','
          << format_value(beta) << ',' << format_value(log_threshold) << ','
          << format_value(score.expected_score_beta) << ','
          << format_value(score.quadrature_abs_error) << ','
          << format_value(probe.intercept) << ','
          << format_value(probe.exposure) << ','
          << format_value(probe.log_scale) << ','
          << format_value(probe.exposure - cfg.true_exposure) << ','
          << (probe.converged ? "true" : "false") << '\n';
    }
  }

  if (opt.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(opt.out);
    if (!out) {
      throw aftmed::DataError("cannot open output file for writing: " +
                              opt.out);
    }
    out << csv.str();
    if (!out) {
      throw aftmed::DataError("failed while writing: " + opt.out);
    }
  }
  write_manifest(manifest, opt.manifest);
  return rc;
}

int run_score_bias(const CLI::App* cmd, const ScoreBiasOptions& opt) {
  if (!opt.grid_quantiles.empty()) {
    return run_score_bias_grid(cmd, opt);
  }
  aftmed::RunManifest manifest("score-bias");
  manifest.set_option("mode", opt.mode);
  if (!opt.scenario.empty()) {
    manifest.set_option("scenario", opt.scenario);
  }
  manifest.set_option("tolerance", opt.tolerance);

  const aftmed::ScoreBiasConfig cfg = build_score_config(cmd, opt);
  manifest.set_option("true_intercept", cfg.true_intercept);
  manifest.set_option("true_exposure", cfg.true_exposure);
  manifest.set_option("probe_intercept", cfg.probe_intercept);
  manifest.set_option("probe_exposure", cfg.probe_exposure);
  manifest.set_option("assumed_scale", cfg.assumed_scale);
  manifest.set_option("censor", censor_json(cfg.censor).dump());
  if (cfg.truncation_time > 0.0) {
    manifest.set_option("truncation_time", cfg.truncation_time);
  }

  ordered_json doc;
  doc["command"] = "score-bias";
  doc["mode"] = opt.mode;
  doc["config"] = ordered_json{
      {"true_law", law_json(cfg.true_law)},
      {"true_scale", cfg.true_scale},
      {"assumed_law", law_json(cfg.assumed_law)},
      {"assumed_scale", cfg.assumed_scale},
      {"true_intercept", cfg.true_intercept},
      {"true_exposure", cfg.true_exposure},
      {"probe_intercept", cfg.probe_intercept},
      {"probe_exposure", cfg.probe_exposure},
      {"exposure_prob", cfg.exposure_prob},
      {"censor", censor_json(cfg.censor)},
      {"truncation_time", cfg.truncation_time}};

  int rc = kExitOk;
  if (opt.mode == "expected-score") {
    const aftmed::ScoreBiasResult result =
        cfg.truncation_time > 0.0
            ? aftmed::expected_score_left_truncation(cfg, opt.tolerance)
            : aftmed::expected_score_right_censoring(cfg, opt.tolerance);
    doc["expected_score_beta"] = result.expected_score_beta;
    doc["quadrature_abs_error"] = result.quadrature_abs_error;
    doc["evaluations"] = result.evaluations;
  } else {
    const aftmed::ProbeResult result =
        opt.mode == "probe" ? aftmed::mle_limit_probe(cfg, opt.tolerance)
                            : aftmed::mle_limit_profile(cfg, opt.tolerance);
    doc["intercept"] = result.intercept;
    doc["exposure"] = result.exposure;
    doc["log_scale"] = result.log_scale;
    doc["scale"] = std::exp(result.log_scale);
    doc["exposure_bias"] = result.exposure - cfg.true_exposure;
    doc["converged"] = result.converged;
    doc["iterations"] = result.iterations;
    doc["max_abs_score"] = result.max_abs_score;
    doc["evaluations"] = result.evaluations;
    if (!result.converged) {
      rc = kExitQuadrature;
    }
  }

  emit_json(doc, opt.out);
  write_manifest(manifest, opt.manifest);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Causal mediation analysis for censored survival outcomes under "
      "parametric accelerated failure time models"};
  app.set_version_flag("--version", std::string(aftmed::kVersion));
  app.require_subcommand(1);

  FitOptions fit_opt;
  CLI::App* fit_cmd = app.add_subcommand(
      "fit", "Fit one regression model to a survival CSV");
  fit_cmd->add_option("--data", fit_opt.data, "Input CSV file")->required();
  fit_cmd->add_option("--model", fit_opt.model,
                      "outcome: time ~ exposure + mediator; reduced: time ~ "
                      "exposure; mediator: mediator ~ exposure (linear)")
      ->check(CLI::IsMember({"outcome", "reduced", "mediator"}))
      ->capture_default_str();
  fit_cmd->add_option("--law", fit_opt.law, "Residual law for time models")
      ->check(CLI::IsMember({"normal", "weibull"}))
      ->capture_default_str();
  fit_cmd->add_option("--out", fit_opt.out, "Result JSON path (default stdout)");
  fit_cmd->add_option("--manifest", fit_opt.manifest, "Run manifest JSON path");
  fit_opt.schema.attach(fit_cmd);

  MediateOptions med_opt;
  CLI::App* med_cmd = app.add_subcommand(
      "mediate", "Estimate direct/indirect/total effects by both routes");
  med_cmd->add_option("--data", med_opt.data, "Input CSV file")->required();
  med_cmd->add_option("--law", med_opt.law, "Outcome residual law")
      ->check(CLI::IsMember({"normal", "weibull"}))
      ->capture_default_str();
  CLI::Option* med_a = med_cmd->add_option("--a", med_opt.a,
                                           "Treated exposure level")
                           ->capture_default_str();
  CLI::Option* med_a_star =
      med_cmd->add_option("--a-star", med_opt.a_star,
                          "Reference exposure level")
          ->capture_default_str();
  med_cmd->add_option("--contrast", med_opt.contrast,
                      "Exposure contrast 'a,a_star' (alternative to "
                      "--a/--a-star)")
      ->excludes(med_a)
      ->excludes(med_a_star);
  med_cmd->add_option("--bootstrap", med_opt.bootstrap,
                      "Bootstrap replicates (0 disables the bootstrap)")
      ->capture_default_str();
  med_cmd->add_option("--seed", med_opt.seed, "Bootstrap seed")
      ->capture_default_str();
  med_cmd->add_option("--workers", med_opt.workers,
                      "Worker threads (results are worker-count invariant)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  med_cmd->add_option("--ci-level", med_opt.ci_level, "Confidence level")
      ->check(CLI::Range(0.5, 0.9999))
      ->capture_default_str();
  med_cmd->add_option("--out", med_opt.out, "Result JSON path (default stdout)");
  med_cmd->add_option("--manifest", med_opt.manifest, "Run manifest JSON path");
  med_opt.schema.attach(med_cmd);

  SimulateOptions sim_opt;
  CLI::App* sim_cmd = app.add_subcommand(
      "simulate", "Run a Monte Carlo comparison of the two indirect-effect "
                  "estimators");
  CLI::Option* sim_preset =
      sim_cmd->add_option("--scenario", sim_opt.scenario, "Scenario preset")
          ->check(CLI::IsMember({"normal", "weibull"}))
          ->capture_default_str();
  sim_cmd
      ->add_option("--config", sim_opt.config,
                   "Key-value scenario file (keys: name, outcome_law, alpha0, "
                   "alpha_a, mediator_sd, beta0, beta_a, beta_m, sigma, "
                   "exposure_prob, censoring, target_fraction, "
                   "interval_lengths, interval_probabilities, n, replicates, "
                   "seed); explicit flags still override")
      ->excludes(sim_preset);
  sim_cmd->add_option("--n", sim_opt.n, "Subjects per replicate");
  sim_cmd->add_option("--replicates", sim_opt.replicates,
                      "Monte Carlo replicates");
  sim_cmd->add_option("--seed", sim_opt.seed, "Simulation seed");
  sim_cmd->add_option("--censoring", sim_opt.censoring, "Censoring mechanism")
      ->check(CLI::IsMember({"none", "right", "right-interval"}));
  sim_cmd->add_option("--target-fraction", sim_opt.target,
                      "Right-censored fraction to calibrate to")
      ->check(CLI::Range(0.0, 0.95));
  sim_cmd->add_option("--workers", sim_opt.workers,
                      "Worker threads (results are worker-count invariant)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim_cmd->add_option("--out", sim_opt.out, "Tidy metrics CSV path");
  sim_cmd->add_option("--per-replicate", sim_opt.replicate_out,
                      "Per-replicate estimates CSV path");
  sim_cmd->add_option("--manifest", sim_opt.manifest, "Run manifest JSON path");

  ScoreBiasOptions sb_opt;
  CLI::App* sb_cmd = app.add_subcommand(
      "score-bias", "Evaluate limiting expected scores and pseudo-true "
                    "parameters of a working model");
  sb_cmd->add_option("--mode", sb_opt.mode,
                     "expected-score: profiled exposure score at the probe; "
                     "probe: solve all three equations; profile: solve with "
                     "the exposure coefficient pinned")
      ->check(CLI::IsMember({"expected-score", "probe", "profile"}))
      ->capture_default_str();
  sb_cmd->add_option("--scenario", sb_opt.scenario,
                     "Preset: reduced-form analysis of a simulation scenario "
                     "with its calibrated censoring")
      ->check(CLI::IsMember({"normal", "weibull"}));
  sb_cmd->add_option("--true-law", sb_opt.true_law, "Data residual law")
      ->check(CLI::IsMember({"normal", "weibull", "convolved"}))
      ->capture_default_str();
  sb_cmd->add_option("--component", sb_opt.component,
                     "Outcome component of a convolved true law")
      ->check(CLI::IsMember({"normal", "weibull"}))
      ->capture_default_str();
  sb_cmd->add_option("--outcome-scale", sb_opt.outcome_scale,
                     "Outcome residual scale inside a convolved true law")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sb_cmd->add_option("--mediator-coef", sb_opt.mediator_coef,
                     "Mediator coefficient inside a convolved true law")
      ->capture_default_str();
  sb_cmd->add_option("--mediator-sd", sb_opt.mediator_sd,
                     "Mediator residual sd inside a convolved true law")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sb_cmd->add_option("--true-scale", sb_opt.true_scale,
                     "Scale multiplying the true residual law")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sb_cmd->add_option("--assumed-law", sb_opt.assumed_law,
                     "Working-model residual law")
      ->check(CLI::IsMember({"normal", "weibull"}))
      ->capture_default_str();
  sb_cmd->add_option("--assumed-scale", sb_opt.assumed_scale,
                     "Working-model scale (0: match true residual variance)")
      ->capture_default_str();
  sb_cmd->add_option("--alpha", sb_opt.alpha, "True intercept")
      ->capture_default_str();
  sb_cmd->add_option("--beta", sb_opt.beta, "True exposure coefficient")
      ->capture_default_str();
  sb_cmd->add_option("--probe-alpha", sb_opt.probe_alpha,
                     "Probe intercept (default: the true intercept)");
  sb_cmd->add_option("--probe-beta", sb_opt.probe_beta,
                     "Probe exposure coefficient (default: the true value)");
  sb_cmd->add_option("--exposure-prob", sb_opt.exposure_prob,
                     "P(exposure = 1)")
      ->check(CLI::Range(0.0001, 0.9999))
      ->capture_default_str();
  CLI::Option* sb_censor_time =
      sb_cmd->add_option("--censor-time", sb_opt.censor_time,
                         "Shared fixed censoring time C > 0");
  CLI::Option* sb_censor_law =
      sb_cmd->add_option("--censor-law", sb_opt.censor_family,
                         "Censoring family for random censoring")
          ->check(CLI::IsMember({"normal", "weibull"}));
  CLI::Option* sb_censor_location =
      sb_cmd->add_option("--censor-location", sb_opt.censor_location,
                         "Location of log C under random censoring")
          ->capture_default_str();
  CLI::Option* sb_censor_scale =
      sb_cmd->add_option("--censor-scale", sb_opt.censor_scale,
                         "Scale of log C under random censoring")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
  sb_censor_time->excludes(sb_censor_law)
      ->excludes(sb_censor_location)
      ->excludes(sb_censor_scale);
  sb_cmd->add_option("--censoring", sb_opt.censoring,
                     "Preset override: none drops the calibrated censoring")
      ->check(CLI::IsMember({"none", "right"}));
  sb_cmd->add_option("--target-fraction", sb_opt.target,
                     "Preset right-censored fraction override")
      ->check(CLI::Range(0.0, 0.95));
  CLI::Option* sb_truncation =
      sb_cmd->add_option("--truncation-time", sb_opt.truncation_time,
                         "Left-truncation time V (0: none)");
  sb_cmd->add_option("--tolerance", sb_opt.tolerance,
                     "Absolute tolerance for the evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  CLI::Option* sb_grid =
      sb_cmd->add_option("--grid-quantiles", sb_opt.grid_quantiles,
                         "Bias-surface mode: marginal log-time quantiles "
                         "placing the censoring time (or truncation entry); "
                         "1 = no censoring, 0 = no truncation; emits CSV")
          ->delimiter(',')
          ->check(CLI::Range(0.0, 1.0));
  sb_cmd->add_option("--grid-beta", sb_opt.grid_betas,
                     "Bias-surface mode: true exposure coefficients "
                     "(default: the configured --beta)")
      ->delimiter(',');
  sb_cmd->add_option("--grid-variable", sb_opt.grid_variable,
                     "Which mechanism the grid quantiles place")
      ->check(CLI::IsMember({"censor", "truncation"}))
      ->capture_default_str();
  sb_grid->excludes(sb_censor_time)
      ->excludes(sb_censor_law)
      ->excludes(sb_censor_location)
      ->excludes(sb_censor_scale)
      ->excludes(sb_truncation);
  sb_cmd->add_option("--out", sb_opt.out, "Result JSON path (default stdout)");
  sb_cmd->add_option("--manifest", sb_opt.manifest, "Run manifest JSON path");

  int rc = kExitOk;
  fit_cmd->callback([&] { rc = run_fit(fit_opt); });
  med_cmd->callback([&] { rc = run_mediate(med_opt); });
  sim_cmd->callback([&] { rc = run_simulate(sim_cmd, sim_opt); });
  sb_cmd->callback([&] { rc = run_score_bias(sb_cmd, sb_opt); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const aftmed::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const aftmed::FitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFit;
  } catch (const aftmed::SimulationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSimulation;
  } catch (const aftmed::QuadratureError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitQuadrature;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return rc;
}
