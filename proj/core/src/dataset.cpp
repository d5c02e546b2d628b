#include "aftmed/dataset.hpp"

#include <cmath>
#include <sstream>

#include "aftmed/errors.hpp"

namespace aftmed {

SurvivalOutcome SurvivalOutcome::exact(double t) {
  return {OutcomeKind::exact, t, t};
}

SurvivalOutcome SurvivalOutcome::right_censored(double c) {
  return {OutcomeKind::right_censored, c, c};
}

SurvivalOutcome SurvivalOutcome::interval(double lower, double upper) {
  return {OutcomeKind::interval_censored, lower, upper};
}

namespace {

// Earliest time the subject is known to have been under observation through.
double observed_time(const Subject& s) { return s.outcome.time; }

void check_subject(const Subject& s, std::size_t row,
                   std::size_t covariate_count, std::vector<std::string>& bad) {
  std::ostringstream msg;
  const SurvivalOutcome& o = s.outcome;
  if (!std::isfinite(o.time) || o.time <= 0.0) {
    msg << "row " << row << ": nonpositive or non-finite time " << o.time;
  } else if (o.kind == OutcomeKind::interval_censored &&
             (!std::isfinite(o.upper) || !(o.time < o.upper))) {
    msg << "row " << row << ": interval bounds out of order (lower=" << o.time
        << ", upper=" << o.upper << ")";
  } else if (!std::isfinite(s.truncation) || s.truncation < 0.0) {
    msg << "row " << row << ": negative or non-finite truncation time "
        << s.truncation;
  } else if (s.truncation > observed_time(s)) {
    msg << "row " << row << ": truncation time " << s.truncation
        << " exceeds observed time " << observed_time(s);
  } else if (!std::isfinite(s.exposure) || !std::isfinite(s.mediator)) {
    msg << "row " << row << ": non-finite exposure or mediator";
  } else if (s.covariates.size() != covariate_count) {
    msg << "row " << row << ": expected " << covariate_count
        << " covariates, got " << s.covariates.size();
  } else {
    for (std::size_t j = 0; j < s.covariates.size(); ++j) {
      if (!std::isfinite(s.covariates[j])) {
        msg << "row " << row << ": non-finite covariate " << j;
        break;
      }
    }
  }
  const std::string m = msg.str();
  if (!m.empty() && bad.size() < 10) {
    bad.push_back(m);
  }
}

}  // namespace

Dataset::Dataset(std::vector<Subject> subjects,
                 std::vector<std::string> covariate_names)
    : subjects_(std::move(subjects)),
      covariate_names_(std::move(covariate_names)) {
  if (subjects_.empty()) {
    throw DataError("dataset: no subjects");
  }
  std::vector<std::string> bad;
  std::size_t non_right = 0;
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    check_subject(subjects_[i], i + 1, covariate_names_.size(), bad);
    if (subjects_[i].outcome.kind != OutcomeKind::right_censored) {
      ++non_right;
    }
  }
  if (!bad.empty()) {
    std::string what = "dataset: invalid rows:";
    for (const std::string& b : bad) {
      what += "\n  " + b;
    }
    throw DataError(what);
  }
  if (non_right == 0) {
    throw DataError(
        "dataset: every outcome is right-censored; the model is not "
        "identifiable");
  }
}

CensoringSummary summarize(const Dataset& dataset) {
  CensoringSummary s;
  s.n = dataset.size();
  for (const Subject& subj : dataset.subjects()) {
    switch (subj.outcome.kind) {
      case OutcomeKind::exact:
        ++s.exact_count;
        break;
      case OutcomeKind::right_censored:
        ++s.right_censored_count;
        break;
      case OutcomeKind::interval_censored:
        ++s.interval_censored_count;
        break;
    }
    if (subj.truncation > 0.0) {
      ++s.truncated_count;
    }
  }
  const double n = static_cast<double>(s.n);
  s.exact_fraction = static_cast<double>(s.exact_count) / n;
  s.right_censored_fraction = static_cast<double>(s.right_censored_count) / n;
  s.interval_censored_fraction =
      static_cast<double>(s.interval_censored_count) / n;
  return s;
}

}  // namespace aftmed
