#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace aftmed {

enum class OutcomeKind { exact, right_censored, interval_censored };

// One subject's observed event information on the time scale (t > 0).
// Interval censoring stores (lower, upper) with lower < upper; the other
// kinds use only `time`.
struct SurvivalOutcome {
  OutcomeKind kind = OutcomeKind::exact;
  double time = 0.0;
  double upper = 0.0;

  static SurvivalOutcome exact(double t);
  static SurvivalOutcome right_censored(double c);
  static SurvivalOutcome interval(double lower, double upper);
};

struct Subject {
  SurvivalOutcome outcome;
  double truncation = 0.0;  // left-truncation entry time; 0 means none
  double exposure = 0.0;
  double mediator = 0.0;
  std::vector<double> covariates;
};

// Validated collection of subjects. Construction enforces: at least one
// subject, strictly positive times, ordered interval bounds, truncation not
// after the observed time, homogeneous covariate length matching the names,
// and at least one non-right-censored outcome (the likelihood is otherwise
// unbounded in the intercept).
class Dataset {
 public:
  Dataset(std::vector<Subject> subjects,
          std::vector<std::string> covariate_names = {});

  const std::vector<Subject>& subjects() const { return subjects_; }
  std::size_t size() const { return subjects_.size(); }
  const std::vector<std::string>& covariate_names() const {
    return covariate_names_;
  }
  std::size_t covariate_count() const { return covariate_names_.size(); }

 private:
  std::vector<Subject> subjects_;
  std::vector<std::string> covariate_names_;
};

struct CensoringSummary {
  std::size_t n = 0;
  std::size_t exact_count = 0;
  std::size_t right_censored_count = 0;
  std::size_t interval_censored_count = 0;
  std::size_t truncated_count = 0;
  double exact_fraction = 0.0;
  double right_censored_fraction = 0.0;
  double interval_censored_fraction = 0.0;
};

CensoringSummary summarize(const Dataset& dataset);

}  // namespace aftmed
