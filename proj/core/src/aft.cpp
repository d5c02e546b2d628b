#include "aftmed/aft.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <stdexcept>

#include "aftmed/errors.hpp"

namespace aftmed {

namespace {

constexpr double kLogFloor = -690.77552789821368;  // log(1e-300)
constexpr double kScoreTol = 1e-8;
constexpr double kLoglikRelTol = 1e-12;
constexpr int kMaxIterations = 200;
constexpr int kMaxHalvings = 50;
constexpr double kFdStep = 1e-6;

ErrorLaw fittable_law(LawKind kind) {
  switch (kind) {
    case LawKind::standard_normal:
      return ErrorLaw::standard_normal();
    case LawKind::extreme_value_min:
      return ErrorLaw::extreme_value_min();
    case LawKind::convolved:
      break;
  }
  throw FitError(
      "the convolved law has no standard parameterization to fit; "
      "choose standard_normal or extreme_value_min");
}

// Outcome on the log-time scale, precomputed once per fit.
struct Obs {
  OutcomeKind kind = OutcomeKind::exact;
  double y1 = 0.0;  // log t, log c, or log l
  double y2 = 0.0;  // log r for intervals
  double yv = 0.0;  // log V when truncated
  bool truncated = false;
};

struct Workspace {
  ErrorLaw law = ErrorLaw::standard_normal();
  Eigen::MatrixXd X;
  std::vector<Obs> obs;
};

Workspace build_workspace(const AftSpec& spec, const Dataset& dataset) {
  Workspace ws;
  ws.law = fittable_law(spec.law);
  ws.X = design_matrix(spec.design, dataset);
  ws.obs.reserve(dataset.size());
  for (const Subject& s : dataset.subjects()) {
    Obs o;
    o.kind = s.outcome.kind;
    o.y1 = std::log(s.outcome.time);
    if (o.kind == OutcomeKind::interval_censored) {
      o.y2 = std::log(s.outcome.upper);
    }
    if (s.truncation > 0.0) {
      o.truncated = true;
      o.yv = std::log(s.truncation);
    }
    ws.obs.push_back(o);
  }
  return ws;
}

void check_params(const Workspace& ws, const AftParams& params) {
  if (params.coefficients.size() != ws.X.cols()) {
    throw FitError("parameter vector has " +
                   std::to_string(params.coefficients.size()) +
                   " coefficients; the design has " +
                   std::to_string(ws.X.cols()) + " columns");
  }
  if (!params.coefficients.allFinite() || !std::isfinite(params.log_scale)) {
    throw FitError("parameters must be finite");
  }
}

// log(F(zr) - F(zl)) evaluated in whichever tail keeps the two log
// probabilities farthest apart, so narrow intervals never cancel.
double log_interval_prob(const ErrorLaw& law, double zl, double zr,
                         int* floored) {
  const double gap_cdf = law.log_cdf(zl) - law.log_cdf(zr);
  const double gap_surv = law.log_survival(zr) - law.log_survival(zl);
  double r;
  if (gap_cdf <= gap_surv) {
    r = law.log_cdf(zr) + std::log1p(-std::exp(gap_cdf));
  } else {
    r = law.log_survival(zl) + std::log1p(-std::exp(gap_surv));
  }
  if (!(r >= kLogFloor)) {
    r = kLogFloor;
    if (floored) ++*floored;
  }
  return r;
}

double loglik_ws(const Workspace& ws, const AftParams& params, int* floored) {
  const Eigen::VectorXd eta = ws.X * params.coefficients;
  const double inv_sigma = std::exp(-params.log_scale);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < ws.X.rows(); ++i) {
    const Obs& o = ws.obs[static_cast<std::size_t>(i)];
    switch (o.kind) {
      case OutcomeKind::exact:
        ll += ws.law.log_density((o.y1 - eta[i]) * inv_sigma) -
              params.log_scale;
        break;
      case OutcomeKind::right_censored:
        ll += ws.law.log_survival((o.y1 - eta[i]) * inv_sigma);
        break;
      case OutcomeKind::interval_censored:
        ll += log_interval_prob(ws.law, (o.y1 - eta[i]) * inv_sigma,
                                (o.y2 - eta[i]) * inv_sigma, floored);
        break;
    }
    if (o.truncated) {
      ll -= ws.law.log_survival((o.yv - eta[i]) * inv_sigma);
    }
  }
  return ll;
}

Eigen::VectorXd score_ws(const Workspace& ws, const AftParams& params) {
  const Eigen::Index p = ws.X.cols();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p + 1);
  const Eigen::VectorXd eta = ws.X * params.coefficients;
  const double inv_sigma = std::exp(-params.log_scale);
  for (Eigen::Index i = 0; i < ws.X.rows(); ++i) {
    const Obs& o = ws.obs[static_cast<std::size_t>(i)];
    double gb = 0.0;  // multiplies x_ij / sigma below
    double gs = 0.0;  // d/d log_scale
    switch (o.kind) {
      case OutcomeKind::exact: {
        const double z = (o.y1 - eta[i]) * inv_sigma;
        const double lam = ws.law.log_density_derivative(z);
        gb = -lam;
        gs = -z * lam - 1.0;
        break;
      }
      case OutcomeKind::right_censored: {
        const double z = (o.y1 - eta[i]) * inv_sigma;
        const double h = ws.law.hazard(z);
        gb = h;
        gs = z * h;
        break;
      }
      case OutcomeKind::interval_censored: {
        const double zl = (o.y1 - eta[i]) * inv_sigma;
        const double zr = (o.y2 - eta[i]) * inv_sigma;
        const double dF = std::exp(log_interval_prob(ws.law, zl, zr, nullptr));
        const double fl = ws.law.density(zl);
        const double fr = ws.law.density(zr);
        gb = -(fr - fl) / dF;
        gs = -(zr * fr - zl * fl) / dF;
        break;
      }
    }
    if (o.truncated) {
      const double zv = (o.yv - eta[i]) * inv_sigma;
      const double h = ws.law.hazard(zv);
      gb -= h;
      gs -= zv * h;
    }
    g.head(p) += (gb * inv_sigma) * ws.X.row(i).transpose();
    g[p] += gs;
  }
  return g;
}

Eigen::MatrixXd fd_hessian(const Workspace& ws, const AftParams& params) {
  const Eigen::Index m = params.coefficients.size() + 1;
  Eigen::MatrixXd H(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    AftParams up = params;
    AftParams dn = params;
    if (j < m - 1) {
      up.coefficients[j] += kFdStep;
      dn.coefficients[j] -= kFdStep;
    } else {
      up.log_scale += kFdStep;
      dn.log_scale -= kFdStep;
    }
    H.col(j) = (score_ws(ws, up) - score_ws(ws, dn)) / (2.0 * kFdStep);
  }
  return 0.5 * (H + H.transpose());
}

void check_full_rank(const Eigen::MatrixXd& X,
                     const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) {
    const auto& perm = qr.colsPermutation().indices();
    const std::string culprit =
        names[static_cast<std::size_t>(perm[qr.rank()])];
    throw FitError("design matrix is rank deficient: column '" + culprit +
                   "' is linearly dependent on the others");
  }
}

// Censoring-naive response: observed log time, interval midpoints on the
// log scale. Used only to seed the Newton iterations.
Eigen::VectorXd naive_log_time(const Workspace& ws) {
  Eigen::VectorXd y(ws.X.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Obs& o = ws.obs[static_cast<std::size_t>(i)];
    y[i] = o.kind == OutcomeKind::interval_censored ? 0.5 * (o.y1 + o.y2)
                                                    : o.y1;
  }
  return y;
}

AftParams initial_params(const Workspace& ws) {
  const Eigen::VectorXd y = naive_log_time(ws);
  AftParams out;
  out.coefficients = ws.X.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd resid = y - ws.X * out.coefficients;
  const double sd =
      std::sqrt(resid.squaredNorm() / static_cast<double>(y.size()));
  out.log_scale = std::log(std::max(sd, 1e-4));
  return out;
}

std::size_t name_index(const std::vector<std::string>& names,
                       const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw std::invalid_argument("no coefficient named '" + name + "'");
}

}  // namespace

std::vector<std::string> design_names(const DesignSpec& design,
                                      const Dataset& dataset) {
  std::vector<std::string> names{"(intercept)"};
  if (design.exposure) names.push_back("exposure");
  if (design.mediator) names.push_back("mediator");
  if (design.covariates) {
    for (const std::string& name : dataset.covariate_names()) {
      names.push_back(name);
    }
  }
  return names;
}

Eigen::MatrixXd design_matrix(const DesignSpec& design,
                              const Dataset& dataset) {
  const auto& subjects = dataset.subjects();
  const Eigen::Index n = static_cast<Eigen::Index>(subjects.size());
  const Eigen::Index p =
      1 + (design.exposure ? 1 : 0) + (design.mediator ? 1 : 0) +
      (design.covariates ? static_cast<Eigen::Index>(dataset.covariate_count())
                         : 0);
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Subject& s = subjects[static_cast<std::size_t>(i)];
    Eigen::Index c = 0;
    X(i, c++) = 1.0;
    if (design.exposure) X(i, c++) = s.exposure;
    if (design.mediator) X(i, c++) = s.mediator;
    if (design.covariates) {
      for (double v : s.covariates) X(i, c++) = v;
    }
  }
  return X;
}

std::size_t AftFit::index_of(const std::string& name) const {
  return name_index(coefficient_names, name);
}

std::size_t LinearFit::index_of(const std::string& name) const {
  return name_index(coefficient_names, name);
}

double loglik(const AftSpec& spec, const AftParams& params,
              const Dataset& dataset, int* floored_intervals) {
  const Workspace ws = build_workspace(spec, dataset);
  check_params(ws, params);
  return loglik_ws(ws, params, floored_intervals);
}

Eigen::VectorXd score(const AftSpec& spec, const AftParams& params,
                      const Dataset& dataset) {
  const Workspace ws = build_workspace(spec, dataset);
  check_params(ws, params);
  return score_ws(ws, params);
}

AftFit fit(const AftSpec& spec, const Dataset& dataset,
           const std::optional<AftParams>& init) {
  const Workspace ws = build_workspace(spec, dataset);
  const Eigen::Index p = ws.X.cols();
  const std::vector<std::string> names = design_names(spec.design, dataset);
  check_full_rank(ws.X, names);

  AftParams params = init ? *init : initial_params(ws);
  check_params(ws, params);

  double ll = loglik_ws(ws, params, nullptr);
  if (!std::isfinite(ll)) {
    throw FitError("log-likelihood is not finite at the initial parameters");
  }

  const Eigen::MatrixXd identity =
      Eigen::MatrixXd::Identity(p + 1, p + 1);
  Eigen::VectorXd g = score_ws(ws, params);
  double last_change = 0.0;
  bool converged = false;
  int iterations = 0;

  while (iterations < kMaxIterations) {
    if (!g.allFinite()) {
      throw FitError("score is not finite during optimization");
    }
    if (g.cwiseAbs().maxCoeff() < kScoreTol &&
        last_change <= kLoglikRelTol * (std::abs(ll) + 1.0)) {
      converged = true;
      break;
    }

    // Newton direction from the negated finite-difference Hessian, with a
    // ridge escalated until the system is positive definite.
    const Eigen::MatrixXd A = -fd_hessian(ws, params);
    const double scale_hint = A.diagonal().cwiseAbs().maxCoeff() + 1.0;
    double ridge = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    while (llt.info() != Eigen::Success) {
      ridge = ridge == 0.0 ? 1e-8 * scale_hint : ridge * 10.0;
      if (ridge > 1e12 * scale_hint) {
        throw FitError("cannot stabilize the Newton system");
      }
      llt.compute(A + ridge * identity);
    }
    const Eigen::VectorXd step = llt.solve(g);

    // Step-halving line search; accepts any step that does not worsen the
    // log-likelihood beyond roundoff, which keeps heavily censored fits
    // moving when the quadratic model is poor near the optimum.
    bool accepted = false;
    double t = 1.0;
    for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
      AftParams cand = params;
      cand.coefficients += t * step.head(p);
      cand.log_scale += t * step[p];
      const double cll = loglik_ws(ws, cand, nullptr);
      if (std::isfinite(cll) && cll >= ll - 1e-13 * (std::abs(ll) + 1.0)) {
        last_change = std::abs(cll - ll);
        params = std::move(cand);
        ll = cll;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    ++iterations;
    g = score_ws(ws, params);
  }

  if (!converged && g.allFinite() &&
      g.cwiseAbs().maxCoeff() < kScoreTol &&
      last_change <= kLoglikRelTol * (std::abs(ll) + 1.0)) {
    converged = true;
  }

  AftFit out;
  out.coefficient_names = names;
  out.coefficients = params.coefficients;
  out.log_scale = params.log_scale;
  out.loglik = ll;
  out.converged = converged;
  out.iterations = iterations;
  out.max_abs_score = g.cwiseAbs().maxCoeff();

  Eigen::LLT<Eigen::MatrixXd> obs_info(-fd_hessian(ws, params));
  if (obs_info.info() == Eigen::Success) {
    Eigen::MatrixXd cov = obs_info.solve(identity);
    cov = 0.5 * (cov + cov.transpose());
    if (cov.allFinite()) {
      out.covariance = std::move(cov);
      out.covariance_available = true;
    }
  }
  return out;
}

LinearFit fit_linear(const Dataset& dataset, bool mediator_as_response) {
  DesignSpec design;  // intercept + exposure + covariates
  const Eigen::MatrixXd X = design_matrix(design, dataset);
  const std::vector<std::string> names = design_names(design, dataset);
  check_full_rank(X, names);

  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Eigen::VectorXd y(n);
  if (mediator_as_response) {
    for (Eigen::Index i = 0; i < n; ++i) {
      y[i] = dataset.subjects()[static_cast<std::size_t>(i)].mediator;
    }
  } else {
    AftSpec spec;  // law irrelevant for the naive response
    y = naive_log_time(build_workspace(spec, dataset));
  }

  LinearFit out;
  out.coefficient_names = names;
  out.coefficients = X.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd resid = y - X * out.coefficients;
  out.residual_sd =
      n > p ? std::sqrt(resid.squaredNorm() / static_cast<double>(n - p))
            : 0.0;
  const Eigen::MatrixXd xtx_inv =
      (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  out.covariance = out.residual_sd * out.residual_sd * xtx_inv;
  return out;
}

}  // namespace aftmed
