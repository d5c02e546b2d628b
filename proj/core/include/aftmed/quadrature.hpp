#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "aftmed/errors.hpp"

namespace aftmed {

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;
  std::size_t evaluations = 0;
  bool converged = true;

  QuadratureResult& operator+=(const QuadratureResult& other) {
    value += other.value;
    abs_error += other.abs_error;
    evaluations += other.evaluations;
    converged = converged && other.converged;
    return *this;
  }
};

// Adaptive bisection over Gauss-Kronrod 15 panels with an absolute-error
// target. The worst panel (by error estimate, ties by left endpoint) is split
// until the summed estimate meets abs_tol or the panel budget runs out; the
// final value is accumulated in interval order so results are deterministic.
// A machine-precision relative floor caps the effective target: when the
// integral's magnitude makes abs_tol unreachable in double arithmetic, the
// result counts as converged once the error estimate is a small multiple of
// rounding error on the value.
inline constexpr double kQuadratureRelativeFloor = 1e-14;
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double abs_tol,
                           std::size_t max_panels = 4096) {
  QuadratureResult out;
  if (!(a < b)) {
    return out;
  }

  struct Panel {
    double lo, hi, value, error;
  };
  using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;

  std::size_t evals = 0;
  auto eval_panel = [&](double lo, double hi) {
    Panel p{lo, hi, 0.0, 0.0};
    p.value = Rule::integrate(f, lo, hi, 0, 0.0, &p.error);
    evals += 15;
    return p;
  };

  std::vector<Panel> panels;
  panels.push_back(eval_panel(a, b));

  auto total_error = [&] {
    double e = 0.0;
    for (const Panel& p : panels) e += p.error;
    return e;
  };
  auto error_goal = [&] {
    double v = 0.0;
    for (const Panel& p : panels) v += p.value;
    return std::max(abs_tol, kQuadratureRelativeFloor * std::abs(v));
  };

  while (total_error() > error_goal() && panels.size() < max_panels) {
    std::size_t worst = 0;
    for (std::size_t i = 1; i < panels.size(); ++i) {
      if (panels[i].error > panels[worst].error ||
          (panels[i].error == panels[worst].error &&
           panels[i].lo < panels[worst].lo)) {
        worst = i;
      }
    }
    const Panel victim = panels[worst];
    const double mid = 0.5 * (victim.lo + victim.hi);
    if (!(victim.lo < mid && mid < victim.hi)) {
      break;  // interval at floating-point resolution
    }
    panels[worst] = eval_panel(victim.lo, mid);
    panels.push_back(eval_panel(mid, victim.hi));
  }

  std::sort(panels.begin(), panels.end(),
            [](const Panel& x, const Panel& y) { return x.lo < y.lo; });
  for (const Panel& p : panels) {
    out.value += p.value;
    out.abs_error += p.error;
  }
  out.evaluations = evals;
  out.converged =
      std::isfinite(out.value) &&
      out.abs_error <=
          std::max(abs_tol, kQuadratureRelativeFloor * std::abs(out.value));
  return out;
}

template <class F>
QuadratureResult integrate_or_throw(F&& f, double a, double b, double abs_tol,
                                    std::size_t max_panels = 4096) {
  QuadratureResult r = integrate(std::forward<F>(f), a, b, abs_tol, max_panels);
  if (!r.converged) {
    throw QuadratureError("adaptive quadrature did not reach tolerance " +
                          std::to_string(abs_tol) + " (error estimate " +
                          std::to_string(r.abs_error) + ", " +
                          std::to_string(r.evaluations) + " evaluations)");
  }
  return r;
}

}  // namespace aftmed
