#pragma once

#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <functional>
#include <vector>

#include "sctrace/errors.hpp"

namespace sctrace {

struct Trajectory {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> dy;
};

struct ShootingResult {
  Trajectory trajectory;
  double slope = 0.0;      // converged initial slope
  double mismatch = 0.0;   // final boundary mismatch
};

namespace detail {

/// Integrate y'' = rhs(x, y, y') adaptively from x0 to x1 and return the
/// final (y, y'), optionally recording the dense trajectory.
template <class Rhs>
std::array<double, 2> integrate_second_order(Rhs&& rhs, double x0, double x1, double y0,
                                             double dy0, double tol,
                                             Trajectory* record = nullptr) {
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 2>;
  State s{y0, dy0};
  auto system = [&](const State& v, State& dvdx, double x) {
    dvdx[0] = v[1];
    dvdx[1] = rhs(x, v[0], v[1]);
  };
  auto stepper = odeint::make_controlled(tol, tol, odeint::runge_kutta_dopri5<State>());
  if (record) {
    auto obs = [&](const State& v, double x) {
      record->x.push_back(x);
      record->y.push_back(v[0]);
      record->dy.push_back(v[1]);
    };
    odeint::integrate_adaptive(stepper, system, s, x0, x1, (x1 - x0) * 1e-3, obs);
  } else {
    odeint::integrate_adaptive(stepper, system, s, x0, x1, (x1 - x0) * 1e-3);
  }
  return s;
}

}  // namespace detail

/// Shooting solve of the two-point problem y'' = rhs(x,y,y'), y(x0) = y0,
/// y(x1) = target, by bisection (with a secant refinement) on the initial
/// slope. The bracket must straddle a sign change of the boundary mismatch.
template <class Rhs>
ShootingResult solve_ode_shooting(Rhs&& rhs, double x0, double x1, double y0,
                                  std::array<double, 2> slope_bracket, double target,
                                  double tol) {
  if (!(tol > 0)) throw ParameterError("solve_ode_shooting: tol must be > 0");
  double sa = slope_bracket[0], sb = slope_bracket[1];
  const double ode_tol = std::min(1e-10, 0.01 * tol);
  auto mismatch = [&](double slope) {
    return detail::integrate_second_order(rhs, x0, x1, y0, slope, ode_tol)[0] - target;
  };
  double fa = mismatch(sa), fb = mismatch(sb);
  if (!(sa < sb) || fa * fb > 0)
    throw SolverError("solve_ode_shooting: bracket does not straddle a sign change");

  double sm = sa, fm = fa;
  for (int iter = 0; iter < 200 && std::abs(fm) > tol; ++iter) {
    // secant candidate, guarded by bisection
    double cand = sb - fb * (sb - sa) / (fb - fa);
    if (!(cand > sa && cand < sb)) cand = 0.5 * (sa + sb);
    fm = mismatch(cand);
    sm = cand;
    if (fa * fm <= 0) {
      sb = cand;
      fb = fm;
    } else {
      sa = cand;
      fa = fm;
    }
    if (sb - sa < 1e-15 * std::max(1.0, std::abs(sa))) break;
  }
  if (std::abs(fm) > tol)
    throw SolverError("solve_ode_shooting: did not reach boundary tolerance");

  ShootingResult out;
  out.slope = sm;
  out.mismatch = fm;
  detail::integrate_second_order(rhs, x0, x1, y0, sm, ode_tol, &out.trajectory);
  return out;
}

}  // namespace sctrace
