#pragma once

#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "sctrace/errors.hpp"
#include "sctrace/grid.hpp"

namespace sctrace::tf {

inline constexpr double pi = std::numbers::pi;

/// Decay exponent of corrections to the x^{-3} far-field power law of the
/// universal screening function: (sqrt(73)-7)/2.
inline const double tail_lambda = 0.5 * (std::sqrt(73.0) - 7.0);

namespace detail {

using LD = long double;
using State = std::array<LD, 2>;  // (psi, psi') in the variable t = sqrt(x)

// In t = sqrt(x) the universal equation phi'' = phi^{3/2}/sqrt(x) becomes
// psi'' = psi'/t + 4 t psi^{3/2} with psi(t) = phi(t^2); the substitution
// removes the x^{-1/2} singularity that defeats adaptive error control at
// the origin. Negative psi is clamped (only reached by off-separatrix trial
// slopes during bisection).
inline void universal_rhs(const State& s, State& dsdt, LD t) {
  const LD psi = s[0];
  dsdt[0] = s[1];
  dsdt[1] = s[1] / t + (psi > 0 ? 4 * t * psi * std::sqrt(psi) : LD(0));
}

// Series start about t = 0:
// psi = 1 + B t^2 + (4/3) t^3 + (2B/5) t^5 + t^6/3 + (3B^2/70) t^7 + ...
inline State series_start(LD b, LD t) {
  const LD t2 = t * t, t3 = t2 * t, t5 = t2 * t3, t6 = t3 * t3, t7 = t6 * t;
  State s;
  s[0] = 1 + b * t2 + (LD(4) / 3) * t3 + (LD(2) / 5) * b * t5 + t6 / 3 +
         (LD(3) / 70) * b * b * t7;
  s[1] = 2 * b * t + 4 * t2 + 2 * b * t2 * t2 + 2 * t5 + (LD(3) / 10) * b * b * t6;
  return s;
}

enum class Shot { Crossed, Diverged, Ambiguous };

template <class Stepper>
Shot classify_shot(Stepper& stepper, LD slope, LD t_end) {
  namespace odeint = boost::numeric::odeint;
  const LD t0 = 1e-4L;
  LD t = t0;
  LD dt = 1e-5L;
  State s = series_start(slope, t0);
  while (t < t_end) {
    dt = std::min(dt, t_end - t);
    auto res = stepper.try_step(universal_rhs, s, t, dt);
    if (res == odeint::fail) {
      if (dt < 1e-30L) throw SolverError("tf universal: step underflow");
      continue;
    }
    if (s[0] <= 0) return Shot::Crossed;
    if (s[1] > 0) return Shot::Diverged;
  }
  const LD logslope = t_end * s[1] / (2 * s[0]);  // x phi'/phi
  if (logslope > -2.5L) return Shot::Diverged;
  if (logslope < -3.2L) return Shot::Crossed;
  return Shot::Ambiguous;
}

}  // namespace detail

/// Tabulated universal screening function: the solution of
/// phi'' = phi^{3/2}/sqrt(x), phi(0) = 1, phi(inf) = 0, with a fitted
/// power-law tail A x^{-3} (1 + c x^{-lambda}) beyond the table.
struct TFUniversal {
  std::vector<double> x;     // log-spaced table nodes
  std::vector<double> phi;
  std::vector<double> dphi;
  double initial_slope = 0.0;
  double tail_exponent_check = 0.0;  // log-log slope sampled in the far tail

  double tail_amp = 0.0;    // A
  double tail_corr = 0.0;   // c
  double x_table_max = 0.0;

  // validation samples past the table, kept for consistency checks
  std::vector<double> check_x, check_phi;

  double log_x0 = 0.0, dlog = 0.0;

  struct Value {
    double phi, dphi;
  };

  Value eval(double xq) const {
    if (!(xq >= 0)) throw ParameterError("TFUniversal: argument must be >= 0");
    if (xq <= x.front()) {
      // series about the origin
      const double b = initial_slope;
      const double sx = std::sqrt(std::max(xq, 0.0));
      const double p = 1 + b * xq + (4.0 / 3.0) * xq * sx + 0.4 * b * xq * xq * sx +
                       xq * xq * xq / 3.0;
      const double dp = b + 2 * sx + b * xq * sx + xq * xq;
      return {p, dp};
    }
    if (xq >= x_table_max) {
      const double t = std::pow(xq, -tail_lambda);
      const double p = tail_amp * std::pow(xq, -3.0) * (1 + tail_corr * t);
      const double dp = tail_amp * (-3.0 * std::pow(xq, -4.0) * (1 + tail_corr * t) -
                                    tail_lambda * tail_corr * std::pow(xq, -4.0 - tail_lambda));
      return {p, dp};
    }
    // cubic Hermite between log-spaced nodes; O(1) index lookup
    std::size_t i = std::size_t((std::log(xq) - log_x0) / dlog);
    i = std::min(i, x.size() - 2);
    while (i > 0 && xq < x[i]) --i;
    while (i + 2 < x.size() && xq > x[i + 1]) ++i;
    const double hx = x[i + 1] - x[i];
    const double t = (xq - x[i]) / hx;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    const double p = h00 * phi[i] + h10 * hx * dphi[i] + h01 * phi[i + 1] + h11 * hx * dphi[i + 1];
    const double d00 = 6 * t2 - 6 * t, d10 = 3 * t2 - 4 * t + 1;
    const double d01 = -6 * t2 + 6 * t, d11 = 3 * t2 - 2 * t;
    const double dp =
        (d00 * phi[i] + d01 * phi[i + 1]) / hx + d10 * dphi[i] + d11 * dphi[i + 1];
    return {p, dp};
  }

  double operator()(double xq) const { return eval(xq).phi; }

  double log_slope(double xq) const {
    const auto v = eval(xq);
    return xq * v.dphi / v.phi;
  }

  /// (1 - phi(x))/x, continuous through x = 0 (limit -initial_slope).
  double one_minus_phi_over_x(double xq) const {
    if (xq < 1e-6) {
      const double sx = std::sqrt(std::max(xq, 0.0));
      return -initial_slope - (4.0 / 3.0) * sx - 0.4 * initial_slope * xq * sx -
             xq * xq / 3.0;
    }
    return (1.0 - eval(xq).phi) / xq;
  }
};

/// Solve the universal equation by bisection shooting on the initial slope.
/// Long-double integration keeps the separatrix trajectory usable out to
/// x ~ 140 before the unstable mode contaminates it.
inline TFUniversal solve_tf_universal(double tol = 1e-12, std::size_t table_nodes = 6000) {
  namespace odeint = boost::numeric::odeint;
  using detail::LD;
  using detail::State;
  if (!(tol > 0)) throw ParameterError("solve_tf_universal: tol must be > 0");

  auto stepper = odeint::make_controlled(LD(1e-16), LD(1e-16),
                                         odeint::runge_kutta_fehlberg78<State, LD>());

  const LD t_end = std::sqrt(300.0L);
  LD lo = -1.7L, hi = -1.5L;  // crossing / diverging slopes
  if (detail::classify_shot(stepper, lo, t_end) != detail::Shot::Crossed ||
      detail::classify_shot(stepper, hi, t_end) != detail::Shot::Diverged)
    throw SolverError("tf universal: initial bracket failed");
  // The slope must be resolved to the long-double floor: trajectory errors
  // grow like x^{4.77}, so a slope residual d leaves the table unusable past
  // x with d * x^{4.77} ~ phi(x).
  while (hi - lo > LD(1e-19) * std::abs(lo)) {
    const LD mid = 0.5L * (lo + hi);
    const auto shot = detail::classify_shot(stepper, mid, t_end);
    if (shot == detail::Shot::Crossed)
      lo = mid;
    else if (shot == detail::Shot::Diverged)
      hi = mid;
    else {
      lo = hi = mid;  // inside the numerical ambiguity band
      break;
    }
  }
  const LD slope = 0.5L * (lo + hi);

  TFUniversal u;
  u.initial_slope = double(slope);

  // Final trajectory, recorded at log-spaced nodes up to x=110 (table) and
  // sparse validation samples up to x=140.
  const double x0 = 1e-8, x_tab = 110.0, x_val = 140.0, x_fit = 100.0;
  std::vector<LD> times;  // in t = sqrt(x)
  times.reserve(table_nodes + 64);
  const double lx0 = std::log(x0), lx1 = std::log(x_tab);
  for (std::size_t i = 0; i < table_nodes; ++i)
    times.push_back(std::sqrt(LD(std::exp(lx0 + (lx1 - lx0) * double(i) / double(table_nodes - 1)))));
  times[table_nodes - 1] = std::sqrt(LD(x_tab));
  for (int i = 1; i <= 24; ++i) times.push_back(std::sqrt(LD(x_tab + (x_val - x_tab) * i / 24.0)));

  State s = detail::series_start(slope, times.front());
  std::vector<double> xs, ps, ds;
  xs.reserve(times.size());
  auto obs = [&](const State& v, LD tt) {
    xs.push_back(double(tt * tt));
    ps.push_back(double(v[0]));
    ds.push_back(double(v[1] / (2 * tt)));  // phi'(x) = psi'(t)/(2t)
  };
  odeint::integrate_times(stepper, detail::universal_rhs, s, times.begin(), times.end(),
                          LD(1e-6), obs);

  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] <= x_tab * (1 + 1e-12)) {
      u.x.push_back(xs[i]);
      u.phi.push_back(ps[i]);
      u.dphi.push_back(ds[i]);
    } else {
      u.check_x.push_back(xs[i]);
      u.check_phi.push_back(ps[i]);
    }
  }
  if (u.phi.back() <= 0) throw SolverError("tf universal: table left the separatrix");
  u.x_table_max = x_tab;
  u.log_x0 = std::log(u.x.front());
  u.dlog = (std::log(u.x.back()) - u.log_x0) / double(u.x.size() - 1);

  // C^1 tail fit A x^{-3}(1 + c x^{-lambda}) at x_fit.
  {
    std::size_t i = 0;
    while (i + 1 < u.x.size() && u.x[i + 1] < x_fit) ++i;
    const double xm = u.x[i], pm = u.phi[i], dm = u.dphi[i];
    const double sm = xm * dm / pm;
    const double g = -(sm + 3.0) / (sm + 3.0 + tail_lambda);
    u.tail_corr = g * std::pow(xm, tail_lambda);
    u.tail_amp = pm * xm * xm * xm / (1.0 + g);
    // splice: drop table nodes past the fit point so eval() switches to the
    // tail exactly where it was matched
    u.x.resize(i + 1);
    u.phi.resize(i + 1);
    u.dphi.resize(i + 1);
    u.x_table_max = xm;
  }
  u.tail_exponent_check = u.log_slope(3000.0);
  return u;
}

/// Process-wide universal solution (the equation is z-independent).
inline const TFUniversal& universal_solution() {
  static const TFUniversal u = solve_tf_universal();
  return u;
}

/// Neutral Thomas-Fermi atom of charge z. The length scale
/// mu = (3 pi / 2^{7/2})^{2/3} z^{-1/3} is fixed by inserting
/// V = z phi(r/mu)/r into the TF and Poisson equations and demanding the
/// standard form phi'' = phi^{3/2}/sqrt(x); the residual tests pin it.
class TFAtom {
public:
  explicit TFAtom(double z, const TFUniversal* universal = nullptr)
      : z_(z), univ_(universal ? universal : &universal_solution()) {
    if (!(z > 0)) throw ParameterError("TFAtom: z must be > 0");
    mu_ = std::pow(3.0 * pi / (4.0 * std::sqrt(8.0)), 2.0 / 3.0) * std::pow(z, -1.0 / 3.0);
  }

  double z() const { return z_; }
  double length_scale() const { return mu_; }
  const TFUniversal& universal() const { return *univ_; }

  /// V^TF(r) = z phi(r/mu)/r  (> 0, ~ z/r as r -> 0).
  double potential(double r) const {
    require_positive(r);
    return z_ * (*univ_)(r / mu_) / r;
  }

  /// rho^TF = (2 V^TF)^{3/2} / (3 pi^2).
  double density(double r) const {
    const double v = potential(r);
    return std::pow(2.0 * v, 1.5) / (3.0 * pi * pi);
  }

  /// Screening potential z/r - V^TF(r) = (rho^TF * 1/|x|)(r); continuous and
  /// positive at r = 0 with value -z phi'(0)/mu.
  double screening(double r) const {
    if (r == 0.0) return -z_ * univ_->initial_slope / mu_;
    require_positive(r);
    return (z_ / mu_) * univ_->one_minus_phi_over_x(r / mu_);
  }

  /// Default radial quadrature grid in scaled units x = r/mu.
  Grid radial_grid(std::size_t nodes = 6000, double x_min = 1e-10,
                   double x_max = 1000.0) const {
    return make_grid(mu_ * x_min, mu_ * x_max, nodes, GridKind::LogSpaced);
  }

  /// Total electron number by radial quadrature (should be ~ z).
  double charge(const Grid& g) const {
    double s = 0, c = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = g.nodes[i];
      const double y = 4.0 * pi * r * r * density(r) * g.weights[i] - c;
      const double t = s + y;
      c = (t - s) - y;
      s = t;
    }
    return s;
  }

  double charge() const { return charge(radial_grid()); }

private:
  static void require_positive(double r) {
    if (!(r > 0)) throw ParameterError("TFAtom: r must be > 0");
  }

  double z_;
  double mu_;
  const TFUniversal* univ_;
};

/// D(rho) = 1/2 int rho Phi, Phi(r) = Q(<r)/r + int_{s>r} 4 pi s rho(s) ds
/// (Newton's theorem), all by cumulative trapezoid quadrature on the grid.
inline double coulomb_energy_radial(std::span<const double> rho, const Grid& g) {
  if (rho.size() != g.size()) throw ParameterError("coulomb_energy_radial: length mismatch");
  for (double v : rho)
    if (v < -1e-12) throw ContractError("coulomb_energy_radial: negative density");
  const std::size_t n = g.size();
  std::vector<double> q_in(n), s_out(n);
  double acc = 0.0;
  q_in[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double r0 = g.nodes[i - 1], r1 = g.nodes[i];
    acc += 0.5 * (4 * pi * r0 * r0 * rho[i - 1] + 4 * pi * r1 * r1 * rho[i]) * (r1 - r0);
    q_in[i] = acc;
  }
  acc = 0.0;
  s_out[n - 1] = 0.0;
  for (std::size_t i = n - 1; i-- > 0;) {
    const double r0 = g.nodes[i], r1 = g.nodes[i + 1];
    acc += 0.5 * (4 * pi * r0 * rho[i] + 4 * pi * r1 * rho[i + 1]) * (r1 - r0);
    s_out[i] = acc;
  }
  double d = 0, c = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = g.nodes[i];
    const double phi_r = q_in[i] / r + s_out[i];
    const double y = 0.5 * rho[i] * phi_r * 4 * pi * r * r * g.weights[i] - c;
    const double t = d + y;
    c = (t - d) - y;
    d = t;
  }
  return d;
}

struct TFEnergyBreakdown {
  double kinetic = 0, attraction = 0, repulsion = 0;
  double total() const { return kinetic - attraction + repulsion; }
};

/// TF energy functional (3/10)(3 pi^2)^{2/3} int rho^{5/3} - int V rho + D(rho)
/// evaluated for an arbitrary sampled density against the atom's nuclear
/// attraction z/r.
inline TFEnergyBreakdown tf_energy_of_density(const TFAtom& atom,
                                              std::span<const double> rho, const Grid& g) {
  if (rho.size() != g.size()) throw ParameterError("tf_energy_of_density: length mismatch");
  TFEnergyBreakdown e;
  const double ck = 0.3 * std::pow(3.0 * pi * pi, 2.0 / 3.0);
  double sk = 0, ca = 0, sa = 0, cc = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = g.nodes[i];
    const double shell = 4 * pi * r * r * g.weights[i];
    {
      const double y = ck * std::pow(std::max(rho[i], 0.0), 5.0 / 3.0) * shell - cc;
      const double t = sk + y;
      cc = (t - sk) - y;
      sk = t;
    }
    {
      const double y = (atom.z() / r) * rho[i] * shell - ca;
      const double t = sa + y;
      ca = (t - sa) - y;
      sa = t;
    }
  }
  e.kinetic = sk;
  e.attraction = sa;
  e.repulsion = coulomb_energy_radial(rho, g);
  return e;
}

/// E^TF of the atom. Checks that the truncated grid holds the electron mass
/// to 1% before trusting the quadrature.
inline double tf_energy(const TFAtom& atom, std::size_t nodes = 6000) {
  const Grid g = atom.radial_grid(nodes);
  const double q = atom.charge(g);
  if (std::abs(q - atom.z()) > 0.01 * atom.z())
    throw AccuracyError("tf_energy: radial grid loses electron mass");
  std::vector<double> rho(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) rho[i] = atom.density(g.nodes[i]);
  return tf_energy_of_density(atom, rho, g).total();
}

/// Max relative deviation of the scaling law
/// V^TF(z, x) = h^{-4} V^TF(h^3 z, x/h) over sampled radii.
inline double scaling_check(const TFAtom& atom, double h,
                            std::span<const double> radii) {
  if (!(h > 0)) throw ParameterError("scaling_check: h must be > 0");
  TFAtom scaled(h * h * h * atom.z(), &atom.universal());
  double worst = 0.0;
  for (double r : radii) {
    const double v = atom.potential(r);
    const double vs = std::pow(h, -4.0) * scaled.potential(r / h);
    worst = std::max(worst, std::abs(v - vs) / std::abs(v));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Molecular geometry helpers.

using Vec3 = std::array<double, 3>;

inline double dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct MolecularGeometry {
  std::vector<Vec3> centers;
  std::vector<double> charges;
  double ell0 = 0.5;

  MolecularGeometry(std::vector<Vec3> r, std::vector<double> z, double l0)
      : centers(std::move(r)), charges(std::move(z)), ell0(l0) {
    if (centers.empty() || centers.size() != charges.size())
      throw ParameterError("MolecularGeometry: centers/charges mismatch");
    if (!(ell0 > 0 && ell0 < 1)) throw ParameterError("MolecularGeometry: ell0 in (0,1)");
    for (double zz : charges)
      if (!(zz > 0)) throw ParameterError("MolecularGeometry: charges must be > 0");
    for (std::size_t i = 0; i < centers.size(); ++i)
      for (std::size_t j = i + 1; j < centers.size(); ++j)
        if (!(dist(centers[i], centers[j]) > 0))
          throw ParameterError("MolecularGeometry: coincident centers");
  }

  std::size_t num_centers() const { return centers.size(); }
};

/// d(x) = min_k |x - r_k|.
inline double geometry_d(const MolecularGeometry& g, const Vec3& x) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& c : g.centers) d = std::min(d, dist(x, c));
  return d;
}

/// f(x) = min{d^{-1/2}, d^{-2}}.
inline double geometry_f(const MolecularGeometry& g, const Vec3& x) {
  const double d = geometry_d(g, x);
  if (!(d > 0)) throw SolverError("geometry_f: evaluated at a nucleus");
  return std::min(1.0 / std::sqrt(d), 1.0 / (d * d));
}

/// ell(x) = 1/2 (1 + sum_k (|x-r_k|^2 + ell0^2)^{-1/2})^{-1}; takes values in
/// (0,1) with sup-norm of the gradient below 1.
inline double geometry_ell(const MolecularGeometry& g, const Vec3& x) {
  double s = 1.0;
  for (const auto& c : g.centers) {
    const double d = dist(x, c);
    s += 1.0 / std::sqrt(d * d + g.ell0 * g.ell0);
  }
  return 0.5 / s;
}

/// Superposition bracket for the molecular TF potential:
/// max_k V_k <= V^TF_mol <= sum_k V_k.
struct MolecularPotentialBracket {
  double lower = 0, upper = 0;
};

inline MolecularPotentialBracket molecular_potential_bracket(
    const MolecularGeometry& g, const std::vector<TFAtom>& atoms, const Vec3& x) {
  if (atoms.size() != g.num_centers())
    throw ParameterError("molecular_potential_bracket: atom count mismatch");
  MolecularPotentialBracket b;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const double v = atoms[k].potential(dist(x, g.centers[k]));
    b.lower = std::max(b.lower, v);
    b.upper += v;
  }
  return b;
}

/// W_k = V_mol - z_k |x - r_k|^{-1} for the superposition upper bound:
/// equals sum_{j != k} V_j minus the k-th atomic screening potential, so it
/// extends continuously to x = r_k. For a single atom W_1 = -screening.
inline double w_k(const MolecularGeometry& g, const std::vector<TFAtom>& atoms,
                  std::size_t k, const Vec3& x) {
  if (k >= g.num_centers()) throw ParameterError("w_k: index out of range");
  double w = -atoms[k].screening(dist(x, g.centers[k]));
  for (std::size_t j = 0; j < atoms.size(); ++j)
    if (j != k) w += atoms[j].potential(dist(x, g.centers[j]));
  return w;
}

}  // namespace sctrace::tf

#include "sctrace/report.hpp"

namespace sctrace::tf {

/// Universal-function table as CSV with columns x, phi, phi'.
inline std::string universal_csv(const TFUniversal& u) {
  std::string out = "x,phi,dphi\n";
  for (std::size_t i = 0; i < u.x.size(); ++i)
    out += format_double(u.x[i]) + "," + format_double(u.phi[i]) + "," +
           format_double(u.dphi[i]) + "\n";
  return out;
}

inline json atom_json(const TFAtom& atom, const std::string& table_reference) {
  return json{{"z", atom.z()},
              {"length_scale", atom.length_scale()},
              {"table", table_reference},
              {"initial_slope", atom.universal().initial_slope}};
}

}  // namespace sctrace::tf
