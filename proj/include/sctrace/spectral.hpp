#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "sctrace/errors.hpp"
#include "sctrace/grid.hpp"
#include "sctrace/linalg.hpp"
#include "sctrace/parallel.hpp"

namespace sctrace::spectral {

inline constexpr double pi = std::numbers::pi;

/// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) {
  return std::pow(pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

/// int (p^2 + s)_- d^n p = -(2/(n+2)) w_n |s_-|^{n/2+1}.
inline double momentum_neg_integral(int n, double s) {
  if (s >= 0) return 0.0;
  return -(2.0 / (n + 2)) * unit_ball_volume(n) * std::pow(-s, 0.5 * n + 1.0);
}

/// Central potential V(r) with an explicit sign convention: the Hamiltonian
/// is -h^2 Lap - V for attractive potentials (V > 0 like the TF or Coulomb
/// case) and -h^2 Lap + V otherwise.
struct RadialPotential {
  std::function<double(double)> v;
  bool attractive = true;
  std::string id;

  double well_depth_at(double r) const { return attractive ? v(r) : -v(r); }
};

// ---------------------------------------------------------------------------
// 1-D grid Hamiltonians.

/// -h^2 d^2/dx^2 + V on a uniform grid with Dirichlet ends; 3-point stencil
/// by default, 5-point optional.
inline GridOperator build_hamiltonian_1d(const std::function<double(double)>& V, double h,
                                         const Grid& grid, int stencil_order = 2) {
  const std::size_t n = grid.size();
  for (std::size_t i = 2; i < n; ++i) {
    const double d1 = grid.nodes[i] - grid.nodes[i - 1];
    const double d0 = grid.nodes[i - 1] - grid.nodes[i - 2];
    if (std::abs(d1 - d0) > 1e-9 * d0)
      throw ParameterError("build_hamiltonian_1d: grid must be uniform");
  }
  const double dx = grid.nodes[1] - grid.nodes[0];
  const double k = h * h / (dx * dx);
  GridOperator op{grid, Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n))};
  if (stencil_order == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      op.mat(i, i) = 2.0 * k + V(grid.nodes[i]);
      if (i + 1 < n) op.mat(i, i + 1) = op.mat(i + 1, i) = -k;
    }
  } else if (stencil_order == 4) {
    for (std::size_t i = 0; i < n; ++i) {
      op.mat(i, i) = 2.5 * k + V(grid.nodes[i]);
      if (i + 1 < n) op.mat(i, i + 1) = op.mat(i + 1, i) = -(4.0 / 3.0) * k;
      if (i + 2 < n) op.mat(i, i + 2) = op.mat(i + 2, i) = (1.0 / 12.0) * k;
    }
  } else {
    throw ParameterError("build_hamiltonian_1d: stencil_order must be 2 or 4");
  }
  return op;
}

/// Tr[phi H phi]_- on a 1-D grid: assemble the localized operator as a
/// matrix product and sum its negative spectrum. phi must vanish at the
/// grid ends so the Dirichlet truncation is inert.
inline double localized_trace_neg(const std::function<double(double)>& phi,
                                  const std::function<double(double)>& V, double h,
                                  const Grid& grid, int stencil_order = 2) {
  const double edge = std::max(std::abs(phi(grid.front())), std::abs(phi(grid.back())));
  if (edge > 1e-12)
    throw ContractError("localized_trace_neg: phi support touches the grid boundary");
  GridOperator H = build_hamiltonian_1d(V, h, grid, stencil_order);
  Eigen::VectorXd d(Eigen::Index(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) d(i) = phi(grid.nodes[i]);
  GridOperator M{grid, d.asDiagonal() * H.mat * d.asDiagonal()};
  const auto eig = symmetric_eigen(M).values;
  double s = 0;
  for (double e : eig)
    if (e < -1e-10) s += e;
  return s;
}

// ---------------------------------------------------------------------------
// Radial negative-spectrum sums.

struct RadialChannel {
  int l = 0;
  std::vector<double> eigenvalues;  // negative ones, ascending
};

struct NegativeSpectrumSummary {
  double h = 0;
  std::string potential_id;
  int l_max = 0;  // highest channel that still contributed
  std::vector<RadialChannel> channels;
  double weighted_sum = 0;  // sum over l of (2l+1) * sum of negatives
  std::size_t grid_nodes = 0;
  double r_max = 0;

  std::size_t total_count() const {
    std::size_t c = 0;
    for (const auto& ch : channels) c += ch.eigenvalues.size();
    return c;
  }
};

struct RadialConfig {
  double r_max = 40.0;
  std::size_t nodes = 200000;
  int lmax_cap = 256;
  double eig_cutoff = -1e-10;  // |e| below 1e-10 counts as non-negative
  bool boundary_check = true;
};

/// Suggested grid for Coulomb-class attractive potentials: resolve the
/// innermost (hydrogenic) bound state of effective charge z at scale
/// 2h^2/z and reach past the outermost classical turning point.
inline RadialConfig radial_config_coulomb(double z, double h, double r_outer,
                                          double points_per_inner_scale = 140.0) {
  RadialConfig c;
  const double a = 2.0 * h * h / z;
  const double dr = a / points_per_inner_scale;
  c.r_max = r_outer;
  c.nodes = std::size_t(r_outer / dr) + 1;
  return c;
}

inline RadialConfig radial_config_hydrogen(double z, double h) {
  const double a = 2.0 * h * h / z;
  const int nmax = std::max(1, int(std::floor(z / (2.0 * h) + 1e-12)));
  const double r_outer = a * nmax * (2.0 * nmax + 20.0) + 2.0;
  return radial_config_coulomb(z, h, r_outer);
}

namespace detail {

inline std::vector<double> channel_negative_eigs(const std::vector<double>& vdiag,
                                                 const std::vector<double>& rnodes,
                                                 double h, int l, double dr,
                                                 double cutoff) {
  const std::size_t n = rnodes.size();
  Tridiagonal t;
  t.diag.resize(n);
  t.off.assign(n - 1, -h * h / (dr * dr));
  const double cf = h * h * double(l) * double(l + 1);
  for (std::size_t i = 0; i < n; ++i)
    t.diag[i] = 2.0 * h * h / (dr * dr) + cf / (rnodes[i] * rnodes[i]) - vdiag[i];
  return tridiag_eigen_below(t, cutoff);
}

}  // namespace detail

/// Sum of negative eigenvalues of -h^2 Lap -/+ V for a central potential,
/// channel by channel in the reduced radial problem
///   -h^2 u'' + [h^2 l(l+1)/r^2 -/+ V(r)] u = e u,  u(0) = u(r_max) = 0,
/// weighted by (2l+1) (spinless). Channels stop at the first l that yields
/// no negative eigenvalue; the centrifugal barrier makes later channels
/// empty as well.
inline NegativeSpectrumSummary radial_negative_sum(const RadialPotential& pot, double h,
                                                   const RadialConfig& cfg) {
  if (!(h > 0)) throw ParameterError("radial_negative_sum: h must be > 0");
  if (cfg.nodes < 64) throw ParameterError("radial_negative_sum: too few nodes");

  const std::size_t n = cfg.nodes;
  const double dr = cfg.r_max / double(n + 1);
  std::vector<double> rnodes(n), vdiag(n);
  for (std::size_t i = 0; i < n; ++i) {
    rnodes[i] = double(i + 1) * dr;
    vdiag[i] = pot.attractive ? pot.v(rnodes[i]) : -pot.v(rnodes[i]);
  }

  NegativeSpectrumSummary out;
  out.h = h;
  out.potential_id = pot.id;
  out.grid_nodes = n;
  out.r_max = cfg.r_max;

  const unsigned batch = std::max(1u, effective_workers());
  int l = 0;
  bool done = false;
  while (!done) {
    if (l > cfg.lmax_cap)
      throw AccuracyError("radial_negative_sum: channel cutoff not reached by lmax_cap");
    const int lo = l, hi = std::min(l + int(batch) - 1, cfg.lmax_cap);
    auto res = parallel_map<std::vector<double>>(std::size_t(hi - lo + 1), [&](std::size_t k) {
      return detail::channel_negative_eigs(vdiag, rnodes, h, lo + int(k), dr, cfg.eig_cutoff);
    });
    for (int k = 0; k <= hi - lo; ++k) {
      if (res[k].empty()) {
        done = true;
        break;
      }
      out.channels.push_back({lo + k, std::move(res[k])});
    }
    l = hi + 1;
  }

  double s = 0;
  for (const auto& ch : out.channels) {
    double cs = 0;
    for (double e : ch.eigenvalues) cs += e;
    s += double(2 * ch.l + 1) * cs;
    out.l_max = ch.l;
  }
  out.weighted_sum = s;

  if (cfg.boundary_check && !out.channels.empty()) {
    // The least-bound s-state whose classical region lies well inside the box
    // must carry no mass at r_max. States that are too shallow to decay over
    // the outer 30% of the box (WKB exponent below ~14) legitimately reach
    // the edge; their truncation error is bounded by their own |e| and they
    // are excluded from the containment demand.
    const auto& eigs = out.channels.front().eigenvalues;
    const double v_edge = std::abs(vdiag.back());
    const double wkb_floor = std::pow(14.0 * h / (0.3 * cfg.r_max), 2);
    const double min_e = std::max({20.0 * v_edge, wkb_floor, 1e-9});
    double target = 0;
    for (double e : eigs)
      if (std::abs(e) >= min_e) target = e;  // ascending: last wins
    if (target < 0) {
      Tridiagonal t;
      t.diag.resize(n);
      t.off.assign(n - 1, -h * h / (dr * dr));
      for (std::size_t i = 0; i < n; ++i)
        t.diag[i] = 2.0 * h * h / (dr * dr) - vdiag[i];
      const auto vec = tridiag_eigenvector(t, target);
      const std::size_t tail_start = n - std::max<std::size_t>(2, n / 50);
      double tail = 0;
      for (std::size_t i = tail_start; i < n; ++i) tail += vec[i] * vec[i];
      if (tail > 1e-6)
        throw AccuracyError("radial_negative_sum: r_max too small (eigenfunction mass at boundary)");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hydrogen closed forms. The spectrum of -h^2 Lap - z/r is -z^2/(4 h^2 n^2)
// with multiplicity n^2, so with the +1 shift
//   Tr[-h^2 Lap - z/r + 1]_- = sum_{1 <= n <= z/2h} (-z^2/4h^2 + n^2)
//                            = -z^3/(12 h^3) + z^2/(8 h^2) + O(1/h).

struct HydrogenSum {
  double exact = 0;
  double two_term_asymptotic = 0;
  long n_max = 0;
};

inline HydrogenSum hydrogen_negative_sum_exact(double z, double h) {
  if (!(z > 0) || !(h > 0)) throw ParameterError("hydrogen_negative_sum_exact: z,h > 0");
  HydrogenSum s;
  s.n_max = long(std::floor(z / (2.0 * h) + 1e-12));
  const double nm = double(s.n_max);
  s.exact = -nm * z * z / (4.0 * h * h) + nm * (nm + 1.0) * (2.0 * nm + 1.0) / 6.0;
  s.two_term_asymptotic = -std::pow(z, 3) / (12.0 * h * h * h) + z * z / (8.0 * h * h);
  return s;
}

inline double hydrogen_level(double z, double h, int n) {
  return -z * z / (4.0 * h * h * double(n) * double(n));
}

// ---------------------------------------------------------------------------
// Phase-space integrals (2 pi h)^{-n} int phi^2 sigma_- du dq with the
// momentum integral done in closed form. Spinless by default; the spin
// toggle doubles the value.

/// n = 3, radial weight: midpoint rule in t with r = t^2, so Coulomb-class
/// integrands (z/r)^{5/2} r^2 stay bounded at the origin.
inline double phase_space_neg_integral_radial(const RadialPotential& pot, double h,
                                              double r_max, std::size_t nodes = 200000,
                                              const std::function<double(double)>* phi2 = nullptr,
                                              bool spin_pair = false) {
  if (!(h > 0)) throw ParameterError("phase_space_neg_integral_radial: h must be > 0");
  const double tmax = std::sqrt(r_max);
  const double dt = tmax / double(nodes);
  const double c52 = (2.0 / 5.0) * unit_ball_volume(3);
  double s = 0, comp = 0;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double t = (double(i) + 0.5) * dt;
    const double r = t * t;
    const double depth = pot.well_depth_at(r);
    if (depth <= 0) continue;
    double f = std::pow(depth, 2.5) * 4.0 * pi * r * r * 2.0 * t;  // x 2t dt from r = t^2
    if (phi2) f *= (*phi2)(r);
    const double y = f * dt - comp;
    const double u = s + y;
    comp = (u - s) - y;
    s = u;
  }
  double val = -c52 * s / std::pow(2.0 * pi * h, 3);
  if (spin_pair) val *= 2.0;
  return val;
}

/// n = 1 on an interval [a, b].
inline double phase_space_neg_integral_1d(const std::function<double(double)>& V, double h,
                                          double a, double b, std::size_t nodes = 100000,
                                          const std::function<double(double)>* phi2 = nullptr,
                                          bool spin_pair = false) {
  if (!(h > 0)) throw ParameterError("phase_space_neg_integral_1d: h must be > 0");
  const double dx = (b - a) / double(nodes);
  const double c32 = (2.0 / 3.0) * unit_ball_volume(1);  // = 4/3
  double s = 0, comp = 0;
  for (std::size_t i = 0; i <= nodes; ++i) {
    const double x = a + double(i) * dx;
    const double vneg = std::min(V(x), 0.0);
    if (vneg >= 0) continue;
    double f = std::pow(-vneg, 1.5);
    if (phi2) f *= (*phi2)(x);
    if (i == 0 || i == nodes) f *= 0.5;
    const double y = f * dx - comp;
    const double u = s + y;
    comp = (u - s) - y;
    s = u;
  }
  double val = -c32 * s / (2.0 * pi * h);
  if (spin_pair) val *= 2.0;
  return val;
}

/// Semiclassical density (2 pi h)^{-n} w_n |V(x)_-|^{n/2}; the spin toggle
/// doubles it (used for the rho^TF identity at h = 2^{-1/2}).
inline double semiclassical_density(double v_at_x, double h, int n, bool spin_pair = false) {
  if (v_at_x >= 0) return 0.0;
  double val = unit_ball_volume(n) * std::pow(-v_at_x, 0.5 * n) / std::pow(2.0 * pi * h, n);
  if (spin_pair) val *= 2.0;
  return val;
}

}  // namespace sctrace::spectral

#include "sctrace/report.hpp"

namespace sctrace::spectral {

inline json summary_json(const NegativeSpectrumSummary& s) {
  json channels = json::array();
  for (const auto& ch : s.channels) {
    json eigs = json::array();
    for (double e : ch.eigenvalues) eigs.push_back(e);
    channels.push_back(json{{"l", ch.l}, {"eigenvalues", eigs}});
  }
  return json{{"h", s.h},
              {"potential_id", s.potential_id},
              {"l_max", s.l_max},
              {"channels", channels},
              {"weighted_sum", s.weighted_sum}};
}

}  // namespace sctrace::spectral
