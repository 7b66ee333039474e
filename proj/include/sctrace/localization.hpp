#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "sctrace/errors.hpp"
#include "sctrace/grid.hpp"
#include "sctrace/spectral.hpp"

namespace sctrace::loc {

inline constexpr double pi = std::numbers::pi;
using Vec3 = std::array<double, 3>;

// ---------------------------------------------------------------------------
// Mollifier machinery.

/// exp(-1/t) continued by 0 for t <= 0.
inline double expm_bump(double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; }

/// C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly monotone between.
inline double smooth_step(double t) {
  const double g = expm_bump(t), gb = expm_bump(1.0 - t);
  return g / (g + gb);
}

inline double smooth_step_deriv(double t) {
  // outside this window the derivative underflows toward 0 (~e^{-1/t}/t^2)
  if (t <= 3e-3 || t >= 1.0 - 3e-3) return 0.0;
  const double g = expm_bump(t), gb = expm_bump(1.0 - t);
  const double s = g + gb;
  return g * gb * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / (s * s);
}

/// L^2-normalized radial bump supported in the unit ball of R^n:
/// phi(x) = N exp(-1/(1-|x|^2)) for |x| < 1.
struct BaseBump {
  int n = 1;
  double norm = 1.0;

  double raw(double r) const { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0; }
  double operator()(double r) const { return norm * raw(r); }
};

inline BaseBump make_base_bump(int n) {
  if (n < 1) throw ParameterError("make_base_bump: n >= 1");
  BaseBump b;
  b.n = n;
  const std::size_t N = 40000;
  double s = 0;
  const double dr = 1.0 / double(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double r = (double(i) + 0.5) * dr;
    const double f = b.raw(r) * b.raw(r);
    const double shell = (n == 1) ? 2.0
                         : (n == 2) ? 2.0 * pi * r
                                    : 4.0 * pi * r * r;  // both half-lines for n = 1
    s += f * shell * dr;
  }
  b.norm = 1.0 / std::sqrt(s);
  return b;
}

// ---------------------------------------------------------------------------
// Partition of unity phi_u(x) = phi((x-u)/ell(u)) sqrt(J(x,u)) ell(u)^{n/2}.

struct PartitionSpec {
  BaseBump bump;
  std::function<double(const Vec3&)> ell;
  int n = 1;  // active dimension: 1 uses only the x-component, 3 all three

  double fd_step(const Vec3& u) const { return 1e-5 * std::max(ell(u), 1e-3); }

  Vec3 grad_ell(const Vec3& u) const {
    Vec3 g{0, 0, 0};
    const double d = fd_step(u);
    for (int i = 0; i < n; ++i) {
      Vec3 up = u, dn = u;
      up[i] += d;
      dn[i] -= d;
      g[i] = (ell(up) - ell(dn)) / (2 * d);
    }
    return g;
  }
};

/// Jacobian of u -> (x-u)/ell(u). The matrix is ell^{-1}(I + (x-u) grad(ell)^T / ell)
/// up to sign, and det(I + a b^T) = 1 + b.a, so
/// J = ell^{-n} |1 + (x-u).grad(ell)/ell|.
inline double jacobian_J(const PartitionSpec& spec, const Vec3& x, const Vec3& u) {
  const double l = spec.ell(u);
  if (!(l > 0)) throw ParameterError("jacobian_J: ell(u) must be > 0");
  const Vec3 g = spec.grad_ell(u);
  double dot = 0;
  for (int i = 0; i < spec.n; ++i) dot += (x[i] - u[i]) * g[i];
  return std::pow(l, -spec.n) * std::abs(1.0 + dot / l);
}

inline double phi_u(const PartitionSpec& spec, const Vec3& u, const Vec3& x) {
  const double l = spec.ell(u);
  double r2 = 0;
  for (int i = 0; i < spec.n; ++i) r2 += (x[i] - u[i]) * (x[i] - u[i]);
  const double r = std::sqrt(r2) / l;
  if (r >= 1.0) return 0.0;
  return spec.bump(r) * std::sqrt(jacobian_J(spec, x, u)) * std::pow(l, 0.5 * spec.n);
}

/// int phi_u(x)^2 ell(u)^{-n} du, which the construction makes identically 1.
/// n = 1: line quadrature; n = 3: assumes ell is radially symmetric about the
/// origin and x lies anywhere (the integral is evaluated in spherical (r, theta)
/// coordinates around the origin with x on the polar axis).
inline double partition_completeness(const PartitionSpec& spec, const Vec3& x,
                                     std::size_t quad_nodes = 2000,
                                     std::size_t angular_nodes = 600) {
  const double lmax = 0.5;  // ell < 1/2 everywhere for the molecular scale function
  if (spec.n == 1) {
    const double a = x[0] - lmax * 1.2, b = x[0] + lmax * 1.2;
    const double du = (b - a) / double(quad_nodes);
    double s = 0;
    for (std::size_t i = 0; i < quad_nodes; ++i) {
      const double u = a + (double(i) + 0.5) * du;
      const Vec3 uu{u, 0, 0};
      const double p = phi_u(spec, uu, x);
      s += p * p / spec.ell(uu) * du;
    }
    return s;
  }
  if (spec.n == 3) {
    const double rx = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    const double r_lo = std::max(0.0, rx - 1.2 * lmax), r_hi = rx + 1.2 * lmax;
    // supp phi_u lies in |x - u| < 1/2, which subtends a polar angle
    // ~ asin(1/2rx) seen from the origin; restrict the theta range accordingly
    double th_max = pi;
    if (rx > 1.6 * lmax)
      th_max = std::min(pi, 1.5 * std::asin(std::min(1.0, 1.3 * lmax / rx)));
    const std::size_t nr = quad_nodes, nt = angular_nodes;
    const double dru = (r_hi - r_lo) / double(nr), dth = th_max / double(nt);
    double s = 0;
    for (std::size_t i = 0; i < nr; ++i) {
      const double ru = r_lo + (double(i) + 0.5) * dru;
      for (std::size_t j = 0; j < nt; ++j) {
        const double th = (double(j) + 0.5) * dth;
        const Vec3 u{ru * std::sin(th), 0, ru * std::cos(th)};
        const Vec3 xx{0, 0, rx};
        const double p = phi_u(spec, u, xx);
        if (p == 0) continue;
        s += p * p / std::pow(spec.ell(u), 3) * 2 * pi * ru * ru * std::sin(th) * dru * dth;
      }
    }
    return s;
  }
  throw ParameterError("partition_completeness: n must be 1 or 3");
}

/// Monte Carlo fallback for general 3-D scale functions (1e-3 accuracy class).
inline double partition_completeness_mc(const PartitionSpec& spec, const Vec3& x,
                                        std::size_t samples, std::uint64_t seed) {
  if (spec.n != 3) throw ParameterError("partition_completeness_mc: n = 3 only");
  std::mt19937_64 rng(seed);
  const double lmax = 0.5;
  std::uniform_real_distribution<double> box(-2.2 * lmax, 2.2 * lmax);
  const double vol = std::pow(4.4 * lmax, 3);
  double s = 0;
  for (std::size_t k = 0; k < samples; ++k) {
    const Vec3 u{x[0] + box(rng), x[1] + box(rng), x[2] + box(rng)};
    const double p = phi_u(spec, u, x);
    if (p == 0) continue;
    s += p * p / std::pow(spec.ell(u), 3);
  }
  return s * vol / double(samples);
}

// ---------------------------------------------------------------------------
// theta cutoffs with exact square partition.

/// Pair theta_-, theta_+ with theta_-^2 + theta_+^2 = 1, transition on [1,2]:
/// theta_-(t) = 1 for t < 1, 0 for t > 2. Built from the smooth step so all
/// derivatives vanish at the junctions.
struct CutoffPair {
  double R = 1.0;

  // With u = t - 1, g = e^{-1/u}, gb = e^{-1/(1-u)}:
  //   theta_-^2 = gb/(g+gb),  theta_+^2 = g/(g+gb),
  // evaluated in this quotient form so neither 1 - S nor S cancels near the
  // junctions (the naive 1 - smooth_step underflows before its derivative
  // does, which blows up theta').
  double theta_minus(double t) const {
    if (t <= 1.0) return 1.0;
    if (t >= 2.0) return 0.0;
    const double g = expm_bump(t - 1.0), gb = expm_bump(2.0 - t);
    return std::sqrt(gb / (g + gb));
  }
  double theta_plus(double t) const {
    if (t <= 1.0) return 0.0;
    if (t >= 2.0) return 1.0;
    const double g = expm_bump(t - 1.0), gb = expm_bump(2.0 - t);
    return std::sqrt(g / (g + gb));
  }
  double dtheta_minus(double t) const {
    const double u = t - 1.0;
    if (u <= 3e-3 || u >= 1.0 - 3e-3) return 0.0;
    const double g = expm_bump(u), gb = expm_bump(1.0 - u);
    const double c = 1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u));
    return -0.5 * g * std::sqrt(gb) * c / std::pow(g + gb, 1.5);
  }
  double dtheta_plus(double t) const {
    const double u = t - 1.0;
    if (u <= 3e-3 || u >= 1.0 - 3e-3) return 0.0;
    const double g = expm_bump(u), gb = expm_bump(1.0 - u);
    const double c = 1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u));
    return 0.5 * gb * std::sqrt(g) * c / std::pow(g + gb, 1.5);
  }

  /// Phi_{+-}(x) = theta_{+-}(d(x)/R) and the localization cost
  /// I = (grad Phi_-)^2 + (grad Phi_+)^2 evaluated via |grad d| = 1.
  double localization_cost(double d) const {
    const double t = d / R;
    const double dm = dtheta_minus(t), dp = dtheta_plus(t);
    return (dm * dm + dp * dp) / (R * R);
  }
};

inline CutoffPair make_cutoff_pair(double R) {
  if (!(R > 0)) throw ParameterError("make_cutoff_pair: R must be > 0");
  return CutoffPair{R};
}

// ---------------------------------------------------------------------------
// IMS formula check on a 1-D grid.

struct ThetaFn {
  std::function<double(double)> val;
  std::function<double(double)> grad;
};

/// Compares <psi, H psi> against sum_k (<theta_k psi, H theta_k psi>
/// - h^2 <psi, (theta_k')^2 psi>) for seeded random smooth psi; returns the
/// max relative deviation. Requires sum theta_k^2 = 1 on the grid.
inline double ims_check(const std::vector<ThetaFn>& thetas,
                        const std::function<double(double)>& V, double h, const Grid& grid,
                        std::size_t num_psi = 10, std::uint64_t seed = 42) {
  const std::size_t n = grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s2 = 0;
    for (const auto& th : thetas) {
      const double v = th.val(grid.nodes[i]);
      s2 += v * v;
    }
    if (std::abs(s2 - 1.0) > 1e-8)
      throw ContractError("ims_check: theta squares do not sum to 1 on the grid");
  }

  // quadratic form of the 3-point stencil Hamiltonian, computed in O(n)
  const double dx = grid.nodes[1] - grid.nodes[0];
  const double k = h * h / (dx * dx);
  std::vector<double> vdiag(n);
  for (std::size_t i = 0; i < n; ++i) vdiag[i] = V(grid.nodes[i]);
  auto form = [&](const std::vector<double>& psi) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double hv = (2.0 * k + vdiag[i]) * psi[i];
      if (i > 0) hv -= k * psi[i - 1];
      if (i + 1 < n) hv -= k * psi[i + 1];
      s += psi[i] * hv;
    }
    return s;
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double a = grid.front(), b = grid.back();

  double worst = 0;
  std::vector<double> psi(n), tp(n);
  for (std::size_t t = 0; t < num_psi; ++t) {
    const int modes = 12;
    std::vector<double> coef(modes);
    for (int m = 0; m < modes; ++m) coef[m] = gauss(rng) / double((m + 1) * (m + 1));
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0;
      const double s = (grid.nodes[i] - a) / (b - a);
      for (int m = 0; m < modes; ++m) v += coef[m] * std::sin(double(m + 1) * pi * s);
      psi[i] = v;
    }
    const double direct = form(psi);
    double split = 0;
    for (const auto& th : thetas) {
      double grad_term = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp[i] = psi[i] * th.val(grid.nodes[i]);
        const double gr = th.grad(grid.nodes[i]);
        grad_term += gr * gr * psi[i] * psi[i];
      }
      split += form(tp) - h * h * grad_term;
    }
    const double dev = std::abs(direct - split) / std::max(1e-300, std::abs(direct));
    worst = std::max(worst, dev);
  }
  return worst;
}

}  // namespace sctrace::loc
