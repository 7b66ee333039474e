#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sctrace/tf.hpp"

using namespace sctrace;
using tf::TFAtom;
using tf::Vec3;

namespace {

// Independent shooting oracle: fixed-step classical RK4 in t = sqrt(x) with
// plain bisection on the initial slope, sharing nothing with the library's
// adaptive integrator. Reference value frozen from a 4e5-step run:
constexpr double kOracleSlope = -1.588070990345;

using LD = long double;
struct S2 {
  LD y, dy;
};

int classify_rk4(LD B, LD t_end, int steps) {
  const LD t0 = 1e-4L;
  LD t = t0;
  const LD dt = (t_end - t0) / steps;
  S2 s{1 + B * t0 * t0 + (4.0L / 3.0L) * t0 * t0 * t0, 2 * B * t0 + 4 * t0 * t0};
  auto f = [](LD tt, S2 v) {
    return S2{v.dy, v.dy / tt + (v.y > 0 ? 4 * tt * v.y * std::sqrt(v.y) : 0.0L)};
  };
  for (int i = 0; i < steps; ++i) {
    S2 k1 = f(t, s);
    S2 k2 = f(t + dt / 2, {s.y + dt / 2 * k1.y, s.dy + dt / 2 * k1.dy});
    S2 k3 = f(t + dt / 2, {s.y + dt / 2 * k2.y, s.dy + dt / 2 * k2.dy});
    S2 k4 = f(t + dt, {s.y + dt * k3.y, s.dy + dt * k3.dy});
    s.y += dt / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
    s.dy += dt / 6 * (k1.dy + 2 * k2.dy + 2 * k3.dy + k4.dy);
    t += dt;
    if (s.y <= 0) return -1;
    if (s.dy > 0) return +1;
  }
  return (t_end * s.dy / (2 * s.y) > -2.5L) ? +1 : -1;
}

double oracle_slope(int steps) {
  LD lo = -1.7L, hi = -1.5L;
  while (hi - lo > 1e-10L) {
    const LD mid = 0.5L * (lo + hi);
    (classify_rk4(mid, std::sqrt(200.0L), steps) < 0 ? lo : hi) = mid;
  }
  return double(0.5L * (lo + hi));
}

}  // namespace

TEST_CASE("universal solution boundary value and slope vs oracle") {
  const auto& u = tf::universal_solution();
  CHECK(u(0.0) == Catch::Approx(1.0).margin(1e-12));

  const double slope = oracle_slope(200000);
  CHECK(u.initial_slope == Catch::Approx(slope).margin(5e-7));
  CHECK(u.initial_slope == Catch::Approx(kOracleSlope).margin(1e-7));
}

TEST_CASE("universal far tail decays like x^-3") {
  const auto& u = tf::universal_solution();
  // log-log slope far out where the power-law correction has decayed
  CHECK(std::abs(u.log_slope(3000.0) - (-3.0)) < 0.02 * 3.0);
  CHECK(std::abs(u.tail_exponent_check - (-3.0)) < 0.02 * 3.0);
  // tail model consistency against the raw trajectory past the fit point
  REQUIRE_FALSE(u.check_x.empty());
  double worst = 0;
  for (std::size_t i = 0; i < u.check_x.size(); ++i)
    worst = std::max(worst,
                     std::abs(u.eval(u.check_x[i]).phi - u.check_phi[i]) / u.check_phi[i]);
  CHECK(worst < 3e-2);
}

TEST_CASE("tf potential and density identities") {
  TFAtom atom(1.0);
  SECTION("coulomb singularity r*V -> z") {
    for (double r : {1e-7, 1e-6, 1e-5})
      CHECK(r * atom.potential(r) == Catch::Approx(1.0).margin(1e-4));
  }
  SECTION("tf equation algebraic identity") {
    for (double r : {0.1, 1.0, 4.0}) {
      const double v = atom.potential(r), rho = atom.density(r);
      CHECK(0.5 * std::pow(3 * tf::pi * tf::pi, 2.0 / 3.0) * std::pow(rho, 2.0 / 3.0) ==
            Catch::Approx(v).epsilon(1e-12));
    }
  }
  SECTION("potential monotone decreasing") {
    double prev = atom.potential(1e-3);
    for (double r = 2e-3; r < 50.0; r *= 1.3) {
      const double v = atom.potential(r);
      CHECK(v < prev);
      prev = v;
    }
  }
  SECTION("sandwich against min(z/r, r^-4)") {
    double cmin = 1e300, cmax = 0;
    for (double d = 1e-3; d <= 1e3; d *= 2.7) {
      const double ratio = atom.potential(d) / std::min(1.0 / d, std::pow(d, -4.0));
      cmin = std::min(cmin, ratio);
      cmax = std::max(cmax, ratio);
    }
    CHECK(cmin > 0.0);
    CHECK(std::isfinite(cmax));
  }
  SECTION("domain errors") {
    CHECK_THROWS_AS(atom.potential(0.0), ParameterError);
    CHECK_THROWS_AS(atom.density(-1.0), ParameterError);
  }
}

TEST_CASE("poisson equation residual under finite differences") {
  TFAtom atom(1.0);
  for (double r : {0.1, 0.5, 1.0, 3.0, 8.0}) {
    const double dr = 1e-4 * r;
    auto rv = [&](double rr) { return rr * atom.potential(rr); };
    const double lap = (rv(r + dr) - 2 * rv(r) + rv(r - dr)) / (dr * dr) / r;
    const double rhs = 4 * tf::pi * atom.density(r);
    CHECK(lap == Catch::Approx(rhs).epsilon(1e-3));
  }
}

TEST_CASE("neutral atom charge") {
  for (double z : {1.0, 2.0, 5.0}) {
    TFAtom atom(z);
    CHECK(atom.charge() == Catch::Approx(z).epsilon(1e-3));
  }
}

TEST_CASE("density scaling identity z=2 vs z=1") {
  TFAtom a1(1.0), a2(2.0);
  const double hsc = std::pow(2.0, -1.0 / 3.0);  // h^3 * 2 = 1
  for (double r : {0.2, 1.0, 3.0}) {
    const double lhs = a2.density(r);
    const double rhs = std::pow(hsc, -6.0) * a1.density(r / hsc);
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-6));
  }
}

TEST_CASE("tf energy: scaling law and Richardson self-oracle") {
  // frozen pair computed at 6000/12000 nodes
  TFAtom a1(1.0);
  const double e6 = tf::tf_energy(a1, 6000);
  CHECK(e6 == Catch::Approx(-0.7687348183).margin(1e-8));
  const double e12 = tf::tf_energy(a1, 12000);
  CHECK(e6 == Catch::Approx(e12).epsilon(1e-4));

  const double ref = e6;
  for (double z : {2.0, 5.0}) {
    TFAtom az(z);
    CHECK(tf::tf_energy(az) / std::pow(z, 7.0 / 3.0) == Catch::Approx(ref).epsilon(1e-4));
  }
}

TEST_CASE("tf energy functional rises under density perturbation") {
  TFAtom atom(1.0);
  Grid g = atom.radial_grid();
  std::vector<double> rho(g.size()), pert(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = g.nodes[i];
    rho[i] = atom.density(r);
    pert[i] = rho[i] * (1.0 + 0.01 * std::exp(-(r - 1.0) * (r - 1.0)));
  }
  const double e0 = tf::tf_energy_of_density(atom, rho, g).total();
  const double e1 = tf::tf_energy_of_density(atom, pert, g).total();
  CHECK(e1 > e0);
}

TEST_CASE("tf energy component ratios") {
  // exact minimizer relations: K = |E|, A = 7|E|/3, R = |E|/3
  TFAtom atom(1.0);
  Grid g = atom.radial_grid();
  std::vector<double> rho(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) rho[i] = atom.density(g.nodes[i]);
  const auto e = tf::tf_energy_of_density(atom, rho, g);
  const double mag = -e.total();
  CHECK(e.kinetic == Catch::Approx(mag).epsilon(2e-3));
  CHECK(e.attraction == Catch::Approx(7.0 * mag / 3.0).epsilon(2e-3));
  CHECK(e.repulsion == Catch::Approx(mag / 3.0).epsilon(2e-3));
}

TEST_CASE("coulomb energy of radial densities") {
  // uniform ball of radius 1, unit charge: D = 3/5
  Grid g = make_grid(1e-4, 2.0, 40000, GridKind::Uniform);
  std::vector<double> rho(g.size(), 0.0);
  const double rho0 = 1.0 / (4.0 / 3.0 * tf::pi);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.nodes[i] <= 1.0) rho[i] = rho0;
  CHECK(tf::coulomb_energy_radial(rho, g) == Catch::Approx(0.6).epsilon(1e-4));

  std::vector<double> zero(g.size(), 0.0);
  CHECK(tf::coulomb_energy_radial(zero, g) == 0.0);

  std::vector<double> neg(g.size(), -1e-6);
  CHECK_THROWS_AS(tf::coulomb_energy_radial(neg, g), ContractError);

  // change-of-variables scalings, l = 2: the mass-preserving l^3 rho(l x)
  // carries l D(rho); the TF-type l^6 rho(l x) carries l^7 D(rho)
  TFAtom atom(1.0);
  Grid ga = atom.radial_grid();
  std::vector<double> r0(ga.size()), r3(ga.size()), r6(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    r0[i] = atom.density(ga.nodes[i]);
    const double c = atom.density(std::min(2.0 * ga.nodes[i], ga.back()));
    r3[i] = 8.0 * c;
    r6[i] = 64.0 * c;
  }
  const double d0 = tf::coulomb_energy_radial(r0, ga);
  CHECK(tf::coulomb_energy_radial(r3, ga) == Catch::Approx(2.0 * d0).epsilon(1e-5));
  CHECK(tf::coulomb_energy_radial(r6, ga) == Catch::Approx(128.0 * d0).epsilon(1e-5));
}

TEST_CASE("scaling check of the tf potential") {
  TFAtom atom(1.0);
  std::vector<double> radii;
  for (double r = 0.1; r <= 10.0; r *= 1.6) radii.push_back(r);
  CHECK(tf::scaling_check(atom, 1.0, radii) < 1e-12);
  CHECK(tf::scaling_check(atom, 2.0, radii) < 1e-6);
  CHECK(tf::scaling_check(atom, 0.5, radii) < 1e-6);
}

TEST_CASE("molecular geometry functions") {
  tf::MolecularGeometry single({{{0, 0, 0}}}, {1.0}, 0.5);
  CHECK(tf::geometry_d(single, {0, 0, 0}) == 0.0);
  CHECK(tf::geometry_d(single, {3, 4, 0}) == Catch::Approx(5.0));

  tf::MolecularGeometry two({{{0, 0, 0}, {10, 0, 0}}}, {1.0, 1.0}, 0.5);
  CHECK(tf::geometry_d(two, {6, 0, 0}) == Catch::Approx(4.0));

  CHECK_THROWS_AS(tf::MolecularGeometry({{{0, 0, 0}}}, {1.0}, 1.5), ParameterError);
  CHECK_THROWS_AS(tf::MolecularGeometry({{{0, 0, 0}, {0, 0, 0}}}, {1.0, 1.0}, 0.5),
                  ParameterError);
}

TEST_CASE("geometry f branches") {
  tf::MolecularGeometry g({{{0, 0, 0}}}, {1.0}, 0.5);
  CHECK(tf::geometry_f(g, {1, 0, 0}) == Catch::Approx(1.0));
  CHECK(tf::geometry_f(g, {4, 0, 0}) == Catch::Approx(1.0 / 16.0));
  CHECK(tf::geometry_f(g, {0.25, 0, 0}) == Catch::Approx(2.0));
}

TEST_CASE("geometry ell bounds and gradient") {
  tf::MolecularGeometry g({{{0, 0, 0}}}, {1.0}, 1.0 - 1e-12);
  CHECK(tf::geometry_ell(g, {0, 0, 0}) == Catch::Approx(0.25));

  tf::MolecularGeometry gg({{{0, 0, 0}}}, {1.0}, 0.5);
  CHECK(tf::geometry_ell(gg, {1e5, 0, 0}) == Catch::Approx(0.5).margin(1e-4));

  const double M = 1.0;
  for (double x : {0.0, 0.3, 1.0, 5.0, 40.0}) {
    const Vec3 p{x, 0.2, -0.1};
    const double l = tf::geometry_ell(gg, p);
    const double d = tf::geometry_d(gg, p);
    CHECK(l > 0.0);
    CHECK(l < 1.0);
    CHECK(l >= 0.5 / (1.0 + M) * gg.ell0 - 1e-12);
    CHECK(l <= 0.5 * std::sqrt(d * d + gg.ell0 * gg.ell0) + 1e-12);
    // finite-difference gradient below 1
    double g2 = 0;
    for (int k = 0; k < 3; ++k) {
      Vec3 up = p, dn = p;
      up[k] += 1e-6;
      dn[k] -= 1e-6;
      const double der = (tf::geometry_ell(gg, up) - tf::geometry_ell(gg, dn)) / 2e-6;
      g2 += der * der;
    }
    CHECK(std::sqrt(g2) < 1.0);
  }
}

TEST_CASE("screening potential and w_k") {
  TFAtom atom(1.0);
  const double a0 = std::pow(3 * tf::pi / (4 * std::sqrt(8.0)), 2.0 / 3.0);
  // value at the nucleus: -z phi'(0)/mu, finite and positive
  CHECK(atom.screening(0.0) ==
        Catch::Approx(-atom.universal().initial_slope / a0).epsilon(1e-12));
  CHECK(atom.screening(0.0) > 0.0);
  // positivity and far-field decay
  double prev = atom.screening(1e-6);
  for (double r : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    CHECK(atom.screening(r) > 0.0);
    CHECK(atom.screening(r) < prev + 1e-12);
    prev = atom.screening(r);
  }
  CHECK(atom.screening(500.0) < 2.5e-3);

  tf::MolecularGeometry g({{{0, 0, 0}}}, {1.0}, 0.5);
  std::vector<TFAtom> atoms{atom};
  // single atom: W_1 = -screening exactly; continuous at the nucleus
  for (double x : {1e-5, 0.3, 2.0}) {
    CHECK(tf::w_k(g, atoms, 0, {x, 0, 0}) ==
          Catch::Approx(-atom.screening(x)).margin(1e-12));
  }
  CHECK(std::abs(tf::w_k(g, atoms, 0, {1e3, 0, 0})) < 2e-3);

  // superposition bracket ordering
  tf::MolecularGeometry two({{{0, 0, 0}, {6, 0, 0}}}, {1.0, 1.0}, 0.5);
  std::vector<TFAtom> pair{TFAtom(1.0), TFAtom(1.0)};
  for (double x : {0.5, 3.0, 5.5}) {
    const auto br = tf::molecular_potential_bracket(two, pair, {x, 0, 0});
    CHECK(br.lower > 0.0);
    CHECK(br.lower <= br.upper);
  }
}
