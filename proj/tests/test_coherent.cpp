#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "sctrace/coherent.hpp"
#include "sctrace/spectral.hpp"

using namespace sctrace;
namespace co = coherent;
using co::cplx;
using co::pi;

namespace {

co::QuadraticSymbol harmonic_symbol(double vshift = 0.0) {
  return co::make_symbol(
      [](double q) { return q * q; }, [](double q) { return 2 * q; },
      [](double) { return 2.0; }, [](double) { return 0.0; },
      [vshift](double u) { return u * u + vshift; }, [](double u) { return 2 * u; },
      [](double) { return 2.0; }, [](double) { return 0.0; });
}

}  // namespace

TEST_CASE("coherent parameter derivation") {
  co::CoherentParams p(0.1, 4.0);
  CHECK(p.b == Catch::Approx(8.0 / 1.16));
  CHECK(p.a <= p.b);
  CHECK(p.b <= 2 * p.a);
  CHECK_THROWS_AS(co::CoherentParams(0.1, 0.5), ParameterError);
  CHECK_THROWS_AS(co::CoherentParams(0.1, 20.0), ParameterError);
  auto pr = co::CoherentParams::default_rule(0.1);
  CHECK(pr.a == Catch::Approx(std::pow(0.1, -0.8)));
}

TEST_CASE("classical state moments") {
  const double h = 0.1, u = 0.4, q = 0.7;
  co::CoherentParams p(h, std::pow(h, -0.8));
  Grid g = co::sampling_grid(-6, 6, 4800);
  auto psi = co::classical_state(p, u, q, g);

  double norm = 0, xbar = 0;
  cplx pbar(0, 0);
  const double dx = g.spacing();
  for (std::size_t i = 0; i < g.size(); ++i) {
    norm += std::norm(psi(Eigen::Index(i))) * g.weights[i];
    xbar += g.nodes[i] * std::norm(psi(Eigen::Index(i))) * g.weights[i];
  }
  for (std::size_t i = 1; i + 1 < g.size(); ++i) {
    const cplx dpsi = (psi(Eigen::Index(i + 1)) - psi(Eigen::Index(i - 1))) / (2 * dx);
    pbar += std::conj(psi(Eigen::Index(i))) * cplx(0, -h) * dpsi * g.weights[i];
  }
  CHECK(norm == Catch::Approx(1.0).margin(1e-8));
  CHECK(xbar == Catch::Approx(u).margin(1e-8));
  CHECK(std::real(pbar) == Catch::Approx(q).margin(1e-4));
  CHECK(std::abs(std::imag(pbar)) < 1e-8);

  Grid coarse = co::sampling_grid(-6, 6, 24);
  CHECK_THROWS_AS(co::classical_state(p, u, q, coarse), AccuracyError);
}

TEST_CASE("g kernel values and symmetry") {
  const double h = 0.1, u = 0.4, q = 0.7;
  co::CoherentParams p(h, std::pow(h, -0.8));
  // x = y = u: exponent vanishes
  CHECK(std::real(co::g_kernel(p, u, q, u, u)) ==
        Catch::Approx(std::pow(pi * h, -0.5)).epsilon(1e-14));
  CHECK(std::imag(co::g_kernel(p, u, q, u, u)) == 0.0);
  // hermitian symmetry
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  for (int k = 0; k < 10; ++k) {
    const double x = uni(rng), y = uni(rng);
    const cplx a = co::g_kernel(p, u, q, x, y), b = co::g_kernel(p, u, q, y, x);
    CHECK(std::abs(a - std::conj(b)) < 1e-15);
  }
}

TEST_CASE("a -> 1/h recovers the classical projection kernel") {
  const double h = 0.1, u = 0.4, q = 0.7;
  co::CoherentParams p(h, 1.0 / h);
  for (double x : {-0.5, 0.1, 0.9}) {
    for (double y : {-0.3, 0.4}) {
      const cplx proj = co::classical_state_value(h, u, q, x) *
                        std::conj(co::classical_state_value(h, u, q, y));
      CHECK(std::abs(co::g_kernel(p, u, q, x, y) - proj) < 1e-10);
    }
  }
}

TEST_CASE("closed-form composite kernels match brute composition") {
  const double h = 0.1, u = 0.4, q = 0.7;
  co::CoherentParams p(h, std::pow(h, -0.8));
  Grid g = co::sampling_grid(-6, 6, 480);
  const double dx = g.spacing();
  co::MatC G = co::g_operator(p, u, q, g);

  SECTION("G^2") {
    co::MatC G2 = G * G;
    double worst = 0;
    for (int i = 100; i < 380; i += 37)
      for (int j = 100; j < 380; j += 41)
        worst = std::max(worst, std::abs(co::g2_kernel(p, u, q, g.nodes[i], g.nodes[j]) * dx -
                                         G2(i, j)));
    CHECK(worst < 1e-12);
  }
  SECTION("G (x-u) G") {
    Eigen::VectorXcd xu(480);
    for (int i = 0; i < 480; ++i) xu(i) = g.nodes[i] - u;
    co::MatC X = G * xu.asDiagonal() * G;
    double worst = 0;
    for (int i = 100; i < 380; i += 37)
      for (int j = 100; j < 380; j += 41)
        worst = std::max(worst, std::abs(co::gxg_kernel(p, u, q, g.nodes[i], g.nodes[j]) * dx -
                                         X(i, j)));
    CHECK(worst < 1e-12);
  }
  SECTION("G (-ih d - q) G against a stencil, second-order in dx") {
    auto probe = [&](const Grid& gg) {
      const double dd = gg.spacing();
      const std::size_t n = gg.size();
      co::MatC P(n, n);
      for (std::size_t zi = 0; zi < n; ++zi)
        for (std::size_t j = 0; j < n; ++j) {
          const cplx up = zi + 1 < n ? co::g_kernel(p, u, q, gg.nodes[zi] + dd, gg.nodes[j])
                                     : cplx(0, 0);
          const cplx dn =
              zi > 0 ? co::g_kernel(p, u, q, gg.nodes[zi] - dd, gg.nodes[j]) : cplx(0, 0);
          P(zi, j) = cplx(0, -h) * (up - dn) / (2 * dd) -
                     q * co::g_kernel(p, u, q, gg.nodes[zi], gg.nodes[j]);
        }
      double worst = 0;
      const std::size_t lo = n / 4, hi = 3 * n / 4;
      for (std::size_t i = lo; i < hi; i += 29)
        for (std::size_t j = lo; j < hi; j += 31) {
          cplx brute(0, 0);
          for (std::size_t z = 0; z < n; ++z)
            brute += co::g_kernel(p, u, q, gg.nodes[i], gg.nodes[z]) * P(z, j) * dd;
          worst =
              std::max(worst, std::abs(co::gpg_kernel(p, u, q, gg.nodes[i], gg.nodes[j]) - brute));
        }
      return worst;
    };
    const double w1 = probe(co::sampling_grid(-6, 6, 320));
    const double w2 = probe(co::sampling_grid(-6, 6, 960));
    CHECK(w2 < 0.2 * w1);  // stencil error, not a kernel error
    CHECK(w2 < 3e-3);
  }
}

TEST_CASE("trace of G squared") {
  const double h = 0.1;
  co::CoherentParams p(h, std::pow(h, -0.8));
  Grid g = co::sampling_grid(-6, 6, 480);
  CHECK(co::trace_g_squared(p, 0.3, g) == Catch::Approx(1.0).margin(1e-10));
  co::MatC G = co::g_operator(p, 0.3, 0.7, g);
  CHECK(std::real((G * G).trace()) == Catch::Approx(1.0).margin(1e-6));
  // G is a Gaussian average of projections: no eigenvalue below -1e-8
  Eigen::SelfAdjointEigenSolver<co::MatC> es(G, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() > -1e-8);
}

TEST_CASE("completeness and moment identities") {
  const double h = 0.1;
  co::CoherentParams p(h, std::pow(h, -0.8));
  Grid g = co::sampling_grid(-6, 6, 480);
  CHECK(co::completeness_defect(p, g) < 1e-5);

  auto mr = co::moment_identities(p, 0.4, g);
  CHECK(mr.zeroth_dev < 1e-5);
  CHECK(mr.first_dev < 1e-5);

  // a = 1/h: the first-moment prefactor vanishes identically
  co::CoherentParams plim(h, 1.0 / h);
  CHECK(std::abs(1.0 - plim.h * plim.h * plim.a * plim.b) < 1e-12);
  auto mr2 = co::moment_identities(plim, 0.4, co::sampling_grid(-6, 6, 640));
  CHECK(mr2.first_dev < 1e-6);
}

TEST_CASE("linear symbol kernel") {
  const double h = 0.1;
  SECTION("pure momentum Gaussian has a closed-form transform") {
    const double sf = 0.8, c = 0.3;
    co::LinearSymbol sym{0.1, 0.0, 1.0};
    auto f = [&](double s) { return std::exp(-(s - c) * (s - c) / (2 * sf * sf)); };
    for (double t : {0.0, 0.07, 0.21}) {
      const cplx k =
          co::linear_symbol_kernel(f, sym, h, 0.5 + t, 0.5, c - 9 * sf - 0.1, c + 9 * sf - 0.1,
                                   20000);
      const cplx ref = sf / (std::sqrt(2 * pi) * h) *
                       std::polar(1.0, (c - sym.b0) * t / h) *
                       std::exp(-sf * sf * t * t / (2 * h * h));
      CHECK(std::abs(k - ref) < 1e-6 * std::abs(ref) + 1e-12);
    }
  }
  SECTION("f = 0 gives 0") {
    co::LinearSymbol sym{0.0, 0.3, 1.0};
    CHECK(std::abs(co::linear_symbol_kernel([](double) { return 0.0; }, sym, h, 0.3, 0.1,
                                            -5, 5, 1000)) == 0.0);
  }
  SECTION("B2 = 0: band-limited delta, off-diagonal mass vanishes") {
    Grid g = co::sampling_grid(-2, 2, 128);
    co::LinearSymbol sym{0.2, 1.0, 0.0};
    const double band = pi * h / g.spacing();
    auto f = [](double s) { return 1.0 + 0.2 * s; };
    auto K = co::linear_symbol_matrix(f, sym, h, g, -band, band, 40000);
    double offmass = 0, diagmass = 0;
    for (Eigen::Index i = 0; i < K.rows(); ++i)
      for (Eigen::Index j = 0; j < K.cols(); ++j)
        (i == j ? diagmass : offmass) += std::abs(K(i, j));
    CHECK(offmass / diagmass < 1e-6);
  }
}

TEST_CASE("trace identity") {
  const double h = 0.1, u = 0.4, q = 0.7;
  co::CoherentParams p(h, std::pow(h, -0.8));
  Grid g = co::sampling_grid(-6, 6, 480);

  SECTION("f = 1, V = 1 gives Tr G^2 = 1") {
    auto r = co::trace_identity_check([](double) { return 1.0; }, {0, 0, 1},
                                      [](double) { return 1.0; }, p, u, q, g, {-3, 3});
    CHECK(std::real(r.lhs) == Catch::Approx(1.0).margin(1e-6));
    CHECK(r.rhs == Catch::Approx(1.0).margin(1e-6));
    CHECK(r.deviation < 1e-6);
  }
  SECTION("constant symbol: both sides f(B0)") {
    auto f = [](double s) { return std::exp(-s * s); };
    auto r = co::trace_identity_check(f, {0.37, 0.0, 0.0}, [](double) { return 1.0; }, p,
                                      u, q, g, {-3, 3});
    CHECK(std::real(r.lhs) == Catch::Approx(f(0.37)).margin(1e-6));
    CHECK(r.rhs == Catch::Approx(f(0.37)).margin(1e-6));
  }
  SECTION("generic draw agrees to 1e-5") {
    auto f = [](double s) { return std::exp(-(s - 0.2) * (s - 0.2) / (2 * 0.8 * 0.8)); };
    auto r = co::trace_identity_check(f, {0.3, 0.5, 1.2}, [](double x) { return std::cos(x); },
                                      p, u, q, g, {0.2 - 7.5 * 0.8, 0.2 + 7.5 * 0.8});
    CHECK(r.deviation < 1e-5);
  }
  SECTION("randomized draws") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int k = 0; k < 4; ++k) {
      const double mu = 0.3 * uni(rng), sf = 0.75 + 0.15 * uni(rng);
      co::LinearSymbol sym{0.4 * uni(rng), 0.5 * uni(rng), 1.2 + 0.2 * uni(rng)};
      auto f = [=](double s) { return std::exp(-(s - mu) * (s - mu) / (2 * sf * sf)); };
      auto r = co::trace_identity_check(f, sym, [](double x) { return std::cos(x); }, p,
                                        0.8 * uni(rng), 0.8 * uni(rng), g,
                                        {mu - 7.5 * sf, mu + 7.5 * sf});
      CHECK(r.deviation < 1e-5);
      CHECK(std::abs(std::imag(r.lhs)) < 1e-8);
    }
  }
}

TEST_CASE("symbol derivative contract") {
  auto sym = harmonic_symbol();
  std::vector<double> samples{-1.0, 0.2, 1.7};
  CHECK(co::symbol_derivative_defect(sym, samples) < 1e-5);
}

TEST_CASE("coherent representation") {
  SECTION("constant symbol reproduces a multiple of the identity") {
    const double h = 0.1;
    co::CoherentParams p(h, std::pow(h, -0.8));
    Grid g = co::sampling_grid(-6, 6, 480);
    auto sym = co::make_symbol(
        [](double) { return 0.0; }, [](double) { return 0.0; }, [](double) { return 0.0; },
        [](double) { return 0.0; }, [](double) { return 1.7; }, [](double) { return 0.0; },
        [](double) { return 0.0; }, [](double) { return 0.0; });
    auto r = co::coherent_representation(sym, p, g);
    double worst = 0;
    for (Eigen::Index i = 0; i < r.assembled.rows(); ++i)
      for (Eigen::Index j = 0; j < r.assembled.cols(); ++j)
        worst = std::max(worst, std::abs(r.assembled(i, j) -
                                         (i == j ? cplx(1.7, 0) : cplx(0, 0))));
    CHECK(worst < 1e-8);
    CHECK(r.hermiticity_defect < 1e-10);
  }
  SECTION("harmonic symbol error tracks h^2 b") {
    const double h = 0.1;
    co::CoherentParams p(h, std::pow(h, -0.8));
    const double dxn = std::min(std::min(std::sqrt(h), 1.0 / std::sqrt(p.a)) / 10.0,
                                pi * h / 18.0);
    std::size_t n = std::size_t(12.0 / dxn) + 1;
    if (n % 2) ++n;
    Grid g = co::sampling_grid(-6, 6, n);
    auto r = co::coherent_representation(harmonic_symbol(), p, g);
    const double ratio = r.error_norm / (h * h * p.b);
    CHECK(ratio > 0.5);
    CHECK(ratio < 4.0);
    CHECK(r.hermiticity_defect < 1e-10);
  }
}

TEST_CASE("trial density matrix") {
  const double h = 0.1;
  co::CoherentParams p(h, std::pow(h, -0.8));

  SECTION("positive symbol gives a vanishing matrix") {
    Grid g = co::sampling_grid(-4.5, 4.5, 320);
    auto sym = co::make_symbol(
        [](double q) { return q * q; }, [](double q) { return 2 * q; },
        [](double) { return 2.0; }, [](double) { return 0.0; },
        [](double) { return 1.0; }, [](double) { return 0.0; },
        [](double) { return 0.0; }, [](double) { return 0.0; });
    auto dm = co::trial_density_matrix(sym, p, g);
    CHECK(dm.trace() < 1e-3);
  }
  SECTION("well: spectral containment in [0, 1]") {
    Grid g = co::sampling_grid(-4.5, 4.5, 320);
    auto dm = co::trial_density_matrix(harmonic_symbol(-1.0), p, g);
    auto eig = symmetric_eigen(dm.op).values;
    CHECK(eig.front() > -1e-6);
    CHECK(eig.back() < 1.0 + 1e-6);
  }
  SECTION("closed-form deep shortcut agrees with the spectral route") {
    Grid g = co::sampling_grid(-4.5, 4.5, 260);
    co::TrialOptions direct, forced;
    forced.force_spectral = true;
    auto d1 = co::trial_density_matrix(harmonic_symbol(-1.0), p, g, direct);
    auto d2 = co::trial_density_matrix(harmonic_symbol(-1.0), p, g, forced);
    const double dev = (d1.op.mat - d2.op.mat).cwiseAbs().maxCoeff();
    CHECK(dev < 1e-6);
  }
  SECTION("F must be even for the conjugation fold") {
    Grid g = co::sampling_grid(-4.5, 4.5, 260);
    auto odd = co::make_symbol(
        [](double q) { return q * q * q; }, [](double q) { return 3 * q * q; },
        [](double q) { return 6 * q; }, [](double) { return 6.0; },
        [](double) { return 1.0; }, [](double) { return 0.0; },
        [](double) { return 0.0; }, [](double) { return 0.0; });
    CHECK_THROWS_AS(co::trial_density_matrix(odd, p, g), ParameterError);
  }
}

TEST_CASE("density of a density matrix") {
  Grid g = co::sampling_grid(-4, 4, 200);
  const double dx = g.spacing();
  SECTION("rank-one projection has density |psi|^2") {
    Eigen::VectorXd psi(200);
    for (int i = 0; i < 200; ++i) psi(i) = std::exp(-g.nodes[i] * g.nodes[i]);
    psi /= std::sqrt(psi.squaredNorm() * dx);
    co::DensityMatrix dm{GridOperator{g, dx * (psi * psi.transpose())}};
    auto rho = co::density_of(dm);
    double integral = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(rho[i] == Catch::Approx(psi(Eigen::Index(i)) * psi(Eigen::Index(i))).margin(1e-10));
      integral += rho[i] * g.weights[i];
    }
    CHECK(integral == Catch::Approx(dm.trace()).margin(1e-8));
  }
  SECTION("trial gamma density approaches the semiclassical value") {
    const double h = 0.1;
    co::CoherentParams p(h, std::pow(h, -0.8));
    Grid gg = co::sampling_grid(-4.5, 4.5, 320);
    auto dm = co::trial_density_matrix(harmonic_symbol(-1.0), p, gg);
    auto rho = co::density_of(dm);
    double tr_from_rho = 0;
    for (std::size_t i = 0; i < gg.size(); ++i) tr_from_rho += rho[i] * gg.weights[i];
    CHECK(tr_from_rho == Catch::Approx(dm.trace()).margin(1e-8));
    // at the well center the density tends to (2 pi h)^{-1} w_1 |V|^{1/2}
    std::size_t i0 = 0;
    for (std::size_t i = 0; i < gg.size(); ++i)
      if (std::abs(gg.nodes[i]) < std::abs(gg.nodes[i0])) i0 = i;
    CHECK(rho[i0] == Catch::Approx(1.0 / (pi * h)).epsilon(0.06));
  }
}
