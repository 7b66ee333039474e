// Command-line front end: reproducible semiclassical-trace experiments.
//
// Commands
//   tf        solve the universal screening function, export tables + checks
//   scott     h-sweep of Tr[-h^2 Lap - V^TF]_- vs the phase-space integral
//   hydrogen  solver vs closed-form sums for -h^2 Lap - z/r + 1
//   local-sc  localized semiclassics convergence study (radial 3-D)
//   verify    module property suites with JSON records
//
// Exit codes: 0 ok, 1 parameter error, 2 numeric accuracy error,
// 3 check failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "sctrace/coherent.hpp"
#include "sctrace/errors.hpp"
#include "sctrace/localization.hpp"
#include "sctrace/parallel.hpp"
#include "sctrace/report.hpp"
#include "sctrace/scott.hpp"
#include "sctrace/spectral.hpp"
#include "sctrace/tf.hpp"
#include "sctrace/version.hpp"

namespace sct = sctrace;
using sct::json;

namespace {

struct CommonOpts {
  std::string out = ".";
  std::uint64_t seed = 42;
  unsigned threads = 0;
};

void write_manifest(const CommonOpts& c, const std::string& command, json config) {
  config["seed"] = c.seed;
  config["threads"] = c.threads;
  json m{{"command", command},
         {"config", config},
         {"version", SCTRACE_VERSION},
         {"compiler", __VERSION__}};
  std::filesystem::create_directories(c.out);
  sct::write_json_file(c.out + "/manifest.json", m);
}

void print_check(const sct::CheckRecord& r) {
  std::printf("%-44s %-4s  deviation %.3e  (tol %.1e)\n", r.check.c_str(),
              r.pass ? "ok" : "FAIL", r.deviation, r.tolerance);
}

int run_tf(const CommonOpts& c, double z, std::size_t grid_nodes) {
  write_manifest(c, "tf", json{{"z", z}, {"grid", grid_nodes}});
  const auto& u = sct::tf::universal_solution();
  sct::tf::TFAtom atom(z, &u);

  sct::write_text_file(c.out + "/tf_universal.csv", sct::tf::universal_csv(u));
  sct::write_json_file(c.out + "/tf_atom.json", sct::tf::atom_json(atom, "tf_universal.csv"));

  const double etf = sct::tf::tf_energy(atom, grid_nodes);
  const double charge = atom.charge(atom.radial_grid(grid_nodes));
  std::vector<double> radii;
  for (double r = 0.1; r <= 10.0; r *= 1.9) radii.push_back(r);
  const double sc_dev = std::max(sct::tf::scaling_check(atom, 2.0, radii),
                                 sct::tf::scaling_check(atom, 0.5, radii));
  json summary{{"z", z},
               {"initial_slope", u.initial_slope},
               {"tail_exponent", u.tail_exponent_check},
               {"energy", etf},
               {"energy_over_z73", etf / std::pow(z, 7.0 / 3.0)},
               {"charge", charge},
               {"scaling_check_dev", sc_dev}};
  sct::write_json_file(c.out + "/tf_summary.json", summary);
  std::printf("E_TF(%g) = %.9f   E/z^(7/3) = %.9f   charge = %.6f\n", z, etf,
              etf / std::pow(z, 7.0 / 3.0), charge);
  std::printf("initial slope %.12f, far-tail log-slope %.4f, scaling dev %.2e\n",
              u.initial_slope, u.tail_exponent_check, sc_dev);
  return 0;
}

int run_scott(const CommonOpts& c, double z, std::vector<double> h_list, bool spin,
              int lmax_cap, double a_unused) {
  (void)a_unused;
  json cfg{{"z", z}, {"h_list", h_list}, {"spin", spin}, {"lmax_cap", lmax_cap}};
  write_manifest(c, "scott", cfg);

  sct::tf::TFAtom atom(z);
  sct::scott::ScottOptions opt;
  std::vector<sct::scott::DeficitPoint> pts;
  for (double h : h_list) {
    auto pt = sct::scott::scott_deficit(atom, h, opt);
    if (spin) {
      pt.quantum_trace *= 2;
      pt.sc_integral *= 2;
      pt.deficit *= 2;
      pt.h2_deficit *= 2;
    }
    pts.push_back(pt);
    std::printf("h=%-6g Tr=%-16.8f SC=%-16.8f h^2*deficit=%.6f\n", pt.h,
                pt.quantum_trace, pt.sc_integral, pt.h2_deficit);
  }

  sct::scott::ScottReport rep;
  if (pts.size() >= 3 && pts.front().h / pts.back().h >= 3.0 - 1e-12) {
    rep = sct::scott::scott_fit(z, pts);
  } else {
    rep.z = z;
    rep.target = spin ? z * z / 4.0 : z * z / 8.0;
    rep.points = pts;
    rep.fit_valid = false;
    rep.warnings.push_back("fit refused: need >= 3 h values spanning a factor >= 3");
  }
  if (spin && rep.fit_valid) {
    rep.target = z * z / 4.0;
    rep.rel_error = std::abs(rep.fitted - rep.target) / rep.target;
  }
  sct::scott::emit_report(rep, c.out);
  if (rep.fit_valid)
    std::printf("fitted coefficient %.6f  target %.6f  rel error %.4f\n", rep.fitted,
                rep.target, rep.rel_error);
  else
    for (const auto& w : rep.warnings) std::printf("note: %s\n", w.c_str());
  return 0;
}

int run_hydrogen(const CommonOpts& c, double z, std::vector<double> h_list) {
  write_manifest(c, "hydrogen", json{{"z", z}, {"h_list", h_list}});
  std::string csv = "h,solver_sum,exact_sum,two_term_asymptotic,rel_dev\n";
  bool all_ok = true;
  json rows = json::array();
  for (double h : h_list) {
    sct::spectral::RadialPotential pot{[z](double r) { return z / r - 1.0; }, true,
                                       "hydrogen"};
    const auto cfg = sct::spectral::radial_config_hydrogen(z, h);
    const auto sum = sct::spectral::radial_negative_sum(pot, h, cfg);
    const auto ex = sct::spectral::hydrogen_negative_sum_exact(z, h);
    double rel = ex.exact != 0.0
                     ? std::abs(sum.weighted_sum - ex.exact) / std::abs(ex.exact)
                     : std::abs(sum.weighted_sum);
    all_ok = all_ok && rel < 1e-4;
    csv += sct::format_double(h) + "," + sct::format_double(sum.weighted_sum) + "," +
           sct::format_double(ex.exact) + "," + sct::format_double(ex.two_term_asymptotic) +
           "," + sct::format_double(rel) + "\n";
    rows.push_back(sct::spectral::summary_json(sum));
    std::printf("h=%-6g solver %-16.8f exact %-16.8f rel %.2e\n", h, sum.weighted_sum,
                ex.exact, rel);
  }
  sct::write_text_file(c.out + "/hydrogen.csv", csv);
  sct::write_json_file(c.out + "/hydrogen.json", rows);
  return all_ok ? 0 : 3;
}

int run_local_sc(const CommonOpts& c, std::vector<double> h_list) {
  write_manifest(c, "local-sc", json{{"h_list", h_list}});
  auto V = [](double r) { return -2.0 * std::exp(-r * r); };
  auto st = sct::scott::local_sc_study(V, "gauss_well_-2exp(-r^2)", h_list);
  std::string csv = "h,trace_neg,sc_integral,e_h\n";
  for (std::size_t i = 0; i < st.h_list.size(); ++i) {
    csv += sct::format_double(st.h_list[i]) + "," + sct::format_double(st.tr_values[i]) +
           "," + sct::format_double(st.sc_values[i]) + "," +
           sct::format_double(st.e_h[i]) + "\n";
    std::printf("h=%-6g Tr=%-14.6f SC=%-14.6f e(h)=%.4e\n", st.h_list[i],
                st.tr_values[i], st.sc_values[i], st.e_h[i]);
  }
  sct::write_text_file(c.out + "/local_sc.csv", csv);
  sct::write_json_file(c.out + "/local_sc.json",
                       json{{"potential", st.potential_id},
                            {"h_list", st.h_list},
                            {"e_h", st.e_h},
                            {"slope", st.slope}});
  std::printf("log-log slope of e(h): %.3f\n", st.slope);
  return 0;
}

// ---------------------------------------------------------------------------
// verify suites

std::vector<sct::CheckRecord> verify_spectral(std::uint64_t, double ts) {
  namespace sp = sct::spectral;
  std::vector<sct::CheckRecord> out;
  {
    const double v = sp::momentum_neg_integral(3, -1.0), ref = -8.0 * sp::pi / 15.0;
    out.push_back(sct::make_check("momentum_integral_n3", json{{"s", -1.0}}, v, ref,
                                  std::abs(v - ref), 1e-12 * ts));
  }
  {
    const double z = 1.0, h = 0.2;
    sp::RadialPotential pot{[z](double r) { return z / r - 1.0; }, true, "hydrogen"};
    const auto sum = sp::radial_negative_sum(pot, h, sp::radial_config_hydrogen(z, h));
    const auto ex = sp::hydrogen_negative_sum_exact(z, h);
    out.push_back(sct::make_check("hydrogen_sum_vs_closed_form",
                                  json{{"z", z}, {"h", h}}, sum.weighted_sum, ex.exact,
                                  std::abs(sum.weighted_sum / ex.exact - 1.0), 1e-4 * ts));
  }
  {
    const double z = 1.0, h = 0.1;
    sp::RadialPotential pot{[z](double r) { return z / r - 1.0; }, true, "hydrogen"};
    const double v = sp::phase_space_neg_integral_radial(pot, h, z, 200000);
    const double ref = -z * z * z / (12.0 * h * h * h);
    out.push_back(sct::make_check("hydrogenic_phase_space", json{{"z", z}, {"h", h}}, v,
                                  ref, std::abs(v / ref - 1.0), 1e-4 * ts));
  }
  {
    // spin-2 semiclassical density at h = 2^{-1/2} equals rho^TF
    sct::tf::TFAtom atom(1.0);
    const double r = 1.3;
    const double lhs =
        sp::semiclassical_density(-atom.potential(r), std::sqrt(0.5), 3, true);
    const double rhs = atom.density(r);
    out.push_back(sct::make_check("semiclassical_density_tf_identity", json{{"r", r}},
                                  lhs, rhs, std::abs(lhs / rhs - 1.0), 1e-10 * ts));
  }
  return out;
}

std::vector<sct::CheckRecord> verify_coherent(std::uint64_t seed, double ts) {
  namespace co = sct::coherent;
  std::vector<sct::CheckRecord> out;
  const double h = 0.1;
  co::CoherentParams p(h, std::pow(h, -0.8));
  sct::Grid g = co::sampling_grid(-6, 6, 480);
  {
    const double tr = co::trace_g_squared(p, 0.3, g);
    out.push_back(
        sct::make_check("trace_g_squared", json{{"h", h}}, tr, 1.0, std::abs(tr - 1.0),
                        1e-6 * ts));
  }
  {
    const double d = co::completeness_defect(p, g);
    out.push_back(sct::make_check("completeness_identity", json{{"h", h}}, d, 0.0, d,
                                  1e-5 * ts));
  }
  {
    const auto mr = co::moment_identities(p, 0.4, g);
    out.push_back(sct::make_check("moment_zeroth", json{{"u", 0.4}}, mr.zeroth_dev, 0.0,
                                  mr.zeroth_dev, 1e-5 * ts));
    out.push_back(sct::make_check("moment_first", json{{"u", 0.4}}, mr.first_dev, 0.0,
                                  mr.first_dev, 1e-5 * ts));
  }
  {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    double worst = 0;
    for (int k = 0; k < 5; ++k) {
      const double mu = 0.4 * uni(rng), sf = 0.7 + 0.3 * uni(rng);
      co::LinearSymbol sym{0.4 * uni(rng), 0.5 * uni(rng), 1.0 + 0.4 * uni(rng)};
      const double u = 0.8 * uni(rng), q = 0.8 * uni(rng);
      auto f = [mu, sf](double s) { return std::exp(-(s - mu) * (s - mu) / (2 * sf * sf)); };
      auto V = [](double x) { return std::cos(x); };
      auto r = co::trace_identity_check(f, sym, V, p, u, q, g,
                                        {mu - 7.5 * sf, mu + 7.5 * sf}, 160);
      worst = std::max(worst, r.deviation);
    }
    out.push_back(sct::make_check("trace_identity_random_draws", json{{"draws", 5}},
                                  worst, 0.0, worst, 1e-5 * ts));
  }
  return out;
}

std::vector<sct::CheckRecord> verify_localization(std::uint64_t seed, double ts) {
  namespace lo = sct::loc;
  std::vector<sct::CheckRecord> out;
  sct::tf::MolecularGeometry geom({{{0, 0, 0}}}, {1.0}, 0.5);
  std::function<double(const lo::Vec3&)> ell = [&](const lo::Vec3& u) {
    return sct::tf::geometry_ell(geom, {u[0], u[1], u[2]});
  };
  {
    lo::PartitionSpec s1{lo::make_base_bump(1), ell, 1};
    double worst = 0;
    for (double x : {0.0, 0.4, 1.5, 6.0})
      worst = std::max(worst, std::abs(lo::partition_completeness(s1, {x, 0, 0}, 3000) - 1));
    out.push_back(sct::make_check("partition_completeness_1d", json{{"points", 4}},
                                  worst, 0.0, worst, 1e-6 * ts));
  }
  {
    lo::PartitionSpec s3{lo::make_base_bump(3), ell, 3};
    double worst = 0;
    for (double x : {0.0, 0.4, 3.0})
      worst = std::max(worst,
                       std::abs(lo::partition_completeness(s3, {0, 0, x}, 2000, 2400) - 1));
    out.push_back(sct::make_check("partition_completeness_3d", json{{"points", 3}},
                                  worst, 0.0, worst, 1e-5 * ts));
  }
  {
    auto cp = lo::make_cutoff_pair(1.0);
    double worst = 0;
    for (double t = 0.9; t <= 2.1; t += 0.004) {
      const double tm = cp.theta_minus(t), tp = cp.theta_plus(t);
      worst = std::max(worst, std::abs(tm * tm + tp * tp - 1.0));
    }
    out.push_back(
        sct::make_check("cutoff_square_partition", json{}, worst, 0.0, worst, 1e-10 * ts));
  }
  {
    auto cp = lo::make_cutoff_pair(1.0);
    std::vector<lo::ThetaFn> pair{
        {[cp](double x) { return cp.theta_minus(std::abs(x)); },
         [cp](double x) { return cp.dtheta_minus(std::abs(x)) * (x >= 0 ? 1 : -1); }},
        {[cp](double x) { return cp.theta_plus(std::abs(x)); },
         [cp](double x) { return cp.dtheta_plus(std::abs(x)) * (x >= 0 ? 1 : -1); }}};
    sct::Grid gg = sct::dirichlet_grid(-3, 3, 40000);
    const double dev =
        lo::ims_check(pair, [](double x) { return x * x - 1.0; }, 0.1, gg, 10, seed);
    out.push_back(sct::make_check("ims_identity", json{{"n", 40000}}, dev, 0.0, dev,
                                  1e-6 * ts));
  }
  return out;
}

int run_verify(const CommonOpts& c, const std::string& suite, double tol_scale) {
  write_manifest(c, "verify", json{{"suite", suite}, {"tol_scale", tol_scale}});
  std::vector<sct::CheckRecord> records;
  if (suite == "spectral" || suite == "all") {
    auto v = verify_spectral(c.seed, tol_scale);
    records.insert(records.end(), v.begin(), v.end());
  }
  if (suite == "coherent" || suite == "all") {
    auto v = verify_coherent(c.seed, tol_scale);
    records.insert(records.end(), v.begin(), v.end());
  }
  if (suite == "localization" || suite == "all") {
    auto v = verify_localization(c.seed, tol_scale);
    records.insert(records.end(), v.begin(), v.end());
  }
  json arr = json::array();
  bool all_ok = true;
  for (const auto& r : records) {
    print_check(r);
    arr.push_back(r.to_json());
    all_ok = all_ok && r.pass;
  }
  sct::write_json_file(c.out + "/verify_" + suite + ".json", arr);
  return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semiclassical trace asymptotics toolkit"};
  app.set_config("--config");
  app.fallthrough(true);  // global flags may follow the subcommand
  CommonOpts common;
  app.add_option("--out", common.out, "output directory");
  app.add_option("--seed", common.seed, "seed for randomized property sampling");
  app.add_option("--threads", common.threads, "worker thread cap (0 = hardware)");

  double z = 1.0;
  std::vector<double> h_list{0.2, 0.14, 0.1, 0.07, 0.05};
  std::size_t grid_nodes = 6000;
  bool spin = false;
  int lmax_cap = 256;
  double a_exponent = 0.8;
  std::string suite = "all";
  double tol_scale = 1.0;

  auto* cmd_tf = app.add_subcommand("tf", "universal TF solution and atomic checks");
  cmd_tf->add_option("--z", z, "nuclear charge")->check(CLI::PositiveNumber);
  cmd_tf->add_option("--grid", grid_nodes, "radial grid nodes")
      ->check(CLI::Range(std::size_t(64), std::size_t(10000000)));

  auto* cmd_scott = app.add_subcommand("scott", "Scott-coefficient h sweep");
  cmd_scott->add_option("--z", z, "nuclear charge")->check(CLI::PositiveNumber);
  cmd_scott->add_option("--h-list", h_list, "semiclassical parameters, decreasing")
      ->check(CLI::Range(1e-6, 0.999999));
  cmd_scott->add_flag("--spin", spin, "double both sides (spin pairing)");
  cmd_scott->add_option("--lmax-cap", lmax_cap, "angular channel cap");

  auto* cmd_hyd = app.add_subcommand("hydrogen", "hydrogen closed-form comparison");
  cmd_hyd->add_option("--z", z, "nuclear charge")->check(CLI::PositiveNumber);
  cmd_hyd->add_option("--h-list", h_list, "semiclassical parameters")
      ->check(CLI::Range(1e-6, 0.999999));

  auto* cmd_lsc = app.add_subcommand("local-sc", "local semiclassics study");
  cmd_lsc->add_option("--h-list", h_list, "semiclassical parameters")
      ->check(CLI::Range(1e-6, 0.999999));

  auto* cmd_ver = app.add_subcommand("verify", "module property suites");
  cmd_ver->add_option("--suite", suite, "coherent|localization|spectral|all")
      ->check(CLI::IsMember({"coherent", "localization", "spectral", "all"}));
  cmd_ver->add_option("--a-exponent", a_exponent, "localization rule a = h^{-e}");
  cmd_ver->add_option("--tol-scale", tol_scale, "scale all check tolerances");

  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // parameter error
  }

  if (common.threads > 0) sctrace::worker_cap() = common.threads;
  (void)a_exponent;

  try {
    std::filesystem::create_directories(common.out);
    if (*cmd_tf) return run_tf(common, z, grid_nodes);
    if (*cmd_scott) return run_scott(common, z, h_list, spin, lmax_cap, a_exponent);
    if (*cmd_hyd) return run_hydrogen(common, z, h_list);
    if (*cmd_lsc) return run_local_sc(common, h_list);
    if (*cmd_ver) return run_verify(common, suite, tol_scale);
  } catch (const sct::ParameterError& e) {
    std::fprintf(stderr, "parameter error: %s\n", e.what());
    return 1;
  } catch (const sct::AccuracyError& e) {
    std::fprintf(stderr, "accuracy error: %s\n", e.what());
    return 2;
  } catch (const sct::ContractError& e) {
    std::fprintf(stderr, "contract error: %s\n", e.what());
    return 3;
  } catch (const sct::SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
