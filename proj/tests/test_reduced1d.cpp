#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nlsq/reduced1d.hpp"

using namespace nlsq;

static GridPtr line(double L, int m) { return make_grid(Geometry::cartesian, {{"x", L, m}}); }
static double sech2(double x) { return 1.0 / std::pow(std::cosh(x), 2); }

// closed form on the ray mu2/mu1 = 1/(2 kappa) with c1 = c2 = a:
// psi = phi / sqrt(2 kappa), phi = (3 lam / (2 a alpha)) sech^2(sqrt(lam) x / 2)
TEST_CASE("proportional reduced ground state matches the sech^2 closed form") {
  for (double kappa : {1.0, 2.0}) {
    CAPTURE(kappa);
    double a = 0.5, mu1 = 10.0, alpha = 1.0 / std::sqrt(2 * kappa);
    auto g = line(50, 512);
    Reduced1DProblem p{a, a, kappa, mu1, mu1 * alpha * alpha, g};
    auto r = solve_reduced(p, SolverConfig{});
    REQUIRE(r.converged);
    double lam = std::pow(mu1 * a * a * alpha * alpha / 6.0, 2.0 / 3.0);
    CHECK(r.lambda1 == doctest::Approx(lam).epsilon(1e-6));
    CHECK(std::abs(r.lambda2 / (kappa * r.lambda1) - 1) < 1e-4);
    CHECK(r.extra["residual"].get<double>() < 1e-7);
    double err = 0, ref = 0;
    for (std::size_t j = 0; j < g->size(); ++j) {
      double x = g->coord(j, 0);
      double f = 1.5 * lam / (a * alpha) * sech2(0.5 * std::sqrt(lam) * x);
      err = std::max(err, std::abs(r.pair.u[j] - f) + std::abs(r.pair.v[j] - alpha * f));
      ref = std::max(ref, f);
    }
    CHECK(err / ref < 1e-5);
  }
}

TEST_CASE("doubling the coupling rescales the reduced state") {
  auto g = line(40, 1024);
  Reduced1DProblem p{0.7, 0.4, 1.5, 10.0, 3.0, g};
  auto r1 = solve_reduced(p, SolverConfig{});
  p.c1 *= 2;
  p.c2 *= 2;
  auto r2 = solve_reduced(p, SolverConfig{});
  REQUIRE(r1.converged);
  REQUIRE(r2.converged);
  double s = std::pow(2.0, 4.0 / 3.0);
  CHECK(r2.lambda1 == doctest::Approx(s * r1.lambda1).epsilon(1e-5));
  CHECK(r2.lambda2 == doctest::Approx(s * r1.lambda2).epsilon(1e-5));
  // peak heights scale by 2^{1/3}
  auto peak = [](const CField& f) {
    double m = 0;
    for (auto z : f) m = std::max(m, std::abs(z));
    return m;
  };
  CHECK(peak(r2.pair.u) == doctest::Approx(std::cbrt(2.0) * peak(r1.pair.u)).epsilon(1e-3));
  CHECK(peak(r2.pair.v) == doctest::Approx(std::cbrt(2.0) * peak(r1.pair.v)).epsilon(1e-3));
}

TEST_CASE("reduced ground state is even and nonincreasing after centring") {
  auto g = line(40, 512);
  auto r = solve_reduced(Reduced1DProblem{0.5, 0.3, 1.0, 8.0, 2.0, g}, SolverConfig{});
  REQUIRE(r.converged);
  CHECK(r.extra["residual"].get<double>() < 1e-7);
  int m = static_cast<int>(g->size()), c = m / 2;
  for (const CField* f : {&r.pair.u, &r.pair.v}) {
    const auto& h = *f;
    // find peak and walk outward
    int j0 = 0;
    for (int j = 1; j < m; ++j)
      if (h[j].real() > h[j0].real()) j0 = j;
    CHECK(std::abs(j0 - c) <= 1);
    double mx = h[j0].real();
    for (int k = 1; k < m / 2 - 1; ++k) {
      CHECK(h[(j0 + k + 1) % m].real() <= h[(j0 + k) % m].real() + 1e-10 * mx);
      CHECK(h[(j0 - k - 1 + m) % m].real() <= h[(j0 - k + m) % m].real() + 1e-10 * mx);
    }
  }
}

TEST_CASE("coefficient sources") {
  auto tg = make_grid(Geometry::cartesian, {{"x1", 10, 64}});
  for (double kappa : {0.5, 1.0, 2.0}) {
    auto bu = transverse_spectrum(1.0, 1, tg, 2), bv = transverse_spectrum(kappa, 1, tg, 2);
    auto [c1, c2] = reduced_coefficients(CoefficientSource::overlap, kappa, 2, bu, bv);
    CHECK(c1 == c2);
    CHECK(c1 == doctest::Approx(overlap_constants_exact(kappa, 1).first).epsilon(1e-8));
    auto [p1, p2] = reduced_coefficients(CoefficientSource::printed_infinity, kappa, 2, bu, bv);
    CHECK(p1 == doctest::Approx(2 * kappa / (3 * std::sqrt(M_PI))));
    CHECK(p2 == p1);
    auto pt = reduced_coefficients(CoefficientSource::printed_reduction, kappa, 2, bu, bv);
    CHECK(pt == overlap_constants_printed(kappa, 2));
  }
  CHECK(coefficient_source_from_string(to_string(CoefficientSource::printed_reduction)) ==
        CoefficientSource::printed_reduction);
  CHECK_THROWS(coefficient_source_from_string("nope"));
  CHECK_THROWS(solve_reduced(Reduced1DProblem{0, 1, 1, 1, 1, line(10, 32)}, SolverConfig{}));
  auto plane = make_grid(Geometry::cartesian, {{"x1", 10, 16}, {"x2", 10, 16}});
  CHECK_THROWS(solve_reduced(Reduced1DProblem{1, 1, 1, 1, 1, plane}, SolverConfig{}));
  CHECK_THROWS(solve_reduced(Reduced1DProblem{1, 1, 1, 1, 1, nullptr}, SolverConfig{}));
}

TEST_CASE("a field of the form g(x_n) Psi0(x') has zero remainder") {
  auto g = make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", 20, 64}});
  auto tg = transverse_grid_of(*g);
  auto bu = transverse_spectrum(1.0, 1, tg, 2);
  std::size_t nax = 64;
  CField f(g->size());
  for (std::size_t t = 0; t < tg->size(); ++t)
    for (std::size_t j = 0; j < nax; ++j) {
      double x = g->coord(t * nax + j, 1);
      f[t * nax + j] = std::exp(-0.1 * x * x) * (1 + 0.2 * std::sin(x)) * bu.vectors[0][t];
    }
  auto pr = project_lowest(f, *g, bu);
  CHECK(std::sqrt(norm2(pr.remainder, *g)) < 1e-12 * std::sqrt(norm2(f, *g)));
  CHECK(norm2(pr.profile, *pr.axial) == doctest::Approx(norm2(f, *g)).epsilon(1e-12));
}

TEST_CASE("full vs reduced comparison at mu = 0.1") {
  double mu = 0.1;
  auto g = make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", 200, 256}});
  ModelParams m{2, 1.0, Potential::V2};
  SolverConfig c;
  c.initializer = Initializer::eigenmode_product;
  c.init_width = 2 / mu;
  auto full = solve_groundstate(g, m, ConstraintSpec::product(mu, mu), c);
  REQUIRE(full.converged);
  auto tg = transverse_grid_of(*g);
  auto bu = transverse_spectrum(1.0, 1, tg, 2), bv = transverse_spectrum(1.0, 1, tg, 2);
  auto [c1, c2] = reduced_coefficients(CoefficientSource::overlap, 1.0, 2, bu, bv);
  auto red = solve_reduced(Reduced1DProblem{c1, c2, 1.0, mu, mu, axial_grid_of(*g)}, SolverConfig{});
  REQUIRE(red.converged);
  auto rep = compare_full_vs_reduced(full, bu, bv, red);
  CHECK(rep.mass_split_error < 1e-10);
  CHECK(rep.mu_total == doctest::Approx(2 * mu));
  // all ratios small and finite
  for (double q : {rep.ratio_l2(), rep.ratio_h1_axial(), rep.ratio_multiplier(), rep.ratio_distance()}) {
    CHECK(std::isfinite(q));
    CHECK(q < 0.05);
  }
  auto js = to_json(rep);
  for (const char* k : {"ratio_l2", "ratio_h1_axial", "ratio_multiplier", "mu_total"}) CHECK(js.contains(k));

  // translating the full state along x_n leaves the ratios unchanged
  auto moved = full;
  periodic_shift(moved.pair.u, *g, 1, 37.3);
  periodic_shift(moved.pair.v, *g, 1, 37.3);
  auto rep2 = compare_full_vs_reduced(moved, bu, bv, red);
  CHECK(rep2.ratio_l2() == doctest::Approx(rep.ratio_l2()).epsilon(1e-6));
  CHECK(rep2.ratio_h1_axial() == doctest::Approx(rep.ratio_h1_axial()).epsilon(1e-6));
  CHECK(rep2.ratio_distance() == doctest::Approx(rep.ratio_distance()).epsilon(1e-3));
  CHECK(rep2.ratio_multiplier() == doctest::Approx(rep.ratio_multiplier()).epsilon(1e-12));

  auto other = solve_reduced(Reduced1DProblem{c1, c2, 1.0, mu, mu, line(100, 256)}, SolverConfig{});
  CHECK_THROWS(compare_full_vs_reduced(full, bu, bv, other));
}
