// Acceptance run: one PASS/FAIL line per criterion.
// Exit status counts failures, except those named with --known-red.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nlsq/dynamics.hpp"
#include "nlsq/oscillator.hpp"
#include "nlsq/reduced1d.hpp"

using namespace nlsq;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id, title;
  double budget_s;  // runtime limit, 0 = none
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... a) {
  char b[512];
  std::snprintf(b, sizeof b, f, a...);
  return b;
}

double dist(const CField& a, const CField& b, const GridSpec& g) {
  CField d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return std::sqrt(norm2(d, g));
}

double sech2(double x) { return 1.0 / std::pow(std::cosh(x), 2); }

// 1. l0 = d, m0/l0 = sqrt(kappa)
Outcome c1() {
  double worst_d = 0, worst_k = 0;
  for (int d = 1; d <= 4; ++d) {
    std::vector<AxisSpec> ax;
    for (int a = 0; a < d; ++a) ax.push_back({"x" + std::to_string(a + 1), 8, 32});
    auto g = make_grid(Geometry::cartesian, ax);
    worst_d = std::max(worst_d, std::abs(transverse_spectrum(1.0, d, g, 1).eigenvalues[0] - d));
  }
  auto g = make_grid(Geometry::cartesian, {{"x1", 12, 128}});
  double l0 = transverse_spectrum(1.0, 1, g, 1).eigenvalues[0];
  for (double k : {0.25, 0.5, 1.0, 2.0, 4.0})
    worst_k = std::max(worst_k, std::abs(transverse_spectrum(k, 1, g, 1).eigenvalues[0] / l0 - std::sqrt(k)));
  return {worst_d < 1e-6 && worst_k < 1e-6, fmt("max|l0-d| = %.2e, max|m0/l0-sqrt(k)| = %.2e", worst_d, worst_k)};
}

// 2. n = 1, kappa = 2 closed-form sech^2 soliton
Outcome c2() {
  auto g = make_grid(Geometry::cartesian, {{"x1", 40, 1024}});
  ModelParams m{1, 2.0};
  FieldPair q{g, CField(g->size()), CField(g->size())};
  for (std::size_t i = 0; i < g->size(); ++i) {
    double x = g->axis(0).x[i];
    q.u[i] = 3.0 * sech2(x / 2);
    q.v[i] = 1.5 * sech2(x / 2);
  }
  auto [e1, e2] = free_residual(q, m, FreeSystem::systemq2);
  SolverConfig c;
  c.init_width = 2.0;
  c.seed = 4;
  c.init_noise = 0.05;
  auto r = solve_free_soliton(g, m, FreeSystem::systemq2, c);
  // modulo translation: align the peak by the Fourier interpolant
  auto pr = r.pair;
  std::size_t imax = 0;
  for (std::size_t i = 0; i < g->size(); ++i)
    if (std::abs(pr.u[i]) > std::abs(pr.u[imax])) imax = i;
  double s = -g->axis(0).x[imax];
  periodic_shift(pr.u, *g, 0, s);
  periodic_shift(pr.v, *g, 0, s);
  double d = std::min(std::hypot(dist(r.pair.u, q.u, *g), dist(r.pair.v, q.v, *g)),
                      std::hypot(dist(pr.u, q.u, *g), dist(pr.v, q.v, *g)));
  bool ok = r.converged && d < 1e-4 && e1 < 1e-8 && e2 < 1e-8;
  return {ok, fmt("L2 distance %.2e, closed-form residuals %.1e / %.1e", d, e1, e2)};
}

// 3. soliton identities on radial free solitons
Outcome c3() {
  double worst = 0;
  bool conv = true;
  for (int n : {1, 2, 3})
    for (double kappa : {0.5, 1.0, 2.0}) {
      auto g = make_grid(Geometry::radial, {{"r", 24, 4096}}, n);
      auto r = solve_free_soliton(g, ModelParams{n, kappa}, FreeSystem::systemq2, SolverConfig{});
      conv = conv && r.converged;
      worst = std::max({worst, std::abs(r.extra["identity_kinetic"].get<double>()),
                        std::abs(r.extra["identity_mass"].get<double>())});
    }
  return {conv && worst < 1e-4, fmt("9 solitons, worst relative identity error %.2e", worst)};
}

// 4. Pohozaev residual of normalized ground states
Outcome c4() {
  struct Case {
    const char* name;
    GridPtr g;
    ModelParams m;
  };
  std::vector<Case> cases = {
      {"V1 n=2", make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", 8, 32}}), ModelParams{2, 1.0, Potential::V1}},
      {"V2 n=2", make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", 40, 128}}), ModelParams{2, 1.0, Potential::V2}},
      // spectral in every direction, so the discrete dilation identity is exact
      {"V2 n=3", make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", 8, 32}, {"x3", 40, 128}}),
       ModelParams{3, 1.0, Potential::V2}},
  };
  bool ok = true;
  std::string d;
  for (auto& c : cases) {
    auto r = solve_groundstate(c.g, c.m, ConstraintSpec::product(1.0, 1.0), SolverConfig{});
    ok = ok && r.converged && r.pohozaev < 1e-5;
    d += fmt("%s%s |B| = %.1e%s", d.empty() ? "" : ", ", c.name, r.pohozaev, r.converged ? "" : " (unconverged)");
  }
  return {ok, d};
}

// 5. d < (l0 mu1 + sqrt(kappa) l0 mu2) / 2
Outcome c5() {
  auto g = make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", 256, 256}});
  bool ok = true;
  double worst = -1e300;
  for (double kappa : {1.0, 2.0})
    for (auto [m1, m2] : {std::pair{0.05, 0.05}, {0.2, 0.1}}) {
      SolverConfig c;
      c.initializer = Initializer::eigenmode_product;
      c.init_width = 20;
      auto r = solve_groundstate(g, ModelParams{2, kappa, Potential::V2}, ConstraintSpec::product(m1, m2), c);
      double bound = (m1 + std::sqrt(kappa) * m2) / 2;  // l0 = 1
      ok = ok && r.converged && r.I < bound;
      worst = std::max(worst, r.I - bound);
    }
  return {ok, fmt("4 cases, max(d - bound) = %.3e", worst)};
}

// full V2 product solves at small mass, shared by 6 and 7
struct SmallMass {
  double mu;
  GroundStateResult full;
  GridPtr g;
};
std::vector<SmallMass>& small_mass() {
  static std::vector<SmallMass> cache;
  if (!cache.empty()) return cache;
  for (auto [mu, L, m] : {std::tuple{1e-1, 200.0, 256}, {1e-2, 500.0, 512}, {1e-3, 1500.0, 1024}}) {
    auto g = make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", L, m}});
    SolverConfig c;
    c.initializer = Initializer::eigenmode_product;
    c.init_width = 2 / mu;
    cache.push_back({mu, solve_groundstate(g, ModelParams{2, 1.0, Potential::V2}, ConstraintSpec::product(mu, mu), c), g});
  }
  return cache;
}

// 6. 2 l0 - 0.1 l0 < lambda1 + lambda2 < 2 l0, increasing as mu -> 0
Outcome c6() {
  bool ok = true;
  std::string d;
  double prev = -1e300;
  for (auto& s : small_mass()) {
    double sum = s.full.lambda1 + s.full.lambda2;
    ok = ok && s.full.converged && sum > 1.9 && sum < 2.0 && sum > prev;
    prev = sum;
    d += fmt("%smu=%g: %.6f", d.empty() ? "" : ", ", s.mu, sum);
  }
  return {ok, "lambda1+lambda2 " + d};
}

// 7. comparison ratios vary by less than 3x over mu
Outcome c7() {
  std::vector<ComparisonReport> reps;
  bool conv = true;
  for (auto& s : small_mass()) {
    auto tg = transverse_grid_of(*s.g);
    auto bu = transverse_spectrum(1.0, 1, tg, 2), bv = transverse_spectrum(1.0, 1, tg, 2);
    auto [k1, k2] = reduced_coefficients(CoefficientSource::overlap, 1.0, 2, bu, bv);
    auto red = solve_reduced(Reduced1DProblem{k1, k2, 1.0, s.mu, s.mu, axial_grid_of(*s.g)}, SolverConfig{});
    conv = conv && s.full.converged && red.converged;
    reps.push_back(compare_full_vs_reduced(s.full, bu, bv, red));
  }
  auto spread = [&](double (ComparisonReport::*f)() const) {
    double lo = 1e300, hi = 0;
    for (auto& r : reps) lo = std::min(lo, (r.*f)()), hi = std::max(hi, (r.*f)());
    return hi / lo;
  };
  double a = spread(&ComparisonReport::ratio_l2), b = spread(&ComparisonReport::ratio_h1_axial),
         c = spread(&ComparisonReport::ratio_multiplier);
  return {conv && a < 3 && b < 3 && c < 3, fmt("variation L2 %.2fx, axial H1 %.2fx, multiplier %.2fx", a, b, c)};
}

FieldPair generic_v2(const GridPtr& g) {
  FieldPair p = zero_pair(g);
  for (std::size_t i = 0; i < g->size(); ++i) {
    double x = g->coord(i, 0), y = g->coord(i, 1);
    p.u[i] = 1.2 * std::exp(-0.5 * x * x - 0.3 * (y - 1) * (y - 1)) * std::polar(1.0, 0.3 * y);
    p.v[i] = 0.8 * std::exp(-0.7 * x * x - 0.2 * (y + 1) * (y + 1)) * std::polar(1.0, -0.2 * y + 0.1 * x);
  }
  return p;
}

// 8. Q and E conservation, second-order E drift
Outcome c8() {
  auto g = make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", 120, 512}});
  ModelParams m{2, 1.0, Potential::V2};
  auto p = generic_v2(g);
  double dq[2], de[2];
  bool done = true;
  for (int k = 0; k < 2; ++k) {
    EvolveConfig c;
    c.dt = k == 0 ? 1e-3 : 5e-4;
    c.T = 10;
    c.sample_stride = 100;
    auto ts = evolve(p, m, c);
    done = done && ts.verdict == Verdict::completed;
    dq[k] = relative_drift(ts, &Sample::Q);
    de[k] = relative_drift(ts, &Sample::E);
  }
  double ratio = de[0] / de[1];
  bool ok = done && dq[0] < 1e-8 && de[0] < 1e-6 && ratio > 3.5 && ratio < 4.5;
  return {ok, fmt("Q drift %.1e, E drift %.1e, E drift ratio at dt/2 %.2f", dq[0], de[0], ratio)};
}

// 9. standing wave moduli over T = 5
Outcome c9() {
  auto g = make_grid(Geometry::cartesian, {{"x1", 8, 32}, {"x2", 40, 128}});
  ModelParams m{2, 1.0, Potential::V2};
  SolverConfig sc;
  sc.init_width = 2;
  auto gs = solve_groundstate(g, m, ConstraintSpec::ellipse(1.0, 40.0), sc);
  EvolveConfig c;
  c.dt = 1e-3;
  c.T = 5;
  c.sample_stride = 100;
  RField au(g->size()), av(g->size());
  for (std::size_t i = 0; i < g->size(); ++i) au[i] = std::abs(gs.pair.u[i]), av[i] = std::abs(gs.pair.v[i]);
  double worst = 0;
  auto ts = evolve(gs.pair, m, c, [&](double, const FieldPair& f) {
    CField du(g->size()), dv(g->size());
    for (std::size_t i = 0; i < g->size(); ++i) du[i] = std::abs(f.u[i]) - au[i], dv[i] = std::abs(f.v[i]) - av[i];
    worst = std::max(worst, std::sqrt(norm2(du, *g) + norm2(dv, *g)));
  });
  bool ok = gs.converged && ts.verdict == Verdict::completed && worst < 1e-4;
  return {ok, fmt("max L2 modulus deviation %.2e (ellipse mu=40, lambda2/lambda1 = %.8f)", worst, gs.lambda2 / gs.lambda1)};
}

// 10a. dilated soliton data with E < 0 blows up, virial decreasing and concave
Outcome c10a() {
  double lambda = 3.0, Ls = 20;
  int mm = 1024;
  auto gs = make_grid(Geometry::radial, {{"r", Ls, mm}}, 4);
  auto sol = solve_free_soliton(gs, ModelParams{4, 0.5}, FreeSystem::systemq2, SolverConfig{});
  double mu = dilated_soliton_mu(sol.pair, 0.1 * mass_Q(sol.pair));
  auto p0 = dilate_onto(sol.pair, make_grid(Geometry::radial, {{"r", Ls / lambda, mm}}, 4), lambda, mu);
  ModelParams m{4, 0.5, Potential::V1};
  double E0 = energy_E(p0, m);
  EvolveConfig c;
  c.dt = 1e-3;
  c.T = 10;
  c.adaptive = true;
  c.sample_stride = 20;
  auto ts = evolve(p0, m, c);
  bool mono = true, concave = true;
  const auto& s = ts.samples;
  for (std::size_t i = 1; i < s.size(); ++i) mono = mono && s[i].virial < s[i - 1].virial;
  for (std::size_t i = 2; i < s.size(); ++i) {
    double s1 = (s[i - 1].virial - s[i - 2].virial) / (s[i - 1].t - s[i - 2].t);
    double s2 = (s[i].virial - s[i - 1].virial) / (s[i].t - s[i - 1].t);
    concave = concave && s2 < s1;
  }
  bool ok = sol.converged && E0 < 0 && ts.verdict == Verdict::blowup_detected && mono && concave;
  return {ok, fmt("E0 = %.1f, verdict %s at t = %.4f, %zu samples, virial monotone %s, concave %s", E0,
                  to_json(ts)["verdict"].get<std::string>().c_str(), ts.t_end, s.size(), mono ? "yes" : "no",
                  concave ? "yes" : "no")};
}

// 10b. half-threshold data stays global with bounded gradient
Outcome c10b() {
  auto g = make_grid(Geometry::radial, {{"r", 20, 512}}, 4);
  auto sol = solve_free_soliton(g, ModelParams{4, 0.5}, FreeSystem::systemq2, SolverConfig{});
  FieldPair p0 = sol.pair;
  double a = std::sqrt(0.5);
  for (auto& z : p0.u) z *= a;
  for (auto& z : p0.v) z *= a;
  auto th = global_threshold_check(p0, sol.pair, 4);
  ModelParams m{4, 0.5, Potential::V1};
  EvolveConfig c;
  c.dt = 1e-3;
  c.T = 10;
  c.adaptive = true;
  c.sample_stride = 50;
  auto ts = evolve(p0, m, c);
  double g0 = ts.samples.front().grad_u + ts.samples.front().grad_v, gmax = 0;
  for (auto& s : ts.samples) gmax = std::max(gmax, s.grad_u + s.grad_v);
  bool ok = sol.converged && th.below && ts.verdict == Verdict::completed && ts.t_end >= 10 - 1e-9 && gmax < 10 * g0;
  return {ok, fmt("Q0/threshold = %.3f, verdict %s, t_end %.3f, gradient growth %.2fx", th.Q0 / th.threshold,
                  to_json(ts)["verdict"].get<std::string>().c_str(), ts.t_end, gmax / g0)};
}

// 11. t N_t^4 constant within 20% for n = 5
Outcome c11() {
  auto g = make_grid(Geometry::radial, {{"r", 30, 2048}}, 5);
  ModelParams m{5, 1.0, Potential::V1};
  std::vector<double> v;
  bool conv = true;
  for (double t : {1e2, 1e3, 1e4}) {
    auto r = scaled_curve_point(g, m, t, SolverConfig{});
    conv = conv && r.converged;
    v.push_back(t * std::pow(r.extra["N_t"].get<double>(), 4));
  }
  double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  return {conv && hi / lo - 1 < 0.2, fmt("lambda N^4 = %.4g, %.4g, %.4g (spread %.1f%%)", v[0], v[1], v[2], 100 * (hi / lo - 1))};
}

// 12. GN quotient: dilation invariance, soliton is a local minimum
Outcome c12() {
  auto g = make_grid(Geometry::cartesian, {{"x1", 80, 4096}});
  ModelParams m{1, 2.0};
  auto sol_at = [&](double lam) {
    FieldPair q{g, CField(g->size()), CField(g->size())};
    for (std::size_t i = 0; i < g->size(); ++i) {
      double x = lam * g->axis(0).x[i];
      q.u[i] = 3.0 * sech2(x / 2);
      q.v[i] = 1.5 * sech2(x / 2);
    }
    return q;
  };
  auto sol = sol_at(1.0);
  double j0 = gn_quotient(sol, m), dil = 0;
  for (double lam : {0.5, 0.8, 1.25, 2.0}) dil = std::max(dil, std::abs(gn_quotient(sol_at(lam), m) / j0 - 1));

  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(-6, 6);
  int below = 0;
  double min_gap = 1e300;
  for (int k = 0; k < 100; ++k) {
    FieldPair p = sol;
    double eps = 0.02 * (1 + k % 5);
    for (int b = 0; b < 3; ++b) {
      double c = ud(rng), w = 0.5 + std::abs(nd(rng));
      cplx au(nd(rng), nd(rng)), av(nd(rng), nd(rng));
      for (std::size_t i = 0; i < g->size(); ++i) {
        double x = g->axis(0).x[i];
        double e = std::exp(-(x - c) * (x - c) / (2 * w * w));
        p.u[i] += eps * 3.0 * au * e;
        p.v[i] += eps * 1.5 * av * e;
      }
    }
    double gap = gn_quotient(p, m) - j0;
    min_gap = std::min(min_gap, gap);
    if (gap < 0) ++below;
  }
  return {dil < 1e-8 && below == 0,
          fmt("dilation error %.1e, perturbations below soliton %d/100, min increase %.2e", dil, below, min_gap)};
}

// 13. Steiner rearrangement: L^p preserved, axial gradient does not grow
Outcome c13() {
  auto g = make_grid(Geometry::cartesian, {{"x1", 4, 16}, {"x2", 8, 64}});
  int m = g->axis(1).m;
  double h = g->axis(1).h;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  double lp_err = 0, grad_excess = -1e300;
  for (int k = 0; k < 100; ++k) {
    FieldPair r = zero_pair(g);
    if (k % 2 == 0) {
      for (auto& z : r.u) z = cplx(nd(rng), nd(rng));
      for (auto& z : r.v) z = cplx(nd(rng), nd(rng));
    } else {
      for (int b = 0; b < 4; ++b) {
        double c = 4 * nd(rng), w = 0.5 + std::abs(nd(rng));
        cplx a(nd(rng), nd(rng));
        for (std::size_t i = 0; i < g->size(); ++i) {
          double y = g->coord(i, 1), x = g->coord(i, 0);
          double e = std::exp(-(y - c) * (y - c) / (2 * w * w) - 0.5 * x * x);
          r.u[i] += a * e;
          r.v[i] += std::conj(a) * e * e;
        }
      }
    }
    auto t = steiner_rearrange_axial(r);
    for (auto [src, dst] : {std::pair{&r.u, &t.u}, {&r.v, &t.v}})
      for (std::size_t l = 0; l < g->size() / m; ++l) {
        double gs = 0, gt = 0;
        for (int p : {1, 2, 3}) {
          double a = 0, b = 0;
          for (int j = 0; j < m; ++j) {
            a += std::pow(std::abs((*src)[l * m + j]), p);
            b += std::pow(std::abs((*dst)[l * m + j]), p);
          }
          lp_err = std::max(lp_err, std::abs(a - b) / a);
        }
        for (int j = 0; j < m; ++j) {
          int jp = (j + 1) % m;
          gs += std::norm((*src)[l * m + jp] - (*src)[l * m + j]);
          gt += std::norm((*dst)[l * m + jp] - (*dst)[l * m + j]);
        }
        grad_excess = std::max(grad_excess, (gt - gs) / gs);
      }
  }
  return {lp_err < 1e-12 && grad_excess <= h,
          fmt("max relative L^p error %.1e, max relative gradient change %.2e (h = %.3f)", lp_err, grad_excess, h)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<std::string> only, known_red;
  app.add_option("--only", only, "criterion ids to run")->delimiter(',');
  app.add_option("--known-red", known_red, "failing ids reported but not counted in the exit status")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  std::vector<Criterion> all = {
      {"1", "oscillator spectra", 5, c1},
      {"2", "explicit soliton", 30, c2},
      {"3", "soliton identities", 0, c3},
      {"4", "Pohozaev residual", 0, c4},
      {"5", "energy upper bound", 0, c5},
      {"6", "multiplier bounds", 0, c6},
      {"7", "asymptotic reduction", 300, c7},
      {"8", "conservation", 0, c8},
      {"9", "standing wave", 0, c9},
      {"10a", "blow-up below zero energy", 300, c10a},
      {"10b", "global below threshold", 300, c10b},
      {"11", "mountain-pass scaling", 600, c11},
      {"12", "GN quotient", 0, c12},
      {"13", "rearrangement", 0, c13},
  };
  std::set<std::string> pick(only.begin(), only.end()), red(known_red.begin(), known_red.end());
  int counted = 0, failed = 0;
  for (auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && sec > c.budget_s) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s budget]", c.budget_s);
    }
    bool expected = !o.pass && red.count(c.id);
    std::printf("%s %-4s %-28s %s (%.1f s)%s\n", o.pass ? "PASS" : "FAIL", c.id.c_str(), c.title.c_str(),
                o.detail.c_str(), sec, expected ? " [known red]" : "");
    std::fflush(stdout);
    if (!o.pass) {
      ++failed;
      if (!expected) ++counted;
    }
  }
  std::printf("%d failed, %d counted toward the exit status\n", failed, counted);
  return counted == 0 ? 0 : 1;
}
