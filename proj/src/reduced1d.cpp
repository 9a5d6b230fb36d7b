#include "nlsq/reduced1d.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nlsq {

const char* to_string(CoefficientSource s) {
  switch (s) {
    case CoefficientSource::overlap: return "overlap";
    case CoefficientSource::printed_reduction: return "printed_reduction";
    case CoefficientSource::printed_infinity: return "printed_infinity";
  }
  return "?";
}

CoefficientSource coefficient_source_from_string(const std::string& s) {
  if (s == "overlap") return CoefficientSource::overlap;
  if (s == "printed_reduction") return CoefficientSource::printed_reduction;
  if (s == "printed_infinity") return CoefficientSource::printed_infinity;
  throw std::invalid_argument("unknown coefficient source '" + s + "'");
}

std::pair<double, double> reduced_coefficients(CoefficientSource src, double kappa, int n,
                                               const OscillatorBasis& bu, const OscillatorBasis& bv) {
  switch (src) {
    case CoefficientSource::overlap: {
      // both equations project onto int Psi0^2 Phi0
      double a = overlap_constants(bu, bv).first;
      return {a, a};
    }
    case CoefficientSource::printed_reduction: return overlap_constants_printed(kappa, n);
    case CoefficientSource::printed_infinity: {
      double c = 2.0 * kappa / (3.0 * std::sqrt(std::numbers::pi));
      return {c, c};
    }
  }
  return {0, 0};
}

static CField d2(const CField& f, const GridSpec& g) { return laplacian_apply(f, g, g.all_axes()); }

GroundStateResult solve_reduced(const Reduced1DProblem& p, const SolverConfig& cfg) {
  if (!p.grid || p.grid->rank() != 1 || p.grid->geometry() != Geometry::cartesian)
    throw std::invalid_argument("reduced problem needs a periodic 1D grid");
  if (!(p.c1 > 0 && p.c2 > 0)) throw std::invalid_argument("reduced coefficients must be positive");
  if (!(p.mu1 > 0 && p.mu2 > 0)) throw std::invalid_argument("reduced masses must be positive");
  // psi~ = beta psi turns the system into the gradient of a single energy with coupling sqrt(c1 c2)
  double beta = std::sqrt(p.c1 / p.c2);
  ModelParams m{1, p.kappa};
  m.coupling = std::sqrt(p.c1 * p.c2);
  SolverConfig c = cfg;
  if (c.initializer == Initializer::gaussian_product) {
    // width of the sech^2 profile for the given mass
    double lam = std::pow(p.mu1 * m.coupling * m.coupling / 6.0, 2.0 / 3.0);
    c.init_width = std::min(2.0 / std::sqrt(lam), 0.25 * p.grid->axis(0).L);
  }
  auto r = solve_groundstate(p.grid, m, ConstraintSpec::product(p.mu1, beta * beta * p.mu2), c);
  for (auto& z : r.pair.v) z /= beta;
  r.lambda1 = -r.lambda1;
  r.lambda2 = -r.lambda2;
  const auto& g = *p.grid;
  auto Lu = d2(r.pair.u, g), Lv = d2(r.pair.v, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    cplx u = r.pair.u[i], v = r.pair.v[i];
    Lu[i] = -Lu[i] - p.c1 * u * v + r.lambda1 * u;
    Lv[i] = -p.kappa * Lv[i] - 0.5 * p.c2 * u * u + r.lambda2 * v;
  }
  double res = std::hypot(std::sqrt(norm2(Lu, g)), std::sqrt(norm2(Lv, g)));
  r.system_residual = res;
  r.kind = "reduced1d";
  r.extra["residual"] = res;
  r.extra["c1"] = p.c1;
  r.extra["c2"] = p.c2;
  r.extra["lambda_ratio"] = r.lambda2 / r.lambda1;
  return r;
}

// shift s maximising int a(x) b(x - s), by FFT cross-correlation and a parabolic refinement
static double best_shift(const CField& a, const CField& b, const GridSpec& g) {
  CField fa(a.begin(), a.end()), fb(b.begin(), b.end());
  fft_forward(fa, g, 1u);
  fft_forward(fb, g, 1u);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= std::conj(fb[k]);
  fft_backward(fa, g, 1u);
  int m = static_cast<int>(fa.size());
  int j = 0;
  for (int k = 1; k < m; ++k)
    if (fa[k].real() > fa[j].real()) j = k;
  double cm = fa[(j + m - 1) % m].real(), c0 = fa[j].real(), cp = fa[(j + 1) % m].real();
  double den = cm - 2 * c0 + cp, frac = den < 0 ? 0.5 * (cm - cp) / den : 0.0;
  double s = (j + frac) * g.axis(0).h;
  if (s >= g.axis(0).L) s -= 2 * g.axis(0).L;
  return s;
}

ComparisonReport compare_full_vs_reduced(const GroundStateResult& full, const OscillatorBasis& bu,
                                         const OscillatorBasis& bv, const GroundStateResult& reduced) {
  const auto& fg = *full.pair.grid;
  auto pu = project_lowest(full.pair.u, fg, bu);
  auto pv = project_lowest(full.pair.v, fg, bv);
  const auto& ag = *pu.axial;
  const auto& rg = *reduced.pair.grid;
  if (rg.rank() != 1 || rg.size() != ag.size() || std::abs(rg.axis(0).L - ag.axis(0).L) > 1e-12 * ag.axis(0).L)
    throw std::invalid_argument("reduced grid does not match the axial axis of the full grid");

  ComparisonReport r;
  double mu1 = norm2(full.pair.u, fg), mu2 = norm2(full.pair.v, fg);
  r.mu_total = mu1 + mu2;
  r.remainder_l2 = std::sqrt(norm2(pu.remainder, fg)) + std::sqrt(norm2(pv.remainder, fg));
  r.remainder_h1_axial = std::sqrt(axial_kinetic(pu.remainder, fg)) + std::sqrt(axial_kinetic(pv.remainder, fg));
  r.mass_split_error =
      std::max(std::abs(mu1 - norm2(pu.profile, ag) - norm2(pu.remainder, fg)) / mu1,
               std::abs(mu2 - norm2(pv.profile, ag) - norm2(pv.remainder, fg)) / mu2);

  CField phi = reduced.pair.u, psi = reduced.pair.v;
  r.shift = best_shift(pu.profile, phi, ag);
  periodic_shift(phi, ag, 0, r.shift);
  periodic_shift(psi, ag, 0, r.shift);

  std::size_t nax = ag.size(), ntr = bu.grid->size();
  CField du(fg.size()), dv(fg.size());
  for (std::size_t t = 0; t < ntr; ++t)
    for (std::size_t j = 0; j < nax; ++j) {
      std::size_t i = t * nax + j;
      du[i] = full.pair.u[i] - phi[j] * bu.vectors[0][t];
      dv[i] = full.pair.v[i] - psi[j] * bv.vectors[0][t];
    }
  r.distance_h = std::sqrt(kinetic(du, fg) + norm2(du, fg) + kinetic(dv, fg) + norm2(dv, fg));
  double l0 = bu.eigenvalues.at(0), m0 = bv.eigenvalues.at(0);
  r.multiplier_gap = std::abs(l0 - full.lambda1 - reduced.lambda1) + std::abs(m0 - full.lambda2 - reduced.lambda2);
  return r;
}

nlohmann::json to_json(const ComparisonReport& r) {
  return {{"ratio_l2", r.ratio_l2()},
          {"ratio_h1_axial", r.ratio_h1_axial()},
          {"ratio_multiplier", r.ratio_multiplier()},
          {"ratio_distance", r.ratio_distance()},
          {"mu_total", r.mu_total},
          {"remainder_l2", r.remainder_l2},
          {"remainder_h1_axial", r.remainder_h1_axial},
          {"distance_h", r.distance_h},
          {"multiplier_gap", r.multiplier_gap},
          {"shift", r.shift},
          {"mass_split_error", r.mass_split_error}};
}

}  // namespace nlsq
