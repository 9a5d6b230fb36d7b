#pragma once

#include <json.hpp>

#include "nlsq/groundstate.hpp"
#include "nlsq/oscillator.hpp"

namespace nlsq {

// where the cubic coefficients of the 1D limit come from
enum class CoefficientSource { overlap, printed_reduction, printed_infinity };
const char* to_string(CoefficientSource s);
CoefficientSource coefficient_source_from_string(const std::string& s);

// -phi'' - c1 phi psi = -lam1 phi,  -kappa psi'' - (c2/2) phi^2 = -lam2 psi
struct Reduced1DProblem {
  double c1 = 1.0, c2 = 1.0;
  double kappa = 1.0;
  double mu1 = 1.0, mu2 = 1.0;
  GridPtr grid;  // periodic, one axis
};

// overlap: c1 = c2 = int Psi0^2 Phi0 on the given bases;
// printed_reduction: (s_n^1, s_n^2) as printed; printed_infinity: c1 = c2 = 2 kappa / (3 sqrt(pi))
std::pair<double, double> reduced_coefficients(CoefficientSource src, double kappa, int n,
                                               const OscillatorBasis& bu, const OscillatorBasis& bv);

// lambda1/lambda2 of the result are (lam_inf^1, lam_inf^2); extra["residual"] is the L2 residual of the system
GroundStateResult solve_reduced(const Reduced1DProblem& p, const SolverConfig& cfg);

struct ComparisonReport {
  double mu_total = 0;
  double remainder_l2 = 0;     // |P1 u| + |P1 v|
  double remainder_h1_axial = 0;  // |d_n P1 u| + |d_n P1 v|
  double distance_h = 0;       // H1 distance to (D_inf^1 Psi0, D_inf^2 Phi0) after alignment
  double multiplier_gap = 0;   // |l0 - lambda1 - lam_inf^1| + |m0 - lambda2 - lam_inf^2|
  double shift = 0;            // applied x_n alignment
  double mass_split_error = 0;
  double ratio_l2() const { return remainder_l2 / mu_total; }
  double ratio_h1_axial() const { return remainder_h1_axial / mu_total; }
  double ratio_distance() const { return distance_h / mu_total; }
  double ratio_multiplier() const { return multiplier_gap / mu_total; }
};

// full: V2 minimiser on a grid whose axial axis matches reduced.pair.grid
ComparisonReport compare_full_vs_reduced(const GroundStateResult& full, const OscillatorBasis& bu,
                                         const OscillatorBasis& bv, const GroundStateResult& reduced);

nlohmann::json to_json(const ComparisonReport& r);

}  // namespace nlsq
