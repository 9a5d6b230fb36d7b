#pragma once

#include <string>
#include <utility>

#include <json.hpp>

#include "nlsq/grid.hpp"

namespace nlsq {

enum class Potential { none, V1, V2 };

const char* to_string(Potential p);
Potential potential_from_string(const std::string& s);

struct ModelParams {
  int n = 1;
  double kappa = 1.0;
  Potential potential = Potential::none;
  double potential_scale = 1.0;  // t^{-2} for the scaled systems
  double coupling = 1.0;         // multiplies the quadratic interaction; 0 switches it off

  double eps0() const { return kappa < 1.0 ? kappa : 1.0; }
  double delta0() const { return kappa > 1.0 ? kappa : 1.0; }
};

// throws std::invalid_argument on inconsistent parameters or a grid of the wrong dimension
void validate(const ModelParams& p, const GridSpec& g);

// V sampled on the grid (already multiplied by potential_scale)
RField potential_field(const ModelParams& p, const GridSpec& g);

// <-Delta f, f>
double kinetic(std::span<const cplx> f, const GridSpec& g);
// <-d^2_{x_n} f, f>; on purely radial grids the radial-symmetry value |grad f|^2 / n
double axial_kinetic(std::span<const cplx> f, const GridSpec& g);
double potential_energy(std::span<const cplx> f, const RField& V, const GridSpec& g);

double interaction_K(const FieldPair& p);
double mass_Q(const FieldPair& p);
double energy_I(const FieldPair& p, const ModelParams& m);
double energy_E(const FieldPair& p, const ModelParams& m);
double pohozaev_B(const FieldPair& p, const ModelParams& m);
double axial_virial_N1(const FieldPair& p, const ModelParams& m);
double virial_moment(const FieldPair& p, const ModelParams& m);
double virial_rhs(const FieldPair& p, const ModelParams& m, double E0);
// Im int |x|^2 u2 conj(u1)^2, the extra virial term present when kappa != 1/2
double virial_cross_term(const FieldPair& p);

// (|grad u|^2 + kappa |grad v|^2)^{n/4} (|u|^2 + w|v|^2)^{(6-n)/4} / K, w = 2 by default
double gn_quotient(const FieldPair& p, const ModelParams& m, double mass_weight = 2.0);
// minimal quotient implied by the soliton identities, and the constant printed with it
double gn_minimum_from_mass(int n, double soliton_mass);
double gn_printed_constant(int n, double soliton_mass);

struct FunctionalReport {
  double mu1 = 0, mu2 = 0, Q = 0;
  double kin_u = 0, kin_v = 0;
  double pot_u = 0, pot_v = 0;
  double K = 0;
  double I = 0, E = 0, B = 0, N1 = 0;
  double virial = 0;
  double J = 0;  // NaN when K <= 0
};

FunctionalReport report(const FieldPair& p, const ModelParams& m);
nlohmann::json to_json(const FunctionalReport& r);

FieldPair steiner_rearrange_axial(const FieldPair& p);

// (int |f|^2, (2/n) |grad f| |x f|)
std::pair<double, double> heisenberg_check(std::span<const cplx> f, const GridSpec& g);

}  // namespace nlsq
