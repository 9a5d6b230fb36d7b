#include "nlsq/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace nlsq {

const char* to_string(Potential p) {
  switch (p) {
    case Potential::none: return "none";
    case Potential::V1: return "V1";
    case Potential::V2: return "V2";
  }
  return "?";
}

Potential potential_from_string(const std::string& s) {
  if (s == "none") return Potential::none;
  if (s == "V1") return Potential::V1;
  if (s == "V2") return Potential::V2;
  throw std::invalid_argument("unknown potential '" + s + "' (none | V1 | V2)");
}

void validate(const ModelParams& p, const GridSpec& g) {
  if (p.n < 1 || p.n > 5) throw std::invalid_argument("n must be in 1..5");
  if (!(p.kappa > 0) || !std::isfinite(p.kappa)) throw std::invalid_argument("kappa must be positive");
  if (!(p.potential_scale > 0)) throw std::invalid_argument("potential_scale must be positive");
  if (!(p.coupling >= 0)) throw std::invalid_argument("coupling must be nonnegative");
  if (p.potential == Potential::V2 && p.n < 2) throw std::invalid_argument("V2 needs n >= 2");
  if (g.dimension() != p.n)
    throw std::invalid_argument("grid dimension " + std::to_string(g.dimension()) +
                                " does not match n = " + std::to_string(p.n));
  if (p.potential == Potential::V2 && g.axial_axis() < 0)
    throw std::invalid_argument("V2 needs a grid with an axial axis");
}

RField potential_field(const ModelParams& p, const GridSpec& g) {
  RField v;
  switch (p.potential) {
    case Potential::none: return RField(g.size(), 0.0);
    case Potential::V1: v = g.coord_sq(g.all_axes()); break;
    case Potential::V2: v = g.coord_sq(g.transverse_axes()); break;
  }
  for (auto& x : v) x *= p.potential_scale;
  return v;
}

double kinetic(std::span<const cplx> f, const GridSpec& g) {
  auto lf = laplacian_apply(f, g, g.all_axes());
  return -inner(lf, f, g);
}

double axial_kinetic(std::span<const cplx> f, const GridSpec& g) {
  int a = g.axial_axis();
  if (a < 0) return kinetic(f, g) / g.dimension();
  auto lf = laplacian_apply(f, g, 1u << a);
  return -inner(lf, f, g);
}

double potential_energy(std::span<const cplx> f, const RField& V, const GridSpec& g) {
  const auto& w = g.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * V[i] * std::norm(f[i]);
  return s;
}

double interaction_K(const FieldPair& p) {
  const auto& w = p.grid->weights();
  double s = 0.0;
  for (std::size_t i = 0; i < p.u.size(); ++i) s += w[i] * (p.u[i] * p.u[i] * std::conj(p.v[i])).real();
  return s;
}

double mass_Q(const FieldPair& p) { return norm2(p.u, *p.grid) + 2.0 * norm2(p.v, *p.grid); }

FunctionalReport report(const FieldPair& p, const ModelParams& m) {
  const auto& g = *p.grid;
  validate(m, g);
  FunctionalReport r;
  r.mu1 = norm2(p.u, g);
  r.mu2 = norm2(p.v, g);
  r.Q = r.mu1 + 2.0 * r.mu2;
  r.kin_u = kinetic(p.u, g);
  r.kin_v = kinetic(p.v, g);
  auto V = potential_field(m, g);
  r.pot_u = potential_energy(p.u, V, g);
  r.pot_v = potential_energy(p.v, V, g);
  r.K = interaction_K(p);
  double cK = m.coupling * r.K;
  double T = r.kin_u + m.kappa * r.kin_v;
  double P = r.pot_u + r.pot_v;
  r.E = T + P - cK;
  r.I = 0.5 * (T + P) - 0.5 * cK;
  r.B = T - P - 0.25 * m.n * cK;
  r.N1 = axial_kinetic(p.u, g) + m.kappa * axial_kinetic(p.v, g) - 0.25 * cK;
  r.virial = virial_moment(p, m);
  r.J = r.K > 0 ? std::pow(T, 0.25 * m.n) * std::pow(r.Q, 0.25 * (6 - m.n)) / r.K
                : std::numeric_limits<double>::quiet_NaN();
  return r;
}

nlohmann::json to_json(const FunctionalReport& r) {
  nlohmann::json j;
  j["masses.mu1"] = r.mu1;
  j["masses.mu2"] = r.mu2;
  j["masses.Q"] = r.Q;
  j["kinetic.u"] = r.kin_u;
  j["kinetic.v"] = r.kin_v;
  j["potential.u"] = r.pot_u;
  j["potential.v"] = r.pot_v;
  j["interaction.K"] = r.K;
  j["energy.I"] = r.I;
  j["energy.E"] = r.E;
  j["pohozaev.B"] = r.B;
  j["virial.N1"] = r.N1;
  j["virial.moment"] = r.virial;
  j["gn.J"] = std::isfinite(r.J) ? nlohmann::json(r.J) : nlohmann::json(nullptr);
  return j;
}

double energy_I(const FieldPair& p, const ModelParams& m) { return report(p, m).I; }
double energy_E(const FieldPair& p, const ModelParams& m) { return report(p, m).E; }
double pohozaev_B(const FieldPair& p, const ModelParams& m) { return report(p, m).B; }

double axial_virial_N1(const FieldPair& p, const ModelParams& m) {
  validate(m, *p.grid);
  return axial_kinetic(p.u, *p.grid) + m.kappa * axial_kinetic(p.v, *p.grid) -
         0.25 * m.coupling * interaction_K(p);
}

double virial_moment(const FieldPair& p, const ModelParams& m) {
  const auto& g = *p.grid;
  auto x2 = g.coord_sq(g.all_axes());
  const auto& w = g.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    s += w[i] * x2[i] * (std::norm(p.u[i]) + std::norm(p.v[i]) / m.kappa);
  return s;
}

double virial_rhs(const FieldPair& p, const ModelParams& m, double E0) {
  if (std::abs(m.kappa - 0.5) > 1e-14)
    throw std::invalid_argument("virial_rhs is only valid for kappa = 1/2");
  validate(m, *p.grid);
  auto V = potential_field(m, *p.grid);
  double P = potential_energy(p.u, V, *p.grid) + potential_energy(p.v, V, *p.grid);
  return 8.0 * E0 + 2.0 * (4 - m.n) * m.coupling * interaction_K(p) - 16.0 * P;
}

double virial_cross_term(const FieldPair& p) {
  const auto& g = *p.grid;
  auto x2 = g.coord_sq(g.all_axes());
  const auto& w = g.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    s += w[i] * x2[i] * (p.v[i] * std::conj(p.u[i]) * std::conj(p.u[i])).imag();
  return s;
}

double gn_quotient(const FieldPair& p, const ModelParams& m, double mass_weight) {
  const auto& g = *p.grid;
  double K = interaction_K(p);
  if (!(K > 0)) throw std::invalid_argument("gn_quotient needs K > 0");
  double T = kinetic(p.u, g) + m.kappa * kinetic(p.v, g);
  double Q = norm2(p.u, g) + mass_weight * norm2(p.v, g);
  return std::pow(T, 0.25 * m.n) * std::pow(Q, 0.25 * (6 - m.n)) / K;
}

// At the soliton T = (n/4)K and Q = ((6-n)/4)K.
double gn_minimum_from_mass(int n, double mass) {
  return std::pow(n, 0.25 * n) * std::pow(6.0 - n, 1.0 - 0.25 * n) / 4.0 * std::sqrt(mass);
}

double gn_printed_constant(int n, double mass) {
  return std::pow(n, 0.25 * n) * std::pow(6.0 - n, 1.0 - 0.25 * n) / 2.0 * std::sqrt(mass);
}

FieldPair steiner_rearrange_axial(const FieldPair& p) {
  check_pair(p);
  const auto& g = *p.grid;
  int a = g.axial_axis();
  if (a < 0) throw std::invalid_argument("rearrangement needs an axial axis");
  int m = g.axis(a).m;
  std::size_t lines = g.size() / m;  // axial axis is last, stride 1
  // target slots: centre first, then alternating outwards, x = -L last
  std::vector<int> slot;
  int c = m / 2;
  slot.push_back(c);
  for (int k = 1; k < m / 2; ++k) {
    slot.push_back(c + k);
    slot.push_back(c - k);
  }
  slot.push_back(0);
  FieldPair out = zero_pair(p.grid);
  std::vector<double> buf(m);
  std::vector<int> order(m);
  for (auto [src, dst] : {std::pair{&p.u, &out.u}, std::pair{&p.v, &out.v}}) {
    for (std::size_t l = 0; l < lines; ++l) {
      const cplx* in = src->data() + l * m;
      for (int j = 0; j < m; ++j) buf[j] = std::abs(in[j]);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return buf[x] > buf[y]; });
      cplx* o = dst->data() + l * m;
      for (int j = 0; j < m; ++j) o[slot[j]] = buf[order[j]];
    }
  }
  return out;
}

std::pair<double, double> heisenberg_check(std::span<const cplx> f, const GridSpec& g) {
  double lhs = norm2(f, g);
  auto x2 = g.coord_sq(g.all_axes());
  const auto& w = g.weights();
  double xf = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) xf += w[i] * x2[i] * std::norm(f[i]);
  double rhs = 2.0 / g.dimension() * std::sqrt(kinetic(f, g) * xf);
  return {lhs, rhs};
}

}  // namespace nlsq
