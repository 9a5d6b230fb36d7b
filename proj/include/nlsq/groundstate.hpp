#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlsq/functionals.hpp"

namespace nlsq {

struct ConstraintSpec {
  enum class Kind { product, ellipse, sphere_weighted };
  Kind kind = Kind::product;
  double mu1 = 1.0, mu2 = 1.0;  // product
  double weight = 1.0;          // ellipse: |u|^2 + 2w|v|^2; sphere: |u|^2 + w|v|^2
  double mu = 1.0;              // ellipse / sphere target (N^2 for the sphere)
  std::optional<double> ball_cap;  // chi

  static ConstraintSpec product(double m1, double m2) {
    ConstraintSpec c;
    c.mu1 = m1;
    c.mu2 = m2;
    return c;
  }
  static ConstraintSpec ellipse(double w, double m) {
    ConstraintSpec c;
    c.kind = Kind::ellipse;
    c.weight = w;
    c.mu = m;
    return c;
  }
  static ConstraintSpec sphere(double w, double n2) {
    ConstraintSpec c;
    c.kind = Kind::sphere_weighted;
    c.weight = w;
    c.mu = n2;
    return c;
  }
};

const char* to_string(ConstraintSpec::Kind k);
ConstraintSpec::Kind constraint_kind_from_string(const std::string& s);

enum class Initializer { gaussian_product, eigenmode_product, file, custom };
const char* to_string(Initializer i);
Initializer initializer_from_string(const std::string& s);

struct SolverConfig {
  double dt = 0.1;  // first trial step of the line search
  double grad_tol = 1e-9;
  double constraint_tol = 1e-12;
  int max_iter = 20000;
  double backtrack = 0.5;  // step shrink on a ball-cap rejection
  std::uint64_t seed = 0;
  Initializer initializer = Initializer::gaussian_product;
  double init_width = 1.0;
  std::string init_file;
  std::optional<FieldPair> init_custom;
  double init_noise = 0.0;
  double precond_shift = 1.0;
  bool conjugate = true;  // PR+ directions; false gives preconditioned steepest descent
  int recompute_every = 50;
};

void validate(const SolverConfig& c);

struct GroundStateResult {
  FieldPair pair;
  double I = 0.0;
  double lambda1 = 0.0, lambda2 = 0.0;
  double pohozaev = 0.0;        // |B| / (kinetic + potential)
  double grad_residual = 0.0;   // constrained gradient (or equation residual) in L2
  double system_residual = 0.0; // L2 residual of the Euler-Lagrange system with (lambda1, lambda2)
  double constraint_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool cap_active = false;
  std::string kind;
  std::vector<double> history;  // objective at accepted iterates
  nlohmann::json extra;
};

// (-Delta u + V u - c conj(u) v, -kappa Delta v + V v - (c/2) u^2)
FieldPair variational_gradient(const FieldPair& p, const ModelParams& m);

FieldPair project_constraint(const FieldPair& p, const ConstraintSpec& c);
double constraint_residual(const FieldPair& p, const ConstraintSpec& c);

// positive real initial pair for a grid (before projection)
FieldPair initial_pair(const GridPtr& g, const ModelParams& m, const SolverConfig& c);

GroundStateResult solve_groundstate(const GridPtr& g, const ModelParams& m,
                                    const ConstraintSpec& c, const SolverConfig& cfg);

// systemq: -Delta w1 + w1 = w1 w2, -Delta w2 + w2 = w1^2/2
// systemq2: -Delta Q1 + Q1 = Q1 Q2, -kappa Delta Q2 + 2 Q2 = Q1^2/2
enum class FreeSystem { systemq, systemq2 };
const char* to_string(FreeSystem s);
FreeSystem free_system_from_string(const std::string& s);

GroundStateResult solve_free_soliton(const GridPtr& g, const ModelParams& m, FreeSystem sys,
                                     const SolverConfig& cfg);

// L2 residuals of the two equations of sys
std::pair<double, double> free_residual(const FieldPair& p, const ModelParams& m, FreeSystem sys);

// ground state of -Delta w + w + t^{-2} V w = (w1 w2, w1^2/2)
GroundStateResult scaled_curve_point(const GridPtr& g, const ModelParams& m, double t,
                                     const SolverConfig& cfg);
// N_t from the curve formula; V is the unscaled potential of m
double curve_N_of_t(const FieldPair& w, const ModelParams& m, double t);

struct FiberSample {
  double tau, T, dT;
};
std::vector<FiberSample> fibering_profile(const FieldPair& p, const ModelParams& m,
                                          const std::vector<double>& taus);

nlohmann::json to_json(const GroundStateResult& r, const ModelParams& m);
// <prefix>.nlsq + <prefix>.json
void write_result(const std::string& prefix, const GroundStateResult& r, const ModelParams& m);

}  // namespace nlsq
