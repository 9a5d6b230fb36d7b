#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nlsq/grid.hpp"

namespace nlsq {

// Eigen-decomposition of a one-axis operator -kappa d^2 + s x^2 (periodic axis,
// Fourier second derivative) or -kappa L_r + s r^2 (radial axis, flux form).
// Columns of q are Euclidean-orthonormal in the symmetrised coordinates;
// physical vectors are q.col(j) / sqrt_w.
struct AxisEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd q;
  Eigen::VectorXd sqrt_w;
};

AxisEigen axis_eigen(const Axis& ax, int radial_dim, double kappa, double vscale);

// dense matrix of the periodic spectral second derivative
Eigen::MatrixXd fourier_d2(const Axis& ax);

struct OscillatorBasis {
  double kappa = 1.0;
  int transverse_dim = 1;
  GridPtr grid;  // transverse grid
  std::vector<double> eigenvalues;
  std::vector<RField> vectors;
  std::vector<std::vector<int>> quantum;  // per-axis indices (cartesian tensor modes)
  int count() const { return static_cast<int>(eigenvalues.size()); }
};

// lowest J eigenpairs of -kappa Delta_{x'} + |x'|^2 on a transverse grid
// (cartesian with d axes, or radial with radial_dim d)
OscillatorBasis transverse_spectrum(double kappa, int d, const GridPtr& transverse, int J);

GridPtr transverse_grid_of(const GridSpec& full);
GridPtr axial_grid_of(const GridSpec& full);
// full grid = transverse x axial, cylindrical when the transverse grid is radial
GridPtr join_grid(const GridSpec& transverse, const AxisSpec& axial);

struct Projection {
  GridPtr axial;
  CField profile;    // <field(., x_n), e0>
  CField remainder;  // field - profile (x) e0
};

Projection project_lowest(std::span<const cplx> field, const GridSpec& full,
                          const OscillatorBasis& basis);

// (int Psi0^2 Phi0, int Phi0^3)
std::pair<double, double> overlap_constants(const OscillatorBasis& bu, const OscillatorBasis& bv);

// closed forms for the Gaussian ground modes of -kappa Delta + |x|^2 in d dims
double ground_energy_exact(double kappa, int d);
std::pair<double, double> overlap_constants_exact(double kappa, int d);
// s_n^1, s_n^2 in their printed closed form
std::pair<double, double> overlap_constants_printed(double kappa, int n);

void write_basis(const std::string& prefix, const OscillatorBasis& b);

}  // namespace nlsq
