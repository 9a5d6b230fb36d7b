#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nlsq {

using cplx = std::complex<double>;
using CField = std::vector<cplx>;
using RField = std::vector<double>;

enum class Geometry : std::uint8_t { cartesian = 0, cylindrical = 1, radial = 2 };

const char* to_string(Geometry g);
Geometry geometry_from_string(const std::string& s);

struct AxisSpec {
  std::string name;
  double half_extent = 16.0;
  int count = 64;
};

// One grid axis. Periodic axes sample [-L, L) with h = 2L/m; a radial axis
// uses cell centres r_i = (i - 1/2) h, i = 1..m, h = L/m.
struct Axis {
  std::string name;
  bool radial = false;
  double L = 0.0;
  double h = 0.0;
  int m = 0;
  std::vector<double> x;
  std::vector<double> k;  // periodic only
  std::vector<double> w;  // 1D quadrature weights (radial: shell measure)
  // radial only: face[i] = r_{i-1/2}^{d-1} for i = 0..m (face[0] = 0),
  // cell[i] = (r_{i+1/2}^d - r_{i-1/2}^d) / d
  std::vector<double> face;
  std::vector<double> cell;
};

class FftCache;

class GridSpec {
 public:
  GridSpec(Geometry g, std::vector<Axis> axes, int radial_dim);
  ~GridSpec();
  GridSpec(const GridSpec&) = delete;
  GridSpec& operator=(const GridSpec&) = delete;

  Geometry geometry() const { return geometry_; }
  int rank() const { return static_cast<int>(axes_.size()); }
  const Axis& axis(int a) const { return axes_.at(static_cast<std::size_t>(a)); }
  std::size_t size() const { return size_; }
  std::size_t stride(int a) const { return strides_.at(static_cast<std::size_t>(a)); }
  std::vector<std::size_t> shape() const;

  // transverse dimension carried by the radial axis (0 when there is none)
  int radial_dim() const { return radial_dim_; }
  // effective spatial dimension n
  int dimension() const;
  int axial_axis() const;   // index of x_n, -1 on purely radial grids
  int radial_axis() const;  // 0 or -1
  unsigned all_axes() const { return (1u << rank()) - 1u; }
  unsigned periodic_axes() const;
  unsigned transverse_axes() const;  // everything except x_n

  const std::vector<double>& weights() const { return weights_; }
  // sum over masked axes of x_a^2 (the radial axis contributes r^2)
  std::vector<double> coord_sq(unsigned mask) const;
  // coordinate of point idx along axis a
  double coord(std::size_t idx, int a) const;

  FftCache& fft() const { return *fft_; }

 private:
  Geometry geometry_;
  std::vector<Axis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
  int radial_dim_ = 0;
  std::vector<double> weights_;
  std::unique_ptr<FftCache> fft_;
};

using GridPtr = std::shared_ptr<const GridSpec>;

constexpr std::size_t kDefaultPointBudget = std::size_t{1} << 22;

// radial_dim is the dimension d swept by the radial axis: n-1 for
// cylindrical grids, n for radial grids, ignored for cartesian grids.
GridPtr make_grid(Geometry g, const std::vector<AxisSpec>& axes, int radial_dim = 0,
                  std::size_t budget = kDefaultPointBudget);

// |S^{d-1}|
double sphere_area(int d);

struct FieldPair {
  GridPtr grid;
  CField u;
  CField v;
};

FieldPair zero_pair(const GridPtr& g);
// throws std::invalid_argument on shape mismatch or non-finite samples
void check_pair(const FieldPair& p);

cplx integrate(std::span<const cplx> f, const GridSpec& g);
double integrate(std::span<const double> f, const GridSpec& g);
double norm2(std::span<const cplx> f, const GridSpec& g);
// Re <a, b> = Re int a conj(b)
double inner(std::span<const cplx> a, std::span<const cplx> b, const GridSpec& g);

// unnormalised FFT over the periodic axes in mask, in place
void fft_forward(std::span<cplx> f, const GridSpec& g, unsigned mask);
void fft_backward(std::span<cplx> f, const GridSpec& g, unsigned mask);

// Delta restricted to the axes in mask
CField laplacian_apply(std::span<const cplx> f, const GridSpec& g, unsigned mask);
void laplacian_apply(std::span<const cplx> f, std::span<cplx> out, const GridSpec& g,
                     unsigned mask);
// solves (a(-Delta) + b) x = f in place, a >= 0, b > 0
void shifted_inverse(std::span<cplx> f, const GridSpec& g, double a, double b);

// max over the outer boundary layer divided by the global max of |f|
double boundary_ratio(std::span<const cplx> f, const GridSpec& g);

// shift along a periodic axis by s (space units) using the Fourier interpolant
void periodic_shift(std::span<cplx> f, const GridSpec& g, int a, double s);

void write_snapshot(const std::string& path, const FieldPair& p);
FieldPair read_snapshot(const std::string& path);

}  // namespace nlsq
