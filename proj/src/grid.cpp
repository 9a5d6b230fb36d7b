#include "nlsq/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "nlsq/io.hpp"

namespace nlsq {

// Plans are built lazily per (axis mask, direction). The planner is not
// reentrant, execution with new arrays is.
class FftCache {
 public:
  explicit FftCache(const GridSpec& g) : g_(g) {}
  ~FftCache() {
    std::lock_guard<std::mutex> lk(planner_mutex());
    for (auto& [key, p] : plans_) fftw_destroy_plan(p);
  }
  fftw_plan get(unsigned mask, int sign) {
    std::lock_guard<std::mutex> lk(planner_mutex());
    auto key = std::make_pair(mask, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<fftw_iodim64> dims, loops;
    for (int a = 0; a < g_.rank(); ++a) {
      fftw_iodim64 d;
      d.n = g_.axis(a).m;
      d.is = d.os = static_cast<std::ptrdiff_t>(g_.stride(a));
      if (mask & (1u << a)) dims.push_back(d);
      else loops.push_back(d);
    }
    auto* buf = fftw_alloc_complex(g_.size());
    fftw_plan p = fftw_plan_guru64_dft(static_cast<int>(dims.size()), dims.data(),
                                       static_cast<int>(loops.size()), loops.data(), buf, buf,
                                       sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    if (!p) throw std::runtime_error("fftw planning failed");
    plans_.emplace(key, p);
    return p;
  }
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

 private:
  const GridSpec& g_;
  std::map<std::pair<unsigned, int>, fftw_plan> plans_;
};

const char* to_string(Geometry g) {
  switch (g) {
    case Geometry::cartesian: return "cartesian";
    case Geometry::cylindrical: return "cylindrical";
    case Geometry::radial: return "radial";
  }
  return "?";
}

Geometry geometry_from_string(const std::string& s) {
  if (s == "cartesian") return Geometry::cartesian;
  if (s == "cylindrical") return Geometry::cylindrical;
  if (s == "radial") return Geometry::radial;
  throw std::invalid_argument("unknown geometry '" + s + "'");
}

double sphere_area(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

GridSpec::GridSpec(Geometry g, std::vector<Axis> axes, int radial_dim)
    : geometry_(g), axes_(std::move(axes)), radial_dim_(radial_dim) {
  strides_.assign(axes_.size(), 1);
  size_ = 1;
  for (int a = rank() - 1; a >= 0; --a) {
    strides_[a] = size_;
    size_ *= static_cast<std::size_t>(axes_[a].m);
  }
  weights_.assign(size_, 1.0);
  for (int a = 0; a < rank(); ++a) {
    const auto& ax = axes_[a];
    std::size_t st = strides_[a];
    for (std::size_t i = 0; i < size_; ++i) weights_[i] *= ax.w[(i / st) % ax.m];
  }
  fft_ = std::make_unique<FftCache>(*this);
}

GridSpec::~GridSpec() = default;

std::vector<std::size_t> GridSpec::shape() const {
  std::vector<std::size_t> s;
  for (auto& a : axes_) s.push_back(static_cast<std::size_t>(a.m));
  return s;
}

int GridSpec::dimension() const {
  switch (geometry_) {
    case Geometry::cartesian: return rank();
    case Geometry::cylindrical: return radial_dim_ + 1;
    case Geometry::radial: return radial_dim_;
  }
  return 0;
}

int GridSpec::axial_axis() const { return geometry_ == Geometry::radial ? -1 : rank() - 1; }
int GridSpec::radial_axis() const { return geometry_ == Geometry::cartesian ? -1 : 0; }

unsigned GridSpec::periodic_axes() const {
  unsigned m = 0;
  for (int a = 0; a < rank(); ++a)
    if (!axes_[a].radial) m |= 1u << a;
  return m;
}

unsigned GridSpec::transverse_axes() const {
  int ax = axial_axis();
  return ax < 0 ? all_axes() : all_axes() & ~(1u << ax);
}

double GridSpec::coord(std::size_t idx, int a) const {
  const auto& ax = axes_[a];
  return ax.x[(idx / strides_[a]) % ax.m];
}

std::vector<double> GridSpec::coord_sq(unsigned mask) const {
  std::vector<double> out(size_, 0.0);
  for (int a = 0; a < rank(); ++a) {
    if (!(mask & (1u << a))) continue;
    const auto& ax = axes_[a];
    std::size_t st = strides_[a];
    for (std::size_t i = 0; i < size_; ++i) {
      double x = ax.x[(i / st) % ax.m];
      out[i] += x * x;
    }
  }
  return out;
}

GridPtr make_grid(Geometry g, const std::vector<AxisSpec>& specs, int radial_dim,
                  std::size_t budget) {
  if (specs.empty() || specs.size() > 5) throw std::invalid_argument("grid needs 1..5 axes");
  if (g == Geometry::cylindrical && specs.size() != 2)
    throw std::invalid_argument("cylindrical grid needs exactly two axes (r, x_n)");
  if (g == Geometry::radial && specs.size() != 1)
    throw std::invalid_argument("radial grid needs exactly one axis (r)");
  if (g != Geometry::cartesian && (radial_dim < 1 || radial_dim > 5))
    throw std::invalid_argument("radial dimension must be in 1..5");
  if (g == Geometry::cartesian) radial_dim = 0;

  std::size_t total = 1;
  std::vector<Axis> axes;
  for (std::size_t a = 0; a < specs.size(); ++a) {
    const auto& s = specs[a];
    if (!(s.half_extent > 0) || !std::isfinite(s.half_extent))
      throw std::invalid_argument("axis '" + s.name + "': half-extent must be positive");
    if (s.count < 8) throw std::invalid_argument("axis '" + s.name + "': need at least 8 points");
    total *= static_cast<std::size_t>(s.count);
    if (total > budget)
      throw std::invalid_argument("grid exceeds the point budget of " + std::to_string(budget));
    Axis ax;
    ax.name = s.name;
    ax.L = s.half_extent;
    ax.m = s.count;
    ax.radial = (g != Geometry::cartesian && a == 0);
    if (!ax.radial) {
      if (!std::has_single_bit(static_cast<unsigned>(s.count)))
        throw std::invalid_argument("axis '" + s.name + "': periodic count must be a power of two");
      ax.h = 2.0 * ax.L / ax.m;
      double dk = std::numbers::pi / ax.L;
      for (int j = 0; j < ax.m; ++j) {
        ax.x.push_back(-ax.L + j * ax.h);
        ax.k.push_back(dk * (j < ax.m / 2 ? j : j - ax.m));
        ax.w.push_back(ax.h);
      }
    } else {
      int d = radial_dim;
      ax.h = ax.L / ax.m;
      double area = sphere_area(d);
      ax.face.push_back(0.0);
      for (int i = 1; i <= ax.m; ++i) ax.face.push_back(std::pow(i * ax.h, d - 1));
      for (int i = 0; i < ax.m; ++i) {
        double rl = i * ax.h, rr = (i + 1) * ax.h;
        ax.x.push_back((i + 0.5) * ax.h);
        ax.cell.push_back((std::pow(rr, d) - std::pow(rl, d)) / d);
        ax.w.push_back(area * ax.cell.back());
      }
    }
    axes.push_back(std::move(ax));
  }
  return std::make_shared<const GridSpec>(g, std::move(axes), radial_dim);
}

FieldPair zero_pair(const GridPtr& g) {
  return FieldPair{g, CField(g->size()), CField(g->size())};
}

void check_pair(const FieldPair& p) {
  if (!p.grid) throw std::invalid_argument("field pair has no grid");
  if (p.u.size() != p.grid->size() || p.v.size() != p.grid->size())
    throw std::invalid_argument("field pair shape does not match its grid");
  for (std::size_t i = 0; i < p.u.size(); ++i)
    if (!std::isfinite(p.u[i].real()) || !std::isfinite(p.u[i].imag()) ||
        !std::isfinite(p.v[i].real()) || !std::isfinite(p.v[i].imag()))
      throw std::invalid_argument("non-finite sample at index " + std::to_string(i));
}

static void check_size(std::size_t n, const GridSpec& g) {
  if (n != g.size()) throw std::invalid_argument("field size does not match grid");
}

cplx integrate(std::span<const cplx> f, const GridSpec& g) {
  check_size(f.size(), g);
  const auto& w = g.weights();
  cplx s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
  return s;
}

double integrate(std::span<const double> f, const GridSpec& g) {
  check_size(f.size(), g);
  const auto& w = g.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
  return s;
}

double norm2(std::span<const cplx> f, const GridSpec& g) {
  check_size(f.size(), g);
  const auto& w = g.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * std::norm(f[i]);
  return s;
}

double inner(std::span<const cplx> a, std::span<const cplx> b, const GridSpec& g) {
  check_size(a.size(), g);
  check_size(b.size(), g);
  const auto& w = g.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += w[i] * (a[i].real() * b[i].real() + a[i].imag() * b[i].imag());
  return s;
}

static void run_fft(std::span<cplx> f, const GridSpec& g, unsigned mask, int sign) {
  check_size(f.size(), g);
  mask &= g.periodic_axes();
  if (!mask) return;
  auto* p = reinterpret_cast<fftw_complex*>(f.data());
  fftw_execute_dft(g.fft().get(mask, sign), p, p);
}

void fft_forward(std::span<cplx> f, const GridSpec& g, unsigned mask) {
  run_fft(f, g, mask, FFTW_FORWARD);
}
void fft_backward(std::span<cplx> f, const GridSpec& g, unsigned mask) {
  run_fft(f, g, mask, FFTW_BACKWARD);
}

// sum of k_a^2 over periodic masked axes at every point of the transformed array
static std::vector<double> ksq(const GridSpec& g, unsigned mask) {
  std::vector<double> out(g.size(), 0.0);
  for (int a = 0; a < g.rank(); ++a) {
    if (!(mask & (1u << a)) || g.axis(a).radial) continue;
    const auto& k = g.axis(a).k;
    std::size_t st = g.stride(a);
    int m = g.axis(a).m;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double kk = k[(i / st) % m];
      out[i] += kk * kk;
    }
  }
  return out;
}

static double fft_norm(const GridSpec& g, unsigned mask) {
  double n = 1.0;
  for (int a = 0; a < g.rank(); ++a)
    if ((mask & (1u << a)) && !g.axis(a).radial) n *= g.axis(a).m;
  return n;
}

// radial part of the Laplacian along axis 0, accumulated into out
static void radial_laplacian_add(std::span<const cplx> f, std::span<cplx> out,
                                 const GridSpec& g) {
  const auto& ax = g.axis(0);
  std::size_t inner_n = g.stride(0);
  int m = ax.m;
  double h = ax.h;
  for (int i = 0; i < m; ++i) {
    double fr = ax.face[i + 1], fl = ax.face[i];
    double s = 1.0 / (h * ax.cell[i]);
    const cplx* c = f.data() + i * inner_n;
    const cplx* up = (i + 1 < m) ? c + inner_n : nullptr;
    const cplx* dn = (i > 0) ? c - inner_n : nullptr;
    cplx* o = out.data() + i * inner_n;
    for (std::size_t j = 0; j < inner_n; ++j) {
      cplx right = (up ? up[j] : cplx(0.0)) - c[j];
      cplx left = dn ? c[j] - dn[j] : cplx(0.0);
      o[j] += s * (fr * right - fl * left);
    }
  }
}

void laplacian_apply(std::span<const cplx> f, std::span<cplx> out, const GridSpec& g,
                     unsigned mask) {
  check_size(f.size(), g);
  check_size(out.size(), g);
  unsigned pm = mask & g.periodic_axes();
  if (pm) {
    std::copy(f.begin(), f.end(), out.begin());
    fft_forward(out, g, pm);
    auto k2 = ksq(g, pm);
    double nrm = 1.0 / fft_norm(g, pm);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= -k2[i] * nrm;
    fft_backward(out, g, pm);
  } else {
    std::fill(out.begin(), out.end(), cplx(0.0));
  }
  int ra = g.radial_axis();
  if (ra >= 0 && (mask & (1u << ra))) radial_laplacian_add(f, out, g);
}

CField laplacian_apply(std::span<const cplx> f, const GridSpec& g, unsigned mask) {
  CField out(f.size());
  laplacian_apply(f, out, g, mask);
  return out;
}

void shifted_inverse(std::span<cplx> f, const GridSpec& g, double a, double b) {
  check_size(f.size(), g);
  if (a < 0 || !(b > 0)) throw std::invalid_argument("shifted_inverse needs a >= 0, b > 0");
  unsigned pm = g.periodic_axes();
  if (pm) fft_forward(f, g, pm);
  auto k2 = ksq(g, pm);
  double nrm = 1.0 / fft_norm(g, pm);
  if (g.radial_axis() < 0) {
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= nrm / (a * k2[i] + b);
  } else {
    // tridiagonal solve in r for every transformed axial column
    const auto& ax = g.axis(0);
    int m = ax.m;
    std::size_t nin = g.stride(0);
    std::vector<double> cp(m);
    std::vector<cplx> dp(m);
    for (std::size_t j = 0; j < nin; ++j) {
      double shift = a * k2[j] + b;
      double prev_c = 0.0;
      cplx prev_d = 0.0;
      for (int i = 0; i < m; ++i) {
        double hc = ax.h * ax.cell[i];
        double lo = -a * ax.face[i];
        double up = (i + 1 < m) ? -a * ax.face[i + 1] : 0.0;
        double di = a * (ax.face[i] + ax.face[i + 1]) + shift * hc;
        cplx rhs = hc * f[i * nin + j] * nrm;
        double den = di - lo * prev_c;
        cp[i] = up / den;
        dp[i] = (rhs - lo * prev_d) / den;
        prev_c = cp[i];
        prev_d = dp[i];
      }
      for (int i = m - 1; i >= 0; --i) {
        cplx x = dp[i] - (i + 1 < m ? cp[i] * f[(i + 1) * nin + j] : cplx(0.0));
        f[i * nin + j] = x;
      }
    }
  }
  if (pm) fft_backward(f, g, pm);
}

double boundary_ratio(std::span<const cplx> f, const GridSpec& g) {
  check_size(f.size(), g);
  double mx = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double a = std::abs(f[i]);
    mx = std::max(mx, a);
    bool edge = false;
    for (int ax = 0; ax < g.rank() && !edge; ++ax) {
      std::size_t j = (i / g.stride(ax)) % g.axis(ax).m;
      int m = g.axis(ax).m;
      if (g.axis(ax).radial) edge = (j + 1 == static_cast<std::size_t>(m));
      else edge = (j == 0 || j + 1 == static_cast<std::size_t>(m));
    }
    if (edge) mb = std::max(mb, a);
  }
  return mx > 0 ? mb / mx : 0.0;
}

void periodic_shift(std::span<cplx> f, const GridSpec& g, int a, double s) {
  check_size(f.size(), g);
  const auto& ax = g.axis(a);
  if (ax.radial) throw std::invalid_argument("cannot shift along the radial axis");
  unsigned mask = 1u << a;
  fft_forward(f, g, mask);
  std::size_t st = g.stride(a);
  int m = ax.m;
  std::vector<cplx> ph(m);
  for (int j = 0; j < m; ++j) {
    if (j == m / 2) ph[j] = std::cos(ax.k[j] * s) / m;
    else ph[j] = std::polar(1.0 / m, -ax.k[j] * s);
  }
  for (std::size_t i = 0; i < f.size(); ++i) f[i] *= ph[(i / st) % m];
  fft_backward(f, g, mask);
}

// ---- NLSQ snapshots ----

namespace {

constexpr std::uint32_t kSnapshotVersion = 1;

template <class T>
void put_le(std::string& s, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  s.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T)))
    throw std::runtime_error("snapshot truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void write_snapshot(const std::string& path, const FieldPair& p) {
  check_pair(p);
  const auto& g = *p.grid;
  std::string s = "NLSQ";
  put_le<std::uint32_t>(s, kSnapshotVersion);
  // low nibble: geometry, high nibble: dimension swept by the radial axis
  s.push_back(static_cast<char>(static_cast<unsigned>(g.geometry()) |
                                (static_cast<unsigned>(g.radial_dim()) << 4)));
  s.push_back(static_cast<char>(g.rank()));
  for (int a = 0; a < g.rank(); ++a) {
    put_le<double>(s, g.axis(a).L);
    put_le<std::uint32_t>(s, static_cast<std::uint32_t>(g.axis(a).m));
  }
  s.reserve(s.size() + 32 * g.size());
  for (const CField* f : {&p.u, &p.v})
    for (auto z : *f) {
      put_le<double>(s, z.real());
      put_le<double>(s, z.imag());
    }
  atomic_write(path, s);
}

FieldPair read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open snapshot " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "NLSQ")
    throw std::runtime_error(path + ": not an NLSQ snapshot");
  auto ver = get_le<std::uint32_t>(in);
  if (ver != kSnapshotVersion) throw std::runtime_error(path + ": unsupported version");
  auto tag = static_cast<unsigned char>(get_le<std::uint8_t>(in));
  auto rank = static_cast<int>(get_le<std::uint8_t>(in));
  unsigned gt = tag & 15u;
  if (gt > 2) throw std::runtime_error(path + ": bad geometry tag");
  auto geom = static_cast<Geometry>(gt);
  int rdim = static_cast<int>(tag >> 4);
  std::vector<AxisSpec> axes;
  for (int a = 0; a < rank; ++a) {
    AxisSpec s;
    s.half_extent = get_le<double>(in);
    s.count = static_cast<int>(get_le<std::uint32_t>(in));
    if (geom == Geometry::cartesian) s.name = "x" + std::to_string(a + 1);
    else s.name = (a == 0) ? "r" : "x_n";
    axes.push_back(s);
  }
  auto g = make_grid(geom, axes, rdim);
  FieldPair p = zero_pair(g);
  for (CField* f : {&p.u, &p.v})
    for (auto& z : *f) {
      double re = get_le<double>(in);
      double im = get_le<double>(in);
      z = cplx(re, im);
    }
  return p;
}

}  // namespace nlsq
