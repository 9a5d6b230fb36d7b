#include "nlsq/oscillator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <queue>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "nlsq/io.hpp"

namespace nlsq {

Eigen::MatrixXd fourier_d2(const Axis& ax) {
  int m = ax.m;
  std::vector<double> c(m, 0.0);
  for (int l = 0; l < m; ++l) {
    double s = 0.0;
    for (int p = 0; p < m; ++p) s += ax.k[p] * ax.k[p] * std::cos(ax.k[p] * l * ax.h);
    c[l] = -s / m;
  }
  Eigen::MatrixXd d(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) d(i, j) = c[std::abs(i - j)];
  return d;
}

static void fix_signs(AxisEigen& e) {
  for (int j = 0; j < e.q.cols(); ++j) {
    Eigen::VectorXd phys = e.q.col(j).cwiseQuotient(e.sqrt_w);
    double mx = phys.cwiseAbs().maxCoeff();
    for (int i = 0; i < phys.size(); ++i)
      if (std::abs(phys(i)) > 1e-3 * mx) {
        if (phys(i) < 0) e.q.col(j) *= -1.0;
        break;
      }
  }
}

AxisEigen axis_eigen(const Axis& ax, int radial_dim, double kappa, double vscale) {
  AxisEigen e;
  int m = ax.m;
  if (!ax.radial) {
    Eigen::MatrixXd h = -kappa * fourier_d2(ax);
    for (int i = 0; i < m; ++i) h(i, i) += vscale * ax.x[i] * ax.x[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigen-solver did not converge");
    e.values = es.eigenvalues();
    e.q = es.eigenvectors();
    e.sqrt_w = Eigen::VectorXd::Constant(m, std::sqrt(ax.h));
  } else {
    Eigen::VectorXd diag(m), sub(std::max(m - 1, 1));
    for (int i = 0; i < m; ++i) {
      diag(i) = kappa * (ax.face[i] + ax.face[i + 1]) / (ax.h * ax.cell[i]) +
                vscale * ax.x[i] * ax.x[i];
      if (i + 1 < m)
        sub(i) = -kappa * ax.face[i + 1] / (ax.h * std::sqrt(ax.cell[i] * ax.cell[i + 1]));
    }
    if (m == 1) sub.resize(0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigen-solver did not converge");
    e.values = es.eigenvalues();
    e.q = es.eigenvectors();
    e.sqrt_w.resize(m);
    for (int i = 0; i < m; ++i) e.sqrt_w(i) = std::sqrt(ax.w[i]);
  }
  (void)radial_dim;
  fix_signs(e);
  return e;
}

static void check_resolved(const Axis& ax, const Eigen::VectorXd& ground) {
  double mx = ground.cwiseAbs().maxCoeff();
  double edge = ax.radial ? std::abs(ground(ax.m - 1))
                          : std::max(std::abs(ground(0)), std::abs(ground(ax.m - 1)));
  if (edge >= 1e-10 * mx)
    throw std::runtime_error("transverse grid under-resolved: ground mode boundary amplitude " +
                             std::to_string(edge / mx) + " on axis " + ax.name);
  if (!ax.radial) {
    // amplitude of the Nyquist Fourier coefficient
    double s = 0.0;
    for (int i = 0; i < ax.m; ++i) s += ((i % 2) ? -1.0 : 1.0) * ground(i);
    double s0 = ground.cwiseAbs().sum();
    if (std::abs(s) >= 1e-6 * s0)
      throw std::runtime_error("transverse grid under-resolved: spectral tail on axis " + ax.name);
  }
}

OscillatorBasis transverse_spectrum(double kappa, int d, const GridPtr& tg, int J) {
  if (J < 1) throw std::invalid_argument("need at least one level");
  if (!(kappa > 0)) throw std::invalid_argument("kappa must be positive");
  const auto& g = *tg;
  if (g.geometry() == Geometry::cylindrical)
    throw std::invalid_argument("transverse grid must be cartesian or radial");
  if (g.dimension() != d)
    throw std::invalid_argument("transverse grid dimension does not match d");
  OscillatorBasis b;
  b.kappa = kappa;
  b.transverse_dim = d;
  b.grid = tg;

  std::vector<AxisEigen> eig;
  for (int a = 0; a < g.rank(); ++a) {
    eig.push_back(axis_eigen(g.axis(a), g.radial_dim(), kappa, 1.0));
    Eigen::VectorXd ground = eig.back().q.col(0).cwiseQuotient(eig.back().sqrt_w);
    check_resolved(g.axis(a), ground);
  }
  int r = g.rank();
  for (auto& e : eig)
    if (e.values.size() < 1) throw std::runtime_error("empty spectrum");

  // lowest-J tensor tuples by best-first enumeration
  using Tuple = std::vector<int>;
  auto energy = [&](const Tuple& t) {
    double s = 0.0;
    for (int a = 0; a < r; ++a) s += eig[a].values(t[a]);
    return s;
  };
  auto cmp = [&](const std::pair<double, Tuple>& x, const std::pair<double, Tuple>& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second > y.second;
  };
  std::priority_queue<std::pair<double, Tuple>, std::vector<std::pair<double, Tuple>>,
                      decltype(cmp)>
      pq(cmp);
  std::set<Tuple> seen;
  Tuple t0(r, 0);
  pq.push({energy(t0), t0});
  seen.insert(t0);
  while (b.count() < J && !pq.empty()) {
    auto [en, t] = pq.top();
    pq.pop();
    b.eigenvalues.push_back(en);
    b.quantum.push_back(t);
    for (int a = 0; a < r; ++a) {
      Tuple n = t;
      if (++n[a] >= eig[a].values.size()) continue;
      if (seen.insert(n).second) pq.push({energy(n), n});
    }
  }
  for (const auto& t : b.quantum) {
    RField vec(g.size(), 1.0);
    bool ground = std::all_of(t.begin(), t.end(), [](int j) { return j == 0; });
    for (int a = 0; a < r; ++a) {
      Eigen::VectorXd e1 = eig[a].q.col(t[a]).cwiseQuotient(eig[a].sqrt_w);
      std::size_t st = g.stride(a);
      int m = g.axis(a).m;
      for (std::size_t i = 0; i < g.size(); ++i) vec[i] *= e1((i / st) % m);
    }
    // the ground mode is positive; drop roundoff signs in the far tails
    if (ground)
      for (auto& x : vec) x = std::abs(x);
    b.vectors.push_back(std::move(vec));
  }
  return b;
}

GridPtr transverse_grid_of(const GridSpec& full) {
  std::vector<AxisSpec> specs;
  switch (full.geometry()) {
    case Geometry::cartesian:
      if (full.rank() < 2) throw std::invalid_argument("no transverse axes on a 1D grid");
      for (int a = 0; a + 1 < full.rank(); ++a)
        specs.push_back({full.axis(a).name, full.axis(a).L, full.axis(a).m});
      return make_grid(Geometry::cartesian, specs);
    case Geometry::cylindrical:
      specs.push_back({full.axis(0).name, full.axis(0).L, full.axis(0).m});
      return make_grid(Geometry::radial, specs, full.radial_dim());
    case Geometry::radial: break;
  }
  throw std::invalid_argument("radial grids have no transverse/axial split");
}

GridPtr axial_grid_of(const GridSpec& full) {
  int a = full.axial_axis();
  if (a < 0) throw std::invalid_argument("grid has no axial axis");
  return make_grid(Geometry::cartesian, {{full.axis(a).name, full.axis(a).L, full.axis(a).m}});
}

GridPtr join_grid(const GridSpec& tr, const AxisSpec& axial) {
  std::vector<AxisSpec> specs;
  for (int a = 0; a < tr.rank(); ++a) specs.push_back({tr.axis(a).name, tr.axis(a).L, tr.axis(a).m});
  specs.push_back(axial);
  if (tr.geometry() == Geometry::radial)
    return make_grid(Geometry::cylindrical, specs, tr.radial_dim());
  return make_grid(Geometry::cartesian, specs);
}

static void check_basis_grid(const GridSpec& full, const OscillatorBasis& basis) {
  auto tg = transverse_grid_of(full);
  const auto& bg = *basis.grid;
  bool ok = tg->rank() == bg.rank() && tg->geometry() == bg.geometry() &&
            tg->radial_dim() == bg.radial_dim();
  for (int a = 0; ok && a < bg.rank(); ++a)
    ok = tg->axis(a).m == bg.axis(a).m && tg->axis(a).L == bg.axis(a).L;
  if (!ok) throw std::invalid_argument("basis grid does not match the field's transverse grid");
}

Projection project_lowest(std::span<const cplx> field, const GridSpec& full,
                          const OscillatorBasis& basis) {
  check_basis_grid(full, basis);
  if (field.size() != full.size()) throw std::invalid_argument("field size does not match grid");
  Projection p;
  p.axial = axial_grid_of(full);
  std::size_t nax = p.axial->size();
  std::size_t ntr = basis.grid->size();
  const auto& e0 = basis.vectors.at(0);
  const auto& wt = basis.grid->weights();
  p.profile.assign(nax, 0.0);
  for (std::size_t t = 0; t < ntr; ++t)
    for (std::size_t j = 0; j < nax; ++j) p.profile[j] += wt[t] * e0[t] * field[t * nax + j];
  p.remainder.assign(field.begin(), field.end());
  for (std::size_t t = 0; t < ntr; ++t)
    for (std::size_t j = 0; j < nax; ++j) p.remainder[t * nax + j] -= p.profile[j] * e0[t];
  return p;
}

std::pair<double, double> overlap_constants(const OscillatorBasis& bu, const OscillatorBasis& bv) {
  const auto& g = *bu.grid;
  if (g.size() != bv.grid->size()) throw std::invalid_argument("bases live on different grids");
  const auto& p = bu.vectors.at(0);
  const auto& f = bv.vectors.at(0);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    s1 += g.weights()[i] * p[i] * p[i] * f[i];
    s2 += g.weights()[i] * f[i] * f[i] * f[i];
  }
  return {s1, s2};
}

double ground_energy_exact(double kappa, int d) { return std::sqrt(kappa) * d; }

std::pair<double, double> overlap_constants_exact(double kappa, int d) {
  const double pi = std::numbers::pi;
  double sk = std::sqrt(kappa);
  double s1 = std::pow(pi, -0.5 * d) * std::pow(pi * sk, -0.25 * d) *
              std::pow(pi / (1.0 + 0.5 / sk), 0.5 * d);
  double s2 = std::pow(pi * sk, -0.75 * d) * std::pow(2.0 * pi * sk / 3.0, 0.5 * d);
  return {s1, s2};
}

std::pair<double, double> overlap_constants_printed(double kappa, int n) {
  const double pi = std::numbers::pi;
  double pre = std::pow(pi, -(2.0 * n + 1.0) / 2.0);
  return {pre * std::pow(2 * kappa / (2 * kappa + 1), (n - 1) / 2.0),
          pre * std::pow(2 * kappa / 3, (n - 1) / 2.0)};
}

void write_basis(const std::string& prefix, const OscillatorBasis& b) {
  nlohmann::json j;
  j["kappa"] = b.kappa;
  j["transverse_dim"] = b.transverse_dim;
  j["eigenvalues"] = b.eigenvalues;
  j["quantum"] = b.quantum;
  std::vector<std::string> files;
  for (int k = 0; k < b.count(); ++k) {
    FieldPair p = zero_pair(b.grid);
    for (std::size_t i = 0; i < p.u.size(); ++i) p.u[i] = b.vectors[k][i];
    std::string f = prefix + "_level" + std::to_string(k) + ".nlsq";
    write_snapshot(f, p);
    files.push_back(f);
  }
  j["files"] = files;
  atomic_write(prefix + ".json", j.dump(2));
}

}  // namespace nlsq
