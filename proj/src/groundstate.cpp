#include "nlsq/groundstate.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include "nlsq/io.hpp"

namespace nlsq {

const char* to_string(ConstraintSpec::Kind k) {
  switch (k) {
    case ConstraintSpec::Kind::product: return "product";
    case ConstraintSpec::Kind::ellipse: return "ellipse";
    case ConstraintSpec::Kind::sphere_weighted: return "sphere_weighted";
  }
  return "?";
}

ConstraintSpec::Kind constraint_kind_from_string(const std::string& s) {
  if (s == "product") return ConstraintSpec::Kind::product;
  if (s == "ellipse") return ConstraintSpec::Kind::ellipse;
  if (s == "sphere_weighted" || s == "sphere") return ConstraintSpec::Kind::sphere_weighted;
  throw std::invalid_argument("unknown constraint kind '" + s + "'");
}

const char* to_string(Initializer i) {
  switch (i) {
    case Initializer::gaussian_product: return "gaussian_product";
    case Initializer::eigenmode_product: return "eigenmode_product";
    case Initializer::file: return "file";
    case Initializer::custom: return "custom";
  }
  return "?";
}

Initializer initializer_from_string(const std::string& s) {
  if (s == "gaussian_product") return Initializer::gaussian_product;
  if (s == "eigenmode_product") return Initializer::eigenmode_product;
  if (s == "file") return Initializer::file;
  if (s == "custom") return Initializer::custom;
  throw std::invalid_argument("unknown initializer '" + s + "'");
}

const char* to_string(FreeSystem s) { return s == FreeSystem::systemq ? "systemq" : "systemq2"; }

FreeSystem free_system_from_string(const std::string& s) {
  if (s == "systemq") return FreeSystem::systemq;
  if (s == "systemq2") return FreeSystem::systemq2;
  throw std::invalid_argument("unknown system '" + s + "' (systemq | systemq2)");
}

void validate(const SolverConfig& c) {
  if (!(c.dt > 0)) throw std::invalid_argument("solver dt must be positive");
  if (!(c.grad_tol > 0) || !(c.constraint_tol > 0)) throw std::invalid_argument("tolerances must be positive");
  if (c.max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (!(c.backtrack > 0 && c.backtrack < 1)) throw std::invalid_argument("backtrack must lie in (0,1)");
  if (!(c.init_width > 0)) throw std::invalid_argument("init_width must be positive");
  if (!(c.precond_shift > 0)) throw std::invalid_argument("precond_shift must be positive");
  if (c.init_noise < 0) throw std::invalid_argument("init_noise must be nonnegative");
}

static void validate(const ConstraintSpec& c) {
  using K = ConstraintSpec::Kind;
  if (c.kind == K::product && !(c.mu1 > 0 && c.mu2 > 0)) throw std::invalid_argument("product masses must be positive");
  if (c.kind != K::product && !(c.mu > 0 && c.weight > 0))
    throw std::invalid_argument("constraint mass and weight must be positive");
  if (c.ball_cap && !(*c.ball_cap > 0)) throw std::invalid_argument("ball cap must be positive");
}

FieldPair variational_gradient(const FieldPair& p, const ModelParams& m) {
  check_pair(p);
  const auto& g = *p.grid;
  validate(m, g);
  auto V = potential_field(m, g);
  FieldPair out{p.grid, laplacian_apply(p.u, g, g.all_axes()), laplacian_apply(p.v, g, g.all_axes())};
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.u[i] = -out.u[i] + V[i] * p.u[i] - m.coupling * std::conj(p.u[i]) * p.v[i];
    out.v[i] = -m.kappa * out.v[i] + V[i] * p.v[i] - 0.5 * m.coupling * p.u[i] * p.u[i];
  }
  return out;
}

namespace {

enum { TU, TV, MU, MV, PU, PV, KK };
using Mom = std::array<double, 7>;

template <class S>
void retraction(const ConstraintSpec& c, const S& mu, const S& mv, S& su, S& sv) {
  using std::sqrt;
  switch (c.kind) {
    case ConstraintSpec::Kind::product:
      su = sqrt(c.mu1 / mu);
      sv = sqrt(c.mu2 / mv);
      return;
    case ConstraintSpec::Kind::ellipse:
      su = sqrt(c.mu / (mu + 2.0 * c.weight * mv));
      sv = su;
      return;
    case ConstraintSpec::Kind::sphere_weighted:
      su = sqrt(c.mu / (mu + c.weight * mv));
      sv = su;
      return;
  }
}

// Scalar objective of the seven moments. Every objective is invariant under
// the scalings it normalises away, so its gradient is automatically tangent.
struct Objective {
  enum class Kind { energy, gn, nehari } kind = Kind::energy;
  ConstraintSpec cs;
  int n = 1;
  double kappa = 1.0;    // kinetic weight on v
  double coupling = 1.0;
  double wmass = 2.0;    // gn mass weight on v
  double rho = 1.0;      // gn dilation gauge

  // quadratic part of the Nehari action; wmass weights |v|^2
  template <class S>
  S action(const std::array<S, 7>& m) const {
    return m[TU] + kappa * m[TV] + m[MU] + wmass * m[MV] + m[PU] + m[PV];
  }

  template <class S>
  void scales(const std::array<S, 7>& m, S& su, S& sv) const {
    using std::sqrt;
    switch (kind) {
      case Kind::energy: retraction(cs, m[MU], m[MV], su, sv); return;
      case Kind::gn:
        su = 4.0 * (m[MU] + wmass * m[MV]) / ((6.0 - n) * m[KK]);
        sv = su;
        return;
      case Kind::nehari:
        su = action(m) / (1.5 * m[KK]);
        sv = su;
        return;
    }
  }

  template <class S>
  S value(const std::array<S, 7>& m) const {
    using std::log;
    switch (kind) {
      case Kind::energy: {
        S su(1.0), sv(1.0);
        scales(m, su, sv);
        S a = su * su, b = sv * sv;
        return 0.5 * (a * (m[TU] + m[PU]) + b * (kappa * m[TV] + m[PV])) - 0.5 * coupling * a * sv * m[KK];
      }
      case Kind::gn: {
        S T = m[TU] + kappa * m[TV];
        S Q = m[MU] + wmass * m[MV];
        S gauge = log(T) - log(Q) - std::log(n / (6.0 - n));
        return 0.25 * n * log(T) + 0.25 * (6 - n) * log(Q) - log(m[KK]) + rho * gauge * gauge;
      }
      case Kind::nehari: {
        return 3.0 * log(action(m)) - 2.0 * log(m[KK]);
      }
    }
    return S(0.0);
  }

  // converts |grad F| at a normalised state into an equation residual
  double residual_factor(const Mom& m) const {
    switch (kind) {
      case Kind::energy: return 1.0;
      case Kind::gn: return 0.5 * m[KK];
      case Kind::nehari: return action(m) / 6.0;
    }
    return 1.0;
  }

  // |(u,v)|^2 in the ball-cap norm after normalisation
  double cap_norm(const Mom& m) const {
    double su = 1.0, sv = 1.0;
    scales(m, su, sv);
    return su * su * (m[TU] + m[PU]) + sv * sv * (m[TV] + m[PV]);
  }
};

using AD7 = Eigen::AutoDiffScalar<Eigen::Matrix<double, 7, 1>>;
using AD1 = Eigen::AutoDiffScalar<Eigen::Matrix<double, 1, 1>>;

struct Work {
  GridPtr grid;
  RField V;
  CField u, v, Lu, Lv;
};

double dot(const CField& a, const CField& b, const RField& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * a[i].real() * b[i].real();
  return s;
}

void realify(CField& f) {
  for (auto& z : f) z = z.real();
}

CField lap(const CField& f, const GridSpec& g) {
  auto out = laplacian_apply(f, g, g.all_axes());
  realify(out);
  return out;
}

Mom moments(const Work& s) {
  const auto& w = s.grid->weights();
  Mom m{};
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    double u = s.u[i].real(), v = s.v[i].real();
    m[TU] -= w[i] * s.Lu[i].real() * u;
    m[TV] -= w[i] * s.Lv[i].real() * v;
    m[MU] += w[i] * u * u;
    m[MV] += w[i] * v * v;
    m[PU] += w[i] * s.V[i] * u * u;
    m[PV] += w[i] * s.V[i] * v * v;
    m[KK] += w[i] * u * u * v;
  }
  return m;
}

void normalise(const Objective& ob, Work& s) {
  auto m = moments(s);
  double su = 1.0, sv = 1.0;
  ob.scales(m, su, sv);
  if (!(std::isfinite(su) && std::isfinite(sv) && su > 0 && sv > 0))
    throw std::runtime_error("normalisation undefined (zero component or K <= 0)");
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    s.u[i] *= su;
    s.Lu[i] *= su;
    s.v[i] *= sv;
    s.Lv[i] *= sv;
  }
}

struct Partials {
  double f;
  Mom p;
};

Partials partials(const Objective& ob, const Mom& m) {
  std::array<AD7, 7> a;
  for (int i = 0; i < 7; ++i) a[i] = AD7(m[i], 7, i);
  AD7 f = ob.value(a);
  Partials out{f.value(), {}};
  for (int i = 0; i < 7; ++i) out.p[i] = f.derivatives()(i);
  return out;
}

// gradient fields of F(moments) with respect to u and v
void gradient(const Work& s, const Mom& p, CField& gu, CField& gv) {
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    double u = s.u[i].real(), v = s.v[i].real();
    gu[i] = -2.0 * p[TU] * s.Lu[i].real() + 2.0 * p[MU] * u + 2.0 * p[PU] * s.V[i] * u + 2.0 * p[KK] * u * v;
    gv[i] = -2.0 * p[TV] * s.Lv[i].real() + 2.0 * p[MV] * v + 2.0 * p[PV] * s.V[i] * v + p[KK] * u * u;
  }
}

// moments along x + tau d are cubic polynomials in tau
using Line = std::array<std::array<double, 4>, 7>;

Line line_coefficients(const Work& s, const CField& du, const CField& dv, const CField& Ldu,
                       const CField& Ldv, const Mom& m0) {
  const auto& w = s.grid->weights();
  Line c{};
  for (int k = 0; k < 7; ++k) c[k][0] = m0[k];
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    double u = s.u[i].real(), v = s.v[i].real(), a = du[i].real(), b = dv[i].real(), W = w[i], V = s.V[i];
    c[TU][1] -= 2.0 * W * s.Lu[i].real() * a;
    c[TU][2] -= W * Ldu[i].real() * a;
    c[TV][1] -= 2.0 * W * s.Lv[i].real() * b;
    c[TV][2] -= W * Ldv[i].real() * b;
    c[MU][1] += 2.0 * W * u * a;
    c[MU][2] += W * a * a;
    c[MV][1] += 2.0 * W * v * b;
    c[MV][2] += W * b * b;
    c[PU][1] += 2.0 * W * V * u * a;
    c[PU][2] += W * V * a * a;
    c[PV][1] += 2.0 * W * V * v * b;
    c[PV][2] += W * V * b * b;
    c[KK][1] += W * (2.0 * u * a * v + u * u * b);
    c[KK][2] += W * (a * a * v + 2.0 * u * a * b);
    c[KK][3] += W * a * a * b;
  }
  return c;
}

template <class S>
std::array<S, 7> along(const Line& c, const S& t) {
  std::array<S, 7> m;
  for (int k = 0; k < 7; ++k) m[k] = c[k][0] + t * (c[k][1] + t * (c[k][2] + t * c[k][3]));
  return m;
}

Mom along_d(const Line& c, double t) { return along<double>(c, t); }

std::pair<double, double> phi(const Objective& ob, const Line& c, double t) {
  AD1 tau(t, 1, 0);
  AD1 f = ob.value(along<AD1>(c, tau));
  return {f.value(), f.derivatives()(0)};
}

// largest tau just below the first stationary point of phi with phi(tau) <= phi(0);
// returns 0 when no admissible decrease exists
double line_search(const Objective& ob, const Line& c, double f0, double tau0) {
  double slack = 16.0 * std::numeric_limits<double>::epsilon() * (std::abs(f0) + 1e-300);
  auto admissible = [&](double t, double& d) {
    auto [f, df] = phi(ob, c, t);
    d = df;
    return std::isfinite(f) && std::isfinite(df) && f <= f0 + slack;
  };
  double lo = 0.0, hi = -1.0, t = tau0, d;
  for (int k = 0; k < 80; ++k) {
    if (admissible(t, d) && d < 0) {
      lo = t;
      t *= 2.0;
      if (t > 1e15) return lo;
    } else {
      hi = t;
      break;
    }
  }
  if (hi < 0) return lo;
  for (int k = 0; k < 200 && hi - lo > 1e-13 * hi; ++k) {
    double mid = 0.5 * (lo + hi);
    if (admissible(mid, d) && d < 0)
      lo = mid;
    else
      hi = mid;
  }
  if (lo == 0.0 && admissible(hi, d)) return hi;
  return lo;
}

struct MinOut {
  int iterations = 0;
  bool converged = false;
  bool cap_active = false;
  double residual = 0.0;
  std::vector<double> history;
};

MinOut minimize(const Objective& ob, Work& s, const SolverConfig& cfg, double shift_v, double a_v,
                std::optional<double> cap) {
  const auto& g = *s.grid;
  const auto& w = g.weights();
  std::size_t N = g.size();
  CField gu(N), gv(N), zu(N), zv(N), du(N), dv(N), gu_old(N), gv_old(N), zu_old(N), zv_old(N);
  double gz_old = 0.0, tau = cfg.dt;
  int consecutive_rejects = 0, since_restart = 0;
  bool steepest = false;
  MinOut out;
  normalise(ob, s);
  for (int it = 0;; ++it) {
    if (it > 0 && it % cfg.recompute_every == 0) {
      s.Lu = lap(s.u, g);
      s.Lv = lap(s.v, g);
    }
    auto m = moments(s);
    auto P = partials(ob, m);
    if (!std::isfinite(P.f)) throw std::runtime_error("NaN encountered in the objective");
    out.history.push_back(P.f);
    gradient(s, P.p, gu, gv);
    double gg = dot(gu, gu, w) + dot(gv, gv, w);
    out.residual = ob.residual_factor(m) * std::sqrt(gg);
    out.iterations = it;
    if (!std::isfinite(out.residual)) throw std::runtime_error("NaN encountered in the gradient");
    if (out.residual < cfg.grad_tol) {
      out.converged = true;
      break;
    }
    if (it >= cfg.max_iter) break;
    zu = gu;
    zv = gv;
    shifted_inverse(zu, g, 1.0, cfg.precond_shift);
    shifted_inverse(zv, g, a_v, shift_v);
    realify(zu);
    realify(zv);
    double gz = dot(gu, zu, w) + dot(gv, zv, w);
    double beta = 0.0;
    if (since_restart >= 200) since_restart = 0;
    if (cfg.conjugate && since_restart > 0 && gz_old > 0 && !steepest) {
      beta = (gz - dot(gu, zu_old, w) - dot(gv, zv_old, w)) / gz_old;
      beta = std::max(beta, 0.0);
    }
    for (std::size_t i = 0; i < N; ++i) {
      du[i] = -zu[i] + beta * du[i];
      dv[i] = -zv[i] + beta * dv[i];
    }
    double slope = dot(gu, du, w) + dot(gv, dv, w);
    if (!(slope < 0)) {
      for (std::size_t i = 0; i < N; ++i) {
        du[i] = -zu[i];
        dv[i] = -zv[i];
      }
      since_restart = 0;
    }
    ++since_restart;
    gz_old = gz;
    zu_old = zu;
    zv_old = zv;
    auto Ldu = lap(du, g), Ldv = lap(dv, g);
    auto line = line_coefficients(s, du, dv, Ldu, Ldv, m);
    double t = line_search(ob, line, P.f, tau);
    if (!(t > 0)) {
      if (beta > 0 && !steepest) {  // retry once along the plain preconditioned gradient
        steepest = true;
        continue;
      }
      break;  // no admissible decrease: stalled
    }
    steepest = false;
    if (cap) {
      int rejects = 0;
      while (ob.cap_norm(along_d(line, t)) > *cap) {
        t *= cfg.backtrack;
        ++rejects;
        if (consecutive_rejects + rejects >= 50) break;
      }
      consecutive_rejects = rejects ? consecutive_rejects + rejects : 0;
      if (consecutive_rejects >= 50) {
        out.cap_active = true;
        break;
      }
    }
    tau = t;
    for (std::size_t i = 0; i < N; ++i) {
      s.u[i] += t * du[i];
      s.v[i] += t * dv[i];
      s.Lu[i] += t * Ldu[i];
      s.Lv[i] += t * Ldv[i];
    }
    normalise(ob, s);
  }
  return out;
}

Work make_work(const FieldPair& p, const ModelParams& m) {
  Work s{p.grid, potential_field(m, *p.grid), p.u, p.v, {}, {}};
  realify(s.u);
  realify(s.v);
  s.Lu = lap(s.u, *s.grid);
  s.Lv = lap(s.v, *s.grid);
  return s;
}

// circular centroid of |u|^2 along x_n moved to the origin
void recentre(FieldPair& p) {
  const auto& g = *p.grid;
  int a = g.axial_axis();
  if (a < 0) return;
  const auto& ax = g.axis(a);
  const auto& w = g.weights();
  double c = 0.0, sn = 0.0, k = M_PI / ax.L;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double x = g.coord(i, a), q = w[i] * std::norm(p.u[i]);
    c += q * std::cos(k * x);
    sn += q * std::sin(k * x);
  }
  double xc = std::atan2(sn, c) / k;
  if (std::abs(xc) < 1e-14 * ax.L) return;
  periodic_shift(p.u, g, a, -xc);
  periodic_shift(p.v, g, a, -xc);
  realify(p.u);
  realify(p.v);
}

void fix_sign(FieldPair& p) {
  double s = 0.0;
  for (auto z : p.u) s += z.real();
  if (s < 0)
    for (auto& z : p.u) z = -z;
}

double l2(const CField& f, const GridSpec& g) { return std::sqrt(norm2(f, g)); }

double ground_level(const ModelParams& m) {
  double d = m.potential == Potential::V1 ? m.n : m.potential == Potential::V2 ? m.n - 1 : 0;
  return d * std::sqrt(m.potential_scale);
}

}  // namespace

FieldPair project_constraint(const FieldPair& p, const ConstraintSpec& c) {
  check_pair(p);
  validate(c);
  double mu = norm2(p.u, *p.grid), mv = norm2(p.v, *p.grid);
  if (c.kind == ConstraintSpec::Kind::product && (mu == 0 || mv == 0))
    throw std::invalid_argument("product constraint needs both components nonzero");
  if (mu + mv == 0) throw std::invalid_argument("cannot project the zero pair");
  double su = 1.0, sv = 1.0;
  retraction(c, mu, mv, su, sv);
  FieldPair out = p;
  for (auto& z : out.u) z *= su;
  for (auto& z : out.v) z *= sv;
  return out;
}

double constraint_residual(const FieldPair& p, const ConstraintSpec& c) {
  double mu = norm2(p.u, *p.grid), mv = norm2(p.v, *p.grid);
  switch (c.kind) {
    case ConstraintSpec::Kind::product: return std::max(std::abs(mu - c.mu1) / c.mu1, std::abs(mv - c.mu2) / c.mu2);
    case ConstraintSpec::Kind::ellipse: return std::abs(mu + 2 * c.weight * mv - c.mu) / c.mu;
    case ConstraintSpec::Kind::sphere_weighted: return std::abs(mu + c.weight * mv - c.mu) / c.mu;
  }
  return 0.0;
}

FieldPair initial_pair(const GridPtr& g, const ModelParams& m, const SolverConfig& c) {
  validate(c);
  FieldPair p = zero_pair(g);
  auto r2 = g->coord_sq(g->all_axes());
  auto t2 = g->coord_sq(g->transverse_axes());
  double sig2 = c.init_width * c.init_width;
  double om_u = std::sqrt(m.potential_scale), om_v = std::sqrt(m.potential_scale / m.kappa);
  switch (c.initializer) {
    case Initializer::gaussian_product:
      for (std::size_t i = 0; i < g->size(); ++i) p.u[i] = p.v[i] = std::exp(-0.5 * r2[i] / sig2);
      break;
    case Initializer::eigenmode_product:
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (m.potential == Potential::V1) {
          p.u[i] = std::exp(-0.5 * om_u * r2[i]);
          p.v[i] = std::exp(-0.5 * om_v * r2[i]);
        } else if (m.potential == Potential::V2) {
          double ax = std::exp(-0.5 * (r2[i] - t2[i]) / sig2);
          p.u[i] = std::exp(-0.5 * om_u * t2[i]) * ax;
          p.v[i] = std::exp(-0.5 * om_v * t2[i]) * ax;
        } else {
          p.u[i] = p.v[i] = std::exp(-0.5 * r2[i] / sig2);
        }
      }
      break;
    case Initializer::file:
    case Initializer::custom: {
      FieldPair src = c.initializer == Initializer::file ? read_snapshot(c.init_file)
                      : c.init_custom ? *c.init_custom
                                      : throw std::invalid_argument("custom initializer without a field");
      if (src.u.size() != g->size() || src.grid->geometry() != g->geometry() || src.grid->rank() != g->rank())
        throw std::invalid_argument("initial pair does not match the grid");
      p.u = src.u;
      p.v = src.v;
      for (auto& z : p.u) z = std::abs(z);
      for (auto& z : p.v) z = std::abs(z);
      break;
    }
  }
  std::mt19937_64 rng(c.seed);
  if (c.init_noise > 0) {
    std::normal_distribution<double> nd;
    for (auto& z : p.u) z *= 1.0 + c.init_noise * nd(rng);
    for (auto& z : p.v) z *= 1.0 + c.init_noise * nd(rng);
  }
  if (g->axial_axis() >= 0) p = steiner_rearrange_axial(p);
  double umax = 0.0;
  for (auto& z : p.u) {
    z = std::abs(z);
    umax = std::max(umax, z.real());
  }
  for (auto& z : p.v) z = std::abs(z);
  if (umax == 0.0) throw std::invalid_argument("zero initializer");
  if (!(interaction_K(p) > 0)) {
    double amp = std::uniform_real_distribution<double>(0.5, 1.0)(rng) * umax;
    for (std::size_t i = 0; i < g->size(); ++i) p.v[i] += amp * std::exp(-r2[i]);
  }
  return p;
}

GroundStateResult solve_groundstate(const GridPtr& g, const ModelParams& m, const ConstraintSpec& c,
                                    const SolverConfig& cfg) {
  validate(m, *g);
  validate(c);
  validate(cfg);
  std::optional<double> cap;
  if (c.ball_cap) {
    double l0 = ground_level(m);
    double mass = c.kind == ConstraintSpec::Kind::product ? c.mu1 + c.mu2 : c.mu;
    if (l0 > 0 && mass > *c.ball_cap / (m.eps0() * l0))
      throw std::invalid_argument("infeasible ball cap: mass exceeds chi / (eps0 l0)");
    cap = *c.ball_cap / m.eps0();
  }
  Objective ob;
  ob.kind = Objective::Kind::energy;
  ob.cs = c;
  ob.n = m.n;
  ob.kappa = m.kappa;
  ob.coupling = m.coupling;

  auto s = make_work(initial_pair(g, m, cfg), m);
  if (cap) {
    normalise(ob, s);
    if (ob.cap_norm(moments(s)) > *cap) throw std::invalid_argument("initial pair lies outside the ball cap");
  }
  auto mo = minimize(ob, s, cfg, cfg.precond_shift, m.kappa, cap);

  GroundStateResult r;
  r.pair = FieldPair{g, s.u, s.v};
  if (m.potential != Potential::V1) recentre(r.pair);
  fix_sign(r.pair);
  r.kind = to_string(c.kind);
  r.iterations = mo.iterations;
  r.cap_active = mo.cap_active;
  r.history = std::move(mo.history);
  r.grad_residual = mo.residual;
  r.constraint_residual = constraint_residual(r.pair, c);

  auto rep = report(r.pair, m);
  r.I = rep.I;
  r.lambda1 = (rep.kin_u + rep.pot_u - m.coupling * rep.K) / rep.mu1;
  r.lambda2 = (m.kappa * rep.kin_v + rep.pot_v - 0.5 * m.coupling * rep.K) / rep.mu2;
  r.pohozaev = std::abs(rep.B) / (rep.kin_u + m.kappa * rep.kin_v + rep.pot_u + rep.pot_v);
  auto gr = variational_gradient(r.pair, m);
  for (std::size_t i = 0; i < g->size(); ++i) {
    gr.u[i] -= r.lambda1 * r.pair.u[i];
    gr.v[i] -= r.lambda2 * r.pair.v[i];
  }
  r.system_residual = std::hypot(l2(gr.u, *g), l2(gr.v, *g));
  r.converged = mo.converged && !mo.cap_active && r.constraint_residual < cfg.constraint_tol &&
                std::isfinite(r.lambda1) && std::isfinite(r.lambda2);
  r.extra["functionals"] = to_json(rep);
  if (c.ball_cap) r.extra["cap_norm"] = rep.kin_u + rep.kin_v + rep.pot_u + rep.pot_v;
  return r;
}

std::pair<double, double> free_residual(const FieldPair& p, const ModelParams& m, FreeSystem sys) {
  const auto& g = *p.grid;
  double kv = sys == FreeSystem::systemq2 ? m.kappa : 1.0;
  double wv = sys == FreeSystem::systemq2 ? 2.0 : 1.0;
  auto Lu = laplacian_apply(p.u, g, g.all_axes()), Lv = laplacian_apply(p.v, g, g.all_axes());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Lu[i] = -Lu[i] + p.u[i] - p.u[i] * p.v[i];
    Lv[i] = -kv * Lv[i] + wv * p.v[i] - 0.5 * p.u[i] * p.u[i];
  }
  return {l2(Lu, g), l2(Lv, g)};
}

GroundStateResult solve_free_soliton(const GridPtr& g, const ModelParams& m, FreeSystem sys,
                                     const SolverConfig& cfg) {
  validate(m, *g);
  validate(cfg);
  if (m.potential != Potential::none) throw std::invalid_argument("free solitons need potential = none");
  if (m.n >= 2 && g->geometry() != Geometry::radial) throw std::invalid_argument("free solitons need a radial grid for n >= 2");
  ModelParams mm = m;
  mm.coupling = 1.0;
  Objective ob;
  ob.kind = Objective::Kind::gn;
  ob.n = m.n;
  ob.kappa = sys == FreeSystem::systemq2 ? m.kappa : 1.0;
  ob.wmass = sys == FreeSystem::systemq2 ? 2.0 : 1.0;

  auto s = make_work(initial_pair(g, mm, cfg), mm);
  // the discrete quotient is only approximately dilation invariant, so the
  // gauged minimiser is polished on the Nehari ratio, whose critical points
  // solve the discrete system exactly
  SolverConfig c1 = cfg;
  c1.grad_tol = std::max(cfg.grad_tol, 1e-6);
  auto mo1 = minimize(ob, s, c1, ob.wmass * cfg.precond_shift, ob.kappa, std::nullopt);
  Objective polish = ob;
  polish.kind = Objective::Kind::nehari;
  auto mo = minimize(polish, s, cfg, ob.wmass * cfg.precond_shift, ob.kappa, std::nullopt);
  mo.iterations += mo1.iterations;

  GroundStateResult r;
  r.pair = FieldPair{g, s.u, s.v};
  recentre(r.pair);
  fix_sign(r.pair);
  r.kind = to_string(sys);
  r.iterations = mo.iterations;
  r.history = std::move(mo.history);
  auto [r1, r2] = free_residual(r.pair, mm, sys);
  r.grad_residual = std::hypot(r1, r2);
  auto rep = report(r.pair, mm);
  double T = rep.kin_u + ob.kappa * rep.kin_v, Q = rep.mu1 + ob.wmass * rep.mu2;
  r.I = rep.I;
  r.lambda1 = 1.0;
  r.lambda2 = ob.wmass / ob.kappa;
  r.pohozaev = std::abs(T - 0.25 * m.n * rep.K) / T;
  r.system_residual = r.grad_residual;
  r.converged = mo.converged && r.grad_residual < 1e-6;
  r.extra["residual_u"] = r1;
  r.extra["residual_v"] = r2;
  r.extra["T"] = T;
  r.extra["Q"] = Q;
  r.extra["K"] = rep.K;
  r.extra["identity_kinetic"] = T / (0.25 * m.n * rep.K) - 1.0;
  r.extra["identity_mass"] = Q / (0.25 * (6 - m.n) * rep.K) - 1.0;
  r.extra["J"] = std::pow(T, 0.25 * m.n) * std::pow(Q, 0.25 * (6 - m.n)) / rep.K;
  r.extra["optimizer_residual"] = mo.residual;
  return r;
}

GroundStateResult scaled_curve_point(const GridPtr& g, const ModelParams& m, double t, const SolverConfig& cfg) {
  if (!(t > 0)) throw std::invalid_argument("t must be positive");
  validate(m, *g);
  validate(cfg);
  ModelParams mt = m;
  mt.potential_scale = m.potential_scale / (t * t);
  mt.kappa = 1.0;
  mt.coupling = 1.0;
  Objective ob;
  ob.kind = Objective::Kind::nehari;
  ob.n = m.n;
  ob.wmass = 1.0;

  auto s = make_work(initial_pair(g, mt, cfg), mt);
  auto mo = minimize(ob, s, cfg, cfg.precond_shift, 1.0, std::nullopt);

  GroundStateResult r;
  r.pair = FieldPair{g, s.u, s.v};
  if (m.potential != Potential::V1) recentre(r.pair);
  fix_sign(r.pair);
  r.kind = "nehari";
  r.iterations = mo.iterations;
  r.history = std::move(mo.history);

  auto V = potential_field(mt, *g);
  auto Lu = laplacian_apply(r.pair.u, *g, g->all_axes()), Lv = laplacian_apply(r.pair.v, *g, g->all_axes());
  for (std::size_t i = 0; i < g->size(); ++i) {
    cplx u = r.pair.u[i], v = r.pair.v[i];
    Lu[i] = -Lu[i] + u + V[i] * u - u * v;
    Lv[i] = -Lv[i] + v + V[i] * v - 0.5 * u * u;
  }
  r.grad_residual = std::hypot(l2(Lu, *g), l2(Lv, *g));
  r.system_residual = r.grad_residual;
  auto rep = report(r.pair, mt);
  double A = rep.kin_u + rep.kin_v + rep.mu1 + rep.mu2 + rep.pot_u + rep.pot_v;
  r.I = 0.5 * (A - rep.K);
  r.lambda1 = r.lambda2 = t;
  r.pohozaev = std::abs(A - 1.5 * rep.K) / A;  // Nehari defect
  r.converged = mo.converged;
  r.extra["t"] = t;
  r.extra["K"] = rep.K;
  r.extra["N_t"] = curve_N_of_t(r.pair, m, t);
  r.extra["optimizer_residual"] = mo.residual;
  return r;
}

double curve_N_of_t(const FieldPair& w, const ModelParams& m, double t) {
  auto V = potential_field(m, *w.grid);
  double pv = potential_energy(w.u, V, *w.grid) + potential_energy(w.v, V, *w.grid);
  double n2 = std::pow(t, 0.5 * (4 - m.n)) * ((m.n + 6) / 4.0 * interaction_K(w) - 2.0 * pv / (t * t));
  return n2 >= 0 ? std::sqrt(n2) : std::numeric_limits<double>::quiet_NaN();
}

std::vector<FiberSample> fibering_profile(const FieldPair& p, const ModelParams& m, const std::vector<double>& taus) {
  auto rep = report(p, m);
  double T = rep.kin_u + m.kappa * rep.kin_v, P = rep.pot_u + rep.pot_v, K = m.coupling * rep.K;
  double h = 0.5 * m.n;
  std::vector<FiberSample> out;
  for (double t : taus) {
    if (!(t > 0)) throw std::invalid_argument("fibering needs tau > 0");
    out.push_back({t, 0.5 * t * t * T + 0.5 * P / (t * t) - 0.5 * std::pow(t, h) * K,
                   t * T - P / (t * t * t) - 0.5 * h * std::pow(t, h - 1) * K});
  }
  return out;
}

nlohmann::json to_json(const GroundStateResult& r, const ModelParams& m) {
  nlohmann::json j;
  j["constraint"] = r.kind;
  j["params"] = {{"n", m.n},
                 {"kappa", m.kappa},
                 {"potential", to_string(m.potential)},
                 {"potential_scale", m.potential_scale},
                 {"coupling", m.coupling}};
  j["I"] = r.I;
  j["lambda1"] = r.lambda1;
  j["lambda2"] = r.lambda2;
  j["residuals"] = {{"gradient", r.grad_residual},
                    {"system", r.system_residual},
                    {"constraint", r.constraint_residual},
                    {"pohozaev", r.pohozaev}};
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["cap_active"] = r.cap_active;
  j["extra"] = r.extra;
  return j;
}

void write_result(const std::string& prefix, const GroundStateResult& r, const ModelParams& m) {
  write_snapshot(prefix + ".nlsq", r.pair);
  atomic_write(prefix + ".json", to_json(r, m).dump(2) + "\n");
}

}  // namespace nlsq
