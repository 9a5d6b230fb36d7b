#include "nlsq/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace nlsq {

namespace {

bool axis_has_potential(const GridSpec& g, const ModelParams& m, int a) {
  switch (m.potential) {
    case Potential::none: return false;
    case Potential::V1: return true;
    case Potential::V2: return (g.transverse_axes() >> a) & 1u;
  }
  return false;
}

// f along axis a <- S^{-1} Q diag(e^{-i lam dt}) Q^T S f, S = diag(sqrt_w)
void apply_dense(CField& f, const GridSpec& g, int a, const AxisEigen& e, double dt) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int m = g.axis(a).m;
  const std::size_t s = g.stride(a);
  const std::size_t blocks = g.size() / (static_cast<std::size_t>(m) * s);
  const bool weighted = g.axis(a).radial;
  std::vector<cplx> ph(m);
  for (int i = 0; i < m; ++i) ph[i] = std::polar(1.0, -e.values(i) * dt);
  RowMat c(m, 2 * s);
  for (std::size_t b = 0; b < blocks; ++b) {
    double* base = reinterpret_cast<double*>(f.data() + b * m * s);
    Eigen::Map<RowMat> x(base, m, 2 * static_cast<Eigen::Index>(s));
    if (weighted) x = e.sqrt_w.asDiagonal() * x;
    c.noalias() = e.q.transpose() * x;
    for (int i = 0; i < m; ++i) {
      auto* row = reinterpret_cast<cplx*>(c.row(i).data());
      for (std::size_t j = 0; j < s; ++j) row[j] *= ph[i];
    }
    x.noalias() = e.q * c;
    if (weighted) x = e.sqrt_w.cwiseInverse().asDiagonal() * x;
  }
}

}  // namespace

LinearPropagator::LinearPropagator(const GridPtr& g, const ModelParams& m) : grid_(g) {
  if (!g) throw std::invalid_argument("linear propagator needs a grid");
  validate(m, *g);
  for (int c = 0; c < 2; ++c) {
    Part& p = parts_[c];
    p.kappa = c == 0 ? 1.0 : m.kappa;
    p.dense.resize(g->rank());
    for (int a = 0; a < g->rank(); ++a) {
      const Axis& ax = g->axis(a);
      bool pot = axis_has_potential(*g, m, a);
      if (!ax.radial && !pot)
        p.fft_mask |= 1u << a;
      else
        p.dense[a] = axis_eigen(ax, g->radial_dim(), p.kappa, pot ? m.potential_scale : 0.0);
    }
    if (p.fft_mask) {
      p.k2.assign(g->size(), 0.0);
      for (int a = 0; a < g->rank(); ++a) {
        if (!((p.fft_mask >> a) & 1u)) continue;
        const auto& k = g->axis(a).k;
        std::size_t st = g->stride(a), mm = g->axis(a).m;
        for (std::size_t i = 0; i < g->size(); ++i) {
          double kk = k[(i / st) % mm];
          p.k2[i] += p.kappa * kk * kk;
        }
      }
    }
  }
}

const Eigen::VectorXd& LinearPropagator::axis_values(int component, int a) const {
  static const Eigen::VectorXd empty;
  const auto& d = parts_[component].dense.at(a);
  return d ? d->values : empty;
}

void LinearPropagator::apply(CField& f, int component, double dt) const {
  const auto& g = *grid_;
  if (f.size() != g.size()) throw std::invalid_argument("field does not match the propagator grid");
  const Part& p = parts_[component];
  for (int a = 0; a < g.rank(); ++a)
    if (p.dense[a]) apply_dense(f, g, a, *p.dense[a], dt);
  if (p.fft_mask) {
    double norm = 1.0;
    for (int a = 0; a < g.rank(); ++a)
      if ((p.fft_mask >> a) & 1u) norm *= g.axis(a).m;
    fft_forward(f, g, p.fft_mask);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= std::polar(1.0 / norm, -p.k2[i] * dt);
    fft_backward(f, g, p.fft_mask);
  }
}

void LinearPropagator::apply(FieldPair& p, double dt) const {
  if (p.grid.get() != grid_.get() && (p.grid->size() != grid_->size()))
    throw std::invalid_argument("pair does not match the propagator grid");
  apply(p.u, 0, dt);
  apply(p.v, 1, dt);
}

void linear_step(FieldPair& p, const LinearPropagator& L, double dt) { L.apply(p, dt); }

double nonlinear_step(FieldPair& p, double c, double dt, int substeps) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  const cplx I(0.0, 1.0);
  const double h = dt / substeps;
  double qmax = 0.0, dmax = 0.0;
  for (std::size_t i = 0; i < p.u.size(); ++i) {
    cplx u = p.u[i], v = p.v[i];
    double q0 = std::norm(u) + 2.0 * std::norm(v);
    for (int s = 0; s < substeps; ++s) {
      auto fu = [&](cplx a, cplx b) { return I * c * b * std::conj(a); };
      auto fv = [&](cplx a) { return 0.5 * I * c * a * a; };
      cplx k1u = fu(u, v), k1v = fv(u);
      cplx u2 = u + 0.5 * h * k1u, v2 = v + 0.5 * h * k1v;
      cplx k2u = fu(u2, v2), k2v = fv(u2);
      cplx u3 = u + 0.5 * h * k2u, v3 = v + 0.5 * h * k2v;
      cplx k3u = fu(u3, v3), k3v = fv(u3);
      cplx u4 = u + h * k3u, v4 = v + h * k3v;
      cplx k4u = fu(u4, v4), k4v = fv(u4);
      u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
      v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    double q1 = std::norm(u) + 2.0 * std::norm(v);
    if (!std::isfinite(q1)) return std::numeric_limits<double>::quiet_NaN();
    qmax = std::max(qmax, q0);
    dmax = std::max(dmax, std::abs(q1 - q0));
    p.u[i] = u;
    p.v[i] = v;
  }
  return qmax > 0 ? dmax / qmax : 0.0;
}

void validate(const EvolveConfig& c) {
  if (!(c.dt > 0)) throw std::invalid_argument("evolve.dt must be positive");
  if (!(c.T > 0)) throw std::invalid_argument("evolve.T must be positive");
  if (c.dt > c.T) throw std::invalid_argument("evolve.dt must not exceed evolve.T");
  if (c.substeps < 1) throw std::invalid_argument("evolve.substeps must be >= 1");
  if (c.dt_floor < 0 || (c.dt_floor > 0 && c.dt_floor >= c.dt))
    throw std::invalid_argument("evolve.dt_floor must lie in (0, dt)");
  if (!(c.drift_tol > 0)) throw std::invalid_argument("evolve.drift_tol must be positive");
  if (!(c.gmax_factor > 1)) throw std::invalid_argument("evolve.gmax_factor must exceed 1");
  if (c.gmax && !(*c.gmax > 0)) throw std::invalid_argument("evolve.gmax must be positive");
  if (c.sample_stride < 1) throw std::invalid_argument("evolve.sample_stride must be >= 1");
  if (!(c.boundary_tol > 0)) throw std::invalid_argument("evolve.boundary_tol must be positive");
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::completed: return "completed";
    case Verdict::blowup_detected: return "blowup_detected";
    case Verdict::dt_floor_hit: return "dt_floor_hit";
    case Verdict::boundary_abort: return "boundary_abort";
    case Verdict::nan_abort: return "nan_abort";
  }
  return "?";
}

static bool finite_pair(const FieldPair& p) {
  for (std::size_t i = 0; i < p.u.size(); ++i)
    if (!std::isfinite(p.u[i].real()) || !std::isfinite(p.u[i].imag()) || !std::isfinite(p.v[i].real()) ||
        !std::isfinite(p.v[i].imag()))
      return false;
  return true;
}

TimeSeries evolve(const FieldPair& p0, const ModelParams& m, const EvolveConfig& c, const Observer& obs) {
  validate(c);
  check_pair(p0);
  validate(m, *p0.grid);
  if (!(mass_Q(p0) > 0)) throw std::invalid_argument("evolve needs Q(pair0) > 0");
  LinearPropagator L(p0.grid, m);
  const double sgn = c.backward ? -1.0 : 1.0;
  const double dt0 = c.dt, floor = c.dt_floor > 0 ? c.dt_floor : c.dt / 65536.0;

  TimeSeries ts;
  FieldPair last_good = p0;
  double last_t = 0.0;
  auto sample = [&](double t, const FieldPair& f, double dt) {
    auto r = report(f, m);
    ts.samples.push_back({sgn * t, r.Q, r.E, r.kin_u, r.kin_v, r.virial, r.N1, dt});
    last_good = f;
    last_t = t;
    if (obs) obs(sgn * t, f);
  };
  sample(0.0, p0, dt0);
  const double G0 = ts.samples[0].grad_u + ts.samples[0].grad_v;
  const double gmax = c.gmax ? *c.gmax : c.gmax_factor * G0;

  FieldPair w = p0;
  double t = 0.0, dt = std::min(dt0, c.T);
  L.apply(w, sgn * 0.5 * dt);
  double pend = 0.5 * dt;
  int since_sample = 0, streak = 0;
  for (;;) {
    FieldPair save = w;
    double drift = nonlinear_step(w, m.coupling, sgn * dt, c.substeps);
    bool bad = !std::isfinite(drift) || (c.adaptive && drift > c.drift_tol);
    if (bad) {
      ++ts.rejected;
      w = std::move(save);
      if (!c.adaptive) {
        ts.verdict = Verdict::nan_abort;
        ts.message = "non-finite values in the nonlinear step";
        break;
      }
      double ndt = 0.5 * dt;
      if (ndt < floor) {
        L.apply(w, -sgn * pend);
        if (!finite_pair(w)) {
          ts.verdict = Verdict::nan_abort;
          break;
        }
        sample(t, w, dt);
        ts.verdict = Verdict::dt_floor_hit;
        ts.message = "adaptive step reached the floor";
        break;
      }
      L.apply(w, sgn * (0.5 * ndt - pend));
      pend = 0.5 * ndt;
      dt = ndt;
      streak = 0;
      continue;
    }
    ts.max_drift = std::max(ts.max_drift, drift);
    t += dt;
    ++ts.steps;
    double next = dt;
    if (c.adaptive && dt < dt0 && drift < c.drift_tol / 64 && ++streak >= 8) {
      next = std::min(2 * dt, dt0);
      streak = 0;
    }
    bool last = t >= c.T * (1 - 1e-12);
    if (!last) next = std::min(next, c.T - t);
    if (last || ++since_sample >= c.sample_stride) {
      since_sample = 0;
      L.apply(w, sgn * 0.5 * dt);
      if (!finite_pair(w)) {
        ts.verdict = Verdict::nan_abort;
        ts.message = "non-finite values after the linear step";
        break;
      }
      sample(t, w, dt);
      const auto& s = ts.samples.back();
      if (s.grad_u + s.grad_v > gmax) {
        ts.verdict = Verdict::blowup_detected;
        ts.message = "gradient norm exceeded the threshold";
        break;
      }
      if (c.check_boundary) {
        double b = std::max(boundary_ratio(w.u, *w.grid), boundary_ratio(w.v, *w.grid));
        if (b > c.boundary_tol) {
          ts.verdict = Verdict::boundary_abort;
          ts.message = "boundary amplitude " + std::to_string(b) + " exceeds tolerance";
          std::fprintf(stderr, "warning: %s at t = %g\n", ts.message.c_str(), sgn * t);
          break;
        }
      }
      if (last) break;
      L.apply(w, sgn * 0.5 * next);
    } else {
      L.apply(w, sgn * 0.5 * (dt + next));
    }
    pend = 0.5 * next;
    dt = next;
  }
  ts.t_end = sgn * last_t;
  ts.final = std::move(last_good);
  return ts;
}

std::string to_csv(const TimeSeries& ts) {
  std::string out = "t,Q,E,grad_u,grad_v,virial,N1\n";
  char buf[512];
  for (const auto& s : ts.samples) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.Q, s.E, s.grad_u,
                  s.grad_v, s.virial, s.N1);
    out += buf;
  }
  return out;
}

nlohmann::json to_json(const TimeSeries& ts) {
  nlohmann::json j;
  j["verdict"] = to_string(ts.verdict);
  j["t_end"] = ts.t_end;
  j["message"] = ts.message;
  j["steps"] = ts.steps;
  j["rejected"] = ts.rejected;
  j["max_pointwise_drift"] = ts.max_drift;
  j["samples"] = ts.samples.size();
  if (!ts.samples.empty()) {
    j["drift.Q"] = relative_drift(ts, &Sample::Q);
    j["drift.E"] = relative_drift(ts, &Sample::E);
    const auto& b = ts.samples.back();
    j["final.grad"] = b.grad_u + b.grad_v;
    j["final.virial"] = b.virial;
  }
  return j;
}

double relative_drift(const TimeSeries& ts, double Sample::*field) {
  if (ts.samples.empty()) return 0.0;
  double x0 = ts.samples.front().*field, d = 0.0;
  for (const auto& s : ts.samples) d = std::max(d, std::abs(s.*field - x0));
  return x0 != 0 ? d / std::abs(x0) : d;
}

ThresholdReport global_threshold_check(const FieldPair& p0, const FieldPair& soliton, int n) {
  check_pair(p0);
  check_pair(soliton);
  ThresholdReport r;
  r.Q0 = mass_Q(p0);
  r.threshold = 0.25 * n * mass_Q(soliton);
  r.below = r.Q0 < r.threshold;
  return r;
}

BlowupClassReport blowup_class_check(const FieldPair& p0, const ModelParams& m, const GroundStateResult& ground) {
  check_pair(p0);
  BlowupClassReport r;
  auto f = report(p0, m);
  r.I0 = f.I;
  r.I_ref = ground.I;
  r.N1 = f.N1;
  // strict, with a roundoff margin so the ground state itself is excluded
  r.in_M = r.I0 < r.I_ref - 1e-12 * std::abs(r.I_ref) && r.N1 < 0;
  return r;
}

FieldPair dilate_onto(const FieldPair& s, const GridPtr& target, double lambda, double mu) {
  check_pair(s);
  const auto& gs = *s.grid;
  const auto& gt = *target;
  if (gs.geometry() != gt.geometry() || gs.rank() != gt.rank() || gs.radial_dim() != gt.radial_dim())
    throw std::invalid_argument("dilate_onto: grid shapes differ");
  for (int a = 0; a < gt.rank(); ++a)
    if (gs.axis(a).m != gt.axis(a).m || std::abs(gs.axis(a).L - lambda * gt.axis(a).L) > 1e-12 * gs.axis(a).L)
      throw std::invalid_argument("dilate_onto: soliton grid must be the target grid dilated by lambda");
  double amp = mu * std::pow(lambda, 0.5 * gt.dimension());
  FieldPair p{target, s.u, s.v};
  for (auto& z : p.u) z *= amp;
  for (auto& z : p.v) z *= amp;
  return p;
}

double dilated_soliton_mu(const FieldPair& soliton, double eps) {
  double q = mass_Q(soliton);
  if (!(q + eps > 0)) throw std::invalid_argument("Q + eps must be positive");
  return std::sqrt((q + eps) / q);
}

nlohmann::json to_json(const ThresholdReport& r) {
  return {{"Q0", r.Q0}, {"threshold", r.threshold}, {"below_threshold", r.below}};
}

nlohmann::json to_json(const BlowupClassReport& r) {
  return {{"I0", r.I0}, {"I_ref", r.I_ref}, {"N1", r.N1}, {"in_M", r.in_M}};
}

}  // namespace nlsq
