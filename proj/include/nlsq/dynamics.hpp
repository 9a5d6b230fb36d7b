#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlsq/functionals.hpp"
#include "nlsq/groundstate.hpp"
#include "nlsq/oscillator.hpp"

namespace nlsq {

// exp(-i dt (-kappa_j Delta + V)) per component, diagonal in the per-axis eigenbases;
// periodic axes without potential use FFT multipliers
class LinearPropagator {
 public:
  LinearPropagator(const GridPtr& g, const ModelParams& m);
  void apply(FieldPair& p, double dt) const;
  void apply(CField& f, int component, double dt) const;
  const GridPtr& grid() const { return grid_; }
  // eigenvalues of the dense axis `a` for component 0 (u) or 1 (v); empty for FFT axes
  const Eigen::VectorXd& axis_values(int component, int a) const;

 private:
  struct Part {
    double kappa = 1.0;
    std::vector<std::optional<AxisEigen>> dense;  // per axis
    unsigned fft_mask = 0;
    RField k2;  // sum of k^2 over fft axes, per grid point
  };
  GridPtr grid_;
  Part parts_[2];
};

void linear_step(FieldPair& p, const LinearPropagator& L, double dt);

// pointwise i u_t = -c v conj(u), i v_t = -(c/2) u^2 with `substeps` RK4 stages;
// returns max |q_after - q_before| / max q_before, q = |u|^2 + 2|v|^2 (NaN on overflow)
double nonlinear_step(FieldPair& p, double coupling, double dt, int substeps);

struct EvolveConfig {
  double dt = 1e-3;
  double T = 1.0;
  int substeps = 1;
  bool adaptive = false;
  double dt_floor = 0.0;       // 0: dt / 2^16
  double drift_tol = 1e-8;     // pointwise invariant drift that triggers halving
  double gmax_factor = 1e3;    // blow-up threshold relative to the initial gradient norm
  std::optional<double> gmax;  // absolute threshold, overrides the factor
  int sample_stride = 10;      // steps between samples
  bool backward = false;       // integrate towards -T
  bool check_boundary = true;
  double boundary_tol = 1e-6;
};

void validate(const EvolveConfig& c);

enum class Verdict { completed, blowup_detected, dt_floor_hit, boundary_abort, nan_abort };
const char* to_string(Verdict v);

struct Sample {
  double t, Q, E, grad_u, grad_v, virial, N1, dt;
};

struct TimeSeries {
  std::vector<Sample> samples;
  Verdict verdict = Verdict::completed;
  double t_end = 0.0;  // t* for blow-up / floor verdicts, last good t on aborts
  std::string message;
  FieldPair final;
  long steps = 0;
  long rejected = 0;
  double max_drift = 0.0;
  bool blowup() const { return verdict == Verdict::blowup_detected || verdict == Verdict::dt_floor_hit; }
};

using Observer = std::function<void(double t, const FieldPair&)>;

TimeSeries evolve(const FieldPair& p0, const ModelParams& m, const EvolveConfig& c,
                  const Observer& obs = {});

// header t,Q,E,grad_u,grad_v,virial,N1
std::string to_csv(const TimeSeries& ts);
nlohmann::json to_json(const TimeSeries& ts);

// max over samples of |X(t) - X(0)| / |X(0)|
double relative_drift(const TimeSeries& ts, double Sample::*field);

struct ThresholdReport {
  double Q0 = 0, threshold = 0;
  bool below = false;
};
// Q(pair0) < (n/4) Q(Q1, Q2)
ThresholdReport global_threshold_check(const FieldPair& p0, const FieldPair& soliton, int n);

struct BlowupClassReport {
  double I0 = 0, I_ref = 0, N1 = 0;
  bool in_M = false;
};
BlowupClassReport blowup_class_check(const FieldPair& p0, const ModelParams& m, const GroundStateResult& ground);

// mu lambda^{n/2} Q(lambda x) sampled on `target`; the soliton grid must be `target`
// dilated by lambda (same counts, half extents multiplied by lambda)
FieldPair dilate_onto(const FieldPair& soliton, const GridPtr& target, double lambda, double mu);

// mu for Q(data) = Q(soliton) + eps
double dilated_soliton_mu(const FieldPair& soliton, double eps);

nlohmann::json to_json(const ThresholdReport& r);
nlohmann::json to_json(const BlowupClassReport& r);

}  // namespace nlsq
