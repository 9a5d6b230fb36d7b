#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlsq/dynamics.hpp"
#include "nlsq/groundstate.hpp"
#include "nlsq/reduced1d.hpp"

namespace nlsq {

// carries a "line N: section.key: ..." style message
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  Geometry geometry = Geometry::cartesian;
  std::vector<AxisSpec> axes;
  std::size_t budget = kDefaultPointBudget;
};

struct ConstraintConfig {
  std::string kind = "product";  // product | ellipse | sphere | free
  ConstraintSpec spec;
  FreeSystem system = FreeSystem::systemq2;
};

struct EvolveBlock {
  EvolveConfig cfg;
  std::string initial = "groundstate";  // groundstate | file | gaussian | dilated | soliton
  std::string initial_file;
  double amplitude = 1.0;  // gaussian amplitude, or soliton multiplier
  double width = 1.0;
  double eps = 0.1;        // dilated: Q excess relative to Q(soliton)
  double lambda = 2.0;     // dilated soliton scale
  bool threshold_check = false;
};

struct EigsBlock {
  int d = 1;
  int count = 4;
};

struct SweepBlock {
  std::string command = "groundstate";
  std::vector<double> mu, kappa, t, N;
  int threads = 1;
};

struct OutputBlock {
  std::string directory = "out";
  std::vector<std::string> formats = {"json", "nlsq", "csv"};
  int snapshot_stride = 0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelParams model;
  GridConfig grid;
  ConstraintConfig constraint;
  SolverConfig solver;
  EvolveBlock evolve;
  EigsBlock eigs;
  CoefficientSource reduced_source = CoefficientSource::overlap;
  std::vector<double> curve_t = {100.0};
  SweepBlock sweep;
  OutputBlock output;
};

// INI text with sections [model] [grid] [constraint] [solver] [evolve] [eigs]
// [reduced] [curve] [sweep] [output]; top-level seed. Unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// canonical text: every key, fixed order, round-trip stable
std::string to_ini(const RunConfig& c);
nlohmann::json to_json(const RunConfig& c);

GridPtr build_grid(const GridConfig& g, int n);

// sha256 of the canonical text, first 16 hex digits
std::string run_id(const RunConfig& c);
// counter-based child seed: independent of scheduling order
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t counter);

}  // namespace nlsq
