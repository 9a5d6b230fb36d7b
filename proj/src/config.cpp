#include "nlsq/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nlsq/io.hpp"

namespace nlsq {

namespace pt = boost::property_tree;

namespace {

std::string fmt(double x) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", x);
  return b;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

class Reader {
 public:
  Reader(const pt::ptree& root, const std::string& text) : root_(root) {
    std::istringstream in(text);
    std::string line, section;
    for (int no = 1; std::getline(in, line); ++no) {
      boost::trim(line);
      if (line.empty() || line[0] == ';') continue;
      if (line.front() == '[' && line.back() == ']') {
        section = boost::trim_copy(line.substr(1, line.size() - 2));
        lines_.emplace(section, no);
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = boost::trim_copy(line.substr(0, eq));
      lines_.emplace(section.empty() ? key : section + "." + key, no);
    }
  }

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    auto it = lines_.find(path);
    std::string where = it != lines_.end() ? "line " + std::to_string(it->second) + ": " : "";
    throw ConfigError(where + path + ": " + what);
  }

  std::optional<std::string> raw(const std::string& path) {
    used_.insert(path);
    auto node = root_.get_child_optional(pt::ptree::path_type(path, '.'));
    if (!node) return std::nullopt;
    if (!node->empty()) fail(path, "expected a value, found a section");
    return boost::trim_copy(node->data());
  }

  void get(const std::string& path, double& out) {
    if (auto s = raw(path)) out = to_double(path, *s);
  }
  void get(const std::string& path, int& out) {
    if (auto s = raw(path)) {
      double d = to_double(path, *s);
      if (d != std::floor(d) || std::abs(d) > 2e9) fail(path, "expected an integer, got '" + *s + "'");
      out = static_cast<int>(d);
    }
  }
  void get(const std::string& path, std::uint64_t& out) {
    if (auto s = raw(path)) {
      try {
        std::size_t pos = 0;
        out = std::stoull(*s, &pos);
        if (pos != s->size() || s->front() == '-') throw std::invalid_argument("");
      } catch (const std::exception&) {
        fail(path, "expected an unsigned integer, got '" + *s + "'");
      }
    }
  }
  void get(const std::string& path, bool& out) {
    if (auto s = raw(path)) {
      std::string v = boost::to_lower_copy(*s);
      if (v == "true" || v == "1" || v == "yes") out = true;
      else if (v == "false" || v == "0" || v == "no") out = false;
      else fail(path, "expected a boolean, got '" + *s + "'");
    }
  }
  void get(const std::string& path, std::string& out) {
    if (auto s = raw(path)) out = *s;
  }
  void get(const std::string& path, std::vector<double>& out) {
    if (auto s = raw(path)) {
      out.clear();
      if (s->empty()) return;
      std::vector<std::string> parts;
      boost::split(parts, *s, boost::is_any_of(","));
      for (auto& p : parts) out.push_back(to_double(path, boost::trim_copy(p)));
    }
  }
  void get(const std::string& path, std::vector<std::string>& out) {
    if (auto s = raw(path)) {
      out.clear();
      std::vector<std::string> parts;
      boost::split(parts, *s, boost::is_any_of(","));
      for (auto& p : parts)
        if (!boost::trim_copy(p).empty()) out.push_back(boost::trim_copy(p));
    }
  }
  template <class E, class F>
  void get_enum(const std::string& path, E& out, F from) {
    if (auto s = raw(path)) {
      try {
        out = from(*s);
      } catch (const std::exception& e) {
        fail(path, e.what());
      }
    }
  }
  void get_axes(const std::string& path, std::vector<AxisSpec>& out) {
    auto s = raw(path);
    if (!s) return;
    out.clear();
    std::vector<std::string> parts;
    boost::split(parts, *s, boost::is_any_of(","));
    for (auto& p : parts) {
      std::vector<std::string> f;
      boost::split(f, boost::trim_copy(p), boost::is_any_of(":"));
      if (f.size() != 3) fail(path, "axis '" + p + "' must be name:half_extent:count");
      AxisSpec a;
      a.name = boost::trim_copy(f[0]);
      a.half_extent = to_double(path, boost::trim_copy(f[1]));
      double m = to_double(path, boost::trim_copy(f[2]));
      if (m != std::floor(m) || m < 1 || m > 1e9) fail(path, "axis count must be a positive integer");
      a.count = static_cast<int>(m);
      out.push_back(a);
    }
  }

  void reject_unknown() const {
    for (const auto& [name, node] : root_) {
      if (node.empty()) {
        if (!used_.count(name)) fail(name, "unknown key");
        continue;
      }
      for (const auto& [key, leaf] : node) {
        std::string path = name + "." + key;
        if (!used_.count(path)) {
          bool known_section = std::any_of(used_.begin(), used_.end(),
                                           [&](const std::string& u) { return u.rfind(name + ".", 0) == 0; });
          fail(known_section ? path : name, known_section ? "unknown key" : "unknown section");
        }
      }
    }
  }

 private:
  double to_double(const std::string& path, const std::string& s) {
    try {
      std::size_t pos = 0;
      double d = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      fail(path, "expected a number, got '" + s + "'");
    }
  }

  const pt::ptree& root_;
  std::map<std::string, int> lines_;
  std::set<std::string> used_;
};

}  // namespace

GridPtr build_grid(const GridConfig& g, int n) {
  if (g.axes.empty()) throw std::invalid_argument("grid.axes is required");
  int rd = g.geometry == Geometry::cylindrical ? n - 1 : g.geometry == Geometry::radial ? n : 0;
  return make_grid(g.geometry, g.axes, rd, g.budget);
}

RunConfig parse_config(const std::string& text) {
  pt::ptree root;
  try {
    std::istringstream in(text);
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }
  Reader r(root, text);
  RunConfig c;
  r.get("seed", c.seed);

  r.get("model.n", c.model.n);
  r.get("model.kappa", c.model.kappa);
  r.get_enum("model.potential", c.model.potential, potential_from_string);
  r.get("model.potential_scale", c.model.potential_scale);
  r.get("model.coupling", c.model.coupling);

  r.get_enum("grid.geometry", c.grid.geometry, geometry_from_string);
  r.get_axes("grid.axes", c.grid.axes);
  r.get("grid.budget", c.grid.budget);

  auto& k = c.constraint;
  r.get("constraint.kind", k.kind);
  if (k.kind == "product") k.spec.kind = ConstraintSpec::Kind::product;
  else if (k.kind == "ellipse") k.spec.kind = ConstraintSpec::Kind::ellipse;
  else if (k.kind == "sphere") k.spec.kind = ConstraintSpec::Kind::sphere_weighted;
  else if (k.kind != "free") r.fail("constraint.kind", "expected product, ellipse, sphere or free, got '" + k.kind + "'");
  r.get("constraint.mu1", k.spec.mu1);
  r.get("constraint.mu2", k.spec.mu2);
  r.get("constraint.weight", k.spec.weight);
  r.get("constraint.mu", k.spec.mu);
  double cap = k.spec.ball_cap.value_or(0.0);
  r.get("constraint.ball_cap", cap);
  if (cap > 0) k.spec.ball_cap = cap;
  else if (cap < 0) r.fail("constraint.ball_cap", "must be positive (0 disables)");
  r.get_enum("constraint.system", k.system, free_system_from_string);

  auto& s = c.solver;
  r.get("solver.dt", s.dt);
  r.get("solver.grad_tol", s.grad_tol);
  r.get("solver.constraint_tol", s.constraint_tol);
  r.get("solver.max_iter", s.max_iter);
  r.get("solver.backtrack", s.backtrack);
  r.get_enum("solver.initializer", s.initializer, initializer_from_string);
  r.get("solver.init_width", s.init_width);
  r.get("solver.init_file", s.init_file);
  r.get("solver.init_noise", s.init_noise);
  r.get("solver.precond_shift", s.precond_shift);
  r.get("solver.conjugate", s.conjugate);
  r.get("solver.recompute_every", s.recompute_every);

  auto& e = c.evolve;
  r.get("evolve.dt", e.cfg.dt);
  r.get("evolve.T", e.cfg.T);
  r.get("evolve.substeps", e.cfg.substeps);
  r.get("evolve.adaptive", e.cfg.adaptive);
  r.get("evolve.dt_floor", e.cfg.dt_floor);
  r.get("evolve.drift_tol", e.cfg.drift_tol);
  r.get("evolve.gmax_factor", e.cfg.gmax_factor);
  double gmax = e.cfg.gmax.value_or(0.0);
  r.get("evolve.gmax", gmax);
  if (gmax > 0) e.cfg.gmax = gmax;
  r.get("evolve.sample_stride", e.cfg.sample_stride);
  r.get("evolve.backward", e.cfg.backward);
  r.get("evolve.check_boundary", e.cfg.check_boundary);
  r.get("evolve.boundary_tol", e.cfg.boundary_tol);
  r.get("evolve.initial", e.initial);
  r.get("evolve.initial_file", e.initial_file);
  r.get("evolve.amplitude", e.amplitude);
  r.get("evolve.width", e.width);
  r.get("evolve.eps", e.eps);
  r.get("evolve.lambda", e.lambda);
  r.get("evolve.threshold_check", e.threshold_check);

  r.get("eigs.d", c.eigs.d);
  r.get("eigs.count", c.eigs.count);
  r.get_enum("reduced.source", c.reduced_source, coefficient_source_from_string);
  r.get("curve.t", c.curve_t);

  r.get("sweep.command", c.sweep.command);
  r.get("sweep.mu", c.sweep.mu);
  r.get("sweep.kappa", c.sweep.kappa);
  r.get("sweep.t", c.sweep.t);
  r.get("sweep.N", c.sweep.N);
  r.get("sweep.threads", c.sweep.threads);

  r.get("output.directory", c.output.directory);
  r.get("output.formats", c.output.formats);
  r.get("output.snapshot_stride", c.output.snapshot_stride);
  r.reject_unknown();

  // semantic checks, addressed by section
  auto check = [&](const std::string& path, auto&& f) {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      r.fail(path, ex.what());
    }
  };
  check("grid", [&] { validate(c.model, *build_grid(c.grid, c.model.n)); });
  check("solver", [&] { validate(c.solver); });
  check("evolve", [&] { validate(c.evolve.cfg); });
  auto pos = [&](const std::string& p, double v) {
    if (!(v > 0)) r.fail(p, "must be positive");
  };
  pos("constraint.mu1", k.spec.mu1);
  pos("constraint.mu2", k.spec.mu2);
  pos("constraint.weight", k.spec.weight);
  pos("constraint.mu", k.spec.mu);
  static const std::set<std::string> initials = {"groundstate", "file", "gaussian", "dilated", "soliton"};
  if (!initials.count(e.initial)) r.fail("evolve.initial", "unknown initial data '" + e.initial + "'");
  pos("evolve.width", e.width);
  pos("evolve.lambda", e.lambda);
  if (c.eigs.d < 1 || c.eigs.d > 5) r.fail("eigs.d", "must lie in 1..5");
  if (c.eigs.count < 1) r.fail("eigs.count", "must be >= 1");
  for (double t : c.curve_t) pos("curve.t", t);
  static const std::set<std::string> cmds = {"groundstate", "reduce1d", "compare", "curve", "evolve", "eigs"};
  if (!cmds.count(c.sweep.command)) r.fail("sweep.command", "cannot sweep '" + c.sweep.command + "'");
  if (c.sweep.threads < 1) r.fail("sweep.threads", "must be >= 1");
  for (const auto& f : c.output.formats)
    if (f != "json" && f != "nlsq" && f != "csv") r.fail("output.formats", "unknown format '" + f + "'");
  if (c.output.snapshot_stride < 0) r.fail("output.snapshot_stride", "must be >= 0");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  o << "seed = " << c.seed << "\n\n[model]\n";
  o << "n = " << c.model.n << "\nkappa = " << fmt(c.model.kappa) << "\npotential = " << to_string(c.model.potential)
    << "\npotential_scale = " << fmt(c.model.potential_scale) << "\ncoupling = " << fmt(c.model.coupling) << "\n";
  o << "\n[grid]\ngeometry = " << to_string(c.grid.geometry) << "\naxes = ";
  for (std::size_t i = 0; i < c.grid.axes.size(); ++i)
    o << (i ? ", " : "") << c.grid.axes[i].name << ":" << fmt(c.grid.axes[i].half_extent) << ":" << c.grid.axes[i].count;
  o << "\nbudget = " << c.grid.budget << "\n";
  const auto& k = c.constraint;
  o << "\n[constraint]\nkind = " << k.kind << "\nmu1 = " << fmt(k.spec.mu1) << "\nmu2 = " << fmt(k.spec.mu2)
    << "\nweight = " << fmt(k.spec.weight) << "\nmu = " << fmt(k.spec.mu)
    << "\nball_cap = " << fmt(k.spec.ball_cap.value_or(0.0)) << "\nsystem = " << to_string(k.system) << "\n";
  const auto& s = c.solver;
  o << "\n[solver]\ndt = " << fmt(s.dt) << "\ngrad_tol = " << fmt(s.grad_tol)
    << "\nconstraint_tol = " << fmt(s.constraint_tol) << "\nmax_iter = " << s.max_iter
    << "\nbacktrack = " << fmt(s.backtrack) << "\ninitializer = " << to_string(s.initializer)
    << "\ninit_width = " << fmt(s.init_width) << "\ninit_file = " << s.init_file
    << "\ninit_noise = " << fmt(s.init_noise) << "\nprecond_shift = " << fmt(s.precond_shift)
    << "\nconjugate = " << (s.conjugate ? "true" : "false") << "\nrecompute_every = " << s.recompute_every << "\n";
  const auto& e = c.evolve;
  o << "\n[evolve]\ndt = " << fmt(e.cfg.dt) << "\nT = " << fmt(e.cfg.T) << "\nsubsteps = " << e.cfg.substeps
    << "\nadaptive = " << (e.cfg.adaptive ? "true" : "false") << "\ndt_floor = " << fmt(e.cfg.dt_floor)
    << "\ndrift_tol = " << fmt(e.cfg.drift_tol) << "\ngmax_factor = " << fmt(e.cfg.gmax_factor)
    << "\ngmax = " << fmt(e.cfg.gmax.value_or(0.0)) << "\nsample_stride = " << e.cfg.sample_stride
    << "\nbackward = " << (e.cfg.backward ? "true" : "false")
    << "\ncheck_boundary = " << (e.cfg.check_boundary ? "true" : "false")
    << "\nboundary_tol = " << fmt(e.cfg.boundary_tol) << "\ninitial = " << e.initial
    << "\ninitial_file = " << e.initial_file << "\namplitude = " << fmt(e.amplitude) << "\nwidth = " << fmt(e.width)
    << "\neps = " << fmt(e.eps) << "\nlambda = " << fmt(e.lambda)
    << "\nthreshold_check = " << (e.threshold_check ? "true" : "false") << "\n";
  o << "\n[eigs]\nd = " << c.eigs.d << "\ncount = " << c.eigs.count << "\n";
  o << "\n[reduced]\nsource = " << to_string(c.reduced_source) << "\n";
  o << "\n[curve]\nt = " << join(c.curve_t) << "\n";
  o << "\n[sweep]\ncommand = " << c.sweep.command << "\nmu = " << join(c.sweep.mu) << "\nkappa = " << join(c.sweep.kappa)
    << "\nt = " << join(c.sweep.t) << "\nN = " << join(c.sweep.N) << "\nthreads = " << c.sweep.threads << "\n";
  o << "\n[output]\ndirectory = " << c.output.directory << "\nformats = " << boost::join(c.output.formats, ", ")
    << "\nsnapshot_stride = " << c.output.snapshot_stride << "\n";
  return o.str();
}

nlohmann::json to_json(const RunConfig& c) {
  pt::ptree root;
  std::istringstream in(to_ini(c));
  pt::read_ini(in, root);
  nlohmann::json j;
  for (const auto& [name, node] : root) {
    if (node.empty()) {
      j[name] = node.data();
      continue;
    }
    for (const auto& [key, leaf] : node) j[name][key] = leaf.data();
  }
  return j;
}

std::string run_id(const RunConfig& c) { return sha256_hex(to_ini(c)).substr(0, 16); }

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t counter) {
  auto h = sha256_hex(std::to_string(seed) + "/" + std::to_string(counter));
  return std::stoull(h.substr(0, 16), nullptr, 16);
}

}  // namespace nlsq
