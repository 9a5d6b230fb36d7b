#include "nlsq/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "nlsq/io.hpp"

namespace nlsq {

namespace fs = std::filesystem;

namespace {

// a solver that stopped early; maps to exit code 3
struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string now_iso() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char b[32];
  std::strftime(b, sizeof b, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return b;
}

bool wants(const RunConfig& c, const char* fmt) {
  for (const auto& f : c.output.formats)
    if (f == fmt) return true;
  return false;
}

struct Ctx {
  const RunConfig& cfg;
  const RunOptions& opt;
  ResultRecord& rec;
  std::string prefix() const { return (fs::path(cfg.output.directory) / (rec.command + "-" + rec.run_id)).string(); }
  void write(const std::string& path, const std::string& bytes) const {
    if (!opt.write_files) return;
    fs::create_directories(fs::path(path).parent_path());
    atomic_write(path, bytes);
    rec.artifacts.push_back(path);
  }
  void log(const std::string& s) const {
    if (!opt.quiet) std::fprintf(stderr, "%s\n", s.c_str());
  }
};

void put_result(nlohmann::json& h, const GroundStateResult& r) {
  h["I"] = r.I;
  h["lambda1"] = r.lambda1;
  h["lambda2"] = r.lambda2;
  h["pohozaev"] = r.pohozaev;
  h["system_residual"] = r.system_residual;
  h["grad_residual"] = r.grad_residual;
  h["iterations"] = r.iterations;
  h["converged"] = r.converged;
  h["cap_active"] = r.cap_active;
}

void save_pair(const Ctx& x, const std::string& prefix, const GroundStateResult& r, const ModelParams& m) {
  if (!x.opt.write_files) return;
  fs::create_directories(fs::path(prefix).parent_path());
  if (wants(x.cfg, "nlsq") || wants(x.cfg, "json")) {
    write_result(prefix, r, m);
    x.rec.artifacts.push_back(prefix + ".nlsq");
    x.rec.artifacts.push_back(prefix + ".json");
  }
}

GroundStateResult solve_configured(const GridPtr& g, const RunConfig& c) {
  if (c.constraint.kind == "free") {
    ModelParams m = c.model;
    return solve_free_soliton(g, m, c.constraint.system, c.solver);
  }
  return solve_groundstate(g, c.model, c.constraint.spec, c.solver);
}

void cmd_eigs(const Ctx& x) {
  const auto& c = x.cfg;
  auto g = build_grid(c.grid, c.eigs.d);
  if (g->dimension() != c.eigs.d) throw std::invalid_argument("grid dimension does not match eigs.d");
  auto bu = transverse_spectrum(1.0, c.eigs.d, g, c.eigs.count);
  auto bv = transverse_spectrum(c.model.kappa, c.eigs.d, g, c.eigs.count);
  auto& h = x.rec.headline;
  h["l0"] = bu.eigenvalues[0];
  h["m0"] = bv.eigenvalues[0];
  h["levels_u"] = bu.eigenvalues;
  h["levels_v"] = bv.eigenvalues;
  auto [a, b] = overlap_constants(bu, bv);
  h["overlap_psi2_phi"] = a;
  h["overlap_phi3"] = b;
  auto ex = overlap_constants_exact(c.model.kappa, c.eigs.d);
  h["overlap_exact"] = {ex.first, ex.second};
  auto pr = overlap_constants_printed(c.model.kappa, c.eigs.d + 1);
  h["printed_s1"] = pr.first;
  h["printed_s2"] = pr.second;
  if (!x.opt.quiet) {
    std::printf("l0=%.6f\nm0=%.6f\n", bu.eigenvalues[0], bv.eigenvalues[0]);
    std::printf("levels_u=");
    for (int i = 0; i < bu.count(); ++i) std::printf(i ? ",%.6f" : "%.6f", bu.eigenvalues[i]);
    std::printf("\nlevels_v=");
    for (int i = 0; i < bv.count(); ++i) std::printf(i ? ",%.6f" : "%.6f", bv.eigenvalues[i]);
    std::printf("\n");
  }
  if (x.opt.write_files && wants(c, "nlsq")) {
    fs::create_directories(c.output.directory);
    write_basis(x.prefix() + "-u", bu);
    write_basis(x.prefix() + "-v", bv);
    x.rec.artifacts.push_back(x.prefix() + "-u.json");
    x.rec.artifacts.push_back(x.prefix() + "-v.json");
  }
}

void cmd_groundstate(const Ctx& x) {
  const auto& c = x.cfg;
  auto g = build_grid(c.grid, c.model.n);
  auto r = solve_configured(g, c);
  put_result(x.rec.headline, r);
  if (c.constraint.kind == "free") {
    x.rec.headline["residual_u"] = r.extra.value("residual_u", 0.0);
    x.rec.headline["residual_v"] = r.extra.value("residual_v", 0.0);
  }
  save_pair(x, x.prefix(), r, c.model);
  if (!r.converged) throw NotConverged("ground-state solver did not converge");
}

FieldPair soliton_for(const RunConfig& c, const GridConfig& gc) {
  ModelParams m = c.model;
  m.potential = Potential::none;
  m.potential_scale = 1.0;
  auto r = solve_free_soliton(build_grid(gc, c.model.n), m, c.constraint.system, c.solver);
  if (!r.converged) throw NotConverged("soliton solver did not converge");
  return r.pair;
}

void cmd_evolve(const Ctx& x) {
  const auto& c = x.cfg;
  const auto& e = c.evolve;
  auto& h = x.rec.headline;
  FieldPair p0;
  std::optional<FieldPair> soliton;
  if (e.initial == "file") {
    p0 = read_snapshot(e.initial_file);
  } else if (e.initial == "gaussian") {
    auto g = build_grid(c.grid, c.model.n);
    p0 = zero_pair(g);
    auto x2 = g->coord_sq(g->all_axes());
    for (std::size_t i = 0; i < g->size(); ++i) {
      double f = e.amplitude * std::exp(-x2[i] / (2 * e.width * e.width));
      p0.u[i] = f;
      p0.v[i] = 0.5 * f;
    }
  } else if (e.initial == "soliton") {
    soliton = soliton_for(c, c.grid);
    p0 = *soliton;
    for (auto& z : p0.u) z *= e.amplitude;
    for (auto& z : p0.v) z *= e.amplitude;
  } else if (e.initial == "dilated") {
    GridConfig wide = c.grid;
    for (auto& a : wide.axes) a.half_extent *= e.lambda;
    soliton = soliton_for(c, wide);
    double mu = dilated_soliton_mu(*soliton, e.eps * mass_Q(*soliton));
    p0 = dilate_onto(*soliton, build_grid(c.grid, c.model.n), e.lambda, mu);
    h["dilated.mu"] = mu;
  } else {
    auto r = solve_configured(build_grid(c.grid, c.model.n), c);
    if (!r.converged) throw NotConverged("initial ground state did not converge");
    p0 = r.pair;
    h["initial.lambda1"] = r.lambda1;
    h["initial.lambda2"] = r.lambda2;
  }
  h["initial.E"] = energy_E(p0, c.model);
  h["initial.Q"] = mass_Q(p0);
  if (e.threshold_check) {
    if (!soliton) soliton = soliton_for(c, c.grid);
    auto t = global_threshold_check(p0, *soliton, c.model.n);
    h["threshold"] = to_json(t);
  }
  int k = 0;
  Observer obs;
  if (c.output.snapshot_stride > 0 && x.opt.write_files && wants(c, "nlsq")) {
    fs::create_directories(c.output.directory);
    obs = [&](double, const FieldPair& f) {
      if (k++ % c.output.snapshot_stride) return;
      auto path = x.prefix() + "-s" + std::to_string(k - 1) + ".nlsq";
      write_snapshot(path, f);
      x.rec.artifacts.push_back(path);
    };
  }
  auto ts = evolve(p0, c.model, e.cfg, obs);
  auto j = to_json(ts);
  for (auto it = j.begin(); it != j.end(); ++it) h[it.key()] = it.value();
  if (wants(c, "csv")) x.write(x.prefix() + ".csv", to_csv(ts));
  if (ts.verdict == Verdict::nan_abort || ts.verdict == Verdict::boundary_abort)
    throw std::runtime_error("evolution aborted: " + ts.message);
}

struct Bases {
  OscillatorBasis bu, bv;
};

Bases bases_for(const GridSpec& g, double kappa) {
  auto tg = transverse_grid_of(g);
  int d = tg->dimension();
  return {transverse_spectrum(1.0, d, tg, 2), transverse_spectrum(kappa, d, tg, 2)};
}

GroundStateResult reduced_for(const RunConfig& c, const GridSpec& g, const Bases& b, double mu1, double mu2) {
  auto [c1, c2] = reduced_coefficients(c.reduced_source, c.model.kappa, c.model.n, b.bu, b.bv);
  Reduced1DProblem p{c1, c2, c.model.kappa, mu1, mu2, axial_grid_of(g)};
  SolverConfig s = c.solver;
  s.initializer = Initializer::gaussian_product;
  return solve_reduced(p, s);
}

void cmd_reduce1d(const Ctx& x) {
  const auto& c = x.cfg;
  auto g = build_grid(c.grid, c.model.n);
  auto b = bases_for(*g, c.model.kappa);
  auto r = reduced_for(c, *g, b, c.constraint.spec.mu1, c.constraint.spec.mu2);
  auto& h = x.rec.headline;
  h["lambda_inf1"] = r.lambda1;
  h["lambda_inf2"] = r.lambda2;
  h["lambda_ratio"] = r.extra["lambda_ratio"];
  h["residual"] = r.extra["residual"];
  h["c1"] = r.extra["c1"];
  h["c2"] = r.extra["c2"];
  h["I"] = r.I;
  h["converged"] = r.converged;
  h["source"] = to_string(c.reduced_source);
  if (x.opt.write_files && wants(c, "nlsq")) {
    fs::create_directories(c.output.directory);
    write_snapshot(x.prefix() + ".nlsq", r.pair);
    x.rec.artifacts.push_back(x.prefix() + ".nlsq");
  }
  if (!r.converged) throw NotConverged("reduced solver did not converge");
}

void cmd_compare(const Ctx& x) {
  const auto& c = x.cfg;
  if (c.constraint.spec.kind != ConstraintSpec::Kind::product || c.constraint.kind != "product")
    throw std::invalid_argument("compare needs a product constraint");
  auto g = build_grid(c.grid, c.model.n);
  auto full = solve_groundstate(g, c.model, c.constraint.spec, c.solver);
  auto b = bases_for(*g, c.model.kappa);
  auto red = reduced_for(c, *g, b, c.constraint.spec.mu1, c.constraint.spec.mu2);
  auto rep = compare_full_vs_reduced(full, b.bu, b.bv, red);
  auto& h = x.rec.headline;
  h = to_json(rep);
  h["full.converged"] = full.converged;
  h["reduced.converged"] = red.converged;
  h["full.lambda1"] = full.lambda1;
  h["full.lambda2"] = full.lambda2;
  h["lambda_inf1"] = red.lambda1;
  h["lambda_inf2"] = red.lambda2;
  if (wants(c, "json")) x.write(x.prefix() + ".comparison.json", to_json(rep).dump(2));
  if (!full.converged || !red.converged) throw NotConverged("comparison solves did not converge");
}

void cmd_curve(const Ctx& x) {
  const auto& c = x.cfg;
  auto g = build_grid(c.grid, c.model.n);
  std::string csv = "t,N_t,lambda,K,converged\n";
  nlohmann::json rows = nlohmann::json::array();
  bool ok = true;
  char buf[256];
  for (double t : c.curve_t) {
    auto r = scaled_curve_point(g, c.model, t, c.solver);
    double N = curve_N_of_t(r.pair, c.model, t);
    double K = interaction_K(r.pair);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d\n", t, N, t, K, r.converged ? 1 : 0);
    csv += buf;
    rows.push_back({{"t", t}, {"N_t", N}, {"lambda", t}, {"K", K}, {"converged", r.converged}});
    ok = ok && r.converged;
  }
  x.rec.headline["rows"] = rows;
  if (wants(c, "csv")) x.write(x.prefix() + ".csv", csv);
  if (!ok) throw NotConverged("a curve point did not converge");
}

struct Point {
  RunConfig cfg;
  std::map<std::string, double> params;
};

std::vector<Point> make_points(const RunConfig& base) {
  std::vector<std::pair<std::string, std::vector<double>>> ranges;
  if (!base.sweep.mu.empty()) ranges.push_back({"mu", base.sweep.mu});
  if (!base.sweep.kappa.empty()) ranges.push_back({"kappa", base.sweep.kappa});
  if (!base.sweep.t.empty()) ranges.push_back({"t", base.sweep.t});
  if (!base.sweep.N.empty()) ranges.push_back({"N", base.sweep.N});
  std::vector<Point> out;
  if (ranges.empty()) return out;
  std::vector<std::size_t> idx(ranges.size(), 0);
  std::map<std::string, std::uint64_t> seen;
  for (std::uint64_t counter = 0;; ++counter) {
    Point p{base, {}};
    for (std::size_t r = 0; r < ranges.size(); ++r) {
      double v = ranges[r].second[idx[r]];
      p.params[ranges[r].first] = v;
      auto& k = p.cfg.constraint.spec;
      if (ranges[r].first == "mu") {
        if (k.kind == ConstraintSpec::Kind::product) k.mu1 = k.mu2 = v;
        else k.mu = v;
      } else if (ranges[r].first == "kappa") {
        p.cfg.model.kappa = v;
      } else if (ranges[r].first == "t") {
        p.cfg.curve_t = {v};
      } else {
        k.mu = v * v;
      }
    }
    // repeated tuples reuse the first counter, so they hash to the same run id
    std::string key;
    for (const auto& [name, v] : p.params) key += name + "=" + std::to_string(v) + ";";
    std::uint64_t child = seen.emplace(key, counter).first->second;
    p.cfg.seed = split_seed(base.seed, child);
    p.cfg.solver.seed = p.cfg.seed;
    p.cfg.sweep = SweepBlock{};
    out.push_back(std::move(p));
    std::size_t r = 0;
    for (; r < ranges.size(); ++r) {
      if (++idx[r] < ranges[r].second.size()) break;
      idx[r] = 0;
    }
    if (r == ranges.size()) break;
  }
  return out;
}

void cmd_sweep(const Ctx& x) {
  const auto& c = x.cfg;
  auto points = make_points(c);
  std::vector<ResultRecord> results(points.size());
  // identical configurations share a run id and are solved once
  std::map<std::string, std::size_t> first;
  std::vector<std::size_t> owner(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) owner[i] = first.emplace(run_id(points[i].cfg), i).first->second;
  std::atomic<std::size_t> next{0};
  RunOptions sub = x.opt;
  sub.quiet = true;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < points.size();)
      if (owner[i] == i) results[i] = run_command(c.sweep.command, points[i].cfg, sub);
  };
  int nt = std::max(1, std::min<int>(c.sweep.threads, static_cast<int>(points.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < points.size(); ++i)
    if (owner[i] != i) results[i] = results[owner[i]];

  std::set<std::string> cols;
  for (const auto& r : results)
    for (auto it = r.headline.begin(); it != r.headline.end(); ++it)
      if (it.value().is_number() || it.value().is_boolean()) cols.insert(it.key());
  std::string csv = "index,run_id,mu,kappa,t,N,exit_code";
  for (const auto& k : cols) csv += "," + k;
  csv += "\n";
  nlohmann::json rows = nlohmann::json::array();
  char buf[64];
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i].params;
    auto cell = [&](const char* k) {
      auto it = p.find(k);
      if (it == p.end()) return std::string();
      std::snprintf(buf, sizeof buf, "%.17g", it->second);
      return std::string(buf);
    };
    csv += std::to_string(i) + "," + results[i].run_id + "," + cell("mu") + "," + cell("kappa") + "," + cell("t") + "," +
           cell("N") + "," + std::to_string(results[i].exit_code);
    for (const auto& k : cols) {
      csv += ",";
      if (results[i].headline.contains(k)) {
        const auto& v = results[i].headline[k];
        if (v.is_boolean()) csv += v.get<bool>() ? "1" : "0";
        else {
          std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
          csv += buf;
        }
      }
    }
    csv += "\n";
    rows.push_back({{"params", p}, {"run_id", results[i].run_id}, {"exit_code", results[i].exit_code},
                    {"headline", results[i].headline}});
  }
  x.rec.headline["rows"] = rows;
  x.rec.headline["count"] = points.size();
  if (wants(c, "csv")) x.write(x.prefix() + ".csv", csv);
  int worst = exit_ok;
  for (const auto& r : results) worst = std::max(worst, r.exit_code);
  if (worst == exit_not_converged) throw NotConverged("some sweep points did not converge");
  if (worst != exit_ok) throw std::runtime_error("some sweep points failed");
}

}  // namespace

nlohmann::json ResultRecord::to_json() const {
  return {{"run_id", run_id},     {"command", command},     {"started", started},
          {"finished", finished}, {"config", config},       {"headline", headline},
          {"artifacts", artifacts}, {"exit_code", exit_code}, {"message", message}};
}

std::vector<RunConfig> sweep_points(const RunConfig& cfg) {
  std::vector<RunConfig> out;
  for (auto& p : make_points(cfg)) out.push_back(std::move(p.cfg));
  return out;
}

ResultRecord run_command(const std::string& command, const RunConfig& cfg, const RunOptions& opt) {
  ResultRecord rec;
  rec.command = command;
  rec.run_id = run_id(cfg);
  rec.config = to_json(cfg);
  rec.started = now_iso();
  Ctx x{cfg, opt, rec};
  try {
    if (command == "eigs") cmd_eigs(x);
    else if (command == "groundstate") cmd_groundstate(x);
    else if (command == "evolve") cmd_evolve(x);
    else if (command == "reduce1d") cmd_reduce1d(x);
    else if (command == "compare") cmd_compare(x);
    else if (command == "curve") cmd_curve(x);
    else if (command == "sweep") cmd_sweep(x);
    else throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const NotConverged& e) {
    rec.exit_code = exit_not_converged;
    rec.message = e.what();
  } catch (const std::invalid_argument& e) {
    rec.exit_code = exit_config;
    rec.message = e.what();
  } catch (const std::exception& e) {
    rec.exit_code = exit_abort;
    rec.message = e.what();
  }
  rec.finished = now_iso();
  if (opt.write_files) {
    auto path = x.prefix() + ".record.json";
    fs::create_directories(cfg.output.directory);
    rec.artifacts.push_back(path);
    atomic_write(path, rec.to_json().dump(2));
  }
  return rec;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"normalized solutions and dynamics of a quadratic NLS system"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
  app.add_option("--config", config_path, "INI configuration file")->required();
  app.add_option("--seed", seed, "top-level seed (overrides the file)");
  app.add_option("--out", out, "output directory (overrides the file)");
  app.add_flag("--quiet", quiet, "suppress progress and summaries");
  app.require_subcommand(1);
  for (const char* name : {"eigs", "groundstate", "evolve", "reduce1d", "curve", "sweep", "compare"})
    app.add_subcommand(name)->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_config;
  }
  std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg = load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.solver.seed = *seed;
    }
    if (out) cfg.output.directory = *out;
    RunOptions opt;
    opt.quiet = quiet;
    auto rec = run_command(command, cfg, opt);
    if (!quiet) std::printf("%s\n", rec.to_json().dump(2).c_str());
    if (rec.exit_code != exit_ok) std::fprintf(stderr, "%s: %s\n", command.c_str(), rec.message.c_str());
    return rec.exit_code;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_config;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_abort;
  }
}

}  // namespace nlsq
