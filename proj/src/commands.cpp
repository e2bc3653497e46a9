#include "nhim/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "nhim/gridfile.hpp"
#include "nhim/image.hpp"

namespace nhim {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt17(double x) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", x);
  return b;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("output: cannot open '" + path.string() + "'");
  f << text;
  if (!f) throw ConfigError("output: write failed for '" + path.string() + "'");
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  write_text(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec)
    throw ConfigError("output: rename to '" + path.string() +
                      "' failed: " + ec.message());
}

/// Collects output names and statistics while a command runs; the manifest
/// itself lands last, via an atomic rename.
class Manifest {
 public:
  Manifest(const std::string& command, const RunConfig& cfg,
           const CliOptions& cli, fs::path dir, unsigned workers)
      : dir_(std::move(dir)), t0_(std::chrono::steady_clock::now()) {
    j_["version"] = NHIM_VERSION;
    j_["command"] = command;
    j_["seed_only"] = cli.seed_only;
    j_["workers"] = workers;
    j_["config"] = json::parse(cfg.raw_text);
    j_["outputs"] = json::array();
    j_["stats"] = json::object();
  }

  /// Registers an output name and returns its full path.
  fs::path emit(const std::string& name) {
    j_["outputs"].push_back(name);
    return dir_ / name;
  }

  /// Registers an output written by someone else (e.g. a grid sidecar).
  void record(const std::string& name) { j_["outputs"].push_back(name); }

  json& stats() { return j_["stats"]; }

  void write() {
    const auto dt = std::chrono::steady_clock::now() - t0_;
    j_["elapsed_seconds"] =
        std::chrono::duration_cast<std::chrono::duration<double>>(dt).count();
    write_text_atomic(dir_ / "manifest.json", j_.dump(2) + "\n");
  }

 private:
  json j_;
  fs::path dir_;
  std::chrono::steady_clock::time_point t0_;
};

unsigned resolve_workers(const RunConfig& cfg, const CliOptions& cli) {
  return cli.workers >= 0 ? static_cast<unsigned>(cli.workers) : cfg.workers;
}

fs::path resolve_dir(const RunConfig& cfg, const CliOptions& cli) {
  const fs::path dir =
      cli.out_dir.empty() ? fs::path(cfg.output.directory)
                          : fs::path(cli.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw ConfigError("output: cannot create directory '" + dir.string() +
                      "': " + ec.message());
  return dir;
}

template <HamiltonianModel M>
double required_energy(const RunConfig& cfg, const M& m, const char* cmd) {
  if (!cfg.energy)
    throw ConfigError(std::string("config: '") + cmd +
                      "' needs an 'energy' section");
  return cfg.energy->total_energy(m);
}

template <HamiltonianModel M, class Saddle>
LdConfig resolved_ld(const RunConfig& cfg, const M& m, Saddle which) {
  LdConfig l = cfg.ld;
  if (l.mode == LdMode::variable_time && l.saddle_region.empty()) {
    const auto eq = saddle_point(m, which);
    for (std::size_t i = 0; i < M::dof; ++i)
      l.saddle_region.push_back({eq.state[i] - 2.0, eq.state[i] + 2.0});
  }
  return l;
}

SliceSpec build_slice2(const SliceConfig& sc) {
  if (sc.surface != "u_xpx")
    throw ConfigError(
        "config: the two-degree-of-freedom model only exposes the u_xpx "
        "surface");
  if (!sc.k)
    throw ConfigError("config: 2-DoF slices need 'k' (the fixed y value)");
  return slice_u_xpx(*sc.k, sc.window[0], sc.window[1]);
}

SliceSpec build_slice3(const Equilibrium<Contopoulos3Dof>& eq,
                       const SliceConfig& sc) {
  if (sc.k)
    throw ConfigError(
        "config: 3-DoF slices pin the section at the saddle; remove 'k'");
  if (sc.surface == "u_xpx") return slice_u_xpx(eq, sc.window[0], sc.window[1]);
  if (sc.surface == "u_ypy") return slice_u_ypy(eq, sc.window[0], sc.window[1]);
  return slice_u_zpz(eq, sc.window[0], sc.window[1]);
}

json node_json(const LdGrid& g, const GridNode& n) {
  return {{"i", n.i}, {"j", n.j}, {"u", g.u_at(n.i)}, {"v", g.v_at(n.j)}};
}

template <HamiltonianModel M>
void process_slice(const M& m, const SliceSpec& sl, const SliceConfig& sc,
                   double e, const LdConfig& lcfg, const RunConfig& cfg,
                   const CliOptions& cli, unsigned workers, Manifest& man,
                   std::size_t idx) {
  const std::string base = "slice" + std::to_string(idx) + "_" + sl.surface;
  json st;
  st["surface"] = sl.surface;
  st["resolution"] = {sc.resolution[0], sc.resolution[1]};
  if (cli.seed_only) {
    std::size_t on = 0;
    for (std::size_t j = 0; j < sc.resolution[1]; ++j) {
      const double v = sl.lo[1] + (sl.hi[1] - sl.lo[1]) *
                                      static_cast<double>(j) /
                                      static_cast<double>(sc.resolution[1] - 1);
      for (std::size_t i = 0; i < sc.resolution[0]; ++i) {
        const double u =
            sl.lo[0] + (sl.hi[0] - sl.lo[0]) * static_cast<double>(i) /
                           static_cast<double>(sc.resolution[0] - 1);
        if (momentum_on_shell(m, sl, u, v, e)) ++on;
      }
    }
    st["on_shell_nodes"] = on;
    man.stats()[base] = st;
    return;
  }
  const LdGrid grid = compute_grid(m, sl, e, lcfg, cfg.integrator,
                                   sc.resolution[0], sc.resolution[1], workers);
  write_grid(man.emit(base + ".ldg").string(), grid);
  man.record(base + ".ldg.json");
  if (cfg.output.image) write_ppm(man.emit(base + ".ppm").string(), grid);

  std::size_t on = 0, esc_f = 0, esc_b = 0;
  for (const LdSample& s : grid.samples) {
    if (!s.on_shell) continue;
    ++on;
    if (s.flags & ld_flag_forward_escape) ++esc_f;
    if (s.flags & ld_flag_backward_escape) ++esc_b;
  }
  st["on_shell_nodes"] = on;
  st["forward_escapes"] = esc_f;
  st["backward_escapes"] = esc_b;
  const auto nhim = detect_nhim(grid);
  st["nhim_count"] = nhim.size();
  json nodes = json::array();
  for (std::size_t k = 0; k < nhim.size() && k < 16; ++k)
    nodes.push_back(node_json(grid, nhim[k]));
  st["nhim_nodes"] = nodes;
  if (lcfg.mode == LdMode::fixed_time) {
    st["stable_curve_nodes"] =
        detect_manifold_curves(grid, Stability::stable).size();
    st["unstable_curve_nodes"] =
        detect_manifold_curves(grid, Stability::unstable).size();
  }
  man.stats()[base] = st;
}

void cmd_ld_map(const RunConfig& cfg, const CliOptions& cli) {
  if (cfg.slices.empty())
    throw ConfigError("ld-map: config needs at least one slice");
  const unsigned workers = resolve_workers(cfg, cli);
  Manifest man("ld-map", cfg, cli, resolve_dir(cfg, cli), workers);
  if (cfg.model.kind == "barbanis2") {
    const Barbanis2Dof m(cfg.model.p2);
    const double e = required_energy(cfg, m, "ld-map");
    const auto saddle = parse_saddle_2d(cfg.model.saddle);
    const LdConfig lcfg = resolved_ld(cfg, m, saddle);
    std::size_t idx = 0;
    for (const SliceConfig& sc : cfg.slices)
      process_slice(m, build_slice2(sc), sc, e, lcfg, cfg, cli, workers, man,
                    idx++);
  } else {
    const Contopoulos3Dof m(cfg.model.p3);
    const double e = required_energy(cfg, m, "ld-map");
    const auto saddle = parse_saddle_3d(cfg.model.saddle);
    const auto eq = saddle_point(m, saddle);
    const LdConfig lcfg = resolved_ld(cfg, m, saddle);
    std::size_t idx = 0;
    for (const SliceConfig& sc : cfg.slices)
      process_slice(m, build_slice3(eq, sc), sc, e, lcfg, cfg, cli, workers,
                    man, idx++);
  }
  man.write();
}

void require_2dof(const RunConfig& cfg, const char* cmd) {
  if (cfg.model.kind != "barbanis2")
    throw ConfigError(std::string(cmd) +
                      ": only the two-degree-of-freedom model carries the "
                      "periodic-orbit toolkit");
}

void cmd_po_family(const RunConfig& cfg, const CliOptions& cli) {
  require_2dof(cfg, "po-family");
  const Barbanis2Dof m(cfg.model.p2);
  const auto saddle = parse_saddle_2d(cfg.model.saddle);
  if (cfg.po.targets.empty())
    throw ConfigError("po-family: 'po.targets' must list at least one energy");
  std::vector<double> targets;
  for (double t : cfg.po.targets)
    targets.push_back(cfg.po.targets_are_excess ? critical_energy(m) + t : t);
  const unsigned workers = resolve_workers(cfg, cli);
  Manifest man("po-family", cfg, cli, resolve_dir(cfg, cli), workers);
  man.stats()["targets"] = targets;
  if (cli.seed_only) {
    const auto g =
        seed_guess(m, saddle_point(m, saddle), cfg.po.cc.seed_amplitude);
    man.stats()["seed_state"] = {g.y[0], g.y[1], g.y[2], g.y[3]};
    man.write();
    return;
  }
  const auto orbits =
      continue_to_energies(m, cfg.po.cc, cfg.integrator, targets, saddle);
  std::ostringstream fam;
  fam << "index,energy,excess_energy,period,x0,y0,lambda1,"
         "corrector_iterations,closure_residual\n";
  for (std::size_t k = 0; k < orbits.size(); ++k) {
    const PeriodicOrbit& po = orbits[k];
    fam << k << ',' << fmt17(po.energy) << ','
        << fmt17(po.energy - critical_energy(m)) << ',' << fmt17(po.period)
        << ',' << fmt17(po.ic[0]) << ',' << fmt17(po.ic[1]) << ','
        << fmt17(std::abs(po.spectrum[0])) << ',' << po.corrector_iterations
        << ',' << fmt17(po.closure_residual) << '\n';
  }
  write_text(man.emit("family.csv"), fam.str());
  std::ostringstream orb;
  orb << "orbit,sample,t,x,y,px,py\n";
  for (std::size_t k = 0; k < orbits.size(); ++k)
    for (std::size_t s = 0; s < orbits[k].samples.size(); ++s) {
      const auto& y = orbits[k].samples[s];
      orb << k << ',' << s << ',' << fmt17(orbits[k].sample_t[s]) << ','
          << fmt17(y[0]) << ',' << fmt17(y[1]) << ',' << fmt17(y[2]) << ','
          << fmt17(y[3]) << '\n';
    }
  write_text(man.emit("orbits.csv"), orb.str());
  // Monotone in either direction; this family's periods shrink with energy.
  bool increasing = true;
  bool decreasing = true;
  for (std::size_t k = 1; k < orbits.size(); ++k) {
    if (!(orbits[k].period > orbits[k - 1].period)) increasing = false;
    if (!(orbits[k].period < orbits[k - 1].period)) decreasing = false;
  }
  double period_min = orbits.front().period;
  double period_max = period_min;
  for (const PeriodicOrbit& po : orbits) {
    period_min = std::min(period_min, po.period);
    period_max = std::max(period_max, po.period);
  }
  man.stats()["orbits"] = orbits.size();
  man.stats()["period_min"] = period_min;
  man.stats()["period_max"] = period_max;
  man.stats()["periods_monotone"] = increasing || decreasing;
  man.write();
}

void cmd_manifolds(const RunConfig& cfg, const CliOptions& cli) {
  require_2dof(cfg, "manifolds");
  const Barbanis2Dof m(cfg.model.p2);
  const auto saddle = parse_saddle_2d(cfg.model.saddle);
  const double e = required_energy(cfg, m, "manifolds");
  const unsigned workers = resolve_workers(cfg, cli);
  Manifest man("manifolds", cfg, cli, resolve_dir(cfg, cli), workers);
  std::vector<Stability> stabilities;
  if (cfg.manifold.both_stabilities)
    stabilities = {Stability::unstable, Stability::stable};
  else
    stabilities = {cfg.manifold.mc.stability};
  std::vector<int> branches;
  if (cfg.manifold.both_branches)
    branches = {+1, -1};
  else
    branches = {cfg.manifold.mc.branch};
  man.stats()["energy"] = e;
  if (cli.seed_only) {
    man.stats()["tubes_planned"] = stabilities.size() * branches.size();
    man.write();
    return;
  }
  const auto family = continue_family(m, cfg.po.cc, cfg.integrator, e, saddle);
  const PeriodicOrbit& po = family.back();
  man.stats()["orbit"] = {{"energy", po.energy},
                          {"period", po.period},
                          {"x0", po.ic[0]},
                          {"y0", po.ic[1]}};
  json tubes = json::array();
  for (Stability st : stabilities) {
    for (int br : branches) {
      ManifoldConfig mc = cfg.manifold.mc;
      mc.stability = st;
      mc.branch = br;
      const TubeManifold tube = globalize_manifold(m, po, mc, cfg.integrator,
                                                   workers);
      const std::string name =
          std::string(st == Stability::stable ? "stable" : "unstable") +
          (br > 0 ? "_plus" : "_minus");
      std::ostringstream csv;
      csv << "fiber,seed_time,sample,t,x,y,px,py\n";
      double max_dev = 0.0;
      for (std::size_t k = 0; k < tube.fibers.size(); ++k) {
        const Fiber& f = tube.fibers[k];
        max_dev = std::max(max_dev, std::abs(m.energy(f.seed) - e));
        for (std::size_t s = 0; s < f.path.size(); ++s) {
          const auto& y = f.path.y[s];
          csv << k << ',' << fmt17(f.seed_time) << ',' << s << ','
              << fmt17(f.path.t[s]) << ',' << fmt17(y[0]) << ',' << fmt17(y[1])
              << ',' << fmt17(y[2]) << ',' << fmt17(y[3]) << '\n';
        }
      }
      write_text(man.emit("fibers_" + name + ".csv"), csv.str());
      tubes.push_back({{"name", name},
                       {"fibers", tube.fibers.size()},
                       {"span", tube.span},
                       {"max_seed_energy_error", max_dev}});
    }
  }
  man.stats()["tubes"] = tubes;
  man.write();
}

void cmd_psection(const RunConfig& cfg, const CliOptions& cli) {
  require_2dof(cfg, "psection");
  const Barbanis2Dof m(cfg.model.p2);
  const double e = required_energy(cfg, m, "psection");
  if (cfg.slices.empty())
    throw ConfigError("psection: config needs one slice for the section");
  const SliceSpec sl = build_slice2(cfg.slices.front());
  const unsigned workers = resolve_workers(cfg, cli);
  Manifest man("psection", cfg, cli, resolve_dir(cfg, cli), workers);
  const auto seeds =
      seed_lattice(m, sl, e, cfg.psection.seeds[0], cfg.psection.seeds[1]);
  man.stats()["seeds"] = seeds.size();
  if (cli.seed_only) {
    man.write();
    return;
  }
  const auto run = run_section(m, e, sl, seeds, cfg.psection.sc,
                               cfg.integrator, cfg.psection.time_direction,
                               workers);
  std::ostringstream csv;
  csv << "seed_id,n,t,x,p_x\n";
  std::size_t total = 0, full = 0, none = 0;
  for (std::size_t k = 0; k < run.crossings.size(); ++k) {
    const auto& xs = run.crossings[k];
    total += xs.size();
    if (static_cast<int>(xs.size()) >= cfg.psection.sc.max_crossings) ++full;
    if (xs.empty()) ++none;
    for (std::size_t c = 0; c < xs.size(); ++c)
      csv << k << ',' << c << ',' << fmt17(xs[c].t) << ',' << fmt17(xs[c].u)
          << ',' << fmt17(xs[c].v) << '\n';
  }
  write_text(man.emit("crossings.csv"), csv.str());
  man.stats()["crossings"] = total;
  man.stats()["seeds_with_full_count"] = full;
  man.stats()["seeds_without_crossings"] = none;
  man.write();
}

void cmd_validate_nhim(const RunConfig& cfg, const CliOptions& cli) {
  require_2dof(cfg, "validate-nhim");
  const Barbanis2Dof m(cfg.model.p2);
  const auto saddle = parse_saddle_2d(cfg.model.saddle);
  const double e = required_energy(cfg, m, "validate-nhim");
  if (cfg.ld.mode != LdMode::variable_time)
    throw ConfigError("validate-nhim: ld.mode must be 'variable'");
  if (cfg.validate_nhim.ks.empty())
    throw ConfigError("validate-nhim: 'validate.ks' must list section values");
  const LdConfig lcfg = resolved_ld(cfg, m, saddle);
  const unsigned workers = resolve_workers(cfg, cli);
  Manifest man("validate-nhim", cfg, cli, resolve_dir(cfg, cli), workers);
  man.stats()["energy"] = e;
  man.stats()["ks"] = cfg.validate_nhim.ks;
  if (cli.seed_only) {
    man.write();
    return;
  }
  const auto family = continue_family(m, cfg.po.cc, cfg.integrator, e, saddle);
  const PeriodicOrbit& po = family.back();
  std::ostringstream csv;
  csv << "k,node_u,node_v,po_u,po_v,dist_cells\n";
  json slices = json::array();
  bool all_pass = true;
  const auto& res = cfg.validate_nhim.resolution;
  for (double k : cfg.validate_nhim.ks) {
    const SliceSpec sl = slice_u_xpx(k, cfg.validate_nhim.window[0],
                                     cfg.validate_nhim.window[1]);
    const LdGrid grid =
        compute_grid(m, sl, e, lcfg, cfg.integrator, res[0], res[1], workers);
    const auto nodes = detect_nhim(grid);
    const auto pts = po_slice_intersection(m, po, sl, cfg.integrator);
    double worst = 0.0;
    for (const GridNode& n : nodes) {
      double best = std::numeric_limits<double>::infinity();
      std::array<double, 2> nearest{};
      for (const auto& p : pts) {
        const double d =
            std::max(std::abs(grid.u_at(n.i) - p[0]) / grid.cell_du(),
                     std::abs(grid.v_at(n.j) - p[1]) / grid.cell_dv());
        if (d < best) {
          best = d;
          nearest = p;
        }
      }
      worst = std::max(worst, best);
      csv << fmt17(k) << ',' << fmt17(grid.u_at(n.i)) << ','
          << fmt17(grid.v_at(n.j)) << ',' << fmt17(nearest[0]) << ','
          << fmt17(nearest[1]) << ',' << fmt17(best) << '\n';
    }
    const bool pass = !nodes.empty() && worst <= 1.0 + 1e-9;
    all_pass = all_pass && pass;
    slices.push_back({{"k", k},
                      {"nhim_count", nodes.size()},
                      {"po_crossings", pts.size()},
                      {"max_dist_cells", worst},
                      {"pass", pass}});
  }
  write_text(man.emit("validate.csv"), csv.str());
  man.stats()["slices"] = slices;
  man.stats()["pass"] = all_pass;
  man.write();
}

}  // namespace

void run_command(const std::string& command, const RunConfig& cfg,
                 const CliOptions& cli) {
  if (!cfg.command.empty() && cfg.command != command)
    throw ConfigError("config: file is tagged for command '" + cfg.command +
                      "' but '" + command + "' was invoked");
  if (command == "ld-map")
    cmd_ld_map(cfg, cli);
  else if (command == "po-family")
    cmd_po_family(cfg, cli);
  else if (command == "manifolds")
    cmd_manifolds(cfg, cli);
  else if (command == "psection")
    cmd_psection(cfg, cli);
  else if (command == "validate-nhim")
    cmd_validate_nhim(cfg, cli);
  else
    throw ConfigError("unknown command '" + command + "'");
}

}  // namespace nhim
