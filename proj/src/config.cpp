#include "nhim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nhim {

namespace {

using nlohmann::json;

/// Tracks which keys of one JSON object were consumed and reports the rest.
class ObjReader {
 public:
  ObjReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError("config: '" + path_ + "' must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* sub(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  template <class T>
  T require(const char* key) {
    if (!j_.contains(key))
      throw ConfigError("config: missing key '" + join(key) + "'");
    return fetch<T>(key);
  }

  template <class T>
  T get(const char* key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return fetch<T>(key);
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError("config: unknown key '" + join(it.key()) + "'");
  }

  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  template <class T>
  T fetch(const char* key) {
    seen_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad value for '" + join(key) + "'");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::array<std::array<double, 2>, 2> read_window(const json& j,
                                                 const std::string& where) {
  try {
    auto w = j.get<std::array<std::array<double, 2>, 2>>();
    for (const auto& b : w)
      if (!(b[0] < b[1]))
        throw ConfigError("config: '" + where +
                          "' bounds must satisfy lo < hi");
    return w;
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where +
                      "' must be [[lo, hi], [lo, hi]]");
  }
}

std::array<std::size_t, 2> read_resolution(const json& j,
                                           const std::string& where) {
  try {
    auto r = j.get<std::array<std::size_t, 2>>();
    if (r[0] < 2 || r[1] < 2)
      throw ConfigError("config: '" + where + "' needs at least 2 nodes");
    return r;
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + "' must be [n1, n2]");
  }
}

void parse_model(ObjReader& top, RunConfig& cfg) {
  const json* mj = top.sub("model");
  if (!mj) return;
  ObjReader m(*mj, "model");
  cfg.model.kind = m.get<std::string>("kind", cfg.model.kind);
  if (cfg.model.kind != "barbanis2" && cfg.model.kind != "contopoulos3")
    throw ConfigError(
        "config: model.kind must be 'barbanis2' or 'contopoulos3'");
  cfg.model.saddle = m.get<std::string>("saddle", "");
  if (const json* pj = m.sub("params")) {
    if (cfg.model.kind == "barbanis2") {
      ObjReader p(*pj, "model.params");
      cfg.model.p2.omega_x = p.get("omega_x", cfg.model.p2.omega_x);
      cfg.model.p2.omega_y = p.get("omega_y", cfg.model.p2.omega_y);
      cfg.model.p2.delta = p.get("delta", cfg.model.p2.delta);
      p.done();
    } else {
      ObjReader p(*pj, "model.params");
      cfg.model.p3.omega_x2 = p.get("omega_x2", cfg.model.p3.omega_x2);
      cfg.model.p3.omega_y2 = p.get("omega_y2", cfg.model.p3.omega_y2);
      cfg.model.p3.omega_z2 = p.get("omega_z2", cfg.model.p3.omega_z2);
      cfg.model.p3.epsilon = p.get("epsilon", cfg.model.p3.epsilon);
      cfg.model.p3.eta = p.get("eta", cfg.model.p3.eta);
      p.done();
    }
  }
  m.done();
}

void parse_energy(ObjReader& top, RunConfig& cfg) {
  const json* ej = top.sub("energy");
  if (!ej) return;
  ObjReader e(*ej, "energy");
  const bool has_total = e.has("total");
  const bool has_excess = e.has("excess");
  if (has_total == has_excess)
    throw ConfigError(
        "config: energy needs exactly one of 'total' or 'excess'");
  EnergySpec spec;
  if (has_total) {
    spec.kind = EnergySpec::Kind::total;
    spec.value = e.require<double>("total");
  } else {
    spec.kind = EnergySpec::Kind::excess;
    spec.value = e.require<double>("excess");
  }
  cfg.energy = spec;
  e.done();
}

void parse_integrator(ObjReader& top, RunConfig& cfg) {
  const json* ij = top.sub("integrator");
  if (!ij) return;
  ObjReader i(*ij, "integrator");
  cfg.integrator.rel_tol = i.get("rel_tol", cfg.integrator.rel_tol);
  cfg.integrator.abs_tol = i.get("abs_tol", cfg.integrator.abs_tol);
  cfg.integrator.max_step = i.get("max_step", cfg.integrator.max_step);
  cfg.integrator.escape_radius =
      i.get("escape_radius", cfg.integrator.escape_radius);
  cfg.integrator.max_time = i.get("max_time", cfg.integrator.max_time);
  cfg.integrator.max_steps = i.get("max_steps", cfg.integrator.max_steps);
  i.done();
  validate(cfg.integrator);
}

void parse_ld(ObjReader& top, RunConfig& cfg) {
  const json* lj = top.sub("ld");
  if (!lj) return;
  ObjReader l(*lj, "ld");
  cfg.ld.p_exponent = l.get("p_exponent", cfg.ld.p_exponent);
  cfg.ld.tau = l.get("tau", cfg.ld.tau);
  if (l.has("mode")) cfg.ld.mode = parse_ld_mode(l.require<std::string>("mode"));
  if (const json* rj = l.sub("saddle_region")) {
    cfg.ld_region_given = true;
    cfg.ld.saddle_region.clear();
    try {
      for (const auto& b : *rj)
        cfg.ld.saddle_region.push_back(
            {b.at(0).get<double>(), b.at(1).get<double>()});
    } catch (const json::exception&) {
      throw ConfigError(
          "config: 'ld.saddle_region' must be a list of [lo, hi] pairs");
    }
  }
  cfg.ld.escape_radius = l.get("escape_radius", cfg.ld.escape_radius);
  l.done();
  validate(cfg.ld);
}

void parse_slices(ObjReader& top, RunConfig& cfg) {
  const json* sj = top.sub("slices");
  if (!sj) return;
  if (!sj->is_array())
    throw ConfigError("config: 'slices' must be an array");
  std::size_t idx = 0;
  for (const auto& one : *sj) {
    const std::string where = "slices[" + std::to_string(idx) + "]";
    ObjReader s(one, where);
    SliceConfig sc;
    sc.surface = s.get<std::string>("surface", sc.surface);
    if (sc.surface != "u_xpx" && sc.surface != "u_ypy" &&
        sc.surface != "u_zpz")
      throw ConfigError("config: '" + where +
                        ".surface' must be u_xpx, u_ypy or u_zpz");
    if (s.has("k")) sc.k = s.require<double>("k");
    if (const json* wj = s.sub("window"))
      sc.window = read_window(*wj, where + ".window");
    if (const json* rj = s.sub("resolution"))
      sc.resolution = read_resolution(*rj, where + ".resolution");
    s.done();
    cfg.slices.push_back(sc);
    ++idx;
  }
}

void parse_po(ObjReader& top, RunConfig& cfg) {
  const json* pj = top.sub("po");
  if (!pj) return;
  ObjReader p(*pj, "po");
  ContinuationConfig& cc = cfg.po.cc;
  cc.seed_amplitude = p.get("seed_amplitude", cc.seed_amplitude);
  cc.corrector_tol = p.get("corrector_tol", cc.corrector_tol);
  cc.energy_tol = p.get("energy_tol", cc.energy_tol);
  cc.max_corrector_iterations =
      p.get("max_corrector_iterations", cc.max_corrector_iterations);
  cc.max_family_steps = p.get("max_family_steps", cc.max_family_steps);
  cc.max_step_x = p.get("max_step_x", cc.max_step_x);
  cc.step_growth = p.get("step_growth", cc.step_growth);
  cc.orbit_samples = p.get("orbit_samples", cc.orbit_samples);
  if (const json* tj = p.sub("targets")) {
    try {
      cfg.po.targets = tj->get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError("config: 'po.targets' must be a list of numbers");
    }
  }
  cfg.po.targets_are_excess =
      p.get("targets_are_excess", cfg.po.targets_are_excess);
  p.done();
  validate(cc);
}

void parse_manifold(ObjReader& top, RunConfig& cfg) {
  const json* mj = top.sub("manifold");
  if (!mj) return;
  ObjReader m(*mj, "manifold");
  ManifoldConfig& mc = cfg.manifold.mc;
  mc.displacement = m.get("displacement", mc.displacement);
  mc.periods = m.get("periods", mc.periods);
  mc.fibers = m.get("fibers", mc.fibers);
  mc.samples_per_fiber = m.get("samples_per_fiber", mc.samples_per_fiber);
  const std::string stab = m.get<std::string>("stability", "both");
  if (stab == "stable")
    mc.stability = Stability::stable;
  else if (stab == "unstable")
    mc.stability = Stability::unstable;
  else if (stab == "both")
    cfg.manifold.both_stabilities = true;
  else
    throw ConfigError(
        "config: manifold.stability must be 'stable', 'unstable' or 'both'");
  const int branch = m.get("branch", 0);
  if (branch == 0)
    cfg.manifold.both_branches = true;
  else if (branch == 1 || branch == -1)
    mc.branch = branch;
  else
    throw ConfigError("config: manifold.branch must be 1, -1 or 0 (both)");
  m.done();
  validate(mc);
}

void parse_psection(ObjReader& top, RunConfig& cfg) {
  const json* pj = top.sub("psection");
  if (!pj) return;
  ObjReader p(*pj, "psection");
  cfg.psection.sc.max_crossings =
      p.get("max_crossings", cfg.psection.sc.max_crossings);
  cfg.psection.sc.max_time = p.get("max_time", cfg.psection.sc.max_time);
  if (const json* sj = p.sub("seeds"))
    cfg.psection.seeds = read_resolution(*sj, "psection.seeds");
  cfg.psection.time_direction =
      p.get("time_direction", cfg.psection.time_direction);
  if (cfg.psection.time_direction != 1 && cfg.psection.time_direction != -1)
    throw ConfigError("config: psection.time_direction must be 1 or -1");
  p.done();
  validate(cfg.psection.sc);
}

void parse_validate(ObjReader& top, RunConfig& cfg) {
  const json* vj = top.sub("validate");
  if (!vj) return;
  ObjReader v(*vj, "validate");
  if (const json* kj = v.sub("ks")) {
    try {
      cfg.validate_nhim.ks = kj->get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError("config: 'validate.ks' must be a list of numbers");
    }
  }
  if (const json* wj = v.sub("window"))
    cfg.validate_nhim.window = read_window(*wj, "validate.window");
  if (const json* rj = v.sub("resolution"))
    cfg.validate_nhim.resolution =
        read_resolution(*rj, "validate.resolution");
  v.done();
}

void parse_output(ObjReader& top, RunConfig& cfg) {
  const json* oj = top.sub("output");
  if (!oj) return;
  ObjReader o(*oj, "output");
  cfg.output.directory = o.get<std::string>("directory", cfg.output.directory);
  cfg.output.image = o.get("image", cfg.output.image);
  o.done();
  if (cfg.output.directory.empty())
    throw ConfigError("config: output.directory must not be empty");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text,
                           const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + origin + " is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  cfg.raw_text = json_text;
  ObjReader top(j, "");
  cfg.command = top.get<std::string>("command", "");
  cfg.workers = top.get("workers", cfg.workers);
  parse_model(top, cfg);
  parse_energy(top, cfg);
  parse_output(top, cfg);
  parse_integrator(top, cfg);
  parse_ld(top, cfg);
  parse_slices(top, cfg);
  parse_po(top, cfg);
  parse_manifold(top, cfg);
  parse_psection(top, cfg);
  parse_validate(top, cfg);
  top.done();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), "'" + path + "'");
}

Barbanis2Dof::Saddle parse_saddle_2d(const std::string& s) {
  if (s.empty() || s == "bottom") return Barbanis2Dof::Saddle::bottom;
  if (s == "top") return Barbanis2Dof::Saddle::top;
  throw ConfigError("config: model.saddle must be 'bottom' or 'top'");
}

Contopoulos3Dof::Saddle parse_saddle_3d(const std::string& s) {
  if (s.empty() || s == "+x") return Contopoulos3Dof::Saddle::positive_x;
  if (s == "-x") return Contopoulos3Dof::Saddle::negative_x;
  throw ConfigError("config: model.saddle must be '+x' or '-x'");
}

}  // namespace nhim
