#include "nhim/gridfile.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <vector>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "grid files are little-endian; big-endian hosts need a swap "
              "layer");

namespace nhim {

namespace {

using nlohmann::json;

json slice_to_json(const SliceSpec& sl) {
  json fixed = json::array();
  for (const auto& [idx, val] : sl.fixed) fixed.push_back({idx, val});
  return {{"dof", sl.dof},
          {"sweep", {sl.sweep[0], sl.sweep[1]}},
          {"recover", sl.recover},
          {"fixed", fixed},
          {"lo", {sl.lo[0], sl.lo[1]}},
          {"hi", {sl.hi[0], sl.hi[1]}},
          {"surface", sl.surface}};
}

SliceSpec slice_from_json(const json& j) {
  SliceSpec sl;
  sl.dof = j.at("dof").get<std::size_t>();
  sl.sweep = {j.at("sweep").at(0).get<std::size_t>(),
              j.at("sweep").at(1).get<std::size_t>()};
  sl.recover = j.at("recover").get<std::size_t>();
  for (const auto& f : j.at("fixed"))
    sl.fixed.emplace_back(f.at(0).get<std::size_t>(), f.at(1).get<double>());
  sl.lo = {j.at("lo").at(0).get<double>(), j.at("lo").at(1).get<double>()};
  sl.hi = {j.at("hi").at(0).get<double>(), j.at("hi").at(1).get<double>()};
  sl.surface = j.at("surface").get<std::string>();
  return sl;
}

json ld_to_json(const LdConfig& cfg) {
  json region = json::array();
  for (const auto& b : cfg.saddle_region) region.push_back({b[0], b[1]});
  return {{"p_exponent", cfg.p_exponent},
          {"tau", cfg.tau},
          {"mode", to_string(cfg.mode)},
          {"saddle_region", region},
          {"escape_radius", cfg.escape_radius}};
}

LdConfig ld_from_json(const json& j) {
  LdConfig cfg;
  cfg.p_exponent = j.at("p_exponent").get<double>();
  cfg.tau = j.at("tau").get<double>();
  cfg.mode = parse_ld_mode(j.at("mode").get<std::string>());
  cfg.saddle_region.clear();
  for (const auto& b : j.at("saddle_region"))
    cfg.saddle_region.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  cfg.escape_radius = j.at("escape_radius").get<double>();
  return cfg;
}

std::string sidecar_path(const std::string& path) { return path + ".json"; }

}  // namespace

void write_grid(const std::string& path, const LdGrid& g) {
  if (g.n1 < 1 || g.n2 < 1 || g.samples.size() != g.n1 * g.n2)
    throw ConfigError("write_grid: inconsistent grid dimensions");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("write_grid: cannot open '" + path + "'");
  f.write("LDG1", 4);
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(g.n1),
                                 static_cast<std::uint32_t>(g.n2)};
  f.write(reinterpret_cast<const char*>(dims), sizeof dims);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const LdSample& s : g.samples) {
    double rec[5];
    if (s.on_shell) {
      rec[0] = s.forward;
      rec[1] = s.backward;
      rec[2] = s.tau_f;
      rec[3] = s.tau_b;
      rec[4] = static_cast<double>(s.flags);
    } else {
      for (double& r : rec) r = nan;
    }
    f.write(reinterpret_cast<const char*>(rec), sizeof rec);
  }
  if (!f) throw ConfigError("write_grid: write failed for '" + path + "'");
  f.close();

  json params = json::object();
  for (const auto& [name, value] : g.model_params) params[name] = value;
  const json meta = {{"format", "LDG1"},
                     {"energy", g.energy},
                     {"ld", ld_to_json(g.cfg)},
                     {"model", {{"kind", g.model_kind}, {"params", params}}},
                     {"slice", slice_to_json(g.slice)}};
  std::ofstream sf(sidecar_path(path), std::ios::trunc);
  if (!sf)
    throw ConfigError("write_grid: cannot open '" + sidecar_path(path) + "'");
  sf << meta.dump(2) << '\n';
  if (!sf)
    throw ConfigError("write_grid: write failed for '" + sidecar_path(path) +
                      "'");
}

LdGrid read_grid(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("read_grid: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "LDG1")
    throw ConfigError("read_grid: '" + path + "' is not a descriptor grid");
  std::uint32_t dims[2];
  f.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!f || dims[0] < 1 || dims[1] < 1)
    throw ConfigError("read_grid: bad dimensions in '" + path + "'");

  LdGrid g;
  g.n1 = dims[0];
  g.n2 = dims[1];
  g.samples.resize(static_cast<std::size_t>(dims[0]) * dims[1]);
  for (LdSample& s : g.samples) {
    double rec[5];
    f.read(reinterpret_cast<char*>(rec), sizeof rec);
    if (!f) throw ConfigError("read_grid: truncated payload in '" + path + "'");
    s.forward = rec[0];
    s.backward = rec[1];
    s.tau_f = rec[2];
    s.tau_b = rec[3];
    s.on_shell = !std::isnan(rec[4]);
    s.flags = s.on_shell ? static_cast<std::uint32_t>(rec[4]) : 0u;
  }
  char extra;
  if (f.read(&extra, 1))
    throw ConfigError("read_grid: trailing bytes in '" + path + "'");

  std::ifstream sf(sidecar_path(path));
  if (!sf)
    throw ConfigError("read_grid: missing sidecar '" + sidecar_path(path) +
                      "'");
  json meta;
  try {
    sf >> meta;
    if (meta.at("format").get<std::string>() != "LDG1")
      throw ConfigError("read_grid: sidecar format mismatch");
    g.energy = meta.at("energy").get<double>();
    g.cfg = ld_from_json(meta.at("ld"));
    g.slice = slice_from_json(meta.at("slice"));
    g.model_kind = meta.at("model").at("kind").get<std::string>();
    const auto& params = meta.at("model").at("params");
    for (auto it = params.begin(); it != params.end(); ++it)
      g.model_params.emplace_back(it.key(), it.value().get<double>());
  } catch (const json::exception& e) {
    throw ConfigError("read_grid: bad sidecar '" + sidecar_path(path) +
                      "': " + e.what());
  }
  return g;
}

}  // namespace nhim
