// Application-layer behavior: configuration parsing and its diagnostics,
// the binary grid container and its sidecar, image rendering, manifest
// bookkeeping through run_command, and the command-line front end driven
// as a subprocess.

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nhim/commands.hpp"
#include "nhim/config.hpp"
#include "nhim/gridfile.hpp"
#include "nhim/image.hpp"
#include "nhim/ld.hpp"
#include "nhim/models.hpp"
#include "nhim/po.hpp"
#include "nhim/slice.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nhim;

namespace {

const IntegratorConfig kIcfg{};

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

/// Unique scratch directory for one test case, removed on scope exit.
struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("nhim_app_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), "cannot open " << p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  REQUIRE(f.good());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(f.good());
}

struct ToolRun {
  int code = -1;
  std::string text;
};

/// Runs the installed tool with the given argument string, capturing stdout
/// and stderr together. An optional prefix sets environment variables.
ToolRun run_tool(const std::string& args, const std::string& env_prefix = "") {
  const std::string cmd =
      env_prefix + std::string(NHIM_TOOL_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  ToolRun r;
  char buf[512];
  while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe))
    r.text.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// Small subcritical fixed-time map configuration; runs in milliseconds.
json tiny_ld_doc(int n = 12) {
  return json{
      {"command", "ld-map"},
      {"model", {{"kind", "barbanis2"}}},
      {"energy", {{"excess", -0.625}}},
      {"output", {{"directory", "artifacts"}, {"image", true}}},
      {"ld", {{"p_exponent", 0.5}, {"tau", 1.5}, {"mode", "fixed"}}},
      {"slices",
       json::array({{{"surface", "u_xpx"},
                     {"k", 0.0},
                     {"window", {{-4.0, 4.0}, {-4.0, 4.0}}},
                     {"resolution", {n, n}}}})}};
}

LdGrid small_grid() {
  const Barbanis2Dof m{};
  LdConfig lcfg;
  lcfg.p_exponent = 0.5;
  lcfg.tau = 1.0;
  lcfg.mode = LdMode::fixed_time;
  const SliceSpec sl = slice_u_xpx(0.0, {-4.0, 4.0}, {-4.0, 4.0});
  return compute_grid(m, sl, 14.5, lcfg, kIcfg, 9, 7);
}

}  // namespace

TEST_CASE("config: full document parses into typed sections") {
  const std::string text = R"({
    "command": "ld-map",
    "workers": 3,
    "model": {
      "kind": "barbanis2",
      "saddle": "top",
      "params": { "omega_x": 1.1, "omega_y": 1.3, "delta": -0.2 }
    },
    "energy": { "excess": -0.125 },
    "output": { "directory": "maps", "image": false },
    "integrator": {
      "rel_tol": 1e-12, "abs_tol": 1e-12, "max_step": 0.25,
      "escape_radius": 30.0, "max_time": 5000.0, "max_steps": 1000000
    },
    "ld": {
      "p_exponent": 0.4, "tau": 7.5, "mode": "variable",
      "saddle_region": [[3.5, 7.5], [-9.0, -5.0]], "escape_radius": 11.0
    },
    "slices": [
      { "surface": "u_xpx", "k": -7.1,
        "window": [[4.0, 7.0], [-0.8, 0.8]], "resolution": [150, 120] },
      { "surface": "u_xpx" }
    ],
    "po": {
      "seed_amplitude": 2e-4, "corrector_tol": 1e-11, "energy_tol": 1e-11,
      "max_corrector_iterations": 12, "max_family_steps": 99,
      "max_step_x": 0.05, "step_growth": 1.25, "orbit_samples": 51,
      "targets": [0.125, 0.375], "targets_are_excess": false
    },
    "manifold": {
      "displacement": 1e-5, "periods": 5.0, "fibers": 20,
      "samples_per_fiber": 101, "stability": "stable", "branch": -1
    },
    "psection": {
      "seeds": [10, 12], "max_crossings": 7, "max_time": 250.0,
      "time_direction": -1
    },
    "validate": {
      "ks": [-7.0, -7.2],
      "window": [[4.0, 7.0], [-0.8, 0.8]],
      "resolution": [150, 200]
    }
  })";
  const RunConfig cfg = parse_run_config(text, "inline");

  CHECK(cfg.command == "ld-map");
  CHECK(cfg.workers == 3u);
  CHECK(cfg.raw_text == text);

  CHECK(cfg.model.kind == "barbanis2");
  CHECK(cfg.model.saddle == "top");
  CHECK(cfg.model.p2.omega_x == 1.1);
  CHECK(cfg.model.p2.omega_y == 1.3);
  CHECK(cfg.model.p2.delta == -0.2);
  CHECK(parse_saddle_2d(cfg.model.saddle) == Barbanis2Dof::Saddle::top);

  REQUIRE(cfg.energy.has_value());
  CHECK(cfg.energy->kind == EnergySpec::Kind::excess);
  CHECK(cfg.energy->value == -0.125);

  CHECK(cfg.output.directory == "maps");
  CHECK(cfg.output.image == false);

  CHECK(cfg.integrator.rel_tol == 1e-12);
  CHECK(cfg.integrator.abs_tol == 1e-12);
  CHECK(cfg.integrator.max_step == 0.25);
  CHECK(cfg.integrator.escape_radius == 30.0);
  CHECK(cfg.integrator.max_time == 5000.0);
  CHECK(cfg.integrator.max_steps == 1000000u);

  CHECK(cfg.ld.p_exponent == 0.4);
  CHECK(cfg.ld.tau == 7.5);
  CHECK(cfg.ld.mode == LdMode::variable_time);
  CHECK(cfg.ld_region_given);
  REQUIRE(cfg.ld.saddle_region.size() == 2);
  CHECK(cfg.ld.saddle_region[0][0] == 3.5);
  CHECK(cfg.ld.saddle_region[1][1] == -5.0);
  CHECK(cfg.ld.escape_radius == 11.0);

  REQUIRE(cfg.slices.size() == 2);
  REQUIRE(cfg.slices[0].k.has_value());
  CHECK(*cfg.slices[0].k == -7.1);
  CHECK(cfg.slices[0].window[0][0] == 4.0);
  CHECK(cfg.slices[0].window[1][1] == 0.8);
  CHECK(cfg.slices[0].resolution[0] == 150);
  CHECK(cfg.slices[0].resolution[1] == 120);
  CHECK(!cfg.slices[1].k.has_value());
  CHECK(cfg.slices[1].window[0][0] == -6.0);
  CHECK(cfg.slices[1].resolution[0] == 300);

  CHECK(cfg.po.cc.seed_amplitude == 2e-4);
  CHECK(cfg.po.cc.corrector_tol == 1e-11);
  CHECK(cfg.po.cc.max_corrector_iterations == 12);
  CHECK(cfg.po.cc.max_family_steps == 99);
  CHECK(cfg.po.cc.max_step_x == 0.05);
  CHECK(cfg.po.cc.step_growth == 1.25);
  CHECK(cfg.po.cc.orbit_samples == 51u);
  REQUIRE(cfg.po.targets.size() == 2);
  CHECK(cfg.po.targets[1] == 0.375);
  CHECK(cfg.po.targets_are_excess == false);

  CHECK(cfg.manifold.both_stabilities == false);
  CHECK(cfg.manifold.mc.stability == Stability::stable);
  CHECK(cfg.manifold.both_branches == false);
  CHECK(cfg.manifold.mc.branch == -1);
  CHECK(cfg.manifold.mc.displacement == 1e-5);
  CHECK(cfg.manifold.mc.periods == 5.0);
  CHECK(cfg.manifold.mc.fibers == 20);
  CHECK(cfg.manifold.mc.samples_per_fiber == 101u);

  CHECK(cfg.psection.seeds[0] == 10);
  CHECK(cfg.psection.seeds[1] == 12);
  CHECK(cfg.psection.sc.max_crossings == 7);
  CHECK(cfg.psection.sc.max_time == 250.0);
  CHECK(cfg.psection.time_direction == -1);

  REQUIRE(cfg.validate_nhim.ks.size() == 2);
  CHECK(cfg.validate_nhim.ks[1] == -7.2);
  CHECK(cfg.validate_nhim.window[0][1] == 7.0);
  CHECK(cfg.validate_nhim.resolution[1] == 200);

  SUBCASE("energy resolves against the model's critical energy") {
    const Barbanis2Dof m{};
    const RunConfig t =
        parse_run_config(R"({"energy": {"total": 15.25}})", "inline");
    REQUIRE(t.energy.has_value());
    CHECK(t.energy->total_energy(m) == 15.25);
    const RunConfig x =
        parse_run_config(R"({"energy": {"excess": -0.125}})", "inline");
    REQUIRE(x.energy.has_value());
    CHECK(std::abs(x.energy->total_energy(m) - (critical_energy(m) - 0.125)) <
          1e-15);
  }

  SUBCASE("three-degree-of-freedom parameters and saddle names") {
    const RunConfig c = parse_run_config(R"({
      "model": {
        "kind": "contopoulos3",
        "saddle": "-x",
        "params": { "omega_x2": 0.9, "omega_y2": 1.7, "omega_z2": 1.1,
                    "epsilon": 0.25, "eta": 0.15 }
      }
    })",
                                         "inline");
    CHECK(c.model.kind == "contopoulos3");
    CHECK(c.model.p3.omega_x2 == 0.9);
    CHECK(c.model.p3.omega_y2 == 1.7);
    CHECK(c.model.p3.omega_z2 == 1.1);
    CHECK(c.model.p3.epsilon == 0.25);
    CHECK(c.model.p3.eta == 0.15);
    CHECK(parse_saddle_3d(c.model.saddle) ==
          Contopoulos3Dof::Saddle::negative_x);
    CHECK(parse_saddle_3d("") == Contopoulos3Dof::Saddle::positive_x);
    CHECK(parse_saddle_3d("+x") == Contopoulos3Dof::Saddle::positive_x);
    CHECK(parse_saddle_2d("") == Barbanis2Dof::Saddle::bottom);
    CHECK(parse_saddle_2d("bottom") == Barbanis2Dof::Saddle::bottom);
  }
}

TEST_CASE("config: diagnostics name the offending key") {
  auto parse = [](const char* text) { return parse_run_config(text, "inline"); };

  CHECK_THROWS_WITH_AS(parse("{nope"), doctest::Contains("is not valid JSON"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse("{nope"), doctest::Contains("inline"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"comand": "ld-map"})"),
                       doctest::Contains("unknown key 'comand'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"ld": {"tav": 1.0}})"),
                       doctest::Contains("unknown key 'ld.tav'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse(R"({"slices": [{"surface": "u_xpx"}, {"foo": 1}]})"),
      doctest::Contains("unknown key 'slices[1].foo'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"workers": "three"})"),
                       doctest::Contains("bad value for 'workers'"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(
      parse(R"({"energy": {"total": 1.0, "excess": 2.0}})"),
      doctest::Contains("exactly one of 'total' or 'excess'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"energy": {}})"),
                       doctest::Contains("exactly one of"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"model": {"kind": "pendulum"}})"),
                       doctest::Contains("model.kind must be"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse(R"({"slices": [{"surface": "u_xpx", "window": [[2, 2], [0, 1]]}]})"),
      doctest::Contains("bounds must satisfy lo < hi"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse(R"({"slices": [{"surface": "u_xpx", "window": [1, 2]}]})"),
      doctest::Contains("must be [[lo, hi], [lo, hi]]"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse(R"({"slices": [{"surface": "u_xpx", "resolution": [1, 4]}]})"),
      doctest::Contains("needs at least 2 nodes"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"slices": 5})"),
                       doctest::Contains("'slices' must be an array"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"slices": [{"surface": "u_qpq"}]})"),
                       doctest::Contains("surface' must be"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"ld": {"mode": "adaptive"}})"),
                       doctest::Contains("mode must be 'fixed' or 'variable'"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"ld": {"p_exponent": 1.5}})"),
                       doctest::Contains("p_exponent"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"integrator": {"rel_tol": -1.0}})"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"po": {"targets": "x"}})"),
                       doctest::Contains("'po.targets' must be a list"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"manifold": {"stability": "sideways"}})"),
                       doctest::Contains("manifold.stability must be"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"manifold": {"branch": 5}})"),
                       doctest::Contains("manifold.branch must be 1, -1 or 0"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(
      parse(R"({"psection": {"time_direction": 2}})"),
      doctest::Contains("psection.time_direction must be 1 or -1"),
      ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"validate": {"ks": "all"}})"),
                       doctest::Contains("'validate.ks' must be a list"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"output": {"directory": ""}})"),
                       doctest::Contains("output.directory must not be empty"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_saddle_2d("east"),
                       doctest::Contains("'bottom' or 'top'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_saddle_3d("up"),
                       doctest::Contains("'+x' or '-x'"), ConfigError);
  CHECK_THROWS_WITH_AS(load_run_config("/nonexistent/path/to/run.json"),
                       doctest::Contains("cannot open"), ConfigError);
}

TEST_CASE("grid files: byte-identical round trip with a required sidecar") {
  const TempDir td("grid");
  const LdGrid g = small_grid();

  // The window's corners sit outside the energy shell, so the container
  // must round-trip NaN records too.
  REQUIRE_FALSE(g.at(0, 0).on_shell);
  REQUIRE(g.at(4, 3).on_shell);

  const fs::path a = td.path / "a.ldg";
  write_grid(a.string(), g);
  REQUIRE(fs::exists(a));
  REQUIRE(fs::exists(td.path / "a.ldg.json"));

  const LdGrid r = read_grid(a.string());
  CHECK(r.n1 == g.n1);
  CHECK(r.n2 == g.n2);
  CHECK(same_bits(r.energy, g.energy));
  CHECK(r.slice.dof == g.slice.dof);
  CHECK(r.slice.sweep == g.slice.sweep);
  CHECK(r.slice.recover == g.slice.recover);
  CHECK(r.slice.fixed == g.slice.fixed);
  CHECK(same_bits(r.slice.lo[0], g.slice.lo[0]));
  CHECK(same_bits(r.slice.lo[1], g.slice.lo[1]));
  CHECK(same_bits(r.slice.hi[0], g.slice.hi[0]));
  CHECK(same_bits(r.slice.hi[1], g.slice.hi[1]));
  CHECK(r.slice.surface == g.slice.surface);
  CHECK(r.cfg.p_exponent == g.cfg.p_exponent);
  CHECK(r.cfg.tau == g.cfg.tau);
  CHECK(r.cfg.mode == g.cfg.mode);
  CHECK(r.cfg.escape_radius == g.cfg.escape_radius);
  CHECK(r.cfg.saddle_region == g.cfg.saddle_region);
  CHECK(r.model_kind == g.model_kind);

  auto sorted_params = [](std::vector<std::pair<std::string, double>> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(sorted_params(r.model_params) == sorted_params(g.model_params));

  REQUIRE(r.samples.size() == g.samples.size());
  for (std::size_t k = 0; k < g.samples.size(); ++k) {
    CAPTURE(k);
    const LdSample& x = g.samples[k];
    const LdSample& y = r.samples[k];
    CHECK(x.on_shell == y.on_shell);
    CHECK(x.flags == y.flags);
    CHECK(same_bits(x.forward, y.forward));
    CHECK(same_bits(x.backward, y.backward));
    CHECK(same_bits(x.tau_f, y.tau_f));
    CHECK(same_bits(x.tau_b, y.tau_b));
  }

  SUBCASE("re-writing a read grid reproduces both files byte for byte") {
    const fs::path b = td.path / "b.ldg";
    write_grid(b.string(), r);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(td.path / "a.ldg.json") == slurp(td.path / "b.ldg.json"));
  }

  SUBCASE("a missing sidecar is a hard error") {
    const fs::path c = td.path / "c.ldg";
    write_grid(c.string(), g);
    fs::remove(td.path / "c.ldg.json");
    CHECK_THROWS_WITH_AS(read_grid(c.string()),
                         doctest::Contains("missing sidecar"), ConfigError);
  }

  SUBCASE("payload damage is detected") {
    const std::string bytes = slurp(a);
    const std::string meta = slurp(td.path / "a.ldg.json");

    const fs::path t = td.path / "t.ldg";
    spit(t, bytes.substr(0, bytes.size() - 5));
    spit(td.path / "t.ldg.json", meta);
    CHECK_THROWS_WITH_AS(read_grid(t.string()),
                         doctest::Contains("truncated payload"), ConfigError);

    const fs::path x = td.path / "x.ldg";
    spit(x, bytes + "zz");
    spit(td.path / "x.ldg.json", meta);
    CHECK_THROWS_WITH_AS(read_grid(x.string()),
                         doctest::Contains("trailing bytes"), ConfigError);

    std::string wrong = bytes;
    wrong[0] = 'X';
    const fs::path w = td.path / "w.ldg";
    spit(w, wrong);
    spit(td.path / "w.ldg.json", meta);
    CHECK_THROWS_WITH_AS(read_grid(w.string()),
                         doctest::Contains("not a descriptor grid"),
                         ConfigError);

    std::string garbled = meta;
    garbled.erase(0, 1);
    const fs::path s = td.path / "s.ldg";
    spit(s, bytes);
    spit(td.path / "s.ldg.json", garbled);
    CHECK_THROWS_AS(read_grid(s.string()), ConfigError);
  }

  SUBCASE("inconsistent dimensions never reach the disk") {
    LdGrid bad;
    bad.n1 = 2;
    bad.n2 = 2;
    bad.samples.resize(3);
    CHECK_THROWS_AS(write_grid((td.path / "bad.ldg").string(), bad),
                    ConfigError);
    CHECK_FALSE(fs::exists(td.path / "bad.ldg.json"));
  }

  SUBCASE("reading a non-grid file fails cleanly") {
    const fs::path n = td.path / "n.ldg";
    spit(n, "definitely not a grid");
    CHECK_THROWS_WITH_AS(read_grid(n.string()),
                         doctest::Contains("not a descriptor grid"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(read_grid((td.path / "absent.ldg").string()),
                         doctest::Contains("cannot open"), ConfigError);
  }
}

TEST_CASE("images: fixed palette, exact geometry, off-shell gray") {
  const auto& ct = color_table();
  CHECK(ct.size() == 256);
  CHECK(ct[0] == std::array<std::uint8_t, 3>{68, 1, 84});
  CHECK(ct[128] == std::array<std::uint8_t, 3>{33, 145, 140});
  CHECK(ct[255] == std::array<std::uint8_t, 3>{253, 231, 37});

  const TempDir td("ppm");
  const LdGrid g = small_grid();
  const fs::path p = td.path / "m.ppm";
  write_ppm(p.string(), g);

  const std::string bytes = slurp(p);
  const std::string header = "P6\n9 7\n255\n";
  REQUIRE(bytes.size() == header.size() + 9 * 7 * 3);
  CHECK(bytes.compare(0, header.size(), header) == 0);

  // Node (0, 0) is off the shell; it renders light gray in the bottom
  // image row (rows are written top-down, largest v first).
  const std::size_t off =
      header.size() + ((g.n2 - 1 - 0) * g.n1 + 0) * 3;
  CHECK(static_cast<std::uint8_t>(bytes[off + 0]) == 230);
  CHECK(static_cast<std::uint8_t>(bytes[off + 1]) == 230);
  CHECK(static_cast<std::uint8_t>(bytes[off + 2]) == 230);

  SUBCASE("quantile bounds are validated") {
    ImageOptions opt;
    opt.quantile_lo = 0.5;
    opt.quantile_hi = 0.5;
    CHECK_THROWS_AS(write_ppm((td.path / "q.ppm").string(), g, opt),
                    ConfigError);
  }

  SUBCASE("escape marking changes no pixel on a trapped map") {
    ImageOptions opt;
    opt.mark_escaped = true;
    const fs::path q = td.path / "e.ppm";
    write_ppm(q.string(), g, opt);
    CHECK(slurp(q) == bytes);  // subcritical map has no escape flags
  }
}

TEST_CASE("run_command: manifest echoes the config and lists real outputs") {
  const TempDir td("run");
  const json doc = tiny_ld_doc();
  const RunConfig cfg = parse_run_config(doc.dump(2), "inline");

  CliOptions cli;
  cli.workers = 2;
  cli.out_dir = (td.path / "runA").string();
  run_command("ld-map", cfg, cli);

  const fs::path dir = td.path / "runA";
  REQUIRE(fs::exists(dir / "manifest.json"));
  const json man = json::parse(slurp(dir / "manifest.json"));
  CHECK(man.at("command") == "ld-map");
  CHECK(man.at("seed_only") == false);
  CHECK(man.at("workers") == 2);
  CHECK(!man.at("version").get<std::string>().empty());
  CHECK(man.at("elapsed_seconds").get<double>() >= 0.0);
  CHECK(man.at("config") == doc);

  const auto outputs = man.at("outputs").get<std::vector<std::string>>();
  REQUIRE(outputs.size() == 3);
  for (const std::string& name : outputs) {
    CAPTURE(name);
    CHECK(fs::exists(dir / name));
  }
  CHECK(std::count(outputs.begin(), outputs.end(), "slice0_u_xpx.ldg") == 1);
  CHECK(std::count(outputs.begin(), outputs.end(), "slice0_u_xpx.ldg.json") ==
        1);
  CHECK(std::count(outputs.begin(), outputs.end(), "slice0_u_xpx.ppm") == 1);

  const json& st = man.at("stats").at("slice0_u_xpx");
  CHECK(st.at("surface") == "u_xpx");
  CHECK(st.at("on_shell_nodes").get<std::size_t>() > 0);
  CHECK(st.at("forward_escapes").get<std::size_t>() == 0);  // subcritical
  CHECK(st.contains("nhim_count"));
  CHECK(st.contains("stable_curve_nodes"));  // fixed-time map

  const LdGrid g = read_grid((dir / "slice0_u_xpx.ldg").string());
  CHECK(g.n1 == 12);
  CHECK(g.n2 == 12);
  CHECK(g.model_kind == "barbanis2");

  SUBCASE("worker count does not change the written grid") {
    CliOptions one;
    one.workers = 1;
    one.out_dir = (td.path / "runB").string();
    run_command("ld-map", cfg, one);
    CHECK(slurp(dir / "slice0_u_xpx.ldg") ==
          slurp(td.path / "runB" / "slice0_u_xpx.ldg"));
  }

  SUBCASE("seed-only writes the manifest and no grids") {
    CliOptions seed;
    seed.seed_only = true;
    seed.out_dir = (td.path / "runC").string();
    run_command("ld-map", cfg, seed);
    const json m = json::parse(slurp(td.path / "runC" / "manifest.json"));
    CHECK(m.at("seed_only") == true);
    CHECK(m.at("outputs").empty());
    CHECK(m.at("stats").at("slice0_u_xpx").at("on_shell_nodes")
              .get<std::size_t>() > 0);
    CHECK_FALSE(fs::exists(td.path / "runC" / "slice0_u_xpx.ldg"));
  }

  SUBCASE("a config tagged for another command is rejected") {
    CliOptions c;
    c.out_dir = (td.path / "runD").string();
    CHECK_THROWS_WITH_AS(run_command("psection", cfg, c),
                         doctest::Contains("is tagged for command"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(
        run_command("bogus", parse_run_config("{}", "inline"), c),
        doctest::Contains("unknown command 'bogus'"), ConfigError);
  }

  SUBCASE("commands that need an energy say so") {
    json no_energy = doc;
    no_energy.erase("energy");
    const RunConfig c2 = parse_run_config(no_energy.dump(), "inline");
    CliOptions c;
    c.out_dir = (td.path / "runE").string();
    CHECK_THROWS_WITH_AS(run_command("ld-map", c2, c),
                         doctest::Contains("needs an 'energy' section"),
                         ConfigError);
  }
}

TEST_CASE("command line: exit codes, artifacts and bundled recipes") {
  const TempDir td("cli");

  SUBCASE("usage surface") {
    const ToolRun help = run_tool("--help");
    CHECK(help.code == 0);
    for (const char* name :
         {"ld-map", "po-family", "manifolds", "psection", "validate-nhim"})
      CHECK(help.text.find(name) != std::string::npos);

    CHECK(run_tool("").code == 2);            // a subcommand is required
    CHECK(run_tool("frobnicate").code == 2);  // unknown subcommand

    const ToolRun neither = run_tool("ld-map");
    CHECK(neither.code == 2);
    CHECK(neither.text.find("exactly one of --config or --recipe") !=
          std::string::npos);
    CHECK(run_tool("ld-map --config a.json --recipe detect_2dof").code == 2);
    CHECK(run_tool("ld-map --workers -4 --recipe detect_2dof").code == 2);

    const ToolRun missing = run_tool("ld-map --config /nonexistent/x.json");
    CHECK(missing.code == 2);
    CHECK(missing.text.find("config error:") != std::string::npos);
    CHECK(missing.text.find("cannot open") != std::string::npos);

    const fs::path bad = td.path / "bad.json";
    spit(bad, "{nope");
    const ToolRun invalid = run_tool("ld-map --config " + bad.string());
    CHECK(invalid.code == 2);
    CHECK(invalid.text.find("not valid JSON") != std::string::npos);
  }

  SUBCASE("a small map run produces the advertised artifacts") {
    json doc = tiny_ld_doc();
    doc["output"]["directory"] = (td.path / "from_config").string();
    const fs::path cfg = td.path / "tiny.json";
    spit(cfg, doc.dump(2));

    // No --out: the config's own directory is honored.
    const ToolRun r = run_tool("ld-map --config " + cfg.string());
    CHECK(r.code == 0);
    CHECK(fs::exists(td.path / "from_config" / "manifest.json"));
    CHECK(fs::exists(td.path / "from_config" / "slice0_u_xpx.ldg"));
    CHECK(fs::exists(td.path / "from_config" / "slice0_u_xpx.ppm"));

    // --out overrides it.
    const ToolRun o = run_tool("ld-map --config " + cfg.string() + " --out " +
                               (td.path / "override").string());
    CHECK(o.code == 0);
    CHECK(fs::exists(td.path / "override" / "manifest.json"));
    CHECK(slurp(td.path / "override" / "slice0_u_xpx.ldg") ==
          slurp(td.path / "from_config" / "slice0_u_xpx.ldg"));
  }

  SUBCASE("numerical failures exit with status 3") {
    json starved = tiny_ld_doc(6);
    starved["integrator"] = {{"max_steps", 40}};
    const fs::path cfg = td.path / "starved.json";
    spit(cfg, starved.dump());
    const ToolRun r = run_tool("ld-map --config " + cfg.string() + " --out " +
                               (td.path / "starved_out").string());
    CHECK(r.code == 3);
    CHECK(r.text.find("numerical error:") != std::string::npos);

    json offshell = tiny_ld_doc(6);
    offshell["slices"][0]["window"] = {{40.0, 44.0}, {40.0, 44.0}};
    const fs::path cfg2 = td.path / "offshell.json";
    spit(cfg2, offshell.dump());
    const ToolRun r2 = run_tool("ld-map --config " + cfg2.string() +
                                " --out " + (td.path / "offshell_out").string());
    CHECK(r2.code == 3);
    CHECK(r2.text.find("off the energy shell") != std::string::npos);
  }

  SUBCASE("return-map runs emit the crossing table") {
    const json doc = {
        {"command", "psection"},
        {"model", {{"kind", "barbanis2"}}},
        {"energy", {{"excess", -1.125}}},
        {"output", {{"directory", "unused"}}},
        {"slices",
         json::array({{{"surface", "u_xpx"},
                       {"k", 0.0},
                       {"window", {{-3.0, 3.0}, {-2.0, 2.0}}}}})},
        {"psection",
         {{"seeds", {4, 4}}, {"max_crossings", 2}, {"max_time", 50.0}}}};
    const fs::path cfg = td.path / "ps.json";
    spit(cfg, doc.dump(2));
    const fs::path out = td.path / "ps_out";
    const ToolRun r = run_tool("psection --config " + cfg.string() +
                               " --out " + out.string() + " --workers 1");
    CHECK(r.code == 0);
    const std::string csv = slurp(out / "crossings.csv");
    CHECK(csv.rfind("seed_id,n,t,x,p_x\n", 0) == 0);
    const json man = json::parse(slurp(out / "manifest.json"));
    CHECK(man.at("stats").at("crossings").get<std::size_t>() > 0);
  }

  SUBCASE("every bundled recipe passes its seed stage") {
    const std::vector<std::pair<std::string, std::string>> recipes = {
        {"ld-map", "map_subcritical"},
        {"ld-map", "map_supercritical"},
        {"ld-map", "detect_2dof"},
        {"ld-map", "detect_3dof"},
        {"psection", "section_subcritical"},
        {"psection", "psection_supercritical"},
        {"po-family", "po_family"},
        {"manifolds", "manifolds"},
        {"validate-nhim", "validate_nhim"}};
    for (const auto& [cmd, name] : recipes) {
      CAPTURE(name);
      const fs::path out = td.path / ("seed_" + name);
      const ToolRun r = run_tool(cmd + " --recipe " + name +
                                 " --seed-only --out " + out.string());
      CHECK_MESSAGE(r.code == 0, r.text);
      REQUIRE(fs::exists(out / "manifest.json"));
      const json man = json::parse(slurp(out / "manifest.json"));
      CHECK(man.at("command") == cmd);
      CHECK(man.at("seed_only") == true);
    }
  }

  SUBCASE("recipe lookup honors the environment override") {
    const ToolRun r = run_tool("ld-map --recipe detect_2dof --seed-only",
                               "NHIM_RECIPES=" + td.path.string() + " ");
    CHECK(r.code == 2);
    CHECK(r.text.find("cannot open") != std::string::npos);

    const ToolRun m = run_tool("po-family --recipe detect_2dof --seed-only --out " +
                               (td.path / "mismatch").string());
    CHECK(m.code == 2);
    CHECK(m.text.find("is tagged for command") != std::string::npos);
  }
}
