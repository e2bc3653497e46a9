#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "nhim/errors.hpp"
#include "nhim/integrate.hpp"
#include "nhim/models.hpp"
#include "nhim/psection.hpp"
#include "nhim/slice.hpp"

using namespace nhim;

namespace {

const IntegratorConfig kIcfg{};

}  // namespace

TEST_CASE("seed_lattice keeps exactly the nodes the shell reaches") {
  const Barbanis2Dof m;
  const double e = 14.5;
  const auto sl = slice_u_xpx(0.0, {-4.0, 4.0}, {-4.0, 4.0});

  const auto seeds = seed_lattice(m, sl, e, 9, 9);
  std::size_t expected = 0;
  for (std::size_t j = 0; j < 9; ++j)
    for (std::size_t i = 0; i < 9; ++i) {
      const double u = -4.0 + 8.0 * static_cast<double>(i) / 8.0;
      const double v = -4.0 + 8.0 * static_cast<double>(j) / 8.0;
      if (momentum_on_shell(m, sl, u, v, e)) ++expected;
    }
  CHECK(seeds.size() == expected);
  CHECK(seeds.size() < 81);
  CHECK(seeds.size() > 20);

  for (const auto& s : seeds) {
    CHECK(s[1] == 0.0);
    CHECK(s[3] > 0.0);
    CHECK(std::abs(m.energy(s) - e) < 1e-12);
  }

  CHECK_THROWS_AS(seed_lattice(m, sl, e, 1, 9), ConfigError);

  // The 3-DoF builder pins two coordinates and one momentum.
  const Contopoulos3Dof m3;
  const auto eq3 = equilibria(m3)[1];
  const auto sl3 = slice_u_xpx(eq3, {9.0, 12.0}, {-0.7, 0.7});
  const auto seeds3 = seed_lattice(m3, sl3, 24.0, 7, 7);
  CHECK_FALSE(seeds3.empty());
  for (const auto& s : seeds3) {
    CHECK(s[1] == eq3.state[1]);
    CHECK(s[2] == eq3.state[2]);
    CHECK(s[4] == 0.0);
    CHECK(s[5] > 0.0);
    CHECK(std::abs(m3.energy(s) - 24.0) < 1e-12);
  }
}

TEST_CASE("trapped seeds fill the crossing budget with monotone times") {
  const Barbanis2Dof m;
  const double e = 14.0;
  const auto sl = slice_u_xpx(0.0, {-3.0, 3.0}, {-2.0, 2.0});
  const auto seeds = seed_lattice(m, sl, e, 5, 5);
  REQUIRE(seeds.size() > 10);

  SectionConfig scfg;
  scfg.max_crossings = 8;
  const auto run = run_section(m, e, sl, seeds, scfg, kIcfg);
  CHECK(run.energy == e);
  CHECK(run.seeds.size() == seeds.size());
  REQUIRE(run.crossings.size() == seeds.size());

  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const auto& xs = run.crossings[k];
    // Below the saddle energy nothing escapes, so every seed reaches the
    // crossing cap well inside the default time budget.
    CHECK(xs.size() == 8);
    for (std::size_t c = 0; c < xs.size(); ++c) {
      CHECK(std::isfinite(xs[c].u));
      CHECK(std::isfinite(xs[c].v));
      CHECK(xs[c].t > 0.0);
      if (c > 0) CHECK(xs[c].t > xs[c - 1].t);
    }
  }

  // The first recorded crossing is exactly what a direct event search from
  // the same seed produces; identical configuration, identical arithmetic.
  const Event ev{1, 0.0, +1};
  const auto hit = try_integrate_to_event(m, {seeds[3], 0.0}, ev, kIcfg);
  REQUIRE(hit.found);
  CHECK(run.crossings[3][0].t == hit.state.t);
  CHECK(run.crossings[3][0].u == hit.state.y[0]);
  CHECK(run.crossings[3][0].v == hit.state.y[2]);
}

TEST_CASE("backward runs mirror forward runs from the reversed seed") {
  const Barbanis2Dof m;
  const double e = 14.0;
  const auto sl = slice_u_xpx(0.0, {-3.0, 3.0}, {-2.0, 2.0});
  const auto seeds = seed_lattice(m, sl, e, 3, 3);
  REQUIRE_FALSE(seeds.empty());

  // Crossings carry positive physical section velocity in either run
  // direction, so the symmetry that pairs them must fix that sign: the
  // composition of time reversal with the y-reflection maps (x, 0, px, py)
  // to (x, 0, -px, py), and the backward run from z retraces the forward
  // run from the mapped seed under (t, x, p_x) -> (-t, x, -p_x).
  std::vector<Barbanis2Dof::StateT> flipped;
  for (const auto& s : seeds) {
    PhaseState<2> p{s, 0.0};
    const auto rev = apply_symmetry(m, Symmetry::time_reverse, p);
    flipped.push_back(apply_symmetry(m, Symmetry::reflect_y, rev).y);
  }

  SectionConfig scfg;
  scfg.max_crossings = 5;
  const auto fwd = run_section(m, e, sl, flipped, scfg, kIcfg, +1);
  const auto back = run_section(m, e, sl, seeds, scfg, kIcfg, -1);

  for (std::size_t k = 0; k < seeds.size(); ++k) {
    REQUIRE(back.crossings[k].size() == fwd.crossings[k].size());
    for (std::size_t c = 0; c < back.crossings[k].size(); ++c) {
      const auto& b = back.crossings[k][c];
      const auto& f = fwd.crossings[k][c];
      CHECK(b.t < 0.0);
      CHECK(std::abs(b.t + f.t) < 1e-8);
      CHECK(std::abs(b.u - f.u) < 1e-8);
      CHECK(std::abs(b.v + f.v) < 1e-8);
    }
  }
}

TEST_CASE("a tight time budget cuts seeds off before the crossing cap") {
  const Barbanis2Dof m;
  const double e = 15.25;
  const auto sl = slice_u_xpx(0.0, {-5.0, 5.0}, {-1.5, 1.5});
  const auto seeds = seed_lattice(m, sl, e, 7, 7);
  REQUIRE(seeds.size() > 20);

  SectionConfig scfg;
  scfg.max_crossings = 20;
  scfg.max_time = 40.0;
  const auto run = run_section(m, e, sl, seeds, scfg, kIcfg);

  std::size_t cut = 0, full = 0;
  for (const auto& xs : run.crossings) {
    if (xs.size() < 20) ++cut;
    if (xs.size() == 20) ++full;
    for (const auto& c : xs) CHECK(c.t <= 40.0);
  }
  MESSAGE(cut, " of ", seeds.size(), " seeds cut off, ", full,
          " filled the cap");
  CHECK(cut > 0);
}

TEST_CASE("section runs validate their configuration") {
  const Barbanis2Dof m;
  const auto sl = slice_u_xpx(0.0, {-3.0, 3.0}, {-2.0, 2.0});
  const auto seeds = seed_lattice(m, sl, 14.0, 3, 3);

  SectionConfig bad;
  bad.max_crossings = 0;
  CHECK_THROWS_AS(run_section(m, 14.0, sl, seeds, bad, kIcfg), ConfigError);
  bad.max_crossings = 5;
  bad.max_time = -1.0;
  CHECK_THROWS_AS(run_section(m, 14.0, sl, seeds, bad, kIcfg), ConfigError);

  const Contopoulos3Dof m3;
  const auto eq3 = equilibria(m3)[1];
  const auto sl3 = slice_u_xpx(eq3, {9.0, 12.0}, {-0.7, 0.7});
  SectionConfig scfg;
  CHECK_THROWS_AS(run_section(m, 14.0, sl3, seeds, scfg, kIcfg), ConfigError);
}

TEST_CASE("worker count never changes recorded crossings") {
  const Barbanis2Dof m;
  const double e = 14.0;
  const auto sl = slice_u_xpx(0.0, {-3.0, 3.0}, {-2.0, 2.0});
  const auto seeds = seed_lattice(m, sl, e, 4, 4);

  SectionConfig scfg;
  scfg.max_crossings = 4;
  const auto a = run_section(m, e, sl, seeds, scfg, kIcfg, +1, 1);
  const auto b = run_section(m, e, sl, seeds, scfg, kIcfg, +1, 3);

  REQUIRE(a.crossings.size() == b.crossings.size());
  bool identical = true;
  for (std::size_t k = 0; k < a.crossings.size(); ++k) {
    if (a.crossings[k].size() != b.crossings[k].size()) {
      identical = false;
      break;
    }
    for (std::size_t c = 0; c < a.crossings[k].size(); ++c) {
      const auto& x = a.crossings[k][c];
      const auto& y = b.crossings[k][c];
      identical = identical && x.t == y.t && x.u == y.u && x.v == y.v;
    }
  }
  CHECK(identical);
}
