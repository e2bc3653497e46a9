#pragma once

// Poincare return maps on a coordinate section, recorded as crossings with
// positive conjugate momentum. Used to contrast regular and escaping
// behaviour at the energies probed by the descriptor maps.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nhim/errors.hpp"
#include "nhim/integrate.hpp"
#include "nhim/models.hpp"
#include "nhim/parallel.hpp"
#include "nhim/slice.hpp"

namespace nhim {

struct SectionConfig {
  int max_crossings = 100;  ///< crossings recorded per seed
  double max_time = 1e4;    ///< time budget per seed
};

inline void validate(const SectionConfig& cfg) {
  if (cfg.max_crossings < 1)
    throw ConfigError("section: max_crossings must be at least 1");
  if (!(cfg.max_time > 0.0))
    throw ConfigError("section: max_time must be positive");
}

/// One section crossing: time stamp plus the two swept slice coordinates.
struct SectionCrossing {
  double t = 0.0;
  double u = 0.0;
  double v = 0.0;
};

template <std::size_t Dof>
struct SectionRun {
  double energy = 0.0;
  SliceSpec slice;
  std::vector<State<Dof>> seeds;
  /// crossings[k] lists seed k's crossings in integration order; seeds that
  /// escape or stall keep whatever was collected up to that point.
  std::vector<std::vector<SectionCrossing>> crossings;
};

/// Vertex-centered lattice over the slice window, keeping only nodes the
/// energy shell reaches.
template <HamiltonianModel M>
std::vector<typename M::StateT> seed_lattice(const M& m, const SliceSpec& sl,
                                             double e, std::size_t n1,
                                             std::size_t n2) {
  if (n1 < 2 || n2 < 2)
    throw ConfigError("seed_lattice: lattice needs at least 2x2 nodes");
  std::vector<typename M::StateT> seeds;
  for (std::size_t j = 0; j < n2; ++j) {
    const double v = sl.lo[1] + (sl.hi[1] - sl.lo[1]) *
                                    static_cast<double>(j) /
                                    static_cast<double>(n2 - 1);
    for (std::size_t i = 0; i < n1; ++i) {
      const double u = sl.lo[0] + (sl.hi[0] - sl.lo[0]) *
                                      static_cast<double>(i) /
                                      static_cast<double>(n1 - 1);
      if (auto st = state_on_slice(m, sl, u, v, e)) seeds.push_back(*st);
    }
  }
  return seeds;
}

/// Integrates every seed and records crossings of the slice's section
/// surface taken with positive physical velocity of the section coordinate.
/// Crossing times are strictly monotone in the integration direction; a
/// seed stops early on escape or when the time budget runs out.
template <HamiltonianModel M>
SectionRun<M::dof> run_section(const M& m, double e, const SliceSpec& sl,
                               const std::vector<typename M::StateT>& seeds,
                               const SectionConfig& scfg,
                               const IntegratorConfig& icfg,
                               int time_direction = +1, unsigned workers = 0) {
  validate(scfg);
  validate(icfg);
  if (sl.dof != M::dof)
    throw ConfigError("run_section: slice does not match the model");
  const Event ev{sl.section_coordinate(), sl.section_value(), +1};
  SectionRun<M::dof> run;
  run.energy = e;
  run.slice = sl;
  run.seeds = seeds;
  run.crossings.resize(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t k) {
    PhaseState<M::dof> cur{seeds[k], 0.0};
    std::vector<SectionCrossing> xs;
    IntegratorConfig cfg = icfg;
    cfg.max_time = scfg.max_time;
    for (int c = 0; c < scfg.max_crossings; ++c) {
      const auto hit = try_integrate_to_event(m, cur, ev, cfg, time_direction);
      if (!hit.found) break;
      xs.push_back({hit.state.t, hit.state.y[sl.sweep[0]],
                    hit.state.y[sl.sweep[1]]});
      cfg.max_time = scfg.max_time - std::abs(hit.state.t);
      if (cfg.max_time <= 0.0) break;
      cur = hit.state;
    }
    run.crossings[k] = std::move(xs);
  });
  return run;
}

}  // namespace nhim
