#pragma once

// Periodic-orbit toolkit for the 2-DoF model: differential correction of the
// saddle-centered (Lyapunov) orbit, pseudo-arclength-free continuation of the
// family in energy, monodromy spectra, and globalized stable/unstable tube
// manifolds.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nhim/errors.hpp"
#include "nhim/integrate.hpp"
#include "nhim/models.hpp"
#include "nhim/parallel.hpp"
#include "nhim/slice.hpp"

namespace nhim {

struct ContinuationConfig {
  double seed_amplitude = 1e-4;      ///< A_x of the first corrected orbit
  double corrector_tol = 1e-10;      ///< bound on |p_y| at the half period
  double energy_tol = 1e-10;         ///< bisection exit on |E - target|
  int max_corrector_iterations = 25;
  int max_family_steps = 400;
  double max_step_x = 0.1;           ///< cap on the x0 extrapolation step
  double step_growth = 1.5;
  std::size_t orbit_samples = 1001;  ///< stored points per orbit
};

inline void validate(const ContinuationConfig& cfg) {
  if (!(cfg.seed_amplitude > 0.0))
    throw ConfigError("continuation: seed_amplitude must be positive");
  if (!(cfg.corrector_tol > 0.0) || !(cfg.energy_tol > 0.0))
    throw ConfigError("continuation: tolerances must be positive");
  if (cfg.max_corrector_iterations < 1 || cfg.max_family_steps < 1)
    throw ConfigError("continuation: iteration limits must be at least 1");
  if (!(cfg.max_step_x > 0.0) || !(cfg.step_growth >= 1.0))
    throw ConfigError("continuation: bad step control");
  if (cfg.orbit_samples < 2)
    throw ConfigError("continuation: orbit_samples must be at least 2");
}

struct PeriodicOrbit {
  State<2> ic{};      ///< (x0, y0, 0, 0)
  double period = 0.0;
  double energy = 0.0;
  /// Monodromy eigenvalues ordered {lambda1, 1/lambda1, ~1, ~1}.
  std::array<std::complex<double>, 4> spectrum{};
  std::vector<double> sample_t;
  std::vector<State<2>> samples;
  int corrector_iterations = 0;
  std::vector<double> corrector_residuals;  ///< |p_y(t1)| per iteration
  double closure_residual = 0.0;            ///< |phi(T; IC) - IC|_inf
};

struct ManifoldConfig {
  double displacement = 1e-6;  ///< seed offset along the eigenvector
  Stability stability = Stability::unstable;
  int branch = +1;             ///< sign of the offset
  double periods = 4.0;        ///< globalization time in orbit periods
  int fibers = 50;
  std::size_t samples_per_fiber = 401;
};

inline void validate(const ManifoldConfig& cfg) {
  if (!(cfg.displacement > 0.0))
    throw ConfigError("manifold: displacement must be positive");
  if (cfg.branch != 1 && cfg.branch != -1)
    throw ConfigError("manifold: branch must be +1 or -1");
  if (!(cfg.periods > 0.0) || cfg.fibers < 1 || cfg.samples_per_fiber < 2)
    throw ConfigError("manifold: bad globalization parameters");
}

struct Fiber {
  State<2> seed{};
  double seed_time = 0.0;  ///< position along the orbit, in [0, T)
  Trajectory<4> path;
};

struct TubeManifold {
  Stability stability = Stability::unstable;
  int branch = +1;
  double energy = 0.0;
  double period = 0.0;
  double span = 0.0;  ///< globalization time actually integrated
  std::vector<Fiber> fibers;
};

/// First guess for the saddle-centered orbit: the saddle offset by A_x along
/// the center eigenvector's configuration projection (k1 = 1 normalization),
/// with zero momentum.
inline PhaseState<2> seed_guess(const Barbanis2Dof& m,
                                const Equilibrium<Barbanis2Dof>& saddle,
                                double a_x) {
  if (saddle.kind != EquilibriumKind::saddle)
    throw std::invalid_argument("seed_guess: equilibrium is not a saddle");
  const SaddleEigensystem es = saddle_eigensystem(m, saddle);
  PhaseState<2> g;
  g.y = saddle.state;
  g.y[0] += a_x * es.w_real[0];
  g.y[1] += a_x * es.w_real[1];
  g.y[2] = 0.0;
  g.y[3] = 0.0;
  g.t = 0.0;
  return g;
}

namespace detail {

struct HalfPeriodPoint {
  double t1 = 0.0;
  State<2> y{};
  Eigen::Matrix4d stm;
};

inline HalfPeriodPoint half_period_crossing(const Barbanis2Dof& m,
                                            const State<2>& ic,
                                            const IntegratorConfig& icfg) {
  PhaseState<2> start{ic, 0.0};
  const Event ev{2, 0.0, 0};  // next p_x = 0 crossing
  auto hit = integrate_with_stm_to_event(m, start, ev, icfg);
  HalfPeriodPoint out;
  out.t1 = hit.state.t;
  out.y = hit.state.y;
  out.stm = hit.stm;
  return out;
}

inline std::array<std::complex<double>, 4> sorted_monodromy_spectrum(
    const Eigen::Matrix4d& mono) {
  Eigen::EigenSolver<Eigen::Matrix4d> es(mono);
  std::array<std::complex<double>, 4> ev;
  for (int i = 0; i < 4; ++i) ev[i] = es.eigenvalues()[i];
  std::sort(ev.begin(), ev.end(),
            [](const std::complex<double>& a, const std::complex<double>& b) {
              return std::abs(a) > std::abs(b);
            });
  // {largest, reciprocal, unit pair} -> indices {0, 3, 1, 2}
  return {ev[0], ev[3], ev[1], ev[2]};
}

}  // namespace detail

/// Newton shooting on the half-period turning point. Holds x0 fixed, adjusts
/// y0 by delta_y0 = (Phi42 - Phi32 vdot_y/vdot_x)^{-1} (-p_y(t1)) with step
/// halving whenever a full step grows the residual.
inline PeriodicOrbit differential_correct(const Barbanis2Dof& m,
                                          const PhaseState<2>& guess,
                                          const ContinuationConfig& ccfg,
                                          const IntegratorConfig& icfg) {
  validate(ccfg);
  validate(icfg);
  if (guess.y[2] != 0.0 || guess.y[3] != 0.0)
    throw std::invalid_argument("differential_correct: guess must have p = 0");
  State<2> ic = guess.y;
  auto cross = detail::half_period_crossing(m, ic, icfg);
  PeriodicOrbit po;
  po.corrector_residuals.push_back(std::abs(cross.y[3]));
  int it = 0;
  while (std::abs(cross.y[3]) >= ccfg.corrector_tol) {
    if (++it > ccfg.max_corrector_iterations)
      throw NumericalError("differential_correct: no convergence after " +
                           std::to_string(ccfg.max_corrector_iterations) +
                           " iterations");
    State<2> f;
    m.rhs(cross.y, f);
    const double vdot_x = f[2], vdot_y = f[3];
    if (vdot_x == 0.0)
      throw NumericalError(
          "differential_correct: vanishing v_x acceleration at the turning "
          "point");
    const double denom =
        cross.stm(3, 1) - cross.stm(2, 1) * (vdot_y / vdot_x);
    if (std::abs(denom) < 1e-14)
      throw NumericalError(
          "differential_correct: vanishing correction denominator");
    double dy0 = -cross.y[3] / denom;
    const double res_prev = std::abs(cross.y[3]);
    for (int halving = 0;; ++halving) {
      State<2> trial = ic;
      trial[1] += dy0;
      auto cross_trial = detail::half_period_crossing(m, trial, icfg);
      if (std::abs(cross_trial.y[3]) < res_prev || halving >= 8) {
        ic = trial;
        cross = cross_trial;
        break;
      }
      dy0 *= 0.5;
    }
    po.corrector_residuals.push_back(std::abs(cross.y[3]));
  }
  po.ic = ic;
  po.period = 2.0 * cross.t1;
  po.energy = m.energy(ic);
  po.corrector_iterations = it;
  // One full-period pass provides the stored samples, the closure residual
  // and the monodromy spectrum.
  auto full = integrate_with_stm(
      m, PhaseState<2>{ic, 0.0}, po.period, icfg,
      {SampleSpec::Mode::uniform, ccfg.orbit_samples});
  if (full.reason != Termination::time_limit)
    throw NumericalError("differential_correct: orbit escaped over one period");
  po.sample_t = full.t;
  po.samples = full.y;
  double resid = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    resid = std::max(resid, std::abs(full.y.back()[i] - ic[i]));
  po.closure_residual = resid;
  po.spectrum = detail::sorted_monodromy_spectrum(full.stm.back());
  return po;
}

/// Monodromy spectrum of a converged orbit, ordered {lambda1, 1/lambda1,
/// ~1, ~1} with lambda1 the largest modulus.
inline std::array<std::complex<double>, 4> monodromy(
    const Barbanis2Dof& m, const PeriodicOrbit& po,
    const IntegratorConfig& icfg) {
  auto full = integrate_with_stm(m, PhaseState<2>{po.ic, 0.0}, po.period, icfg);
  if (full.reason != Termination::time_limit)
    throw NumericalError("monodromy: orbit escaped over one period");
  return detail::sorted_monodromy_spectrum(full.stm.back());
}

namespace detail {

/// Grows a family of corrected orbits by linear extrapolation of the initial
/// condition, then resolves requested energies by bisection in x0.
class FamilyBuilder {
 public:
  FamilyBuilder(const Barbanis2Dof& m, Barbanis2Dof::Saddle saddle,
                const ContinuationConfig& ccfg, const IntegratorConfig& icfg)
      : m_(m), ccfg_(ccfg), icfg_(icfg) {
    const auto eq = saddle_point(m, saddle);
    chain_.push_back(correct_from(seed_guess(m, eq, ccfg.seed_amplitude)));
    chain_.push_back(
        correct_from(seed_guess(m, eq, 2.0 * ccfg.seed_amplitude)));
    step_ = {chain_[1].ic[0] - chain_[0].ic[0],
             chain_[1].ic[1] - chain_[0].ic[1]};
  }

  const std::vector<PeriodicOrbit>& chain() const { return chain_; }

  /// Extends the extrapolation chain until its last member exceeds e.
  void extend_past(double e) {
    int steps = 0;
    while (chain_.back().energy < e) {
      if (++steps > ccfg_.max_family_steps)
        throw NumericalError("continue_family: step budget exhausted before " +
                             std::to_string(e));
      cap_step();
      State<2> guess = chain_.back().ic;
      guess[0] += step_[0];
      guess[1] += step_[1];
      try {
        chain_.push_back(correct_from(PhaseState<2>{guess, 0.0}));
        step_[0] *= ccfg_.step_growth;
        step_[1] *= ccfg_.step_growth;
      } catch (const NumericalError&) {
        step_[0] *= 0.5;
        step_[1] *= 0.5;
        if (std::abs(step_[0]) < 1e-12)
          throw NumericalError(
              "continue_family: continuation stalled (family fold?)");
      }
    }
  }

  /// Orbit at the requested energy via bisection between the bracketing
  /// chain members.
  PeriodicOrbit orbit_at(double e) {
    extend_past(e);
    std::size_t hi = 0;
    while (chain_[hi].energy < e) ++hi;
    if (std::abs(chain_[hi].energy - e) <= ccfg_.energy_tol) return chain_[hi];
    if (hi == 0)
      throw NumericalError("continue_family: target below the seed orbit");
    PeriodicOrbit lo_po = chain_[hi - 1], hi_po = chain_[hi];
    for (int it = 0; it < 200; ++it) {
      const double x_lo = lo_po.ic[0], x_hi = hi_po.ic[0];
      if (std::abs(x_hi - x_lo) <
          8.0 * std::numeric_limits<double>::epsilon() * std::abs(x_hi))
        throw NumericalError(
            "continue_family: bisection interval collapsed before the energy "
            "tolerance");
      const double x_mid = 0.5 * (x_lo + x_hi);
      const double frac = (x_mid - x_lo) / (x_hi - x_lo);
      State<2> guess{x_mid, lo_po.ic[1] + frac * (hi_po.ic[1] - lo_po.ic[1]),
                     0.0, 0.0};
      PeriodicOrbit mid = correct_from(PhaseState<2>{guess, 0.0});
      if (std::abs(mid.energy - e) <= ccfg_.energy_tol) return mid;
      if (mid.energy < e)
        lo_po = mid;
      else
        hi_po = mid;
    }
    throw NumericalError("continue_family: bisection failed to converge");
  }

 private:
  PeriodicOrbit correct_from(const PhaseState<2>& guess) {
    return differential_correct(m_, guess, ccfg_, icfg_);
  }

  void cap_step() {
    const double ax = std::abs(step_[0]);
    if (ax > ccfg_.max_step_x) {
      const double scale = ccfg_.max_step_x / ax;
      step_[0] *= scale;
      step_[1] *= scale;
    }
  }

  const Barbanis2Dof& m_;
  ContinuationConfig ccfg_;
  IntegratorConfig icfg_;
  std::vector<PeriodicOrbit> chain_;
  std::array<double, 2> step_{};
};

}  // namespace detail

/// Continues the saddle orbit family until the target energy is reached and
/// returns the corrected chain; the last member sits at the target within
/// the energy tolerance.
inline std::vector<PeriodicOrbit> continue_family(
    const Barbanis2Dof& m, const ContinuationConfig& ccfg,
    const IntegratorConfig& icfg, double e_target,
    Barbanis2Dof::Saddle saddle = Barbanis2Dof::Saddle::bottom) {
  validate(ccfg);
  if (!(e_target > critical_energy(m)))
    throw ConfigError("continue_family: target energy must exceed E_c");
  detail::FamilyBuilder fb(m, saddle, ccfg, icfg);
  PeriodicOrbit target = fb.orbit_at(e_target);
  std::vector<PeriodicOrbit> family = fb.chain();
  family.push_back(std::move(target));
  return family;
}

/// One corrected orbit per requested energy (ascending targets recommended;
/// the extrapolation chain is shared).
inline std::vector<PeriodicOrbit> continue_to_energies(
    const Barbanis2Dof& m, const ContinuationConfig& ccfg,
    const IntegratorConfig& icfg, const std::vector<double>& targets,
    Barbanis2Dof::Saddle saddle = Barbanis2Dof::Saddle::bottom) {
  validate(ccfg);
  for (double e : targets)
    if (!(e > critical_energy(m)))
      throw ConfigError("continue_to_energies: target below E_c");
  detail::FamilyBuilder fb(m, saddle, ccfg, icfg);
  std::vector<PeriodicOrbit> out;
  out.reserve(targets.size());
  for (double e : targets) out.push_back(fb.orbit_at(e));
  return out;
}

/// Tube manifold fibers: X(t_j) +/- eps * (STM-transported, normalized
/// monodromy eigenvector). Unstable fibers run forward, stable backward.
inline TubeManifold globalize_manifold(const Barbanis2Dof& m,
                                       const PeriodicOrbit& po,
                                       const ManifoldConfig& mcfg,
                                       const IntegratorConfig& icfg,
                                       unsigned workers = 1) {
  validate(mcfg);
  validate(icfg);
  const std::size_t nf = static_cast<std::size_t>(mcfg.fibers);
  // Orbit states and transition matrices at the fiber anchors.
  auto along = integrate_with_stm(m, PhaseState<2>{po.ic, 0.0}, po.period,
                                  icfg, {SampleSpec::Mode::uniform, nf + 1});
  if (along.reason != Termination::time_limit)
    throw NumericalError("globalize_manifold: orbit escaped over one period");
  const Eigen::Matrix4d mono = along.stm.back();
  Eigen::EigenSolver<Eigen::Matrix4d> es(mono);
  int pick = -1;
  double best = 1.0;  // only eigenvalues off the unit circle qualify
  for (int i = 0; i < 4; ++i) {
    const double mag = std::abs(es.eigenvalues()[i]);
    if (mcfg.stability == Stability::unstable ? mag > best : mag < best) {
      best = mag;
      pick = i;
    }
  }
  const double separation =
      mcfg.stability == Stability::unstable ? best : 1.0 / best;
  if (pick < 0 || separation < 1.0 + 1e-6 ||
      std::abs(es.eigenvalues()[pick].imag()) > 1e-8 * separation)
    throw NumericalError("globalize_manifold: spectrum not hyperbolic");
  Eigen::Vector4d e0 = es.eigenvectors().col(pick).real();
  e0.normalize();

  TubeManifold tube;
  tube.stability = mcfg.stability;
  tube.branch = mcfg.branch;
  tube.energy = po.energy;
  tube.period = po.period;
  tube.span = mcfg.periods * po.period;
  tube.fibers.resize(nf);
  const double t_dir = mcfg.stability == Stability::unstable ? 1.0 : -1.0;
  parallel_for(nf, workers, [&](std::size_t j) {
    Eigen::Vector4d v = along.stm[j] * e0;
    v.normalize();
    Fiber f;
    f.seed_time = along.t[j];
    for (std::size_t k = 0; k < 4; ++k)
      f.seed[k] = along.y[j][k] + mcfg.branch * mcfg.displacement * v[k];
    f.path = integrate(m, PhaseState<2>{f.seed, 0.0}, t_dir * tube.span, icfg,
                       {SampleSpec::Mode::uniform, mcfg.samples_per_fiber});
    tube.fibers[j] = std::move(f);
  });
  return tube;
}

/// Crossings of a periodic orbit with a 2-DoF slice over one period,
/// projected to the slice's sweep plane.
inline std::vector<std::array<double, 2>> po_slice_intersection(
    const Barbanis2Dof& m, const PeriodicOrbit& po, const SliceSpec& slice,
    const IntegratorConfig& icfg) {
  if (slice.dof != 2)
    throw ConfigError("po_slice_intersection: slice is not 2-DoF");
  const Event ev{slice.section_coordinate(), slice.section_value(), +1};
  std::vector<std::array<double, 2>> pts;
  IntegratorConfig cfg = icfg;
  cfg.max_time = 1.05 * po.period;
  PhaseState<2> cur{po.ic, 0.0};
  while (true) {
    auto hit = try_integrate_to_event(m, cur, ev, cfg);
    if (!hit.found || hit.state.t > po.period) break;
    pts.push_back(
        {hit.state.y[slice.sweep[0]], hit.state.y[slice.sweep[1]]});
    cfg.max_time = 1.05 * po.period - hit.state.t;
    if (cfg.max_time <= 0.0) break;
    cur = hit.state;
  }
  if (pts.empty())
    throw EventNotFound("po_slice_intersection: orbit never crosses the slice");
  return pts;
}

struct TubeCrossing {
  int fiber = 0;
  double t = 0.0;  ///< physical crossing time relative to the seed
  std::array<double, 2> point{};
};

/// First (or n-th) slice crossing of every tube fiber, searched along the
/// tube's native integration direction. Fibers without a crossing are
/// omitted.
inline std::vector<TubeCrossing> po_slice_intersection(
    const Barbanis2Dof& m, const TubeManifold& tube, const SliceSpec& slice,
    const IntegratorConfig& icfg, int crossing_index = 1,
    unsigned workers = 1) {
  if (slice.dof != 2)
    throw ConfigError("po_slice_intersection: slice is not 2-DoF");
  if (crossing_index < 1)
    throw ConfigError("po_slice_intersection: crossing_index must be >= 1");
  const Event ev{slice.section_coordinate(), slice.section_value(), +1};
  const int dir = tube.stability == Stability::unstable ? +1 : -1;
  IntegratorConfig cfg = icfg;
  cfg.max_time = tube.span;
  std::vector<std::optional<TubeCrossing>> found(tube.fibers.size());
  parallel_for(tube.fibers.size(), workers, [&](std::size_t j) {
    PhaseState<2> cur{tube.fibers[j].seed, 0.0};
    IntegratorConfig fcfg = cfg;
    for (int k = 0; k < crossing_index; ++k) {
      auto hit = try_integrate_to_event(m, cur, ev, fcfg, dir);
      if (!hit.found) return;
      fcfg.max_time = tube.span - std::abs(hit.state.t);
      if (k + 1 == crossing_index) {
        TubeCrossing c;
        c.fiber = static_cast<int>(j);
        c.t = hit.state.t;
        c.point = {hit.state.y[slice.sweep[0]], hit.state.y[slice.sweep[1]]};
        found[j] = c;
        return;
      }
      if (fcfg.max_time <= 0.0) return;
      cur = hit.state;
    }
  });
  std::vector<TubeCrossing> out;
  for (const auto& c : found)
    if (c) out.push_back(*c);
  return out;
}

}  // namespace nhim
