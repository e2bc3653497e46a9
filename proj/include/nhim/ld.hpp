#pragma once

// Lagrangian descriptors on isoenergetic two-dimensional slices: pointwise
// forward/backward accumulation with fixed or variable integration time,
// parallel grid assembly, and feature detection on the resulting maps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nhim/errors.hpp"
#include "nhim/integrate.hpp"
#include "nhim/models.hpp"
#include "nhim/parallel.hpp"
#include "nhim/slice.hpp"

namespace nhim {

enum class LdMode { fixed_time, variable_time };
enum class LdDirection { forward, backward };

struct LdConfig {
  double p_exponent = 0.5;  ///< integrand exponent, in (0, 1]
  double tau = 50.0;        ///< one-sided integration time
  LdMode mode = LdMode::fixed_time;
  /// [lo, hi] per configuration coordinate; bounds residence in
  /// variable-time mode, ignored otherwise.
  std::vector<std::array<double, 2>> saddle_region;
  double escape_radius = 50.0;  ///< configuration-norm accumulation cutoff
};

inline std::string to_string(LdMode m) {
  return m == LdMode::fixed_time ? "fixed" : "variable";
}

inline LdMode parse_ld_mode(const std::string& s) {
  if (s == "fixed") return LdMode::fixed_time;
  if (s == "variable") return LdMode::variable_time;
  throw ConfigError("ld: mode must be 'fixed' or 'variable', got '" + s + "'");
}

inline void validate(const LdConfig& cfg) {
  if (!(cfg.p_exponent > 0.0) || cfg.p_exponent > 1.0)
    throw ConfigError("ld: p_exponent must lie in (0, 1]");
  if (!(cfg.tau > 0.0)) throw ConfigError("ld: tau must be positive");
  if (!(cfg.escape_radius > 0.0))
    throw ConfigError("ld: escape_radius must be positive");
  for (const auto& b : cfg.saddle_region)
    if (!(b[0] < b[1]))
      throw ConfigError("ld: saddle_region bounds must satisfy lo < hi");
}

struct LdPointResult {
  double value = 0.0;
  double duration = 0.0;  ///< time actually accumulated, in [0, tau]
  bool escaped = false;   ///< left the cutoff region before tau
};

namespace detail {

inline double ld_power(double x, double p) {
  const double a = std::fabs(x);
  if (p == 0.5) return std::sqrt(a);
  if (p == 1.0) return a;
  return std::pow(a, p);
}

/// Phase flow joined with the descriptor integrand sum_i |xdot_i|^p. The
/// state fold (sign) leaves the accumulated component increasing in both
/// time directions.
template <HamiltonianModel M>
struct LdRhs {
  static constexpr std::size_t n = 2 * M::dof;
  const M* m;
  double sign;
  double p;

  void operator()(const std::array<double, n + 1>& a,
                  std::array<double, n + 1>& da, double) const {
    typename M::StateT y;
    std::copy(a.begin(), a.begin() + n, y.begin());
    typename M::StateT f;
    m->rhs(y, f);
    double g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      da[i] = sign * f[i];
      g += ld_power(f[i], p);
    }
    da[n] = g;
  }
};

inline std::string fmt_g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

}  // namespace detail

/// One-sided descriptor value at a phase-space point. Integration stops at
/// tau, at the configuration-norm cutoff, or (variable-time mode) on exit
/// from the saddle region box, whichever comes first; the accumulated value
/// is frozen at the refined stopping time.
template <HamiltonianModel M>
LdPointResult ld_point(const M& m, const typename M::StateT& y0,
                       const LdConfig& lcfg, const IntegratorConfig& icfg,
                       LdDirection direction) {
  constexpr std::size_t n = 2 * M::dof;
  constexpr std::size_t aug = n + 1;
  validate(icfg);
  if (!(lcfg.p_exponent > 0.0) || lcfg.p_exponent > 1.0)
    throw ConfigError("ld_point: p_exponent must lie in (0, 1]");
  if (lcfg.tau < 0.0) throw ConfigError("ld_point: tau must be nonnegative");
  if (!(lcfg.escape_radius > 0.0))
    throw ConfigError("ld_point: escape_radius must be positive");
  const bool variable = lcfg.mode == LdMode::variable_time;
  if (variable && lcfg.saddle_region.size() != M::dof)
    throw ConfigError(
        "ld_point: variable-time mode needs one saddle_region interval per "
        "configuration coordinate");

  const double r2 = lcfg.escape_radius * lcfg.escape_radius;
  auto inside = [&](const std::array<double, aug>& a) {
    double q2 = 0.0;
    for (std::size_t i = 0; i < M::dof; ++i) {
      if (variable && (a[i] < lcfg.saddle_region[i][0] ||
                       a[i] > lcfg.saddle_region[i][1]))
        return false;
      q2 += a[i] * a[i];
    }
    return q2 <= r2;
  };

  std::array<double, aug> a0{};
  std::copy(y0.begin(), y0.end(), a0.begin());
  a0[n] = 0.0;
  LdPointResult out;
  if (!inside(a0)) {
    out.escaped = true;
    return out;
  }
  if (lcfg.tau == 0.0) return out;

  detail::LdRhs<M> rhs{&m, direction == LdDirection::forward ? 1.0 : -1.0,
                       lcfg.p_exponent};
  std::array<double, aug> a_final;
  const auto stop = detail::drive<aug>(
      rhs, a0, lcfg.tau, icfg, a_final,
      [&](auto& st, double s0, double s1) -> std::optional<detail::StopPoint> {
        std::array<double, aug> probe;
        st.calc_state(s1, probe);
        if (inside(probe)) return std::nullopt;
        double lo = s0, hi = s1;
        for (int it = 0; it < 200; ++it) {
          if ((hi - lo) <= 1e-14 * std::max(1.0, std::abs(hi))) break;
          const double mid = 0.5 * (lo + hi);
          st.calc_state(mid, probe);
          if (inside(probe))
            lo = mid;
          else
            hi = mid;
        }
        return detail::StopPoint{hi, Termination::escape};
      });
  out.value = a_final[n];
  out.escaped = stop.reason == Termination::escape;
  out.duration = out.escaped ? stop.s : lcfg.tau;
  return out;
}

inline constexpr std::uint32_t ld_flag_forward_escape = 1u;
inline constexpr std::uint32_t ld_flag_backward_escape = 2u;

/// Per-node descriptor data. Off-shell nodes keep every value NaN and
/// on_shell false.
struct LdSample {
  double forward = std::numeric_limits<double>::quiet_NaN();
  double backward = std::numeric_limits<double>::quiet_NaN();
  double tau_f = std::numeric_limits<double>::quiet_NaN();
  double tau_b = std::numeric_limits<double>::quiet_NaN();
  std::uint32_t flags = 0;
  bool on_shell = false;

  double total() const { return forward + backward; }
};

struct GridNode {
  std::size_t i = 0;  ///< index along the first swept coordinate
  std::size_t j = 0;  ///< index along the second swept coordinate

  friend bool operator==(const GridNode& a, const GridNode& b) {
    return a.i == b.i && a.j == b.j;
  }
};

/// Descriptor map over a vertex-centered window: node (i, j) sits at
/// (u_at(i), v_at(j)), stored u-fastest at index j * n1 + i.
struct LdGrid {
  SliceSpec slice;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double energy = 0.0;
  LdConfig cfg;
  std::string model_kind;
  std::vector<std::pair<std::string, double>> model_params;
  std::vector<LdSample> samples;

  std::size_t index(std::size_t i, std::size_t j) const { return j * n1 + i; }
  const LdSample& at(std::size_t i, std::size_t j) const {
    return samples[index(i, j)];
  }
  double u_at(std::size_t i) const {
    return slice.lo[0] + (slice.hi[0] - slice.lo[0]) * static_cast<double>(i) /
                             static_cast<double>(n1 - 1);
  }
  double v_at(std::size_t j) const {
    return slice.lo[1] + (slice.hi[1] - slice.lo[1]) * static_cast<double>(j) /
                             static_cast<double>(n2 - 1);
  }
  double cell_du() const {
    return (slice.hi[0] - slice.lo[0]) / static_cast<double>(n1 - 1);
  }
  double cell_dv() const {
    return (slice.hi[1] - slice.lo[1]) / static_cast<double>(n2 - 1);
  }
};

/// Evaluates both descriptor directions on every on-shell node of the
/// window. Deterministic for any worker count; numerical failures carry the
/// offending node in the message.
template <HamiltonianModel M>
LdGrid compute_grid(const M& m, const SliceSpec& slice, double e,
                    const LdConfig& lcfg, const IntegratorConfig& icfg,
                    std::size_t n1, std::size_t n2, unsigned workers = 0) {
  validate(lcfg);
  validate(icfg);
  if (slice.dof != M::dof)
    throw ConfigError("compute_grid: slice does not match the model");
  if (n1 < 2 || n2 < 2)
    throw ConfigError("compute_grid: window needs at least 2x2 nodes");
  LdGrid g;
  g.slice = slice;
  g.n1 = n1;
  g.n2 = n2;
  g.energy = e;
  g.cfg = lcfg;
  g.model_kind = kind_name(m);
  g.model_params = parameter_list(m);
  g.samples.resize(n1 * n2);
  parallel_for(n1 * n2, workers, [&](std::size_t k) {
    const std::size_t i = k % n1;
    const std::size_t j = k / n1;
    const double u = g.u_at(i);
    const double v = g.v_at(j);
    const auto state = state_on_slice(m, slice, u, v, e);
    if (!state) return;  // off-shell node keeps the NaN sample
    const double h = m.energy(*state);
    if (!(std::abs(h - e) < 1e-12))
      throw NumericalError("compute_grid: on-shell residual " +
                           detail::fmt_g(h - e) + " at node (" +
                           std::to_string(i) + ", " + std::to_string(j) + ")");
    LdSample s;
    s.on_shell = true;
    try {
      const auto fwd = ld_point(m, *state, lcfg, icfg, LdDirection::forward);
      const auto bwd = ld_point(m, *state, lcfg, icfg, LdDirection::backward);
      s.forward = fwd.value;
      s.tau_f = fwd.duration;
      s.backward = bwd.value;
      s.tau_b = bwd.duration;
      if (fwd.escaped) s.flags |= ld_flag_forward_escape;
      if (bwd.escaped) s.flags |= ld_flag_backward_escape;
    } catch (const NumericalError& err) {
      throw NumericalError("node (" + std::to_string(i) + ", " +
                           std::to_string(j) + ") u=" + detail::fmt_g(u) +
                           " v=" + detail::fmt_g(v) + ": " + err.what());
    }
    g.samples[k] = s;
  });
  const bool any_on_shell =
      std::any_of(g.samples.begin(), g.samples.end(),
                  [](const LdSample& s) { return s.on_shell; });
  if (!any_on_shell)
    throw NumericalError(
        "compute_grid: every node lies off the energy shell; check the "
        "window and energy");
  return g;
}

namespace detail {

/// Strict comparison of a node's total against every on-shell 4-neighbor.
/// Nodes without any on-shell neighbor never qualify.
template <class Field>
bool strict_extremum(const LdGrid& g, std::size_t i, std::size_t j, int sgn,
                     Field&& field) {
  const double t0 = field(g.at(i, j));
  const long di[4] = {1, -1, 0, 0};
  const long dj[4] = {0, 0, 1, -1};
  bool any = false;
  for (int k = 0; k < 4; ++k) {
    const long ii = static_cast<long>(i) + di[k];
    const long jj = static_cast<long>(j) + dj[k];
    if (ii < 0 || jj < 0 || ii >= static_cast<long>(g.n1) ||
        jj >= static_cast<long>(g.n2))
      continue;
    const LdSample& nb =
        g.at(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
    if (!nb.on_shell) continue;
    any = true;
    const double tn = field(nb);
    if (sgn > 0 ? !(t0 > tn) : !(t0 < tn)) return false;
  }
  return any;
}

}  // namespace detail

/// Nodes marking the normally hyperbolic invariant manifold on the slice.
/// Variable-time grids: the node whose trajectory resides in the cutoff
/// region longest in both time directions, i.e. the grid maximum of
/// min(tau_f, tau_b), with the total descriptor breaking ties; every node
/// tied on both counts is returned. Fixed-time grids: strict local minima
/// of the total. A constant map detects nothing.
inline std::vector<GridNode> detect_nhim(const LdGrid& g) {
  auto total = [](const LdSample& s) { return s.total(); };
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();
  std::size_t on_shell = 0;
  for (const LdSample& s : g.samples) {
    if (!s.on_shell) continue;
    ++on_shell;
    mn = std::min(mn, s.total());
    mx = std::max(mx, s.total());
  }
  std::vector<GridNode> out;
  if (on_shell == 0) return out;

  if (g.cfg.mode == LdMode::variable_time) {
    // The invariant point is distinguished by residence, not by speed: only
    // trajectories starting on the manifold stay near the saddle in both
    // time directions. Ranking by min(tau_f, tau_b) discards one-sided
    // fiber hits and is immune to passing nodes that accumulate a large
    // descriptor during a short, fast transit.
    auto key = [](const LdSample& s) { return std::min(s.tau_f, s.tau_b); };
    double best_k = -std::numeric_limits<double>::infinity();
    double low_k = std::numeric_limits<double>::infinity();
    for (const LdSample& s : g.samples) {
      if (!s.on_shell) continue;
      if (key(s) > best_k) best_k = key(s);
      if (key(s) < low_k) low_k = key(s);
    }
    // A grid with neither residence nor descriptor contrast has no feature.
    if (low_k == best_k && mn == mx) return out;
    double best_t = -std::numeric_limits<double>::infinity();
    for (const LdSample& s : g.samples)
      if (s.on_shell && key(s) == best_k) best_t = std::max(best_t, s.total());
    for (std::size_t j = 0; j < g.n2; ++j)
      for (std::size_t i = 0; i < g.n1; ++i) {
        const LdSample& s = g.at(i, j);
        if (s.on_shell && key(s) == best_k && s.total() == best_t)
          out.push_back({i, j});
      }
    return out;
  }

  if (mn == mx) return out;
  for (std::size_t j = 0; j < g.n2; ++j)
    for (std::size_t i = 0; i < g.n1; ++i)
      if (g.at(i, j).on_shell && detail::strict_extremum(g, i, j, -1, total))
        out.push_back({i, j});
  return out;
}

/// Nodes tracing the invariant-manifold curves on a fixed-time grid: strict
/// local minima of the one-sided descriptor (forward for stable, backward
/// for unstable) plus nodes sitting on a discontinuity of the matching
/// escape flag.
inline std::vector<GridNode> detect_manifold_curves(const LdGrid& g,
                                                    Stability which) {
  if (g.cfg.mode != LdMode::fixed_time)
    throw ConfigError(
        "detect_manifold_curves: manifold curves require a fixed-time grid");
  const bool stable = which == Stability::stable;
  const std::uint32_t bit =
      stable ? ld_flag_forward_escape : ld_flag_backward_escape;
  auto field = [stable](const LdSample& s) {
    return stable ? s.forward : s.backward;
  };
  const long di[4] = {1, -1, 0, 0};
  const long dj[4] = {0, 0, 1, -1};
  std::vector<GridNode> out;
  for (std::size_t j = 0; j < g.n2; ++j) {
    for (std::size_t i = 0; i < g.n1; ++i) {
      const LdSample& s = g.at(i, j);
      if (!s.on_shell) continue;
      bool boundary = false;
      for (int k = 0; k < 4 && !boundary; ++k) {
        const long ii = static_cast<long>(i) + di[k];
        const long jj = static_cast<long>(j) + dj[k];
        if (ii < 0 || jj < 0 || ii >= static_cast<long>(g.n1) ||
            jj >= static_cast<long>(g.n2))
          continue;
        const LdSample& nb =
            g.at(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
        if (nb.on_shell && ((nb.flags ^ s.flags) & bit)) boundary = true;
      }
      if (boundary || detail::strict_extremum(g, i, j, -1, field))
        out.push_back({i, j});
    }
  }
  return out;
}

}  // namespace nhim
