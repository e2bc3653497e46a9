#pragma once

// Isoenergetic 2-D slices of the energy surface. A slice pins all but two
// phase-space coordinates, sweeps the remaining pair over a window, and
// recovers one momentum from the energy relation with a strict sign
// condition.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nhim/errors.hpp"
#include "nhim/models.hpp"

namespace nhim {

struct SliceSpec {
  std::size_t dof = 2;
  std::array<std::size_t, 2> sweep{};  ///< state indices swept over the window
  std::size_t recover = 0;             ///< momentum index recovered from H = e
  std::vector<std::pair<std::size_t, double>> fixed;  ///< remaining coordinates
  std::array<double, 2> lo{}, hi{};                   ///< sweep window
  std::string surface;                                ///< tag used in filenames

  /// Section condition for orbit crossings: the single fixed configuration
  /// coordinate (2-DoF slices only).
  std::size_t section_coordinate() const {
    for (const auto& [idx, val] : fixed)
      if (idx < dof) return idx;
    throw Error("SliceSpec: no configuration coordinate is fixed");
  }

  double section_value() const {
    for (const auto& [idx, val] : fixed)
      if (idx < dof) return val;
    throw Error("SliceSpec: no configuration coordinate is fixed");
  }
};

/// 2-DoF surface U_xpx(k): y = k, sweep (x, p_x), recover p_y > 0.
inline SliceSpec slice_u_xpx(double k, const std::array<double, 2>& x_range,
                             const std::array<double, 2>& px_range) {
  SliceSpec s;
  s.dof = 2;
  s.sweep = {0, 2};
  s.recover = 3;
  s.fixed = {{1, k}};
  s.lo = {x_range[0], px_range[0]};
  s.hi = {x_range[1], px_range[1]};
  s.surface = "u_xpx";
  return s;
}

/// 3-DoF surface U_xpx: y = y_eq, z = z_eq, p_y = 0, sweep (x, p_x),
/// recover p_z > 0.
inline SliceSpec slice_u_xpx(const Equilibrium<Contopoulos3Dof>& eq,
                             const std::array<double, 2>& x_range,
                             const std::array<double, 2>& px_range) {
  SliceSpec s;
  s.dof = 3;
  s.sweep = {0, 3};
  s.recover = 5;
  s.fixed = {{1, eq.state[1]}, {2, eq.state[2]}, {4, 0.0}};
  s.lo = {x_range[0], px_range[0]};
  s.hi = {x_range[1], px_range[1]};
  s.surface = "u_xpx";
  return s;
}

/// 3-DoF surface U_ypy: x = x_eq, z = z_eq, p_x = 0, sweep (y, p_y),
/// recover p_z > 0.
inline SliceSpec slice_u_ypy(const Equilibrium<Contopoulos3Dof>& eq,
                             const std::array<double, 2>& y_range,
                             const std::array<double, 2>& py_range) {
  SliceSpec s;
  s.dof = 3;
  s.sweep = {1, 4};
  s.recover = 5;
  s.fixed = {{0, eq.state[0]}, {2, eq.state[2]}, {3, 0.0}};
  s.lo = {y_range[0], py_range[0]};
  s.hi = {y_range[1], py_range[1]};
  s.surface = "u_ypy";
  return s;
}

/// 3-DoF surface U_zpz: x = x_eq, y = y_eq, p_x = 0, sweep (z, p_z),
/// recover p_y > 0.
inline SliceSpec slice_u_zpz(const Equilibrium<Contopoulos3Dof>& eq,
                             const std::array<double, 2>& z_range,
                             const std::array<double, 2>& pz_range) {
  SliceSpec s;
  s.dof = 3;
  s.sweep = {2, 5};
  s.recover = 4;
  s.fixed = {{0, eq.state[0]}, {1, eq.state[1]}, {3, 0.0}};
  s.lo = {z_range[0], pz_range[0]};
  s.hi = {z_range[1], pz_range[1]};
  s.surface = "u_zpz";
  return s;
}

namespace detail {

template <HamiltonianModel M>
typename M::StateT assemble_slice_state(const M&, const SliceSpec& sl,
                                        double u, double v) {
  typename M::StateT s{};
  s[sl.sweep[0]] = u;
  s[sl.sweep[1]] = v;
  for (const auto& [idx, val] : sl.fixed) s[idx] = val;
  s[sl.recover] = 0.0;
  return s;
}

}  // namespace detail

/// Positive root of the energy relation for the slice's recovered momentum,
/// or nothing when the point is off the energy shell (negative radicand).
template <HamiltonianModel M>
std::optional<double> momentum_on_shell(const M& m, const SliceSpec& sl,
                                        double u, double v, double e) {
  if (sl.dof != M::dof) throw Error("momentum_on_shell: slice/model mismatch");
  typename M::StateT s = detail::assemble_slice_state(m, sl, u, v);
  // e = energy(s) + p_rec^2 / 2 with p_rec = 0 in s.
  const double radicand = 2.0 * (e - m.energy(s));
  if (radicand < 0.0) return std::nullopt;
  return std::sqrt(radicand);
}

/// Full on-shell state for a slice point, or nothing when off-shell.
template <HamiltonianModel M>
std::optional<typename M::StateT> state_on_slice(const M& m,
                                                 const SliceSpec& sl, double u,
                                                 double v, double e) {
  const auto p = momentum_on_shell(m, sl, u, v, e);
  if (!p) return std::nullopt;
  typename M::StateT s = detail::assemble_slice_state(m, sl, u, v);
  s[sl.recover] = *p;
  return s;
}

}  // namespace nhim
