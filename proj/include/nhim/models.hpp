#pragma once

// Hamiltonian models: 2- and 3-degree-of-freedom harmonic wells with cubic
// coupling terms. Both carry a pair of index-1 saddle points whose critical
// energy opens a bottleneck between the central well and the exit channels.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace nhim {

/// Phase-space state ordered (q_1..q_d, p_1..p_d).
template <std::size_t Dof>
using State = std::array<double, 2 * Dof>;

/// A state together with the time it belongs to.
template <std::size_t Dof>
struct PhaseState {
  State<Dof> y{};
  double t = 0.0;
};

struct Params2D {
  double omega_x = 1.0;
  double omega_y = 1.1;
  double delta = -0.11;
};

struct Params3D {
  double omega_x2 = 0.9;
  double omega_y2 = 1.6;
  double omega_z2 = 0.4;
  double epsilon = 0.08;
  double eta = 0.01;
};

/// H = p_x^2/2 + p_y^2/2 + omega_x^2 x^2/2 + omega_y^2 y^2/2 + delta x y^2.
/// For delta < 0 the potential is unbounded below along x > 0 and has two
/// index-1 saddles at mirrored y.
class Barbanis2Dof {
 public:
  static constexpr std::size_t dof = 2;
  using StateT = State<2>;
  using ConfigT = std::array<double, 2>;
  using HessT = Eigen::Matrix2d;
  using JacT = Eigen::Matrix4d;

  enum class Saddle { bottom, top };  // sign of the saddle's y coordinate

  Barbanis2Dof() = default;
  explicit Barbanis2Dof(const Params2D& p) : par_(p) {}

  const Params2D& params() const { return par_; }

  double potential(double x, double y) const {
    const double wx = par_.omega_x, wy = par_.omega_y;
    return 0.5 * wx * wx * x * x + 0.5 * wy * wy * y * y +
           par_.delta * x * y * y;
  }

  void gradient(double x, double y, double& gx, double& gy) const {
    const double wx = par_.omega_x, wy = par_.omega_y;
    gx = wx * wx * x + par_.delta * y * y;
    gy = wy * wy * y + 2.0 * par_.delta * x * y;
  }

  HessT hessian(double x, double y) const {
    const double wx = par_.omega_x, wy = par_.omega_y;
    HessT h;
    h(0, 0) = wx * wx;
    h(0, 1) = h(1, 0) = 2.0 * par_.delta * y;
    h(1, 1) = wy * wy + 2.0 * par_.delta * x;
    return h;
  }

  double energy(const StateT& s) const {
    return 0.5 * (s[2] * s[2] + s[3] * s[3]) + potential(s[0], s[1]);
  }

  void rhs(const StateT& s, StateT& dsdt) const {
    double gx, gy;
    gradient(s[0], s[1], gx, gy);
    dsdt[0] = s[2];
    dsdt[1] = s[3];
    dsdt[2] = -gx;
    dsdt[3] = -gy;
  }

  JacT jacobian(const StateT& s) const {
    JacT j = JacT::Zero();
    j(0, 2) = 1.0;
    j(1, 3) = 1.0;
    const HessT h = hessian(s[0], s[1]);
    j(2, 0) = -h(0, 0);
    j(2, 1) = -h(0, 1);
    j(3, 0) = -h(1, 0);
    j(3, 1) = -h(1, 1);
    return j;
  }

 private:
  Params2D par_;
};

/// H = (p_x^2+p_y^2+p_z^2)/2 + omega_x^2 x^2/2 + omega_y^2 y^2/2
///     + omega_z^2 z^2/2 - epsilon x^2 y - eta x^2 z.
class Contopoulos3Dof {
 public:
  static constexpr std::size_t dof = 3;
  using StateT = State<3>;
  using ConfigT = std::array<double, 3>;
  using HessT = Eigen::Matrix3d;
  using JacT = Eigen::Matrix<double, 6, 6>;

  enum class Saddle { positive_x, negative_x };

  Contopoulos3Dof() = default;
  explicit Contopoulos3Dof(const Params3D& p) : par_(p) {}

  const Params3D& params() const { return par_; }

  double potential(double x, double y, double z) const {
    const Params3D& p = par_;
    return 0.5 * (p.omega_x2 * x * x + p.omega_y2 * y * y +
                  p.omega_z2 * z * z) -
           p.epsilon * x * x * y - p.eta * x * x * z;
  }

  void gradient(double x, double y, double z, double& gx, double& gy,
                double& gz) const {
    const Params3D& p = par_;
    gx = p.omega_x2 * x - 2.0 * p.epsilon * x * y - 2.0 * p.eta * x * z;
    gy = p.omega_y2 * y - p.epsilon * x * x;
    gz = p.omega_z2 * z - p.eta * x * x;
  }

  HessT hessian(double x, double y, double z) const {
    const Params3D& p = par_;
    HessT h;
    h(0, 0) = p.omega_x2 - 2.0 * p.epsilon * y - 2.0 * p.eta * z;
    h(0, 1) = h(1, 0) = -2.0 * p.epsilon * x;
    h(0, 2) = h(2, 0) = -2.0 * p.eta * x;
    h(1, 1) = p.omega_y2;
    h(1, 2) = h(2, 1) = 0.0;
    h(2, 2) = p.omega_z2;
    return h;
  }

  double energy(const StateT& s) const {
    return 0.5 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]) +
           potential(s[0], s[1], s[2]);
  }

  void rhs(const StateT& s, StateT& dsdt) const {
    double gx, gy, gz;
    gradient(s[0], s[1], s[2], gx, gy, gz);
    dsdt[0] = s[3];
    dsdt[1] = s[4];
    dsdt[2] = s[5];
    dsdt[3] = -gx;
    dsdt[4] = -gy;
    dsdt[5] = -gz;
  }

  JacT jacobian(const StateT& s) const {
    JacT j = JacT::Zero();
    for (std::size_t i = 0; i < 3; ++i) j(i, i + 3) = 1.0;
    const HessT h = hessian(s[0], s[1], s[2]);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) j(r + 3, c) = -h(r, c);
    return j;
  }

 private:
  Params3D par_;
};

template <class M>
concept HamiltonianModel = requires(const M m, const typename M::StateT s,
                                    typename M::StateT& ds) {
  { M::dof } -> std::convertible_to<std::size_t>;
  { m.energy(s) } -> std::convertible_to<double>;
  { m.rhs(s, ds) };
  { m.jacobian(s) };
};

enum class EquilibriumKind { center, saddle };

template <HamiltonianModel M>
struct Equilibrium {
  typename M::StateT state{};
  double energy = 0.0;
  EquilibriumKind kind = EquilibriumKind::center;
};

/// Energy of the index-1 saddles (both share it by symmetry).
inline double critical_energy(const Barbanis2Dof& m) {
  const Params2D& p = m.params();
  const double wx2 = p.omega_x * p.omega_x;
  const double wy2 = p.omega_y * p.omega_y;
  return wx2 * wy2 * wy2 / (8.0 * p.delta * p.delta);
}

inline double critical_energy(const Contopoulos3Dof& m) {
  const Params3D& p = m.params();
  const double xe2 = p.omega_x2 * p.omega_y2 * p.omega_z2 /
                     (2.0 * (p.epsilon * p.epsilon * p.omega_z2 +
                             p.eta * p.eta * p.omega_y2));
  return 0.25 * p.omega_x2 * xe2;
}

inline Equilibrium<Barbanis2Dof> saddle_point(const Barbanis2Dof& m,
                                              Barbanis2Dof::Saddle which) {
  const Params2D& p = m.params();
  if (p.delta == 0.0)
    throw std::invalid_argument("saddle_point: delta = 0 has no saddles");
  const double xs = -p.omega_y * p.omega_y / (2.0 * p.delta);
  // For delta < 0 this magnitude-positive expression is the top saddle.
  double ys = p.omega_x * p.omega_y / (std::sqrt(2.0) * std::abs(p.delta));
  if (which == Barbanis2Dof::Saddle::bottom) ys = -ys;
  Equilibrium<Barbanis2Dof> eq;
  eq.state = {xs, ys, 0.0, 0.0};
  eq.energy = m.potential(xs, ys);
  eq.kind = EquilibriumKind::saddle;
  return eq;
}

inline Equilibrium<Contopoulos3Dof> saddle_point(
    const Contopoulos3Dof& m, Contopoulos3Dof::Saddle which) {
  const Params3D& p = m.params();
  const double den = 2.0 * (p.epsilon * p.epsilon * p.omega_z2 +
                            p.eta * p.eta * p.omega_y2);
  if (den == 0.0)
    throw std::invalid_argument("saddle_point: uncoupled model has no saddles");
  const double xe2 = p.omega_x2 * p.omega_y2 * p.omega_z2 / den;
  double xe = std::sqrt(xe2);
  if (which == Contopoulos3Dof::Saddle::negative_x) xe = -xe;
  const double ye = p.epsilon * xe2 / p.omega_y2;
  const double ze = p.eta * xe2 / p.omega_z2;
  Equilibrium<Contopoulos3Dof> eq;
  eq.state = {xe, ye, ze, 0.0, 0.0, 0.0};
  eq.energy = m.potential(xe, ye, ze);
  eq.kind = EquilibriumKind::saddle;
  return eq;
}

/// All equilibria in closed form: the central well plus the two saddles.
inline std::vector<Equilibrium<Barbanis2Dof>> equilibria(
    const Barbanis2Dof& m) {
  Equilibrium<Barbanis2Dof> origin;
  origin.state = {0.0, 0.0, 0.0, 0.0};
  origin.energy = 0.0;
  origin.kind = EquilibriumKind::center;
  return {origin, saddle_point(m, Barbanis2Dof::Saddle::bottom),
          saddle_point(m, Barbanis2Dof::Saddle::top)};
}

inline std::vector<Equilibrium<Contopoulos3Dof>> equilibria(
    const Contopoulos3Dof& m) {
  Equilibrium<Contopoulos3Dof> origin;
  origin.state = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  origin.energy = 0.0;
  origin.kind = EquilibriumKind::center;
  return {origin, saddle_point(m, Contopoulos3Dof::Saddle::positive_x),
          saddle_point(m, Contopoulos3Dof::Saddle::negative_x)};
}

/// Stability type of an invariant manifold, shared by the periodic-orbit
/// and descriptor-map toolkits.
enum class Stability { stable, unstable };

/// Stable identifier used in config files and grid metadata.
inline std::string kind_name(const Barbanis2Dof&) { return "barbanis2"; }
inline std::string kind_name(const Contopoulos3Dof&) { return "contopoulos3"; }

inline std::vector<std::pair<std::string, double>> parameter_list(
    const Barbanis2Dof& m) {
  const Params2D& p = m.params();
  return {{"omega_x", p.omega_x}, {"omega_y", p.omega_y}, {"delta", p.delta}};
}

inline std::vector<std::pair<std::string, double>> parameter_list(
    const Contopoulos3Dof& m) {
  const Params3D& p = m.params();
  return {{"omega_x2", p.omega_x2},
          {"omega_y2", p.omega_y2},
          {"omega_z2", p.omega_z2},
          {"epsilon", p.epsilon},
          {"eta", p.eta}};
}

/// Total energy given either directly or as excess over the critical energy.
struct EnergySpec {
  enum class Kind { total, excess };
  Kind kind = Kind::total;
  double value = 0.0;

  template <HamiltonianModel M>
  double total_energy(const M& m) const {
    return kind == Kind::total ? value : critical_energy(m) + value;
  }
};

/// Linearization at an index-1 saddle of the 2-DoF model: eigenvalues
/// {+lambda, -lambda, +i omega, -i omega} with eigenvectors in the
/// normalization k1 = 1, k3 = beta k1, k4 = beta k2.
struct SaddleEigensystem {
  Equilibrium<Barbanis2Dof> at;
  double lambda = 0.0;  ///< real growth rate, > 0
  double omega = 0.0;   ///< center frequency, > 0
  State<2> u_plus{};    ///< eigenvector of +lambda
  State<2> u_minus{};   ///< eigenvector of -lambda
  State<2> w_real{};    ///< Re of the +i omega eigenvector
  State<2> w_imag{};    ///< Im of the +i omega eigenvector
};

inline SaddleEigensystem saddle_eigensystem(
    const Barbanis2Dof& m, const Equilibrium<Barbanis2Dof>& eq) {
  if (eq.kind != EquilibriumKind::saddle)
    throw std::invalid_argument("saddle_eigensystem: not a saddle");
  const auto h = m.hessian(eq.state[0], eq.state[1]);
  const double tr = h(0, 0) + h(1, 1);
  const double det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
  // Characteristic polynomial of the linearized field in beta^2:
  // beta^4 + tr(V'') beta^2 + det(V'') = 0.
  const double disc = tr * tr - 4.0 * det;
  if (disc <= 0.0 || det >= 0.0)
    throw std::invalid_argument("saddle_eigensystem: spectrum not saddle-type");
  const double sq = std::sqrt(disc);
  const double alpha1 = 0.5 * (-tr + sq);  // > 0, hyperbolic pair
  const double alpha2 = 0.5 * (-tr - sq);  // < 0, center pair
  SaddleEigensystem es;
  es.at = eq;
  es.lambda = std::sqrt(alpha1);
  es.omega = std::sqrt(-alpha2);
  const double vxy = h(0, 1);
  if (vxy == 0.0)
    throw std::invalid_argument("saddle_eigensystem: degenerate coupling");
  // Second component of the eigenvector for eigenvalue beta, k1 = 1:
  // k2 = -(beta^2 + V_xx)/V_xy.
  const double k2s = -(alpha1 + h(0, 0)) / vxy;
  const double k2c = -(alpha2 + h(0, 0)) / vxy;
  es.u_plus = {1.0, k2s, es.lambda, es.lambda * k2s};
  es.u_minus = {1.0, k2s, -es.lambda, -es.lambda * k2s};
  es.w_real = {1.0, k2c, 0.0, 0.0};
  es.w_imag = {0.0, 0.0, es.omega, es.omega * k2c};
  return es;
}

/// General solution of the linearized equations as an offset from the saddle:
/// A1 e^{lambda t} u_+ + A2 e^{-lambda t} u_- + 2 Re(beta e^{i omega t} w).
inline State<2> linear_solution(const SaddleEigensystem& es, double a1,
                                double a2, std::complex<double> beta,
                                double t) {
  const double ep = a1 * std::exp(es.lambda * t);
  const double em = a2 * std::exp(-es.lambda * t);
  const double c = std::cos(es.omega * t), s = std::sin(es.omega * t);
  // 2 Re((b1 + i b2)(cos + i sin)(w_r + i w_i))
  const double cr = 2.0 * (beta.real() * c - beta.imag() * s);
  const double ci = -2.0 * (beta.real() * s + beta.imag() * c);
  State<2> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = ep * es.u_plus[i] + em * es.u_minus[i] + cr * es.w_real[i] +
             ci * es.w_imag[i];
  }
  return out;
}

/// Discrete symmetries of the equations of motion. Reflections act within
/// one time direction; time_reverse flips all momenta and the time stamp.
enum class Symmetry { reflect_y, reflect_x, time_reverse };

inline PhaseState<2> apply_symmetry(const Barbanis2Dof&, Symmetry sym,
                                    const PhaseState<2>& s) {
  PhaseState<2> r = s;
  switch (sym) {
    case Symmetry::reflect_y:
      r.y[1] = -s.y[1];
      r.y[3] = -s.y[3];
      break;
    case Symmetry::time_reverse:
      r.y[2] = -s.y[2];
      r.y[3] = -s.y[3];
      r.t = -s.t;
      break;
    case Symmetry::reflect_x:
      throw std::invalid_argument(
          "apply_symmetry: reflect_x is not a symmetry of the 2-DoF model");
  }
  return r;
}

inline PhaseState<3> apply_symmetry(const Contopoulos3Dof&, Symmetry sym,
                                    const PhaseState<3>& s) {
  PhaseState<3> r = s;
  switch (sym) {
    case Symmetry::reflect_x:
      r.y[0] = -s.y[0];
      r.y[3] = -s.y[3];
      break;
    case Symmetry::time_reverse:
      r.y[3] = -s.y[3];
      r.y[4] = -s.y[4];
      r.y[5] = -s.y[5];
      r.t = -s.t;
      break;
    case Symmetry::reflect_y:
      throw std::invalid_argument(
          "apply_symmetry: reflect_y is not a symmetry of the 3-DoF model");
  }
  return r;
}

/// Boolean mask over a rectangular configuration window.
struct BoolGrid {
  std::size_t nx = 0, ny = 0;
  std::array<double, 4> window{};  // x_lo, x_hi, y_lo, y_hi
  std::vector<std::uint8_t> cells;

  bool at(std::size_t i, std::size_t j) const { return cells[i * ny + j] != 0; }
};

namespace detail {

inline void check_window(double lo, double hi, std::size_t n,
                         const char* what) {
  if (!(lo < hi) || n < 2)
    throw std::invalid_argument(std::string("hill_mask: bad ") + what +
                                " axis");
}

}  // namespace detail

/// Energetically accessible region {q : V(q) <= e} sampled on a vertex grid.
inline BoolGrid hill_mask(const Barbanis2Dof& m, double e,
                          const std::array<double, 4>& window, std::size_t nx,
                          std::size_t ny) {
  detail::check_window(window[0], window[1], nx, "x");
  detail::check_window(window[2], window[3], ny, "y");
  BoolGrid g;
  g.nx = nx;
  g.ny = ny;
  g.window = window;
  g.cells.resize(nx * ny);
  for (std::size_t i = 0; i < nx; ++i) {
    const double x = window[0] + (window[1] - window[0]) * double(i) /
                                     double(nx - 1);
    for (std::size_t j = 0; j < ny; ++j) {
      const double y = window[2] + (window[3] - window[2]) * double(j) /
                                       double(ny - 1);
      g.cells[i * ny + j] = m.potential(x, y) <= e ? 1 : 0;
    }
  }
  return g;
}

/// 3-DoF variant over (x, y) with z held fixed (defaults to a slice through
/// the saddle when the caller passes the saddle's z).
inline BoolGrid hill_mask(const Contopoulos3Dof& m, double e,
                          const std::array<double, 4>& window, std::size_t nx,
                          std::size_t ny, double z_fixed) {
  detail::check_window(window[0], window[1], nx, "x");
  detail::check_window(window[2], window[3], ny, "y");
  BoolGrid g;
  g.nx = nx;
  g.ny = ny;
  g.window = window;
  g.cells.resize(nx * ny);
  for (std::size_t i = 0; i < nx; ++i) {
    const double x = window[0] + (window[1] - window[0]) * double(i) /
                                     double(nx - 1);
    for (std::size_t j = 0; j < ny; ++j) {
      const double y = window[2] + (window[3] - window[2]) * double(j) /
                                       double(ny - 1);
      g.cells[i * ny + j] = m.potential(x, y, z_fixed) <= e ? 1 : 0;
    }
  }
  return g;
}

}  // namespace nhim
