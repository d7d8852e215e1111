#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ctat/field.hpp"

namespace ctat {

/// Absorbing-layer damping sigma(d) = sigma_max (d / width)^order at depth
/// d into the band, sampled per axis at nodes and at half-integer faces.
struct PmlProfile {
  double width = 0.0;
  double sigma_max = 0.0;
  int order = 2;
  std::vector<double> node;  // sigma at x_i (same table serves both axes)
  std::vector<double> face;  // sigma at x_i + h/2, i < n - 1

  bool active() const { return width > 0.0 && sigma_max > 0.0; }
  double sigma_at_depth(double depth) const;

  /// Closed domain: no damping anywhere.
  static PmlProfile none(const Grid2D& grid);
};

/// sigma_max giving a nominal normal-incidence reflection coefficient
/// `reflection` for a layer of the given width and order.
double nominal_sigma_max(double width, int order, double reflection = 1e-4);

PmlProfile pml_profile(const Grid2D& grid, double width, double sigma_max, int order = 2);

/// Same as above but also rejects a layer reaching inside |x|_inf <= detector_extent.
PmlProfile pml_profile(const Grid2D& grid, double width, double sigma_max, int order, double detector_extent);

/// Uniform time lattice t_k = k dt, k = 0 .. nt-1.
struct TimeAxis {
  double dt = 0.0;
  int nt = 0;

  double t(int k) const { return k * dt; }
  double end() const { return (nt - 1) * dt; }
  bool operator==(const TimeAxis&) const = default;
};

/// Largest stable step: cfl * h / (sqrt(2) max c).
double cfl_time_step(const SpeedField& speed, double cfl = 0.5);

/// Lattice ending exactly at T with dt <= cfl_time_step(speed, cfl).
TimeAxis make_time_axis(const SpeedField& speed, double T, double cfl = 0.5);

struct WaveState {
  std::vector<double> u_curr;
  std::vector<double> u_prev;
  std::vector<double> psi_x;  // x-faces, index iy * (n - 1) + ix
  std::vector<double> psi_y;  // y-faces, index iy * n + ix
  double t = 0.0;
  double dt = 0.0;
  long steps = 0;
};

/// Leapfrog propagator for u_tt = c^2 Lap u with a split-field absorbing
/// layer (the auxiliary psi field lives on cell faces). Linear in the state;
/// `advance_adjoint` applies the exact transpose of `advance`.
class WaveSolver {
 public:
  WaveSolver(const SpeedField& speed, const PmlProfile& pml, double dt);

  const Grid2D& grid() const { return grid_; }
  double dt() const { return dt_; }

  WaveState zero_state() const;
  /// u_curr = f, u_prev = f + (dt^2/2) c^2 Lap_h f: zero discrete initial velocity.
  WaveState initial_state(std::span<const double> f) const;
  /// Transpose of initial_state, mapping an adjoint state back onto f.
  std::vector<double> initial_state_transpose(const WaveState& adj) const;

  /// One step; `source` (optional, length n^2) is added as dt^2 * s.
  void advance(WaveState& s, std::span<const double> source = {}) const;
  void advance_adjoint(WaveState& adj) const;

  /// Throws std::runtime_error naming the step if any value is non-finite.
  void check_finite(const WaveState& s) const;

 private:
  Grid2D grid_;
  double dt_;
  bool pml_active_;
  std::vector<double> c2_, inv_e_, bcoef_, pcoef_;
  std::vector<double> fx_, kx_, fy_, ky_;
  mutable std::vector<double> w_, v_, g_;

  void face_divergence_transpose(const WaveState& adj, std::vector<double>& out) const;
  void laplacian_transpose(const std::vector<double>& v, std::vector<double>& out) const;
};

/// Discrete acoustic energy 1/2 sum h^2 [((u - u_prev)/dt)^2 / c^2 + Grad u . Grad u_prev],
/// the quantity conserved exactly by the leapfrog scheme without damping.
double energy(const WaveState& state, const SpeedField& speed);

/// Energy restricted to nodes satisfying `inside` (faces need both ends inside).
double energy_in(const WaveState& state, const SpeedField& speed, const std::function<bool(Vec2)>& inside);

WaveState init_state(const Phantom& f, const SpeedField& speed, double dt);
WaveState step(const WaveState& state, const SpeedField& speed, const PmlProfile& pml);

using Probe = std::function<void(int k, double t, const std::vector<double>& u)>;

/// Runs from t = 0 to T on make_time_axis(speed, T, cfl), calling `probe`
/// at every lattice time including t = 0. Deterministic.
WaveState solve_forward(const Phantom& f, const SpeedField& speed, double T, const PmlProfile& pml,
                        const Probe& probe = {}, double cfl = 0.5);

/// Source term s_k(x) for step k (filled into a zeroed buffer of length n^2).
using SourceFn = std::function<void(int k, std::vector<double>& s)>;

/// u_tt = c^2 Lap u + s from zero data over `nt` lattice times of the axis.
WaveState solve_with_sources(const SourceFn& source, int source_steps, const SpeedField& speed,
                             const TimeAxis& axis, const PmlProfile& pml, const Probe& probe = {});

}  // namespace ctat
