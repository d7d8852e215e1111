#pragma once

#include <span>
#include <string>
#include <vector>

#include "ctat/field.hpp"
#include "ctat/wave.hpp"

namespace ctat {

enum class DetectorMode { Small, Large };

std::string to_string(DetectorMode m);
DetectorMode detector_mode_from_string(const std::string& s);

/// Circular integrating detectors of radius r centred at R theta.
/// Small: R - r >= 1 (object outside each circle).
/// Large: R = 1, r >= 2 (object inside each circle).
struct DetectorConfig {
  DetectorMode mode = DetectorMode::Large;
  double R = 1.0;
  double r = 2.0;
  int n_theta = 180;
  int n_alpha = 256;
  double record_time = 5.0;
  double cfl = 0.5;
  // Angular aperture: full circle, or the open arc (arc_begin, arc_end)
  // sampled at cell midpoints so the endpoints are excluded.
  bool full_circle = true;
  double arc_begin = 0.0;
  double arc_end = 0.0;

  static DetectorConfig small(double R, double r);
  static DetectorConfig large(double r);

  void validate() const;
  std::vector<double> theta_grid() const;
  double theta_spacing() const;
  /// Largest |x| reached by any detector point.
  double extent() const { return R + r; }
  bool same_geometry(const DetectorConfig& o) const;
};

struct Circle {
  Vec2 center;
  double radius = 0.0;
};

/// n_alpha uniformly spaced points C(theta, alpha) = R theta + r (cos alpha, sin alpha).
std::vector<Vec2> detector_points(const DetectorConfig& config, double theta);

enum class Interpolation { Bilinear, Cubic };

/// Sparse matrix of circular means: row c = (1/n_alpha) sum_k u(C_c(alpha_k)),
/// with u interpolated from the grid. Applying it and its transpose is
/// deterministic and independent of the thread count.
class RingOperator {
 public:
  RingOperator(const Grid2D& grid, const std::vector<Circle>& circles, int n_alpha,
               Interpolation interp = Interpolation::Bilinear);

  std::size_t rows() const { return row_ptr_.size() - 1; }
  std::size_t cols() const { return n_cols_; }

  void apply(std::span<const double> u, std::span<double> out) const;
  /// out += Q^T g
  void apply_transpose_add(std::span<const double> g, std::span<double> out) const;

 private:
  std::size_t n_cols_;
  std::vector<std::size_t> row_ptr_, col_;
  std::vector<double> val_;
  std::vector<std::size_t> t_ptr_, t_row_;
  std::vector<double> t_val_;
};

std::vector<Circle> detector_circles(const DetectorConfig& config);

/// Discrete circular mean of a snapshot over the detector at angle theta.
double ring_average(std::span<const double> u, const Grid2D& grid, const DetectorConfig& config, double theta,
                    Interpolation interp = Interpolation::Bilinear);

struct Sinogram {
  TimeAxis time;
  std::vector<double> theta;
  DetectorConfig config;
  std::vector<double> data;  // nt x n_theta, row-major

  double& at(int k, int j) { return data[static_cast<std::size_t>(k) * theta.size() + j]; }
  double at(int k, int j) const { return data[static_cast<std::size_t>(k) * theta.size() + j]; }
};

/// Rejects configurations whose detectors reach the absorbing band.
void check_detector_clearance(const Grid2D& grid, const DetectorConfig& config);

/// One wave solve with every detector sampled at every lattice time.
Sinogram forward_operator(const Phantom& f, const SpeedField& speed, const DetectorConfig& config,
                          const PmlProfile& pml, Interpolation interp = Interpolation::Bilinear);

/// Circular means P(t, theta, s) over a family of detectors varying in a
/// third parameter s (R for the small-radius sweep, r for the large one).
struct CylinderFamily {
  DetectorMode mode = DetectorMode::Small;
  double fixed = 0.0;  // r for Small, R for Large
  TimeAxis time;
  std::vector<double> theta;
  std::vector<double> radii;
  bool periodic_theta = false;
  std::vector<double> data;  // [t][theta][radius]

  std::size_t index(int k, int j, int m) const {
    return (static_cast<std::size_t>(k) * theta.size() + j) * radii.size() + m;
  }
  double at(int k, int j, int m) const { return data[index(k, j, m)]; }
};

/// Fixed r, centres on |z| = R for every R in R_values. One wave solve.
CylinderFamily sweep_small_radius(const Phantom& f, const SpeedField& speed, const PmlProfile& pml,
                                  const DetectorConfig& config, const std::vector<double>& R_values,
                                  Interpolation interp = Interpolation::Bilinear);

/// Centres on the unit circle, radius r for every r in r_values. One wave solve.
CylinderFamily sweep_large_radius(const Phantom& f, const SpeedField& speed, const PmlProfile& pml,
                                  const DetectorConfig& config, const std::vector<double>& r_values,
                                  Interpolation interp = Interpolation::Bilinear);

struct ResidualField {
  int nt = 0, n_theta = 0, n_radius = 0;  // interior lattice extents
  std::vector<double> values;
  double rms() const;
  double max_abs() const;
};

/// Centred-difference evaluation of P_tt - (1/R)(R P_R)_R - P_thth / R^2 at
/// interior lattice points. t < 0 samples use the even extension P(-t) = P(t).
ResidualField cylinder_residual_small(const CylinderFamily& P);

/// Centred-difference evaluation of P_tt - (1/r)(r P_r)_r.
ResidualField cylinder_residual_large(const CylinderFamily& P);

}  // namespace ctat
