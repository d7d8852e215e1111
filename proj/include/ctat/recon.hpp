#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctat/detector.hpp"
#include "ctat/field.hpp"
#include "ctat/wave.hpp"

namespace ctat {

/// chi(t) = 1 on [0, T], smooth monotone decay to 0 at T1, 0 afterwards.
/// The taper is the smooth step of field.hpp, so chi((T + T1)/2) = 1/2.
struct TimeCutoff {
  double T = 0.0;
  double T1 = 0.0;
  std::vector<double> weights;

  double value(double t) const;
};

TimeCutoff time_cutoff_chi(double T, double T1, int nt, double dt);
TimeCutoff time_cutoff_chi(double T, double T1, const TimeAxis& axis);

/// The discrete measurement map f -> Mf (one wave solve sampled by the ring
/// operator at every lattice time) and its exact transpose.
class MeasurementOperator {
 public:
  MeasurementOperator(const SpeedField& speed, const DetectorConfig& config, const PmlProfile& pml,
                      Interpolation interp = Interpolation::Bilinear);

  const Grid2D& grid() const { return speed_.grid; }
  const SpeedField& speed() const { return speed_; }
  const DetectorConfig& config() const { return config_; }
  const TimeAxis& time() const { return time_; }
  const std::vector<double>& theta() const { return theta_; }
  std::size_t data_size() const { return static_cast<std::size_t>(time_.nt) * theta_.size(); }
  std::size_t image_size() const { return speed_.grid.size(); }

  /// data[k * n_theta + j]
  std::vector<double> apply(std::span<const double> f) const;
  /// Exact transpose of apply under the plain Euclidean inner products.
  std::vector<double> adjoint(std::span<const double> g) const;

  Sinogram forward(const Phantom& f) const;
  Phantom adjoint_image(const Sinogram& s) const;

  /// Test hook: perturbs the adjoint so that it is no longer the transpose.
  void break_adjoint(bool on) { broken_ = on; }

 private:
  SpeedField speed_;
  DetectorConfig config_;
  PmlProfile pml_;
  TimeAxis time_;
  std::vector<double> theta_;
  RingOperator ring_;
  bool broken_ = false;
};

/// 1 at nodes with |x| < radius, else 0.
std::vector<double> support_mask(const Grid2D& grid, double radius = 1.0);

/// Weighted least squares 1/2 <w (M P f - s), M P f - s> + lambda/2 |Grad_h P f|^2
/// with w(t, theta) = chi(t) and P the support projection.
class ReconProblem {
 public:
  ReconProblem(const MeasurementOperator& op, std::vector<double> chi, std::vector<double> mask,
               double tikhonov = 0.0);

  const MeasurementOperator& op() const { return *op_; }
  const std::vector<double>& chi() const { return chi_; }
  const std::vector<double>& mask() const { return mask_; }
  double tikhonov() const { return lambda_; }

  void project(std::vector<double>& f) const;
  /// M P f
  std::vector<double> forward(std::span<const double> f) const;
  /// P M^T (w g)
  std::vector<double> back(std::span<const double> g) const;
  /// Normal operator P M^T w M P f + lambda P Grad^T Grad P f.
  std::vector<double> normal(std::span<const double> f) const;

  /// <w g, g>
  double weighted_norm2(std::span<const double> g) const;
  double gradient_norm2(std::span<const double> f) const;
  /// out += lambda P Grad^T Grad P f
  void add_penalty_gradient(std::span<const double> f, std::vector<double>& out) const;

 private:
  const MeasurementOperator* op_;
  std::vector<double> chi_, mask_;
  double lambda_;
};

struct NormEstimate {
  double value = 0.0;  // estimate of the largest eigenvalue of the normal operator
  int iterations = 0;
  double last_change = 0.0;
};

/// Power iteration on the normal operator from a seeded random start. Stops
/// once successive Rayleigh quotients agree to `rel_tol`, or after `max_iters`.
NormEstimate operator_norm_estimate(const ReconProblem& problem, int max_iters = 30, std::uint64_t seed = 1,
                                    double rel_tol = 0.05);

struct ReconResult {
  Phantom estimate;
  std::vector<double> residual_history;  // sqrt(2 * objective), starting at f = 0
  double step_size = 0.0;
  int iterations = 0;
  std::string stop_reason;
};

struct LandweberOptions {
  int iterations = 50;
  double step = 0.0;  // 0 selects 1 / operator_norm_estimate
  double tol = 1e-6;  // relative misfit
  int norm_iters = 30;
  std::uint64_t seed = 1;
};

/// f_{k+1} = P (f_k - step * grad), f_0 = 0. Throws std::runtime_error after
/// three consecutive increases of the misfit.
ReconResult landweber(const ReconProblem& problem, std::span<const double> data, const LandweberOptions& opt = {});

struct CgOptions {
  int iterations = 15;
  double tol = 1e-6;
};

/// Conjugate gradients on the normal equations. Throws std::runtime_error on
/// a non-positive curvature direction.
ReconResult cg_normal(const ReconProblem& problem, std::span<const double> data, const CgOptions& opt = {});

double relative_l2_error(std::span<const double> estimate, std::span<const double> truth);

/// Columns M e_i for the listed nodes, stored column-major (data_size x cols).
std::vector<double> assemble_columns(const MeasurementOperator& op, const std::vector<std::size_t>& nodes);

}  // namespace ctat
