#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctat/detector.hpp"

namespace ctat {

/// Largest |<Mf, g> - <f, M^T g>| / (|Mf| |g|) over `pairs` seeded random pairs.
double adjoint_mismatch(DetectorMode mode, int n = 64, int pairs = 5, std::uint64_t seed = 2024,
                        bool break_adjoint = false);

/// Relative drift of the leapfrog energy over `steps` closed-domain steps.
double energy_drift(int n = 257, int steps = 1000);

/// Fraction of |u| outside B_{1 + T max c + 3h} after time T.
double finite_speed_leak(double T = 1.2);

struct PmlCheck {
  double reflected_ratio = 0.0;  // interior energy of (u - u_free) over the initial energy
  double band_ratio = 0.0;       // energy left in the absorbing band at T over the initial energy
};

/// Pulse leaving a padded domain compared with a twice larger closed domain.
PmlCheck pml_check(double T = 5.0);

struct RayChecks {
  double straight_deviation = 0.0;  // c == 1, length 4
  double hamiltonian_drift = 0.0;   // max |c |p| - 1| over 100 traces
  double rk4_min_ratio = 0.0;       // error ratio per halving
  int small_events_min = 0, small_events_max = 0;
  int large_events_min = 0, large_events_max = 0;
  double center_passage = 0.0;  // max |gamma(t -/+ r) - R theta|
  double lambda_error = 0.0;    // max ||lambda| - c |xi| / (2r)|
};

RayChecks ray_checks(int covectors = 100, std::uint64_t seed = 99);

struct ConvergenceLevel {
  int n = 0;
  double rms_small = 0.0;
  double rms_large = 0.0;
  double rms_wrong = 0.0;  // small-radius stencil on large-radius data
};

struct ConvergenceStudy {
  std::vector<ConvergenceLevel> levels;

  std::vector<double> ratios(double ConvergenceLevel::*field) const;
};

/// Cylinder-PDE residuals under simultaneous halving of h, dt, dtheta and dR.
/// Level l uses an n0 * 2^l grid on [-3.8, 3.8]^2 with the smooth default
/// phantom and speed; the lattice window is fixed in physical size.
ConvergenceStudy residual_convergence_study(int levels = 3, int n0 = 193,
                                            const std::function<void(const ConvergenceLevel&)>& progress = {});

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// level: "quick" or "full" (adds the residual convergence study).
std::vector<CheckResult> run_selftest(const std::string& level, bool break_adjoint = false,
                                      const std::function<void(const CheckResult&)>& progress = {});

}  // namespace ctat
