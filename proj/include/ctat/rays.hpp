#pragma once

#include <string>
#include <vector>

#include "ctat/detector.hpp"
#include "ctat/field.hpp"

namespace ctat {

/// Point of the bicharacteristic flow of H = c^2 |p|^2 / 2, normalised so
/// that c |p| = 1 and t is travel time.
struct RayState {
  Vec2 x;
  Vec2 p;
  double t = 0.0;
};

/// c(x) and grad c from the analytic speed spec. Rays assume c == 1 for
/// |x| >= 1, so specs violating that are rejected.
class SpeedModel {
 public:
  explicit SpeedModel(SpeedSpec spec);
  double c(Vec2 x) const { return speed_value(spec_, x); }
  Vec2 grad(Vec2 x) const { return speed_gradient(spec_, x); }
  const SpeedSpec& spec() const { return spec_; }

 private:
  SpeedSpec spec_;
};

RayState rk4_step(const SpeedModel& m, const RayState& s, double h);
/// `steps` equal RK4 steps from s.t to s.t + duration.
RayState integrate_ray(const SpeedModel& m, RayState s, double duration, int steps);

struct RayPath {
  std::vector<RayState> states;  // RK4 samples up to (and including) the first one outside B_1
  bool escaped = false;
  double exit_time = 0.0;  // time at which |x| = 1 on the straight continuation
  Vec2 exit_point;
  Vec2 exit_dir;  // unit

  /// Position at time t, using the exact straight line after escape.
  Vec2 position(double t) const;
};

/// sigma = +1 follows xi, sigma = -1 follows -xi (the negative-time branch).
RayPath trace_geodesic(const SpeedModel& m, const Covector& start, int sigma, double t_max = 10.0,
                       double h_ray = 5e-3);

struct DetectionEvent {
  int sigma = 1;
  int branch = 1;  // Small: 1 entering, 2 leaving the detector disc. Large: always 1.
  bool entry_side = false;  // Large only: centre behind the exit point
  double t = 0.0;       // signed detection time, sigma * t_abs
  double t_abs = 0.0;
  double theta = 0.0;   // detector-centre angle in [0, 2 pi)
  Vec2 x;               // crossing point
  Vec2 dir;             // unit direction of travel at the crossing
  double lambda = 0.0;
  double tau = 0.0;
  Vec2 omega;
  double normal_dot = 0.0;  // |dir . n| at the crossing
  double center_time = 0.0;  // ray time of the passage through R theta
};

enum class LargeSides { Exit, Both };

/// Perpendicular crossings of the detector circles by the straight exterior
/// continuation of the path. `scale` is c(y) |xi|.
std::vector<DetectionEvent> detect_events(const RayPath& path, const DetectorConfig& config, int sigma, double scale,
                                          LargeSides sides = LargeSides::Exit);

struct CanonicalImage {
  std::vector<DetectionEvent> events;
  bool escaped = true;
  std::string diagnostic;
};

/// Events for sigma = + and -: 4 in the small-radius geometry, 2 in the
/// large one (4 with LargeSides::Both).
CanonicalImage canonical_image(const SpeedModel& m, const Covector& cv, const DetectorConfig& config,
                               LargeSides sides = LargeSides::Exit, double t_max = 10.0, double h_ray = 5e-3);

/// Small: antipode 2 R theta - x. Large: reflection of x across the diameter
/// of the detector circle along theta-perp.
Vec2 mirror_point(Vec2 x, double theta, const DetectorConfig& config);

/// Time interval U = (t_min, t_max] for |t| and angular aperture Gamma.
struct Aperture {
  double t_min = 0.0;
  double t_max = 5.0;
  bool full_circle = true;
  double arc_begin = 0.0;
  double arc_end = 0.0;

  bool contains_time(double t_abs) const { return t_abs > t_min && t_abs <= t_max; }
  bool contains_angle(double theta) const;
  bool contains(const DetectionEvent& e) const { return contains_time(e.t_abs) && contains_angle(e.theta); }
};

enum class Verdict { Visible, Masked, OutOfAperture };
std::string to_string(Verdict v);

struct VisibilityEntry {
  Covector cv;
  Verdict verdict = Verdict::OutOfAperture;
  bool has_witness = false;
  DetectionEvent witness;
  bool partner_in_wf = false;
  bool has_partner = false;
  Covector partner;
  std::string note;
};

struct VisibilityOptions {
  double position_tol = 0.05;
  double angle_tol_deg = 5.0;
  double t_max = 10.0;
  double h_ray = 5e-3;
  LargeSides sides = LargeSides::Both;
};

struct VisibilityReport {
  std::vector<VisibilityEntry> entries;
  std::size_t count(Verdict v) const;
};

/// Covector (y', xi') whose event at the mirror point has the same
/// (t, theta, tau, omega) as `e`. Returns false when that ray does not start
/// inside B_1 or coincides with the original crossing.
bool mirror_partner(const SpeedModel& m, const DetectionEvent& e, const DetectorConfig& config, double h_ray,
                    Covector& partner);

VisibilityReport visibility(const SpeedModel& m, const std::vector<Covector>& wf, const Aperture& aperture,
                            const DetectorConfig& config, const VisibilityOptions& opt = {});

/// sup over x in B_1 of the distance to the nearest detector circle.
double coverage_time(const DetectorConfig& config);

}  // namespace ctat
