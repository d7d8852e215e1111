#include "ctat/rays.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace ctat {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

// Smallest tau >= 0 with |p + tau d| = rad, or -1 if the line misses.
double forward_hit(Vec2 p, Vec2 d, double rad) {
  const double b = p.dot(d);
  const double c = p.norm2() - rad * rad;
  const double disc = b * b - c;
  if (disc < 0.0) return -1.0;
  const double s = std::sqrt(disc);
  const double t1 = -b - s, t2 = -b + s;
  if (t1 >= 0.0) return t1;
  if (t2 >= 0.0) return t2;
  return -1.0;
}

struct Deriv {
  Vec2 dx, dp;
};

Deriv rhs(const SpeedModel& m, Vec2 x, Vec2 p) {
  const double c = m.c(x);
  const Vec2 g = m.grad(x);
  return {p * (c * c), g * (-c * p.norm2())};
}

}  // namespace

SpeedModel::SpeedModel(SpeedSpec spec) : spec_(std::move(spec)) {
  if (const auto* k = std::get_if<speed::Constant>(&spec_); k && k->c0 != 1.0) {
    throw std::invalid_argument("rays: speed must equal 1 outside the unit disc");
  }
}

RayState rk4_step(const SpeedModel& m, const RayState& s, double h) {
  const Deriv k1 = rhs(m, s.x, s.p);
  const Deriv k2 = rhs(m, s.x + k1.dx * (0.5 * h), s.p + k1.dp * (0.5 * h));
  const Deriv k3 = rhs(m, s.x + k2.dx * (0.5 * h), s.p + k2.dp * (0.5 * h));
  const Deriv k4 = rhs(m, s.x + k3.dx * h, s.p + k3.dp * h);
  RayState out;
  out.x = s.x + (k1.dx + k2.dx * 2.0 + k3.dx * 2.0 + k4.dx) * (h / 6.0);
  out.p = s.p + (k1.dp + k2.dp * 2.0 + k3.dp * 2.0 + k4.dp) * (h / 6.0);
  out.t = s.t + h;
  return out;
}

RayState integrate_ray(const SpeedModel& m, RayState s, double duration, int steps) {
  if (steps < 1) throw std::invalid_argument("rays: need at least one step");
  const double h = duration / steps;
  const double t0 = s.t;
  for (int i = 0; i < steps; ++i) {
    s = rk4_step(m, s, h);
    s.t = t0 + (i + 1) * h;
  }
  return s;
}

Vec2 RayPath::position(double t) const {
  if (escaped && t >= exit_time) return exit_point + exit_dir * (t - exit_time);
  if (states.empty()) throw std::logic_error("rays: empty path");
  // RK4 samples are uniform in time; linear interpolation between them.
  const double h = states.size() > 1 ? states[1].t - states[0].t : 1.0;
  const double u = std::clamp((t - states.front().t) / h, 0.0, static_cast<double>(states.size() - 1));
  const std::size_t i = std::min(static_cast<std::size_t>(u), states.size() - 1);
  if (i + 1 >= states.size()) return states.back().x;
  const double w = u - static_cast<double>(i);
  return states[i].x * (1.0 - w) + states[i + 1].x * w;
}

RayPath trace_geodesic(const SpeedModel& m, const Covector& start, int sigma, double t_max, double h_ray) {
  if (start.y.norm() >= 1.0) throw std::invalid_argument("rays: start point must lie inside the unit disc");
  if (start.xi.norm() == 0.0) throw std::invalid_argument("rays: zero covector");
  if (sigma != 1 && sigma != -1) throw std::invalid_argument("rays: sigma must be +1 or -1");
  if (!(t_max > 0.0) || !(h_ray > 0.0)) throw std::invalid_argument("rays: t_max and h_ray must be positive");

  RayPath path;
  RayState s;
  s.x = start.y;
  s.p = start.xi.unit() * (sigma / m.c(start.y));
  path.states.push_back(s);
  const int max_steps = static_cast<int>(std::ceil(t_max / h_ray));
  for (int i = 0; i < max_steps; ++i) {
    RayState next = rk4_step(m, s, h_ray);
    next.t = (i + 1) * h_ray;
    path.states.push_back(next);
    s = next;
    if (s.x.norm() >= 1.0) {
      // c == 1 here, so the remaining path is the straight line through s.x.
      path.escaped = true;
      path.exit_dir = s.p.unit();
      const double back = forward_hit(s.x, -path.exit_dir, 1.0);
      const double tau = back >= 0.0 ? back : 0.0;
      path.exit_point = s.x - path.exit_dir * tau;
      path.exit_time = s.t - tau;
      break;
    }
  }
  return path;
}

std::vector<DetectionEvent> detect_events(const RayPath& path, const DetectorConfig& config, int sigma, double scale,
                                          LargeSides sides) {
  std::vector<DetectionEvent> out;
  if (!path.escaped) return out;
  const Vec2 e = path.exit_point;
  const Vec2 d = path.exit_dir;
  const double r = config.r;
  const double R = config.R;

  auto make = [&](Vec2 center, double center_time, int branch, double s_det, bool entry) {
    DetectionEvent ev;
    ev.sigma = sigma;
    ev.branch = branch;
    ev.entry_side = entry;
    ev.t_abs = s_det;
    ev.t = sigma * s_det;
    ev.theta = wrap_angle(std::atan2(center.y, center.x));
    ev.x = e + d * (s_det - path.exit_time);
    ev.dir = d;
    ev.center_time = center_time;
    const Vec2 n = (ev.x - center) / r;
    ev.normal_dot = std::abs(d.dot(n));
    const double sign = (branch == 1) ? 1.0 : -1.0;
    ev.lambda = sigma * sign * scale / (2.0 * r);
    ev.tau = -sigma * scale;
    const Vec2 th_perp = unit_angle(ev.theta).perp();
    ev.omega = th_perp * (-2.0 * ev.lambda * R * ev.x.dot(th_perp));
    if (ev.normal_dot >= 1.0 - 1e-6) out.push_back(ev);
  };

  if (config.mode == DetectorMode::Small) {
    const double tau = forward_hit(e, d, R);
    if (tau < 0.0) return out;
    const Vec2 z = e + d * tau;
    const double sc = path.exit_time + tau;
    if (sc - r >= path.exit_time - 1e-12) make(z, sc, 1, sc - r, false);
    make(z, sc, 2, sc + r, false);
  } else {
    // Centre at the exit point itself.
    make(e, path.exit_time, 1, path.exit_time + r, false);
    if (sides == LargeSides::Both) {
      const double ed = e.dot(d);
      const Vec2 b = e - d * (2.0 * ed);
      const double s_det = path.exit_time + r - 2.0 * ed;
      if (ed > 1e-12 && s_det >= path.exit_time - 1e-12) make(b, path.exit_time - 2.0 * ed, 1, s_det, true);
    }
  }
  return out;
}

CanonicalImage canonical_image(const SpeedModel& m, const Covector& cv, const DetectorConfig& config,
                               LargeSides sides, double t_max, double h_ray) {
  CanonicalImage img;
  const double scale = m.c(cv.y) * cv.xi.norm();
  for (int sigma : {1, -1}) {
    const RayPath path = trace_geodesic(m, cv, sigma, t_max, h_ray);
    if (!path.escaped) {
      img.escaped = false;
      img.diagnostic += std::string(sigma > 0 ? "+" : "-") + " branch trapped before t_max; ";
      continue;
    }
    const auto ev = detect_events(path, config, sigma, scale, sides);
    img.events.insert(img.events.end(), ev.begin(), ev.end());
  }
  const std::size_t expected =
      config.mode == DetectorMode::Small ? 4u : (sides == LargeSides::Both ? 4u : 2u);
  if (img.escaped && img.events.size() != expected) {
    img.diagnostic += "expected " + std::to_string(expected) + " events, found " + std::to_string(img.events.size());
  }
  return img;
}

Vec2 mirror_point(Vec2 x, double theta, const DetectorConfig& config) {
  const Vec2 th = unit_angle(theta);
  const Vec2 c = th * config.R;
  if (std::abs((x - c).norm() - config.r) > 1e-9) {
    throw std::invalid_argument("mirror point: x is not on the detector circle");
  }
  if (config.mode == DetectorMode::Small) return c * 2.0 - x;
  return x - th * (2.0 * (x - c).dot(th));
}

bool Aperture::contains_angle(double theta) const {
  if (full_circle) return true;
  const double span = arc_end - arc_begin;
  if (!(span > 0.0)) return false;
  const double rel = wrap_angle(theta - arc_begin);
  return rel > 0.0 && rel < span;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Visible:
      return "visible";
    case Verdict::Masked:
      return "masked";
    case Verdict::OutOfAperture:
      return "out_of_aperture";
  }
  return "?";
}

std::size_t VisibilityReport::count(Verdict v) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [v](const VisibilityEntry& e) { return e.verdict == v; }));
}

bool mirror_partner(const SpeedModel& m, const DetectionEvent& e, const DetectorConfig& config, double h_ray,
                    Covector& partner) {
  const Vec2 xm = mirror_point(e.x, e.theta, config);
  if ((xm - e.x).norm() < 1e-9) return false;
  const Vec2 center = unit_angle(e.theta) * config.R;
  // Direction of travel at the mirror point giving the same (t, theta, tau, omega).
  const Vec2 dm = config.mode == DetectorMode::Small ? e.dir : (xm - center) / config.r;

  // Back along -dm for ray time t_abs: straight until B_1, then the flow.
  const double enter = forward_hit(xm, -dm, 1.0);
  if (enter < 0.0 || enter >= e.t_abs) return false;
  RayState s;
  s.x = xm - dm * enter;
  s.p = -dm;
  const double rest = e.t_abs - enter;
  const int steps = std::max(1, static_cast<int>(std::ceil(rest / h_ray)));
  s = integrate_ray(m, s, rest, steps);
  if (s.x.norm() >= 1.0) return false;
  partner.y = s.x;
  // Forward direction at t = 0 is -p; the negative-time branch flips it.
  partner.xi = (-s.p).unit() * e.sigma;
  return true;
}

namespace {

class CovectorIndex {
 public:
  CovectorIndex(const std::vector<Covector>& wf, double cell) : wf_(wf), cell_(cell) {
    for (std::size_t i = 0; i < wf.size(); ++i) buckets_[key(cell_of(wf[i].y.x), cell_of(wf[i].y.y))].push_back(i);
  }

  bool contains(const Covector& q, double pos_tol, double cos_tol) const {
    const long cx = cell_of(q.y.x), cy = cell_of(q.y.y);
    const Vec2 qd = q.xi.unit();
    for (long dy = -1; dy <= 1; ++dy) {
      for (long dx = -1; dx <= 1; ++dx) {
        const auto it = buckets_.find(key(cx + dx, cy + dy));
        if (it == buckets_.end()) continue;
        for (std::size_t i : it->second) {
          if ((wf_[i].y - q.y).norm() <= pos_tol && wf_[i].xi.unit().dot(qd) >= cos_tol) return true;
        }
      }
    }
    return false;
  }

 private:
  const std::vector<Covector>& wf_;
  double cell_;
  std::unordered_map<long long, std::vector<std::size_t>> buckets_;

  long cell_of(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  static long long key(long a, long b) { return (static_cast<long long>(a) << 32) ^ (b & 0xffffffffLL); }
};

}  // namespace

VisibilityReport visibility(const SpeedModel& m, const std::vector<Covector>& wf, const Aperture& aperture,
                            const DetectorConfig& config, const VisibilityOptions& opt) {
  if (!(opt.position_tol > 0.0)) throw std::invalid_argument("visibility: position tolerance must be positive");
  VisibilityReport rep;
  rep.entries.resize(wf.size());
  const CovectorIndex index(wf, opt.position_tol);
  const double cos_tol = std::cos(opt.angle_tol_deg * std::numbers::pi / 180.0);

#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < static_cast<long>(wf.size()); ++i) {
    VisibilityEntry& out = rep.entries[i];
    out.cv = wf[i];
    const CanonicalImage img = canonical_image(m, wf[i], config, opt.sides, opt.t_max, opt.h_ray);
    if (!img.escaped) out.note = img.diagnostic;
    bool any_in = false;
    for (const DetectionEvent& e : img.events) {
      if (!aperture.contains(e)) continue;
      Covector partner;
      const bool has = mirror_partner(m, e, config, opt.h_ray, partner);
      const bool masked = has && index.contains(partner, opt.position_tol, cos_tol);
      if (!any_in || (!masked && out.verdict != Verdict::Visible)) {
        out.witness = e;
        out.has_witness = true;
        out.has_partner = has;
        out.partner_in_wf = masked;
        if (has) out.partner = partner;
        out.verdict = masked ? Verdict::Masked : Verdict::Visible;
      }
      any_in = true;
    }
  }
  return rep;
}

double coverage_time(const DetectorConfig& config) {
  // Small: inf over theta of |x - R theta| - r is R - |x| - r. Large: r - 1 - |x|.
  // Both are maximised at x = 0.
  return std::abs(config.R - config.r);
}

}  // namespace ctat
