#pragma once

#include <cmath>
#include <cstddef>
#include <variant>
#include <vector>

namespace ctat {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double norm2() const { return x * x + y * y; }
  Vec2 unit() const { return *this / norm(); }
  Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

inline Vec2 unit_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

/// Uniform square grid on [-L, L]^2 with n nodes per axis. Node (ix, iy)
/// is stored at iy * n + ix. The outer `pml_width` band on every side is
/// reserved for the absorbing layer; everything inside it is "interior".
struct Grid2D {
  double half_width = 0.0;
  int n = 0;
  double h = 0.0;
  double pml_width = 0.0;

  double coord(int i) const { return -half_width + i * h; }
  Vec2 node(int ix, int iy) const { return {coord(ix), coord(iy)}; }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(n) +
           static_cast<std::size_t>(ix);
  }
  std::size_t size() const { return static_cast<std::size_t>(n) * static_cast<std::size_t>(n); }
  double interior_half_width() const { return half_width - pml_width; }
  bool in_interior(Vec2 p, double tol = 1e-9) const {
    const double a = interior_half_width() + tol;
    return std::abs(p.x) <= a && std::abs(p.y) <= a;
  }
  bool operator==(const Grid2D&) const = default;
};

/// Rejects n < 16, L <= 1, pml_width < 0 and grids whose interior does not
/// strictly contain the unit disc.
Grid2D make_grid(double half_width, int n, double pml_width);

/// Radial C-infinity cutoff: 1 for |x| <= radius - taper, 0 for
/// |x| >= radius, smooth monotone transition in between.
class SmoothCutoff {
 public:
  SmoothCutoff(double radius, double taper);

  double radius() const { return radius_; }
  double taper() const { return taper_; }

  double value_r(double r) const;
  double derivative_r(double r) const;
  double operator()(Vec2 p) const { return value_r(p.norm()); }
  Vec2 gradient(Vec2 p) const;

 private:
  double radius_;
  double taper_;
};

SmoothCutoff smooth_cutoff_eta(double radius, double taper);

/// Smooth transition S(s) = g(s) / (g(s) + g(1 - s)), g(s) = exp(-1/s):
/// 0 for s <= 0, 1 for s >= 1, S(1/2) = 1/2.
double smooth_step(double s);
double smooth_step_derivative(double s);

namespace speed {
struct Constant {
  double c0 = 1.0;
};
/// 1 + amplitude sin(8x) cos(5y) eta(x, y)
struct PaperDefault {
  double amplitude = 0.3;
  double eta_taper = 0.2;
};
/// 1 + a exp(-|x|^2 / sigma^2) eta(x)
struct RadialBump {
  double a = 0.2;
  double sigma = 0.4;
  double eta_taper = 0.2;
};
}  // namespace speed

using SpeedSpec = std::variant<speed::Constant, speed::PaperDefault, speed::RadialBump>;

/// Analytic evaluation of a speed spec and its gradient.
double speed_value(const SpeedSpec& spec, Vec2 p);
Vec2 speed_gradient(const SpeedSpec& spec, Vec2 p);

struct SpeedField {
  Grid2D grid;
  std::vector<double> c;

  double max_speed() const;
  double min_speed() const;
};

SpeedField sample_speed(const SpeedSpec& spec, const Grid2D& grid);

namespace phantom {
/// amp * exp(-|x - center|^2 / (2 sigma^2)), windowed to exact support
/// radius 5 sigma.
struct Gaussian {
  Vec2 center;
  double sigma = 0.1;
  double amp = 1.0;
};
/// amp inside radius - taper, smooth decay to exactly 0 at radius.
struct SmoothedDisc {
  Vec2 center;
  double radius = 0.3;
  double taper = 0.1;
  double amp = 1.0;
};
}  // namespace phantom

using PhantomComponent = std::variant<phantom::Gaussian, phantom::SmoothedDisc>;

struct PhantomSpec {
  std::vector<PhantomComponent> components;
  double margin = 0.05;
};

double support_radius(const PhantomComponent& c);
double phantom_value(const PhantomSpec& spec, Vec2 p);

struct Phantom {
  Grid2D grid;
  std::vector<double> f;
};

Phantom make_phantom(const PhantomSpec& spec, const Grid2D& grid);

/// Phase-space sample (y, xi). |xi| carries the frequency scale.
struct Covector {
  Vec2 y;
  Vec2 xi;
};

/// Strong-gradient nodes of f, each reported twice with xi = +/- the unit
/// gradient direction. Empty for f == 0.
std::vector<Covector> phantom_edges(const Phantom& p, double threshold);

/// Central-difference gradient at an interior node.
Vec2 grid_gradient(const Grid2D& grid, const std::vector<double>& f, int ix, int iy);

}  // namespace ctat
