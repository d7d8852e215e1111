#include "ctat/field.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ctat {

namespace {

double g_exp(double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

Grid2D make_grid(double half_width, int n, double pml_width) {
  if (n < 16) {
    throw std::invalid_argument("grid: n must be >= 16, got " + std::to_string(n));
  }
  if (!(pml_width >= 0.0)) {
    throw std::invalid_argument("grid: pml_width must be >= 0");
  }
  if (!(half_width > 1.0)) {
    throw std::invalid_argument("grid: domain too small, half_width must exceed 1 to contain B_1(0)");
  }
  Grid2D g;
  g.half_width = half_width;
  g.n = n;
  g.h = 2.0 * half_width / (n - 1);
  g.pml_width = pml_width;
  if (!(g.interior_half_width() > 1.0 + g.h)) {
    throw std::invalid_argument("grid: domain too small, interior (half_width - pml_width) must contain B_1(0)");
  }
  return g;
}

double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double a = g_exp(s);
  const double b = g_exp(1.0 - s);
  return a / (a + b);
}

double smooth_step_derivative(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  const double a = g_exp(s);
  const double b = g_exp(1.0 - s);
  const double da = a / (s * s);
  const double db = -b / ((1.0 - s) * (1.0 - s));
  const double den = a + b;
  return (da * den - a * (da + db)) / (den * den);
}

SmoothCutoff::SmoothCutoff(double radius, double taper) : radius_(radius), taper_(taper) {
  if (!(taper > 0.0) || !(taper < radius)) {
    throw std::invalid_argument("cutoff: need 0 < taper < radius");
  }
}

double SmoothCutoff::value_r(double r) const {
  return 1.0 - smooth_step((r - (radius_ - taper_)) / taper_);
}

double SmoothCutoff::derivative_r(double r) const {
  return -smooth_step_derivative((r - (radius_ - taper_)) / taper_) / taper_;
}

Vec2 SmoothCutoff::gradient(Vec2 p) const {
  const double r = p.norm();
  if (r == 0.0) return {};
  return p * (derivative_r(r) / r);
}

SmoothCutoff smooth_cutoff_eta(double radius, double taper) {
  if (radius > 1.0) {
    throw std::invalid_argument("cutoff: radius must be <= 1");
  }
  return SmoothCutoff(radius, taper);
}

double speed_value(const SpeedSpec& spec, Vec2 p) {
  return std::visit(
      overloaded{
          [](const speed::Constant& s) { return s.c0; },
          [&](const speed::PaperDefault& s) {
            if (p.norm2() >= 1.0) return 1.0;
            const SmoothCutoff eta(1.0, s.eta_taper);
            return 1.0 + s.amplitude * std::sin(8.0 * p.x) * std::cos(5.0 * p.y) * eta(p);
          },
          [&](const speed::RadialBump& s) {
            if (p.norm2() >= 1.0) return 1.0;
            const SmoothCutoff eta(1.0, s.eta_taper);
            return 1.0 + s.a * std::exp(-p.norm2() / (s.sigma * s.sigma)) * eta(p);
          },
      },
      spec);
}

Vec2 speed_gradient(const SpeedSpec& spec, Vec2 p) {
  return std::visit(
      overloaded{
          [](const speed::Constant&) { return Vec2{}; },
          [&](const speed::PaperDefault& s) {
            if (p.norm2() >= 1.0) return Vec2{};
            const SmoothCutoff eta(1.0, s.eta_taper);
            const double e = eta(p);
            const Vec2 ge = eta.gradient(p);
            const double sx = std::sin(8.0 * p.x), cx = std::cos(8.0 * p.x);
            const double sy = std::sin(5.0 * p.y), cy = std::cos(5.0 * p.y);
            const double a = s.amplitude;
            return Vec2{a * (8.0 * cx * cy * e + sx * cy * ge.x),
                        a * (-5.0 * sx * sy * e + sx * cy * ge.y)};
          },
          [&](const speed::RadialBump& s) {
            if (p.norm2() >= 1.0) return Vec2{};
            const SmoothCutoff eta(1.0, s.eta_taper);
            const double s2 = s.sigma * s.sigma;
            const double g = std::exp(-p.norm2() / s2);
            return (p * (-2.0 / s2 * g * eta(p)) + eta.gradient(p) * g) * s.a;
          },
      },
      spec);
}

double SpeedField::max_speed() const { return *std::max_element(c.begin(), c.end()); }
double SpeedField::min_speed() const { return *std::min_element(c.begin(), c.end()); }

SpeedField sample_speed(const SpeedSpec& spec, const Grid2D& grid) {
  const bool bad = std::visit(
      overloaded{
          [](const speed::Constant& s) { return !(s.c0 > 0.0); },
          [](const speed::PaperDefault& s) { return !(std::abs(s.amplitude) < 1.0); },
          [](const speed::RadialBump& s) { return !(s.a > -1.0) || !(s.sigma > 0.0); },
      },
      spec);
  if (bad) {
    throw std::invalid_argument("speed: spec admits min c <= 0");
  }
  SpeedField out{grid, std::vector<double>(grid.size())};
  for (int iy = 0; iy < grid.n; ++iy) {
    for (int ix = 0; ix < grid.n; ++ix) {
      out.c[grid.index(ix, iy)] = speed_value(spec, grid.node(ix, iy));
    }
  }
  if (!(out.min_speed() > 0.0)) {
    throw std::invalid_argument("speed: sampled min c <= 0");
  }
  return out;
}

double support_radius(const PhantomComponent& c) {
  return std::visit(overloaded{
                        [](const phantom::Gaussian& g) { return 5.0 * g.sigma; },
                        [](const phantom::SmoothedDisc& d) { return d.radius; },
                    },
                    c);
}

namespace {

Vec2 component_center(const PhantomComponent& c) {
  return std::visit([](const auto& v) { return v.center; }, c);
}

double component_value(const PhantomComponent& c, Vec2 p) {
  return std::visit(
      overloaded{
          [&](const phantom::Gaussian& g) {
            const Vec2 d = p - g.center;
            const double r = d.norm();
            if (r >= 5.0 * g.sigma) return 0.0;
            const SmoothCutoff window(5.0 * g.sigma, 2.0 * g.sigma);
            return g.amp * std::exp(-d.norm2() / (2.0 * g.sigma * g.sigma)) * window.value_r(r);
          },
          [&](const phantom::SmoothedDisc& d) {
            const double r = (p - d.center).norm();
            if (r >= d.radius) return 0.0;
            return d.amp * SmoothCutoff(d.radius, d.taper).value_r(r);
          },
      },
      c);
}

void validate_component(const PhantomComponent& c, double margin) {
  std::visit(overloaded{
                 [](const phantom::Gaussian& g) {
                   if (!(g.sigma > 0.0)) throw std::invalid_argument("phantom: gaussian sigma must be > 0");
                 },
                 [](const phantom::SmoothedDisc& d) {
                   if (!(d.taper > 0.0) || !(d.taper < d.radius)) {
                     throw std::invalid_argument("phantom: disc needs 0 < taper < radius");
                   }
                 },
             },
             c);
  const double reach = component_center(c).norm() + support_radius(c);
  if (reach > 1.0 - margin) {
    throw std::invalid_argument("phantom: component support exits B_1(0) (reach " + std::to_string(reach) +
                                " > 1 - margin " + std::to_string(1.0 - margin) + ")");
  }
}

}  // namespace

double phantom_value(const PhantomSpec& spec, Vec2 p) {
  double v = 0.0;
  for (const auto& c : spec.components) v += component_value(c, p);
  return v;
}

Phantom make_phantom(const PhantomSpec& spec, const Grid2D& grid) {
  if (!(spec.margin > 0.0) || !(spec.margin < 1.0)) {
    throw std::invalid_argument("phantom: margin must be in (0, 1)");
  }
  for (const auto& c : spec.components) validate_component(c, spec.margin);
  Phantom out{grid, std::vector<double>(grid.size(), 0.0)};
  const double limit2 = (1.0 - spec.margin) * (1.0 - spec.margin);
  for (int iy = 0; iy < grid.n; ++iy) {
    for (int ix = 0; ix < grid.n; ++ix) {
      const Vec2 p = grid.node(ix, iy);
      if (p.norm2() >= limit2) continue;
      out.f[grid.index(ix, iy)] = phantom_value(spec, p);
    }
  }
  return out;
}

Vec2 grid_gradient(const Grid2D& grid, const std::vector<double>& f, int ix, int iy) {
  const double inv = 1.0 / (2.0 * grid.h);
  return {(f[grid.index(ix + 1, iy)] - f[grid.index(ix - 1, iy)]) * inv,
          (f[grid.index(ix, iy + 1)] - f[grid.index(ix, iy - 1)]) * inv};
}

std::vector<Covector> phantom_edges(const Phantom& p, double threshold) {
  if (!(threshold > 0.0) || !(threshold < 1.0)) {
    throw std::invalid_argument("phantom_edges: threshold must be in (0, 1)");
  }
  const Grid2D& g = p.grid;
  std::vector<Vec2> grad(g.size());
  double gmax = 0.0;
  for (int iy = 1; iy < g.n - 1; ++iy) {
    for (int ix = 1; ix < g.n - 1; ++ix) {
      const Vec2 d = grid_gradient(g, p.f, ix, iy);
      grad[g.index(ix, iy)] = d;
      gmax = std::max(gmax, d.norm());
    }
  }
  std::vector<Covector> out;
  if (gmax == 0.0) return out;
  for (int iy = 1; iy < g.n - 1; ++iy) {
    for (int ix = 1; ix < g.n - 1; ++ix) {
      const Vec2 d = grad[g.index(ix, iy)];
      const double m = d.norm();
      if (m >= threshold * gmax) {
        const Vec2 y = g.node(ix, iy);
        out.push_back({y, d / m});
        out.push_back({y, -d / m});
      }
    }
  }
  return out;
}

}  // namespace ctat
