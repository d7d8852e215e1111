#include "ctat/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace ctat {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool uniform(const std::vector<double>& v, double rel = 1e-9) {
  if (v.size() < 2) return true;
  const double d = v[1] - v[0];
  if (!(d > 0.0)) return false;
  for (std::size_t i = 2; i < v.size(); ++i) {
    if (std::abs((v[i] - v[i - 1]) - d) > rel * std::abs(d) + 1e-14) return false;
  }
  return true;
}

// Four-point Lagrange weights for nodes -1, 0, 1, 2 at offset t in [0, 1).
void lagrange4(double t, double w[4]) {
  w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
  w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
  w[3] = (t + 1.0) * t * (t - 1.0) / 6.0;
}

}  // namespace

std::string to_string(DetectorMode m) { return m == DetectorMode::Small ? "small" : "large"; }

DetectorMode detector_mode_from_string(const std::string& s) {
  if (s == "small") return DetectorMode::Small;
  if (s == "large") return DetectorMode::Large;
  throw std::invalid_argument("detector: mode must be 'small' or 'large', got '" + s + "'");
}

DetectorConfig DetectorConfig::small(double R, double r) {
  DetectorConfig c;
  c.mode = DetectorMode::Small;
  c.R = R;
  c.r = r;
  return c;
}

DetectorConfig DetectorConfig::large(double r) {
  DetectorConfig c;
  c.mode = DetectorMode::Large;
  c.R = 1.0;
  c.r = r;
  return c;
}

void DetectorConfig::validate() const {
  if (!(r > 0.0)) throw std::invalid_argument("detector: r must be > 0");
  if (mode == DetectorMode::Small) {
    if (!(R - r >= 1.0 - 1e-12)) {
      throw std::invalid_argument("detector: small mode requires R - r >= 1 (R = " + std::to_string(R) +
                                  ", r = " + std::to_string(r) + ")");
    }
  } else {
    if (std::abs(R - 1.0) > 1e-12) throw std::invalid_argument("detector: large mode requires R = 1");
    if (!(r >= 2.0 - 1e-12)) {
      throw std::invalid_argument("detector: large mode requires r >= 2 (r = " + std::to_string(r) + ")");
    }
  }
  if (n_theta < 1) throw std::invalid_argument("detector: n_theta must be >= 1");
  if (n_alpha < 64) throw std::invalid_argument("detector: n_alpha must be >= 64");
  if (!(record_time > 0.0)) throw std::invalid_argument("detector: record time T must be > 0");
  if (!(cfl > 0.0) || cfl > 1.0) throw std::invalid_argument("detector: cfl must be in (0, 1]");
  if (!full_circle) {
    if (!(arc_end > arc_begin)) throw std::invalid_argument("detector: aperture arc needs begin < end");
    if (arc_end - arc_begin > kTwoPi + 1e-12) {
      throw std::invalid_argument("detector: aperture arc longer than 2 pi");
    }
  }
}

std::vector<double> DetectorConfig::theta_grid() const {
  std::vector<double> th(n_theta);
  for (int j = 0; j < n_theta; ++j) {
    th[j] = full_circle ? kTwoPi * j / n_theta : arc_begin + (j + 0.5) * (arc_end - arc_begin) / n_theta;
  }
  return th;
}

double DetectorConfig::theta_spacing() const {
  return full_circle ? kTwoPi / n_theta : (arc_end - arc_begin) / n_theta;
}

bool DetectorConfig::same_geometry(const DetectorConfig& o) const {
  auto eq = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); };
  return mode == o.mode && eq(R, o.R) && eq(r, o.r) && n_theta == o.n_theta && n_alpha == o.n_alpha &&
         full_circle == o.full_circle && (full_circle || (eq(arc_begin, o.arc_begin) && eq(arc_end, o.arc_end)));
}

std::vector<Vec2> detector_points(const DetectorConfig& config, double theta) {
  std::vector<Vec2> pts(config.n_alpha);
  const Vec2 c = unit_angle(theta) * config.R;
  for (int k = 0; k < config.n_alpha; ++k) {
    pts[k] = c + unit_angle(kTwoPi * k / config.n_alpha) * config.r;
  }
  return pts;
}

std::vector<Circle> detector_circles(const DetectorConfig& config) {
  std::vector<Circle> out;
  for (double th : config.theta_grid()) out.push_back({unit_angle(th) * config.R, config.r});
  return out;
}

RingOperator::RingOperator(const Grid2D& grid, const std::vector<Circle>& circles, int n_alpha, Interpolation interp)
    : n_cols_(grid.size()) {
  if (n_alpha < 1) throw std::invalid_argument("ring operator: n_alpha must be >= 1");
  const double w_node = 1.0 / n_alpha;
  row_ptr_.assign(1, 0);
  std::vector<std::pair<std::size_t, double>> entries;
  for (const Circle& c : circles) {
    entries.clear();
    for (int k = 0; k < n_alpha; ++k) {
      const Vec2 p = c.center + unit_angle(kTwoPi * k / n_alpha) * c.radius;
      if (!grid.in_interior(p)) {
        throw std::invalid_argument("detector point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                    ") lies in the PML band or outside the grid");
      }
      const double fx = (p.x + grid.half_width) / grid.h;
      const double fy = (p.y + grid.half_width) / grid.h;
      const int ix = std::clamp(static_cast<int>(std::floor(fx)), 0, grid.n - 2);
      const int iy = std::clamp(static_cast<int>(std::floor(fy)), 0, grid.n - 2);
      const double tx = fx - ix, ty = fy - iy;
      if (interp == Interpolation::Bilinear) {
        entries.emplace_back(grid.index(ix, iy), w_node * (1 - tx) * (1 - ty));
        entries.emplace_back(grid.index(ix + 1, iy), w_node * tx * (1 - ty));
        entries.emplace_back(grid.index(ix, iy + 1), w_node * (1 - tx) * ty);
        entries.emplace_back(grid.index(ix + 1, iy + 1), w_node * tx * ty);
      } else {
        if (ix < 1 || iy < 1 || ix > grid.n - 3 || iy > grid.n - 3) {
          throw std::invalid_argument("detector point too close to the grid edge for cubic interpolation");
        }
        double wx[4], wy[4];
        lagrange4(tx, wx);
        lagrange4(ty, wy);
        for (int b = 0; b < 4; ++b) {
          for (int a = 0; a < 4; ++a) {
            entries.emplace_back(grid.index(ix + a - 1, iy + b - 1), w_node * wx[a] * wy[b]);
          }
        }
      }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& l, const auto& r) { return l.first < r.first; });
    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      double v = 0.0;
      while (j < entries.size() && entries[j].first == entries[i].first) v += entries[j++].second;
      col_.push_back(entries[i].first);
      val_.push_back(v);
      i = j;
    }
    row_ptr_.push_back(col_.size());
  }

  // Transposed copy so Q^T g can be formed node by node.
  const std::size_t R = rows();
  t_ptr_.assign(n_cols_ + 1, 0);
  for (std::size_t c : col_) ++t_ptr_[c + 1];
  for (std::size_t i = 0; i < n_cols_; ++i) t_ptr_[i + 1] += t_ptr_[i];
  t_row_.resize(col_.size());
  t_val_.resize(col_.size());
  std::vector<std::size_t> fill(t_ptr_.begin(), t_ptr_.end() - 1);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) {
      const std::size_t dst = fill[col_[e]]++;
      t_row_[dst] = r;
      t_val_[dst] = val_[e];
    }
  }
}

void RingOperator::apply(std::span<const double> u, std::span<double> out) const {
  if (u.size() != n_cols_ || out.size() != rows()) throw std::invalid_argument("ring operator: size mismatch");
  const long R = static_cast<long>(rows());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < R; ++r) {
    double acc = 0.0;
    for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) acc += val_[e] * u[col_[e]];
    out[r] = acc;
  }
}

void RingOperator::apply_transpose_add(std::span<const double> g, std::span<double> out) const {
  if (g.size() != rows() || out.size() != n_cols_) throw std::invalid_argument("ring operator: size mismatch");
  const long C = static_cast<long>(n_cols_);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < C; ++c) {
    const std::size_t b = t_ptr_[c], e = t_ptr_[c + 1];
    if (b == e) continue;
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += t_val_[i] * g[t_row_[i]];
    out[c] += acc;
  }
}

double ring_average(std::span<const double> u, const Grid2D& grid, const DetectorConfig& config, double theta,
                    Interpolation interp) {
  const RingOperator q(grid, {{unit_angle(theta) * config.R, config.r}}, config.n_alpha, interp);
  double out = 0.0;
  q.apply(u, std::span<double>(&out, 1));
  return out;
}

void check_detector_clearance(const Grid2D& grid, const DetectorConfig& config) {
  config.validate();
  if (config.extent() > grid.interior_half_width() + 1e-9) {
    throw std::invalid_argument("detector circles reach |x| = " + std::to_string(config.extent()) +
                                " beyond the interior half width " + std::to_string(grid.interior_half_width()));
  }
}

namespace {

// One solve, every circle sampled at every lattice time: out[k][c].
std::vector<double> record_circles(const Phantom& f, const SpeedField& speed, const PmlProfile& pml,
                                   const TimeAxis& axis, const RingOperator& q) {
  if (!(f.grid == speed.grid)) throw std::invalid_argument("detector: phantom and speed grids differ");
  const std::size_t C = q.rows();
  std::vector<double> out(static_cast<std::size_t>(axis.nt) * C);
  WaveSolver solver(speed, pml, axis.dt);
  WaveState s = solver.initial_state(f.f);
  for (int k = 0; k < axis.nt; ++k) {
    q.apply(s.u_curr, std::span<double>(out.data() + static_cast<std::size_t>(k) * C, C));
    if (k + 1 < axis.nt) solver.advance(s);
  }
  solver.check_finite(s);
  return out;
}

}  // namespace

Sinogram forward_operator(const Phantom& f, const SpeedField& speed, const DetectorConfig& config,
                          const PmlProfile& pml, Interpolation interp) {
  check_detector_clearance(speed.grid, config);
  Sinogram s;
  s.config = config;
  s.theta = config.theta_grid();
  s.time = make_time_axis(speed, config.record_time, config.cfl);
  const RingOperator q(speed.grid, detector_circles(config), config.n_alpha, interp);
  s.data = record_circles(f, speed, pml, s.time, q);
  return s;
}

namespace {

CylinderFamily sweep(const Phantom& f, const SpeedField& speed, const PmlProfile& pml, const DetectorConfig& config,
                     const std::vector<double>& values, DetectorMode mode, Interpolation interp) {
  if (values.empty()) throw std::invalid_argument("sweep: no radius values");
  CylinderFamily fam;
  fam.mode = mode;
  fam.theta = config.theta_grid();
  fam.radii = values;
  fam.periodic_theta = config.full_circle;
  fam.time = make_time_axis(speed, config.record_time, config.cfl);
  std::vector<Circle> circles;
  for (double th : fam.theta) {
    for (double v : values) {
      if (mode == DetectorMode::Small) {
        circles.push_back({unit_angle(th) * v, config.r});
      } else {
        circles.push_back({unit_angle(th), v});
      }
    }
  }
  for (double v : values) {
    DetectorConfig c = config;
    if (mode == DetectorMode::Small) {
      c.mode = DetectorMode::Small;
      c.R = v;
    } else {
      c.mode = DetectorMode::Large;
      c.R = 1.0;
      c.r = v;
    }
    check_detector_clearance(speed.grid, c);
  }
  fam.fixed = mode == DetectorMode::Small ? config.r : 1.0;
  const RingOperator q(speed.grid, circles, config.n_alpha, interp);
  fam.data = record_circles(f, speed, pml, fam.time, q);
  return fam;
}

}  // namespace

CylinderFamily sweep_small_radius(const Phantom& f, const SpeedField& speed, const PmlProfile& pml,
                                  const DetectorConfig& config, const std::vector<double>& R_values,
                                  Interpolation interp) {
  return sweep(f, speed, pml, config, R_values, DetectorMode::Small, interp);
}

CylinderFamily sweep_large_radius(const Phantom& f, const SpeedField& speed, const PmlProfile& pml,
                                  const DetectorConfig& config, const std::vector<double>& r_values,
                                  Interpolation interp) {
  return sweep(f, speed, pml, config, r_values, DetectorMode::Large, interp);
}

double ResidualField::rms() const {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s / values.size());
}

double ResidualField::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

namespace {

ResidualField residual(const CylinderFamily& P, bool angular) {
  const int nt = P.time.nt;
  const int nth = static_cast<int>(P.theta.size());
  const int nr = static_cast<int>(P.radii.size());
  if (P.data.size() != static_cast<std::size_t>(nt) * nth * nr) {
    throw std::invalid_argument("residual: family data does not match its lattice");
  }
  const bool periodic = P.periodic_theta && nth >= 3;
  if (nt < 2 || nr < 3 || (angular && !periodic && nth < 3)) {
    throw std::invalid_argument("residual: lattice too small for centred second differences");
  }
  if (!uniform(P.radii) || (angular && !uniform(P.theta))) {
    throw std::invalid_argument("residual: radius and angle lattices must be uniform");
  }
  const double dt = P.time.dt;
  const double ds = P.radii[1] - P.radii[0];
  const double dth = nth > 1 ? P.theta[1] - P.theta[0] : 0.0;
  const int j0 = (!angular || periodic) ? 0 : 1;
  const int j1 = (!angular || periodic) ? nth : nth - 1;

  ResidualField out;
  out.nt = nt - 1;
  out.n_theta = j1 - j0;
  out.n_radius = nr - 2;
  out.values.resize(static_cast<std::size_t>(out.nt) * out.n_theta * out.n_radius);
  std::size_t o = 0;
  for (int k = 0; k < nt - 1; ++k) {
    const int km = k == 0 ? 1 : k - 1;  // P(-dt) = P(dt)
    for (int j = j0; j < j1; ++j) {
      const int jm = (j - 1 + nth) % nth, jp = (j + 1) % nth;
      for (int m = 1; m < nr - 1; ++m) {
        const double s = P.radii[m];
        const double p = P.at(k, j, m);
        const double ptt = (P.at(k + 1, j, m) - 2.0 * p + P.at(km, j, m)) / (dt * dt);
        const double sp = s + 0.5 * ds, sm = s - 0.5 * ds;
        const double radial = (sp * (P.at(k, j, m + 1) - p) - sm * (p - P.at(k, j, m - 1))) / (s * ds * ds);
        double v = ptt - radial;
        if (angular) v -= (P.at(k, jp, m) - 2.0 * p + P.at(k, jm, m)) / (dth * dth * s * s);
        out.values[o++] = v;
      }
    }
  }
  return out;
}

}  // namespace

ResidualField cylinder_residual_small(const CylinderFamily& P) { return residual(P, true); }

ResidualField cylinder_residual_large(const CylinderFamily& P) { return residual(P, false); }

}  // namespace ctat
