#include <omp.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ctat/detector.hpp"
#include "doctest.h"

using namespace ctat;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("detector points") {
  DetectorConfig s = DetectorConfig::small(2.0, 0.8);
  const auto p = detector_points(s, 0.0);
  REQUIRE(p.size() == 256u);
  CHECK(p[0].x == doctest::Approx(2.8));
  CHECK(p[0].y == doctest::Approx(0.0));

  DetectorConfig l = DetectorConfig::large(2.0);
  l.n_alpha = 64;
  const auto q = detector_points(l, kPi / 2);
  CHECK(q[32].x == doctest::Approx(-2.0));
  CHECK(q[32].y == doctest::Approx(1.0));

  for (const auto& cfg : {s, l}) {
    for (double th : {0.0, 0.7, 2.5, 4.0}) {
      for (Vec2 x : detector_points(cfg, th)) CHECK(x.norm() >= 1.0 - 1e-12);
    }
  }
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(DetectorConfig::small(2.0, 0.8).validate());
  CHECK_NOTHROW(DetectorConfig::small(1.8, 0.8).validate());
  CHECK_THROWS(DetectorConfig::small(1.5, 0.8).validate());
  CHECK_THROWS(DetectorConfig::large(1.9).validate());
  DetectorConfig c = DetectorConfig::large(2.0);
  c.n_alpha = 32;
  CHECK_THROWS(c.validate());
  c = DetectorConfig::small(2.0, 0.8);
  c.full_circle = false;
  c.arc_begin = 0.0;
  c.arc_end = -1.0;
  CHECK_THROWS(c.validate());

  c.arc_begin = -kPi / 2;
  c.arc_end = 0.0;
  c.n_theta = 10;
  const auto th = c.theta_grid();
  CHECK(th.front() > -kPi / 2);
  CHECK(th.back() < 0.0);
  CHECK(th[1] - th[0] == doctest::Approx(c.theta_spacing()));
}

TEST_CASE("ring averages of simple fields") {
  const Grid2D g = make_grid(3.5, 113, 0.5);
  const DetectorConfig cfg = DetectorConfig::small(2.0, 0.8);
  std::vector<double> one(g.size(), 1.0), x1(g.size());
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) x1[g.index(ix, iy)] = g.coord(ix);
  CHECK(ring_average(one, g, cfg, 0.3) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ring_average(x1, g, cfg, 0.0) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(ring_average(x1, g, cfg, 0.0, Interpolation::Cubic) == doctest::Approx(2.0).epsilon(1e-13));

  const DetectorConfig big = DetectorConfig::large(2.5);
  CHECK_THROWS_WITH(ring_average(one, g, big, 0.0), doctest::Contains("PML"));
}

TEST_CASE("trapezoid rule on the circle is spectrally accurate") {
  const auto u = [](Vec2 p) { return std::exp(-p.norm2() / (2 * 0.6 * 0.6)); };
  for (const DetectorConfig& base : {DetectorConfig::small(2.0, 0.8), DetectorConfig::large(2.0)}) {
    DetectorConfig fine = base;
    fine.n_alpha = 4 * base.n_alpha;
    for (double th : {0.0, 1.0}) {
      double a = 0.0, b = 0.0;
      for (Vec2 p : detector_points(base, th)) a += u(p);
      for (Vec2 p : detector_points(fine, th)) b += u(p);
      a /= base.n_alpha;
      b /= fine.n_alpha;
      CHECK(std::abs(a - b) <= 1e-10);
    }
  }
}

TEST_CASE("ring operator transpose and determinism") {
  const Grid2D g = make_grid(3.5, 90, 0.4);
  DetectorConfig cfg = DetectorConfig::large(2.0);
  cfg.n_theta = 17;
  for (Interpolation in : {Interpolation::Bilinear, Interpolation::Cubic}) {
    const RingOperator q(g, detector_circles(cfg), cfg.n_alpha, in);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<double> u(g.size()), gv(q.rows()), qu(q.rows()), qtg(g.size(), 0.0);
    for (double& v : u) v = nd(rng);
    for (double& v : gv) v = nd(rng);
    q.apply(u, qu);
    q.apply_transpose_add(gv, qtg);
    double l = 0.0, r = 0.0;
    for (std::size_t i = 0; i < qu.size(); ++i) l += qu[i] * gv[i];
    for (std::size_t i = 0; i < u.size(); ++i) r += u[i] * qtg[i];
    CHECK(std::abs(l - r) <= 1e-12 * std::abs(l));
  }
}

TEST_CASE("forward operator") {
  const Grid2D g = make_grid(3.5, 225, 0.5);
  const SpeedField c = sample_speed(speed::Constant{1.0}, g);
  const PmlProfile pml = pml_profile(g, 0.5, nominal_sigma_max(0.5, 2));

  SUBCASE("zero phantom") {
    DetectorConfig cfg = DetectorConfig::small(2.0, 0.8);
    cfg.n_theta = 8;
    cfg.record_time = 1.0;
    const Sinogram s = forward_operator(make_phantom(PhantomSpec{}, g), c, cfg, pml);
    CHECK(s.data.size() == static_cast<std::size_t>(s.time.nt) * 8);
    for (double v : s.data) CHECK(v == 0.0);
  }
}

namespace {

// Exact circular mean of the free-space solution for a gaussian initial
// pressure at the origin, c = 1: Hankel representation plus Graf's addition
// theorem, mean over alpha of J0(k |R theta + r e_alpha|) = J0(kR) J0(kr).
class ExactMean {
 public:
  ExactMean(double R, double r, double sigma) {
    for (double k = dk_; k < 8.0 / sigma; k += dk_) {
      k_.push_back(k);
      w_.push_back(k * sigma * sigma * std::exp(-0.5 * k * k * sigma * sigma) * std::cyl_bessel_j(0.0, k * R) *
                   std::cyl_bessel_j(0.0, k * r) * dk_);
    }
  }
  double operator()(double t) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < k_.size(); ++i) acc += w_[i] * std::cos(k_[i] * t);
    return acc;
  }

 private:
  double dk_ = 0.004;
  std::vector<double> k_, w_;
};

}  // namespace

TEST_CASE("forward operator against the free-space solution") {
  const Grid2D g = make_grid(3.5, 897, 0.5);
  const SpeedField c = sample_speed(speed::Constant{1.0}, g);
  const PmlProfile pml = pml_profile(g, 0.5, nominal_sigma_max(0.5, 2));
  const double sigma = 0.05;
  const Phantom f = make_phantom(PhantomSpec{{phantom::Gaussian{{0, 0}, sigma, 1.0}}}, g);
  for (const auto& [cfg0, dist] : {std::pair{DetectorConfig::small(2.0, 0.8), 1.2},
                                   std::pair{DetectorConfig::large(2.0), 1.0}}) {
    DetectorConfig cfg = cfg0;
    cfg.n_theta = 6;
    cfg.record_time = dist + 0.25;
    const Sinogram s = forward_operator(f, c, cfg, pml);
    double peak = 0.0, spread = 0.0;
    for (int k = 0; k < s.time.nt; ++k) {
      for (int j = 0; j < cfg.n_theta; ++j) {
        peak = std::max(peak, std::abs(s.at(k, j)));
        spread = std::max(spread, std::abs(s.at(k, j) - s.at(k, 0)));
      }
    }
    REQUIRE(peak > 0.0);
    CHECK(spread <= 0.05 * peak);  // rotational symmetry up to grid anisotropy

    const ExactMean exact(cfg.R, cfg.r, sigma);
    double exact_peak = 0.0;
    for (double t = dist - 0.1; t < dist + 0.15; t += 0.005) {
      exact_peak = std::max(exact_peak, std::abs(exact(t)));
    }
    CHECK(peak == doctest::Approx(exact_peak).epsilon(0.03));

    const auto first_above = [&](auto&& value, double thr) {
      for (int k = 0; k < s.time.nt; ++k) {
        if (std::abs(value(k)) > thr) return s.time.t(k);
      }
      return -1.0;
    };
    double first = -1.0;
    for (int j = 0; j < cfg.n_theta; ++j) {
      const double fj = first_above([&](int k) { return s.at(k, j); }, 1e-3 * peak);
      first = first < 0 ? fj : std::min(first, fj);
    }
    const double first_exact = first_above(
        [&](int k) { return s.time.t(k) < dist - 0.3 ? 0.0 : exact(s.time.t(k)); },
        1e-3 * exact_peak);
    MESSAGE("first arrival " << first << ", exact " << first_exact << ", distance " << dist);
    CHECK(std::abs(first - first_exact) <= g.h + s.time.dt);
    // The exact leading edge sits 3.7 sigma ahead of the geometric distance.
    CHECK(first_exact >= dist - 3.8 * sigma);
    CHECK(first_exact <= dist - 3.0 * sigma);
  }
}

TEST_CASE("forward operator is independent of the thread count") {
  const Grid2D g = make_grid(3.5, 97, 0.5);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  const PmlProfile pml = pml_profile(g, 0.5, 30.0);
  const Phantom f = make_phantom(PhantomSpec{{phantom::SmoothedDisc{{0.1, 0.2}, 0.4, 0.2, 1.0}}}, g);
  DetectorConfig cfg = DetectorConfig::large(2.0);
  cfg.n_theta = 24;
  cfg.record_time = 1.5;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const Sinogram a = forward_operator(f, c, cfg, pml);
  omp_set_num_threads(4);
  const Sinogram b = forward_operator(f, c, cfg, pml);
  omp_set_num_threads(saved);
  CHECK(a.data == b.data);
}

TEST_CASE("sweeps") {
  const Grid2D g = make_grid(3.6, 97, 0.5);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  const PmlProfile pml = pml_profile(g, 0.5, 30.0);
  const Phantom f = make_phantom(PhantomSpec{{phantom::SmoothedDisc{{0.1, 0.2}, 0.4, 0.2, 1.0}}}, g);
  DetectorConfig cfg = DetectorConfig::small(2.0, 0.8);
  cfg.n_theta = 16;
  cfg.record_time = 1.0;

  const CylinderFamily z = sweep_small_radius(make_phantom(PhantomSpec{}, g), c, pml, cfg, {2.0, 2.1, 2.2});
  for (double v : z.data) CHECK(v == 0.0);
  CHECK(cylinder_residual_small(z).max_abs() == 0.0);

  const CylinderFamily fam = sweep_small_radius(f, c, pml, cfg, {2.0, 2.1, 2.2});
  const Sinogram s = forward_operator(f, c, cfg, pml);
  REQUIRE(fam.time == s.time);
  bool same = true;
  for (int k = 0; k < s.time.nt; ++k)
    for (int j = 0; j < cfg.n_theta; ++j) same = same && fam.at(k, j, 0) == s.at(k, j);
  CHECK(same);

  CHECK_THROWS(sweep_small_radius(f, c, pml, cfg, {2.0, 2.1, 2.2, 2.3, 2.4}));  // reaches the PML
  CHECK_THROWS(sweep_small_radius(f, c, pml, cfg, {1.7, 2.0}));                 // R - r < 1

  DetectorConfig lc = DetectorConfig::large(2.0);
  lc.n_theta = 8;
  lc.record_time = 1.0;
  const CylinderFamily lf = sweep_large_radius(f, c, pml, lc, {2.0, 2.05});
  CHECK_THROWS_WITH(cylinder_residual_large(lf), doctest::Contains("too small"));
}

TEST_CASE("residual stencil responds linearly to a spike") {
  CylinderFamily P;
  P.time = TimeAxis{0.01, 7};
  P.theta = {0.0, 0.1, 0.2, 0.3, 0.4};
  P.radii = {2.0, 2.1, 2.2, 2.3};
  P.data.assign(7 * 5 * 4, 0.0);
  const double eps = 1e-3;
  P.data[P.index(3, 2, 1)] = eps;
  const ResidualField r = cylinder_residual_small(P);
  const double dt = 0.01, dth = 0.1, ds = 0.1, s = 2.1;
  const double expect = eps * (-2.0 / (dt * dt) + (2.15 + 2.05) / (s * ds * ds) + 2.0 / (dth * dth * s * s));
  CHECK(r.values[(3 * 3 + 1) * 2 + 0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r.max_abs() >= eps / (0.01 * 0.01));
  P.radii = {2.0, 2.1};
  CHECK_THROWS(cylinder_residual_small(P));
  P.radii = {2.0, 2.1, 2.3, 2.4};
  CHECK_THROWS(cylinder_residual_small(P));
}
