#include <cmath>
#include <random>

#include "ctat/wave.hpp"
#include "doctest.h"

using namespace ctat;

namespace {

constexpr double kDefaultSigmaMax = 120.0;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double state_dot(const WaveState& a, const WaveState& b) {
  return dot(a.u_curr, b.u_curr) + dot(a.u_prev, b.u_prev) + dot(a.psi_x, b.psi_x) + dot(a.psi_y, b.psi_y);
}

void randomize(WaveState& s, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  for (auto* v : {&s.u_curr, &s.u_prev, &s.psi_x, &s.psi_y})
    for (double& x : *v) x = nd(rng);
}

Phantom gaussian(const Grid2D& g, Vec2 c, double sigma) {
  return make_phantom(PhantomSpec{{phantom::Gaussian{c, sigma, 1.0}}}, g);
}

}  // namespace

TEST_CASE("pml profile shape") {
  const Grid2D g = make_grid(3.0, 121, 0.5);
  const PmlProfile p = pml_profile(g, 0.5, 40.0, 2);
  CHECK(p.sigma_at_depth(0.0) == 0.0);
  CHECK(p.sigma_at_depth(0.5) == doctest::Approx(40.0));
  CHECK(p.sigma_at_depth(0.25) == doctest::Approx(10.0));
  for (int i = 0; i < g.n; ++i) {
    if (std::abs(g.coord(i)) <= 2.5) CHECK(p.node[i] == 0.0);
  }
  for (int i = 1; i <= g.n / 2; ++i) CHECK(p.node[i - 1] >= p.node[i]);
  CHECK_THROWS(pml_profile(g, 0.5, 40.0, 2, 2.8));
  CHECK_NOTHROW(pml_profile(g, 0.5, 40.0, 2, 2.5));
}

TEST_CASE("zero state and CFL") {
  const Grid2D g = make_grid(2.0, 65, 0.4);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  const double dt = cfl_time_step(c);
  CHECK(dt == doctest::Approx(0.5 * g.h / (std::sqrt(2.0) * c.max_speed())));
  CHECK_THROWS(WaveSolver(c, PmlProfile::none(g), 1.01 * g.h / (std::sqrt(2.0) * c.max_speed())));
  const WaveState z = init_state(make_phantom(PhantomSpec{}, g), c, dt);
  const WaveState s = step(z, c, pml_profile(g, 0.4, 20.0));
  for (double v : s.u_curr) CHECK(v == 0.0);
  CHECK(energy(z, c) == 0.0);
  CHECK(s.t == doctest::Approx(dt));
}

TEST_CASE("time axis ends exactly at T") {
  const Grid2D g = make_grid(2.0, 65, 0.4);
  const SpeedField c = sample_speed(speed::Constant{1.0}, g);
  const TimeAxis ax = make_time_axis(c, 5.0);
  CHECK(ax.end() == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(ax.dt <= cfl_time_step(c) * (1 + 1e-12));
}

TEST_CASE("initial state has vanishing discrete velocity") {
  for (int n : {65, 129}) {
    const Grid2D g = make_grid(2.0, n, 0.0);
    const SpeedField c = sample_speed(speed::PaperDefault{}, g);
    const Phantom f = gaussian(g, {0.1, 0.0}, 0.15);
    const double dt = cfl_time_step(c);
    WaveSolver solver(c, PmlProfile::none(g), dt);
    WaveState s = solver.initial_state(f.f);
    const std::vector<double> um1 = s.u_prev;
    solver.advance(s);
    // Even start: u^1 equals u^{-1} at every node.
    double m = 0.0;
    for (std::size_t k = 0; k < um1.size(); ++k) m = std::max(m, std::abs(s.u_curr[k] - um1[k]));
    CHECK(m < 1e-13);
  }
}

TEST_CASE("first step matches the Taylor expansion of the free-space solution") {
  // c = 1: u(dt) = f + dt^2/2 Lap f + O(dt^4); compare against the analytic
  // Laplacian of the gaussian.
  double prev = 0.0;
  for (int n : {81, 161}) {
    const Grid2D g = make_grid(2.0, n, 0.0);
    const SpeedField c = sample_speed(speed::Constant{1.0}, g);
    const double sigma = 0.15;
    const Phantom f = gaussian(g, {0, 0}, sigma);
    const double dt = cfl_time_step(c);
    WaveSolver solver(c, PmlProfile::none(g), dt);
    WaveState s = solver.initial_state(f.f);
    solver.advance(s);
    double err = 0.0;
    for (int iy = 1; iy < n - 1; ++iy) {
      for (int ix = 1; ix < n - 1; ++ix) {
        const Vec2 p = g.node(ix, iy);
        if (p.norm() > 3.0 * sigma - 2.0 * g.h) continue;  // window is identically 1 inside 3 sigma
        const double r2 = p.norm2(), s2 = sigma * sigma;
        const double fv = f.f[g.index(ix, iy)];
        const double lap = fv * (r2 / (s2 * s2) - 2.0 / s2);
        err = std::max(err, std::abs(s.u_curr[g.index(ix, iy)] - (fv + 0.5 * dt * dt * lap)));
      }
    }
    if (prev > 0.0) CHECK(prev / err > 8.0);  // O(dt^2 h^2) per step
    prev = err;
  }
}

TEST_CASE("advance_adjoint is the exact transpose of advance") {
  const Grid2D g = make_grid(2.0, 48, 0.5);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  std::mt19937_64 rng(7);
  for (const bool with_pml : {false, true}) {
    const PmlProfile pml = with_pml ? pml_profile(g, 0.5, 30.0) : PmlProfile::none(g);
    WaveSolver solver(c, pml, cfl_time_step(c));
    for (int trial = 0; trial < 3; ++trial) {
      WaveState a = solver.zero_state(), b = solver.zero_state();
      randomize(a, rng);
      randomize(b, rng);
      WaveState Aa = a;
      solver.advance(Aa);
      WaveState Atb = b;
      solver.advance_adjoint(Atb);
      const double lhs = state_dot(Aa, b), rhs = state_dot(a, Atb);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::sqrt(state_dot(Aa, Aa) * state_dot(b, b)));
    }
    // initial_state and its transpose
    std::vector<double> f(g.size()), fa;
    std::normal_distribution<double> nd;
    for (double& v : f) v = nd(rng);
    WaveState b = solver.zero_state();
    randomize(b, rng);
    const WaveState If = solver.initial_state(f);
    fa = solver.initial_state_transpose(b);
    CHECK(std::abs(state_dot(If, b) - dot(f, fa)) <= 1e-12 * std::sqrt(state_dot(If, If) * state_dot(b, b)));
  }
}

TEST_CASE("energy at t = 0 and conservation without damping") {
  const Grid2D g = make_grid(2.0, 257, 0.0);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  const Phantom f = gaussian(g, {0.1, -0.1}, 0.12);
  const double dt = cfl_time_step(c, 0.5);
  WaveSolver solver(c, PmlProfile::none(g), dt);
  WaveState s = solver.initial_state(f.f);

  double grad2 = 0.0;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix + 1 < g.n; ++ix) {
      const double dx = (f.f[g.index(ix + 1, iy)] - f.f[g.index(ix, iy)]) / g.h;
      const double dy = (f.f[g.index(iy, ix + 1)] - f.f[g.index(iy, ix)]) / g.h;
      grad2 += dx * dx + dy * dy;
    }
  }
  const double e_grad = 0.5 * g.h * g.h * grad2;
  const double e0 = energy(s, c);
  CHECK(e0 > 0.0);
  // The leapfrog energy pairs two time levels, so it differs from
  // 1/2 |Grad f|^2 by O(dt^2 |Lap f|^2).
  CHECK(std::abs(e0 - e_grad) / e_grad < 2e-2);

  double drift = 0.0;
  for (int k = 0; k < 1000; ++k) {
    solver.advance(s);
    drift = std::max(drift, std::abs(energy(s, c) - e0) / e0);
  }
  CHECK(drift <= 1e-3);
  CHECK(drift < 1e-10);  // exact conservation up to roundoff while the pulse is inside
}

TEST_CASE("time reversibility without damping") {
  const Grid2D g = make_grid(2.0, 129, 0.0);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  const Phantom f = gaussian(g, {0.2, 0.0}, 0.1);
  WaveSolver solver(c, PmlProfile::none(g), cfl_time_step(c));
  WaveState s = solver.initial_state(f.f);
  const WaveState s0 = s;
  const int N = 300;
  for (int k = 0; k < N; ++k) solver.advance(s);
  std::swap(s.u_curr, s.u_prev);
  for (int k = 0; k < N; ++k) solver.advance(s);
  std::swap(s.u_curr, s.u_prev);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < s.u_curr.size(); ++k) {
    num += std::pow(s.u_curr[k] - s0.u_curr[k], 2) + std::pow(s.u_prev[k] - s0.u_prev[k], 2);
    den += s0.u_curr[k] * s0.u_curr[k] + s0.u_prev[k] * s0.u_prev[k];
  }
  CHECK(std::sqrt(num / den) <= 1e-10);
}

TEST_CASE("finite speed of propagation") {
  const Grid2D g = make_grid(3.5, 225, 0.5);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  const Phantom f = make_phantom(PhantomSpec{{phantom::SmoothedDisc{{0.2, 0.1}, 0.5, 0.2, 1.0}}}, g);
  const double T = 1.2;
  const WaveState s = solve_forward(f, c, T, pml_profile(g, 0.5, 30.0));
  const double rad = 1.0 + T * c.max_speed() + 3.0 * g.h;
  REQUIRE(rad < g.interior_half_width());
  double outside = 0.0, total = 0.0;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const double v = std::abs(s.u_curr[g.index(ix, iy)]);
      total += v;
      if (g.node(ix, iy).norm() > rad) outside += v;
    }
  }
  CHECK(total > 0.0);
  CHECK(outside <= 1e-8 * total);
}

TEST_CASE("arrival time at a probe") {
  const Grid2D g = make_grid(3.0, 241, 0.5);
  const SpeedField c = sample_speed(speed::Constant{1.0}, g);
  const double sigma = 0.1;
  const Phantom f = gaussian(g, {0, 0}, sigma);
  const int ip = g.n / 2 + static_cast<int>(std::lround(1.5 / g.h));
  const double d = g.coord(ip);
  std::vector<double> trace, times;
  solve_forward(f, c, 2.2, pml_profile(g, 0.5, 30.0), [&](int, double t, const std::vector<double>& u) {
    times.push_back(t);
    trace.push_back(u[g.index(ip, g.n / 2)]);
  });
  // free-space reference: u(rho, t) = int k sigma^2 exp(-k^2 sigma^2 / 2) J0(k rho) cos(k t) dk
  const auto exact = [&](double t) {
    double acc = 0.0;
    const double dk = 0.004;
    for (double k = dk; k < 8.0 / sigma; k += dk) {
      acc += k * sigma * sigma * std::exp(-0.5 * k * k * sigma * sigma) * std::cyl_bessel_j(0.0, k * d) *
             std::cos(k * t);
    }
    return acc * dk;
  };
  double peak = 0.0, exact_peak = 0.0;
  for (double v : trace) peak = std::max(peak, std::abs(v));
  for (double t = d - 0.2; t < d + 0.3; t += 0.005) exact_peak = std::max(exact_peak, std::abs(exact(t)));
  REQUIRE(peak > 0.0);
  CHECK(peak == doctest::Approx(exact_peak).epsilon(0.02));
  double first = -1.0, first_exact = -1.0;
  for (std::size_t k = 0; k < trace.size() && first < 0; ++k) {
    if (std::abs(trace[k]) > 1e-3 * peak) first = times[k];
  }
  for (std::size_t k = 0; k < trace.size() && first_exact < 0; ++k) {
    if (times[k] > d - 6 * sigma && std::abs(exact(times[k])) > 1e-3 * exact_peak) first_exact = times[k];
  }
  const double dt = times[1] - times[0];
  CHECK(std::abs(first - first_exact) <= g.h + dt);
}

TEST_CASE("point source gives an expanding circular front") {
  const Grid2D g = make_grid(2.5, 201, 0.5);
  const SpeedField c = sample_speed(speed::Constant{1.0}, g);
  const TimeAxis axis = make_time_axis(c, 1.2);
  const double sigma = 2.0 * g.h;
  const int steps_on = 4;
  std::vector<double> bump(g.size());
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) bump[g.index(ix, iy)] = std::exp(-g.node(ix, iy).norm2() / (2 * sigma * sigma));
  const WaveState s = solve_with_sources(
      [&](int k, std::vector<double>& buf) {
        if (k < steps_on) buf = bump;
      },
      axis.nt - 1, c, axis, pml_profile(g, 0.5, 30.0));
  // radius of the peak amplitude
  double best = 0.0, rbest = 0.0;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const double v = std::abs(s.u_curr[g.index(ix, iy)]);
      if (v > best) {
        best = v;
        rbest = g.node(ix, iy).norm();
      }
    }
  }
  const double t0 = 0.5 * steps_on * axis.dt;
  CHECK(std::abs(rbest - (axis.end() - t0)) <= 3.0 * sigma + g.h);

  CHECK_THROWS(solve_with_sources({}, axis.nt, c, axis, PmlProfile::none(g)));
  const WaveState z = solve_with_sources({}, axis.nt - 1, c, axis, PmlProfile::none(g));
  for (double v : z.u_curr) CHECK(v == 0.0);
}

TEST_CASE("second-order convergence against a fine reference") {
  const double L = 1.6, T = 0.6;
  const auto run = [&](int n) {
    const Grid2D g = make_grid(L, n, 0.0);
    const SpeedField c = sample_speed(speed::PaperDefault{}, g);
    const Phantom f = gaussian(g, {0.1, 0.05}, 0.15);
    return std::pair{g, solve_forward(f, c, T, PmlProfile::none(g)).u_curr};
  };
  const auto [gr, ref] = run(641);
  std::vector<double> errs;
  for (int n : {81, 161}) {
    const auto [g, u] = run(n);
    const int stride = (gr.n - 1) / (g.n - 1);
    double e = 0.0;
    for (int iy = 0; iy < g.n; ++iy)
      for (int ix = 0; ix < g.n; ++ix) e += std::pow(u[g.index(ix, iy)] - ref[gr.index(ix * stride, iy * stride)], 2);
    errs.push_back(std::sqrt(e * g.h * g.h));
  }
  const double ratio = errs[0] / errs[1];
  MESSAGE("wave convergence ratio " << ratio);
  CHECK(ratio >= 3.2);
  CHECK(ratio <= 4.8);
}

namespace {

WaveState diff_on(const WaveState& a, const Grid2D& ga, const WaveState& b, const Grid2D& gb) {
  // b lives on a larger grid with identical spacing and node alignment.
  const int off = (gb.n - ga.n) / 2;
  WaveState d = a;
  for (int iy = 0; iy < ga.n; ++iy) {
    for (int ix = 0; ix < ga.n; ++ix) {
      d.u_curr[ga.index(ix, iy)] -= b.u_curr[gb.index(ix + off, iy + off)];
      d.u_prev[ga.index(ix, iy)] -= b.u_prev[gb.index(ix + off, iy + off)];
    }
  }
  return d;
}

}  // namespace

TEST_CASE("PML reflection and absorption") {
  const Grid2D g = make_grid(3.0, 193, 0.5);
  const Grid2D gbig = make_grid(7.0, 449, 0.0);
  REQUIRE(g.h == doctest::Approx(gbig.h).epsilon(1e-14));
  const PhantomSpec ps{{phantom::Gaussian{{0.1, 0.0}, 0.1, 1.0}}};
  const SpeedSpec sp = speed::PaperDefault{};
  const SpeedField c = sample_speed(sp, g), cbig = sample_speed(sp, gbig);
  const double T = 5.0;
  const PmlProfile pml = pml_profile(g, 0.5, kDefaultSigmaMax);
  double peak = 0.0, e0 = 0.0;
  const Phantom f = make_phantom(ps, g);
  WaveSolver probe_solver(c, pml, make_time_axis(c, T).dt);
  {
    WaveState s = probe_solver.initial_state(f.f);
    e0 = energy(s, c);
    peak = e0;
  }
  const WaveState s = solve_forward(f, c, T, pml);
  const WaveState sb = solve_forward(make_phantom(ps, gbig), cbig, T, PmlProfile::none(gbig));
  const double half = g.interior_half_width();
  const auto inside = [&](Vec2 p) { return std::abs(p.x) <= half && std::abs(p.y) <= half; };
  const double reflected = energy_in(diff_on(s, g, sb, gbig), c, inside);
  MESSAGE("reflected energy ratio " << reflected / e0);
  CHECK(reflected / e0 <= 1e-3);
  const auto band = [&](Vec2 p) { return !inside(p); };
  CHECK(std::abs(energy_in(s, c, band)) <= 1e-3 * peak);
}
