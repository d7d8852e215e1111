#include "ctat/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ctat/rays.hpp"
#include "ctat/recon.hpp"
#include "ctat/wave.hpp"

namespace ctat {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

constexpr double kSigmaMax = 120.0;

}  // namespace

double adjoint_mismatch(DetectorMode mode, int n, int pairs, std::uint64_t seed, bool break_adjoint) {
  const bool small = mode == DetectorMode::Small;
  const Grid2D g = make_grid(small ? 3.4 : 3.6, n, 0.5);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  DetectorConfig cfg = small ? DetectorConfig::small(2.0, 0.8) : DetectorConfig::large(2.0);
  cfg.n_theta = 60;
  MeasurementOperator op(c, cfg, pml_profile(g, 0.5, kSigmaMax));
  op.break_adjoint(break_adjoint);
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int i = 0; i < pairs; ++i) {
    const auto f = random_vector(op.image_size(), rng);
    const auto d = random_vector(op.data_size(), rng);
    const auto Mf = op.apply(f);
    const auto Mtd = op.adjoint(d);
    worst = std::max(worst, std::abs(dot(Mf, d) - dot(f, Mtd)) / std::sqrt(dot(Mf, Mf) * dot(d, d)));
  }
  return worst;
}

double energy_drift(int n, int steps) {
  const Grid2D g = make_grid(2.0, n, 0.0);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  const Phantom f = make_phantom(PhantomSpec{{phantom::Gaussian{{0.1, -0.1}, 0.12, 1.0}}}, g);
  WaveSolver solver(c, PmlProfile::none(g), cfl_time_step(c, 0.5));
  WaveState s = solver.initial_state(f.f);
  const double e0 = energy(s, c);
  double drift = 0.0;
  for (int k = 0; k < steps; ++k) {
    solver.advance(s);
    drift = std::max(drift, std::abs(energy(s, c) - e0) / e0);
  }
  return drift;
}

double finite_speed_leak(double T) {
  const Grid2D g = make_grid(3.5, 225, 0.5);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  const Phantom f = make_phantom(PhantomSpec{{phantom::SmoothedDisc{{0.2, 0.1}, 0.5, 0.2, 1.0}}}, g);
  const WaveState s = solve_forward(f, c, T, pml_profile(g, 0.5, kSigmaMax));
  const double rad = 1.0 + T * c.max_speed() + 3.0 * g.h;
  if (rad >= g.interior_half_width()) throw std::invalid_argument("finite speed check: T too large for the grid");
  double outside = 0.0, total = 0.0;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const double v = std::abs(s.u_curr[g.index(ix, iy)]);
      total += v;
      if (g.node(ix, iy).norm() > rad) outside += v;
    }
  }
  return outside / total;
}

PmlCheck pml_check(double T) {
  const Grid2D g = make_grid(3.0, 193, 0.5);
  const Grid2D gbig = make_grid(7.0, 449, 0.0);
  const PhantomSpec ps{{phantom::Gaussian{{0.1, 0.0}, 0.1, 1.0}}};
  const SpeedSpec sp = speed::PaperDefault{};
  const SpeedField c = sample_speed(sp, g), cbig = sample_speed(sp, gbig);
  const PmlProfile pml = pml_profile(g, 0.5, kSigmaMax);
  const Phantom f = make_phantom(ps, g);
  const double e0 = energy(WaveSolver(c, pml, make_time_axis(c, T).dt).initial_state(f.f), c);
  const WaveState s = solve_forward(f, c, T, pml);
  const WaveState sb = solve_forward(make_phantom(ps, gbig), cbig, T, PmlProfile::none(gbig));

  const int off = (gbig.n - g.n) / 2;
  WaveState d = s;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      d.u_curr[g.index(ix, iy)] -= sb.u_curr[gbig.index(ix + off, iy + off)];
      d.u_prev[g.index(ix, iy)] -= sb.u_prev[gbig.index(ix + off, iy + off)];
    }
  }
  const double half = g.interior_half_width();
  const auto inside = [&](Vec2 p) { return std::abs(p.x) <= half && std::abs(p.y) <= half; };
  PmlCheck out;
  out.reflected_ratio = energy_in(d, c, inside) / e0;
  out.band_ratio = std::abs(energy_in(s, c, [&](Vec2 p) { return !inside(p); })) / e0;
  return out;
}

RayChecks ray_checks(int covectors, std::uint64_t seed) {
  RayChecks out;
  const SpeedModel unit(speed::Constant{1.0});
  const SpeedModel pd(speed::PaperDefault{});

  RayState s{{0, 0}, {1, 0}, 0.0};
  for (int k = 1; k <= 800; ++k) {
    s = rk4_step(unit, s, 0.005);
    out.straight_deviation = std::max(out.straight_deviation, (s.x - Vec2{k * 0.005, 0.0}).norm());
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Covector> cvs;
  while (static_cast<int>(cvs.size()) < covectors) {
    const Vec2 y{1.7 * u(rng) - 0.85, 1.7 * u(rng) - 0.85};
    if (y.norm() >= 0.85) continue;
    cvs.push_back({y, unit_angle(2 * 3.141592653589793 * u(rng)) * (0.5 + 2.0 * u(rng))});
  }

  const DetectorConfig small = DetectorConfig::small(2.0, 0.8);
  const DetectorConfig large = DetectorConfig::large(2.0);
  out.small_events_min = out.large_events_min = 1 << 20;
  for (const Covector& cv : cvs) {
    for (int sigma : {1, -1}) {
      const RayPath p = trace_geodesic(pd, cv, sigma, 10.0);
      for (const RayState& st : p.states) {
        out.hamiltonian_drift = std::max(out.hamiltonian_drift, std::abs(pd.c(st.x) * st.p.norm() - 1.0));
      }
    }
    const CanonicalImage is = canonical_image(unit, cv, small);
    const CanonicalImage il = canonical_image(unit, cv, large);
    const int ns = static_cast<int>(is.events.size()), nl = static_cast<int>(il.events.size());
    out.small_events_min = std::min(out.small_events_min, ns);
    out.small_events_max = std::max(out.small_events_max, ns);
    out.large_events_min = std::min(out.large_events_min, nl);
    out.large_events_max = std::max(out.large_events_max, nl);
    for (const DetectionEvent& e : is.events) {
      const RayPath p = trace_geodesic(unit, cv, e.sigma);
      const double tc = e.branch == 1 ? e.t_abs + small.r : e.t_abs - small.r;
      out.center_passage = std::max(out.center_passage, (p.position(tc) - unit_angle(e.theta) * small.R).norm());
      out.lambda_error = std::max(out.lambda_error, std::abs(std::abs(e.lambda) - cv.xi.norm() / (2.0 * small.r)));
    }
  }

  const RayState s0{{0.2, -0.1}, Vec2{0.6, 0.8} / pd.c({0.2, -0.1}), 0.0};
  const RayState ref = integrate_ray(pd, s0, 0.9, 9600);
  double prev = 0.0;
  out.rk4_min_ratio = 1e300;
  for (int steps : {12, 24, 48}) {
    const RayState e = integrate_ray(pd, s0, 0.9, steps);
    const double err = (e.x - ref.x).norm() + (e.p - ref.p).norm();
    if (prev > 0.0) out.rk4_min_ratio = std::min(out.rk4_min_ratio, prev / err);
    prev = err;
  }
  return out;
}

std::vector<double> ConvergenceStudy::ratios(double ConvergenceLevel::*field) const {
  std::vector<double> r;
  for (std::size_t i = 1; i < levels.size(); ++i) r.push_back(levels[i - 1].*field / (levels[i].*field));
  return r;
}

ConvergenceStudy residual_convergence_study(int levels, int n0,
                                            const std::function<void(const ConvergenceLevel&)>& progress) {
  if (levels < 2) throw std::invalid_argument("convergence study: need at least two levels");
  if (n0 < 33 || (n0 - 1) % 2 != 0) throw std::invalid_argument("convergence study: n0 must be odd and >= 33");
  // Base lattice spacing for dR and dtheta; the window is 4 base cells wide.
  const double d0 = 0.05;
  const double L = 3.8;
  const PhantomSpec ps{{phantom::Gaussian{{0.1, 0.05}, 0.15, 1.0}}};
  ConvergenceStudy study;
  for (int lev = 0; lev < levels; ++lev) {
    const int scale = 1 << lev;
    const int n = (n0 - 1) * scale + 1;
    const Grid2D g = make_grid(L, n, 0.5);
    const SpeedField c = sample_speed(speed::PaperDefault{}, g);
    const PmlProfile pml = pml_profile(g, 0.5, kSigmaMax);
    const Phantom f = make_phantom(ps, g);
    const int m = 2 * scale + 1;
    const double d = d0 / scale;

    DetectorConfig cs = DetectorConfig::small(2.0, 0.8);
    cs.full_circle = false;
    cs.arc_begin = -2 * d0 - d / 2;
    cs.arc_end = 2 * d0 + d / 2;
    cs.n_theta = static_cast<int>(std::lround(4 * d0 / d)) + 1;
    cs.record_time = 3.0;
    cs.n_alpha = 256 * scale;
    std::vector<double> Rv, rv;
    for (int i = 0; i < m; ++i) {
      Rv.push_back(2.0 + i * d);
      rv.push_back(2.0 + i * d / 2);
    }
    ConvergenceLevel out;
    out.n = n;
    out.rms_small = cylinder_residual_small(sweep_small_radius(f, c, pml, cs, Rv, Interpolation::Cubic)).rms();

    DetectorConfig cl = DetectorConfig::large(2.0);
    cl.n_theta = 8;
    cl.record_time = 3.0;
    cl.n_alpha = cs.n_alpha;
    const CylinderFamily Pl = sweep_large_radius(f, c, pml, cl, rv, Interpolation::Cubic);
    out.rms_large = cylinder_residual_large(Pl).rms();
    out.rms_wrong = cylinder_residual_small(Pl).rms();
    study.levels.push_back(out);
    if (progress) progress(out);
  }
  return study;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

std::string fixed2(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::vector<CheckResult> run_selftest(const std::string& level, bool break_adjoint,
                                      const std::function<void(const CheckResult&)>& progress) {
  if (level != "quick" && level != "full") throw std::invalid_argument("selftest: level must be quick or full");
  std::vector<CheckResult> out;
  auto run = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    r.name = name;
    try {
      const auto [ok, detail] = fn();
      r.pass = ok;
      r.detail = detail;
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(r);
    if (progress) progress(r);
  };

  for (const DetectorMode mode : {DetectorMode::Small, DetectorMode::Large}) {
    run("adjoint_" + to_string(mode), [&] {
      const double e = adjoint_mismatch(mode, 64, 5, 2024, break_adjoint);
      return std::make_pair(e <= 1e-10, "max relative mismatch " + fmt(e) + " (limit 1e-10)");
    });
  }
  run("wave_energy", [] {
    const double e = energy_drift();
    return std::make_pair(e <= 1e-3, "relative drift " + fmt(e) + " over 1000 steps (limit 1e-3)");
  });
  run("wave_finite_speed", [] {
    const double e = finite_speed_leak();
    return std::make_pair(e <= 1e-8, "mass fraction outside " + fmt(e) + " (limit 1e-8)");
  });
  run("wave_pml", [] {
    const PmlCheck p = pml_check();
    return std::make_pair(p.reflected_ratio <= 1e-3 && p.band_ratio <= 1e-3,
                          "reflected " + fmt(p.reflected_ratio) + ", band " + fmt(p.band_ratio) + " (limit 1e-3)");
  });
  run("rays", [] {
    const RayChecks r = ray_checks();
    const bool ok = r.straight_deviation <= 1e-8 && r.hamiltonian_drift <= 1e-6 && r.rk4_min_ratio >= 12.0 &&
                    r.small_events_min == 4 && r.small_events_max == 4 && r.large_events_min == 2 &&
                    r.large_events_max == 2 && r.center_passage <= 1e-6 && r.lambda_error <= 1e-6;
    return std::make_pair(ok, "straight " + fmt(r.straight_deviation) + ", hamiltonian " + fmt(r.hamiltonian_drift) +
                                  ", rk4 ratio " + fixed2(r.rk4_min_ratio) + ", events " +
                                  std::to_string(r.small_events_min) + "/" + std::to_string(r.large_events_min) +
                                  ", centre " + fmt(r.center_passage));
  });
  if (level == "full") {
    run("residual_convergence", [] {
      const ConvergenceStudy s = residual_convergence_study();
      const auto rs = s.ratios(&ConvergenceLevel::rms_small);
      const auto rl = s.ratios(&ConvergenceLevel::rms_large);
      const auto rw = s.ratios(&ConvergenceLevel::rms_wrong);
      bool ok = true;
      std::string d;
      for (std::size_t i = 0; i < rs.size(); ++i) {
        ok = ok && rs[i] >= 3.2 && rs[i] <= 4.8 && rl[i] >= 3.2 && rl[i] <= 4.8;
        d += "small " + fixed2(rs[i]) + " large " + fixed2(rl[i]) + " wrong " + fixed2(rw[i]) + "; ";
      }
      ok = ok && rw.back() < 3.2;
      return std::make_pair(ok, d);
    });
  }
  return out;
}

}  // namespace ctat
