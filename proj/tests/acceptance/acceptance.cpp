// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ctat/rays.hpp"
#include "ctat/recon.hpp"
#include "ctat/selftest.hpp"

using namespace ctat;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

int failures = 0;

void criterion(int id, const std::string& title, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(), s);
  std::fflush(stdout);
}

// Generic interior covectors: |y| < 0.85, random direction and frequency.
std::vector<Covector> random_covectors(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Covector> out;
  while (static_cast<int>(out.size()) < count) {
    const Vec2 y{1.7 * u(rng) - 0.85, 1.7 * u(rng) - 0.85};
    if (y.norm() >= 0.85) continue;
    out.push_back({y, unit_angle(2 * std::numbers::pi * u(rng)) * (0.5 + 2.0 * u(rng))});
  }
  return out;
}

Outcome adjoint_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  const double s = adjoint_mismatch(DetectorMode::Small, 64, 5, 2024);
  const double l = adjoint_mismatch(DetectorMode::Large, 64, 5, 2024);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {s <= 1e-10 && l <= 1e-10 && secs <= 60.0,
          "small " + num(s) + ", large " + num(l) + " (limit 1e-10), " + num(secs, 2) + " s"};
}

// Criteria 2 and 3 share one study.
const ConvergenceStudy& study() {
  static const ConvergenceStudy s = residual_convergence_study(3, 193);
  return s;
}

Outcome small_radius_residual() {
  const auto& s = study();
  const auto r = s.ratios(&ConvergenceLevel::rms_small);
  bool ok = r.size() == 2;
  std::string d = "rms";
  for (const auto& l : s.levels) d += " " + num(l.rms_small);
  d += ", ratios";
  for (double x : r) {
    ok = ok && x >= 3.2 && x <= 4.8;
    d += " " + num(x);
  }
  return {ok, d + " (band [3.2, 4.8])"};
}

Outcome large_radius_residual() {
  const auto& s = study();
  const auto r = s.ratios(&ConvergenceLevel::rms_large);
  const auto w = s.ratios(&ConvergenceLevel::rms_wrong);
  bool ok = r.size() == 2;
  std::string d = "ratios";
  for (double x : r) {
    ok = ok && x >= 3.2 && x <= 4.8;
    d += " " + num(x);
  }
  // the small-radius stencil on large-radius data must stall below second order
  ok = ok && w.back() < 3.2;
  d += ", wrong stencil ratios";
  for (double x : w) d += " " + num(x);
  return {ok, d};
}

Outcome full_data_reconstruction() {
  const Grid2D g = make_grid(3.6, 129, 0.5);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  DetectorConfig cfg = DetectorConfig::large(2.0);
  cfg.n_theta = 180;
  cfg.record_time = 5.0;
  const PhantomSpec ps{{phantom::SmoothedDisc{{0.15, -0.1}, 0.45, 0.25, 1.0},
                        phantom::Gaussian{{-0.25, 0.3}, 0.1, 0.8}}};
  const Phantom f = make_phantom(ps, g);
  const MeasurementOperator op(c, cfg, pml_profile(g, 0.5, 120.0));
  const std::vector<double> data = op.apply(f.f);
  const ReconProblem prob(op, time_cutoff_chi(4.5, 5.0, op.time()).weights, support_mask(g, 1.0));

  LandweberOptions lo;
  lo.iterations = 50;
  const ReconResult lw = landweber(prob, data, lo);
  bool monotone = true;
  for (std::size_t k = 1; k < lw.residual_history.size(); ++k) {
    monotone = monotone && lw.residual_history[k] <= lw.residual_history[k - 1];
  }
  CgOptions co;
  co.iterations = 15;
  const ReconResult cg = cg_normal(prob, data, co);
  const double e_lw = relative_l2_error(lw.estimate.f, f.f);
  const double e_cg = relative_l2_error(cg.estimate.f, f.f);
  return {std::min(e_lw, e_cg) <= 0.15 && monotone && lw.iterations <= 50 && cg.iterations <= 15,
          "Landweber(" + std::to_string(lw.iterations) + ") error " + num(e_lw) + ", CG(" +
              std::to_string(cg.iterations) + ") error " + num(e_cg) + " (limit 0.15), Landweber history " +
              (monotone ? "monotone" : "NOT monotone")};
}

Outcome partial_data_consistency() {
  const double L = 3.4;
  const Grid2D g = make_grid(L, 161, 0.5);
  const SpeedSpec sp = speed::PaperDefault{};
  const SpeedField c = sample_speed(sp, g);
  DetectorConfig cfg = DetectorConfig::small(2.0, 0.8);
  cfg.full_circle = false;
  cfg.arc_begin = -std::numbers::pi / 2;
  cfg.arc_end = 0.0;
  cfg.n_theta = 45;
  const Phantom f = make_phantom(PhantomSpec{{phantom::SmoothedDisc{{0.0, 0.0}, 0.6, 0.15, 1.0}}}, g);
  const MeasurementOperator op(c, cfg, pml_profile(g, 0.5, 120.0));
  const auto data = op.apply(f.f);
  const ReconProblem prob(op, time_cutoff_chi(4.5, 5.0, op.time()).weights, support_mask(g, 1.0));
  const ReconResult rec = landweber(prob, data, {});

  Aperture ap;
  ap.full_circle = false;
  ap.arc_begin = cfg.arc_begin;
  ap.arc_end = cfg.arc_end;
  ap.t_min = 0.0;
  ap.t_max = 5.0;
  VisibilityOptions vo;
  vo.position_tol = 2 * g.h;
  const auto rep = visibility(SpeedModel(sp), phantom_edges(f, 0.5), ap, cfg, vo);

  // gradient energy over the 3x3 patch around each edge node
  auto patch = [&](const std::vector<double>& u, int ix, int iy) {
    double s = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) s += grid_gradient(g, u, ix + dx, iy + dy).norm2();
    }
    return s;
  };
  double sv = 0, si = 0;
  int nv = 0, ni = 0;
  for (const auto& e : rep.entries) {
    const int ix = static_cast<int>(std::lround((e.cv.y.x + L) / g.h));
    const int iy = static_cast<int>(std::lround((e.cv.y.y + L) / g.h));
    const double ratio = patch(rec.estimate.f, ix, iy) / patch(f.f, ix, iy);
    if (e.verdict == Verdict::Visible) {
      sv += ratio;
      ++nv;
    } else {
      si += ratio;
      ++ni;
    }
  }
  if (nv == 0 || ni == 0) return {false, "degenerate split: " + std::to_string(nv) + " visible, " +
                                             std::to_string(ni) + " invisible"};
  const double factor = (sv / nv) / (si / ni);
  return {factor >= 2.0, std::to_string(nv) + " visible / " + std::to_string(ni) + " invisible edge covectors, mean "
                             "recovery " + num(sv / nv) + " vs " + num(si / ni) + ", factor " + num(factor) +
                             " (limit 2)"};
}

Outcome canonical_relation() {
  const SpeedModel unit(speed::Constant{1.0});
  const DetectorConfig small = DetectorConfig::small(2.0, 0.8);
  const DetectorConfig large = DetectorConfig::large(2.0);
  int bad_small = 0, bad_large = 0;
  double centre = 0.0, lam = 0.0;
  for (const Covector& cv : random_covectors(100, 99)) {
    const CanonicalImage is = canonical_image(unit, cv, small);
    const CanonicalImage il = canonical_image(unit, cv, large);
    if (is.events.size() != 4) ++bad_small;
    if (il.events.size() != 2) ++bad_large;
    const Vec2 d = cv.xi.unit();
    for (const DetectionEvent& e : is.events) {
      // straight line oracle: the ray reaches the detector centre r after
      // entering (branch 1) or r before leaving (branch 2)
      const double s = e.branch == 1 ? e.t_abs + small.r : e.t_abs - small.r;
      const Vec2 p = cv.y + d * (e.sigma * s);
      centre = std::max(centre, (p - unit_angle(e.theta) * small.R).norm());
      lam = std::max(lam, std::abs(std::abs(e.lambda) - cv.xi.norm() / (2.0 * small.r)));
    }
  }
  return {bad_small == 0 && bad_large == 0 && centre <= 1e-6 && lam <= 1e-6,
          std::to_string(100 - bad_small) + "/100 with 4 small events, " + std::to_string(100 - bad_large) +
              "/100 with 2 large events, centre passage " + num(centre) + ", lambda error " + num(lam)};
}

Outcome ray_integrator() {
  const SpeedModel unit(speed::Constant{1.0});
  RayState s{{-2.0, 0.3}, Vec2{0.6, 0.8}, 0.0};
  const Vec2 x0 = s.x, d0 = s.p;
  double straight = 0.0;
  for (int k = 1; k <= 800; ++k) {
    s = rk4_step(unit, s, 0.005);
    straight = std::max(straight, (s.x - (x0 + d0 * (0.005 * k))).norm());
  }

  const SpeedModel pd(speed::PaperDefault{});
  double ham = 0.0;
  for (const Covector& cv : random_covectors(100, 7)) {
    const RayPath p = trace_geodesic(pd, cv, 1);
    for (const RayState& st : p.states) ham = std::max(ham, std::abs(pd.c(st.x) * st.p.norm() - 1.0));
  }

  // endpoint error against a 1/64 finer RK4 run, per halving of the step
  const Vec2 y{0.2, -0.1};
  const RayState start{y, Vec2{0.6, 0.8} / pd.c(y), 0.0};
  const RayState ref = integrate_ray(pd, start, 0.9, 3072);
  std::vector<double> err;
  for (int steps : {12, 24, 48}) {
    const RayState e = integrate_ray(pd, start, 0.9, steps);
    err.push_back((e.x - ref.x).norm() + (e.p - ref.p).norm());
  }
  const double r1 = err[0] / err[1], r2 = err[1] / err[2];
  return {straight <= 1e-8 && ham <= 1e-6 && std::min(r1, r2) >= 12.0,
          "straight " + num(straight) + ", Hamiltonian drift " + num(ham) + ", halving ratios " + num(r1) + " " +
              num(r2)};
}

Outcome wave_physics() {
  const double leak = finite_speed_leak(1.2);
  const double drift = energy_drift(257, 1000);
  const PmlCheck pml = pml_check(5.0);
  return {leak <= 1e-8 && drift <= 1e-3 && pml.reflected_ratio <= 1e-3,
          "outside mass " + num(leak) + ", energy drift " + num(drift) + ", PML reflection " +
              num(pml.reflected_ratio)};
}

Outcome injectivity_proxy() {
  const Grid2D g = make_grid(3.6, 32, 0.5);
  const SpeedField c = sample_speed(speed::PaperDefault{}, g);
  DetectorConfig cfg = DetectorConfig::large(2.0);
  cfg.n_theta = 36;
  cfg.n_alpha = 128;
  cfg.record_time = 5.0;
  const MeasurementOperator op(c, cfg, pml_profile(g, 0.5, 120.0));
  std::vector<std::size_t> nodes;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      if (g.node(ix, iy).norm() < 0.9) nodes.push_back(g.index(ix, iy));
    }
  }
  const std::vector<double> cols = assemble_columns(op, nodes);
  const Eigen::Map<const Eigen::MatrixXd> A(cols.data(), static_cast<Eigen::Index>(op.data_size()),
                                            static_cast<Eigen::Index>(nodes.size()));
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
  const auto& sv = svd.singularValues();
  const double smax = sv(0), smin = sv(sv.size() - 1);
  // "strictly positive" judged against roundoff in the assembled matrix
  const double floor = 1e3 * std::numeric_limits<double>::epsilon() * smax * std::sqrt(double(A.rows()));
  return {smin > floor, std::to_string(nodes.size()) + " unknowns, sigma_max " + num(smax) + ", sigma_min " +
                            num(smin) + " (roundoff floor " + num(floor) + "), condition number " +
                            num(smax / smin)};
}

Outcome visibility_coverage() {
  const Grid2D g = make_grid(3.4, 161, 0.5);
  const Phantom f = make_phantom(PhantomSpec{{phantom::SmoothedDisc{{0.1, -0.05}, 0.55, 0.15, 1.0},
                                              phantom::Gaussian{{-0.3, 0.35}, 0.08, 0.7}}},
                                 g);
  const auto wf = phantom_edges(f, 0.5);
  const SpeedModel pd(speed::PaperDefault{});
  std::string d;
  bool ok = !wf.empty();
  for (const DetectorConfig& cfg : {DetectorConfig::small(2.0, 0.8), DetectorConfig::large(2.0)}) {
    Aperture ap;
    ap.full_circle = true;
    ap.t_min = 0.0;
    ap.t_max = 5.0;
    const double tcover = coverage_time(cfg);
    ok = ok && ap.t_max >= tcover;
    const VisibilityReport rep = visibility(pd, wf, ap, cfg);
    std::size_t escaping = 0, visible = 0;
    for (const auto& e : rep.entries) {
      if (!canonical_image(pd, e.cv, cfg).escaped) continue;
      ++escaping;
      if (e.verdict == Verdict::Visible) ++visible;
    }
    ok = ok && escaping > 0 && visible == escaping;
    if (!d.empty()) d += "; ";
    d += to_string(cfg.mode) + " " + std::to_string(visible) + "/" + std::to_string(escaping) +
         " escaping visible (U = (0, 5], T_cover " + num(tcover) + ")";
  }
  return {ok, d};
}

}  // namespace

int main() {
  criterion(1, "adjoint identity", adjoint_identity);
  criterion(2, "small-radius cylinder residual decay", small_radius_residual);
  criterion(3, "large-radius cylinder residual decay and stencil discrimination", large_radius_residual);
  criterion(4, "full-data reconstruction", full_data_reconstruction);
  criterion(5, "partial-data visible edge recovery", partial_data_consistency);
  criterion(6, "canonical relation structure", canonical_relation);
  criterion(7, "ray integrator", ray_integrator);
  criterion(8, "wave solver physics", wave_physics);
  criterion(9, "injectivity proxy", injectivity_proxy);
  criterion(10, "full-aperture visibility coverage", visibility_coverage);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
