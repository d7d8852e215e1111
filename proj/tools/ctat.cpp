#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctat/config.hpp"
#include "ctat/detector.hpp"
#include "ctat/io.hpp"
#include "ctat/rays.hpp"
#include "ctat/recon.hpp"
#include "ctat/selftest.hpp"

using namespace ctat;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheck = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  std::string config;
  std::string out;
  long seed = -1;
  int threads = 0;
};

std::string out_dir(const CommonOpts& o, const ExperimentConfig& cfg) {
  const std::string d = o.out.empty() ? cfg.output_dir : o.out;
  std::filesystem::create_directories(d);
  return d;
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

ExperimentConfig load(const CommonOpts& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  return cfg;
}

json speed_json(const SpeedSpec& s) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, speed::Constant>) {
          return {{"kind", "constant"}, {"c0", v.c0}};
        } else if constexpr (std::is_same_v<T, speed::PaperDefault>) {
          return {{"kind", "paper_default"}, {"amplitude", v.amplitude}, {"eta_taper", v.eta_taper}};
        } else {
          return {{"kind", "radial_bump"}, {"a", v.a}, {"sigma", v.sigma}, {"eta_taper", v.eta_taper}};
        }
      },
      s);
}

json grid_json(const Grid2D& g) {
  return {{"half_width", g.half_width}, {"n", g.n}, {"h", g.h}, {"pml_width", g.pml_width}};
}

ArrayFile image_array(const Phantom& p, const std::string& kind) {
  ArrayFile a;
  a.dims = {static_cast<std::uint64_t>(p.grid.n), static_cast<std::uint64_t>(p.grid.n)};
  a.data = p.f;
  a.meta["kind"] = kind;
  a.meta["grid"] = grid_json(p.grid);
  a.meta["layout"] = "[iy][ix], node (ix, iy) at (-L + ix h, -L + iy h)";
  return a;
}

int cmd_forward(const CommonOpts& o) {
  const ExperimentConfig cfg = load(o);
  const std::string dir = out_dir(o, cfg);
  const Grid2D g = cfg.grid();
  const SpeedField c = sample_speed(cfg.speed, g);
  const PmlProfile pml = cfg.pml(g);
  const Phantom f = make_phantom(cfg.phantom, g);
  Sinogram s = forward_operator(f, c, cfg.detector, pml, cfg.interpolation);

  double noise_std = 0.0;
  if (cfg.noise_relative > 0.0) {
    double peak = 0.0;
    for (double v : s.data) peak = std::max(peak, std::abs(v));
    noise_std = cfg.noise_relative * peak;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd(0.0, noise_std);
    for (double& v : s.data) v += nd(rng);
  }

  ArrayFile a;
  a.dims = {static_cast<std::uint64_t>(s.time.nt), s.theta.size()};
  a.data = s.data;
  a.meta["kind"] = "sinogram";
  a.meta["layout"] = "[t][theta]";
  a.meta["detector"] = detector_to_json(cfg.detector);
  a.meta["dt"] = s.time.dt;
  a.meta["nt"] = s.time.nt;
  a.meta["theta"] = s.theta;
  a.meta["chi"] = {{"T", cfg.chi_T}, {"T1", cfg.chi_T1}};
  a.meta["grid"] = grid_json(g);
  a.meta["speed"] = speed_json(cfg.speed);
  a.meta["interpolation"] = cfg.interpolation == Interpolation::Cubic ? "cubic" : "bilinear";
  a.meta["noise"] = {{"relative", cfg.noise_relative}, {"std", noise_std}, {"seed", cfg.seed}};
  write_array(join(dir, "sinogram.tatarr"), a);
  write_pgm16(join(dir, "sinogram.pgm"), static_cast<int>(s.theta.size()), s.time.nt, s.data,
              {{"kind", "sinogram"}, {"x", "theta index"}, {"y", "time index, t = 0 at the bottom"}});
  write_array(join(dir, "phantom.tatarr"), image_array(f, "phantom"));
  write_pgm16(join(dir, "phantom.pgm"), g.n, g.n, f.f, {{"kind", "phantom"}});
  std::printf("forward: sinogram %d x %zu (dt %.6g) written to %s\n", s.time.nt, s.theta.size(), s.time.dt,
              dir.c_str());
  return kExitOk;
}

int cmd_reconstruct(const CommonOpts& o, const std::string& sino_path) {
  const ExperimentConfig cfg = load(o);
  if (sino_path.empty()) throw ConfigError("--sinogram is required");
  ArrayFile a;
  try {
    a = read_array(sino_path, true);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  if (!a.meta.contains("detector")) throw ConfigError(sino_path + ": sidecar has no detector block");
  const DetectorConfig sd = detector_from_json(a.meta["detector"]);
  if (!sd.same_geometry(cfg.detector) || std::abs(sd.record_time - cfg.detector.record_time) > 1e-12) {
    throw ConfigError("geometry mismatch between sinogram " + sino_path + " " + a.meta["detector"].dump() +
                      " and config " + o.config + " " + cfg.detector_json().dump());
  }

  const Grid2D g = cfg.grid();
  const SpeedField c = sample_speed(cfg.speed, g);
  const MeasurementOperator op(c, cfg.detector, cfg.pml(g), cfg.interpolation);
  if (a.dims.size() != 2 || a.dims[0] != static_cast<std::uint64_t>(op.time().nt) ||
      a.dims[1] != op.theta().size()) {
    throw ConfigError("sinogram dims do not match the time lattice of config " + o.config + " (expected " +
                      std::to_string(op.time().nt) + " x " + std::to_string(op.theta().size()) + ")");
  }
  const std::string dir = out_dir(o, cfg);
  const TimeCutoff chi = time_cutoff_chi(cfg.chi_T, cfg.chi_T1, op.time());
  const ReconProblem problem(op, chi.weights, support_mask(g, cfg.support_radius), cfg.tikhonov);

  ReconResult r;
  try {
    if (cfg.method == ReconMethod::Landweber) {
      LandweberOptions lo;
      lo.iterations = cfg.iterations;
      lo.step = cfg.step;
      lo.tol = cfg.tol;
      lo.norm_iters = cfg.norm_iters;
      lo.seed = cfg.seed;
      r = landweber(problem, a.data, lo);
    } else {
      CgOptions co;
      co.iterations = cfg.iterations;
      co.tol = cfg.tol;
      r = cg_normal(problem, a.data, co);
    }
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "reconstruct: %s\n", e.what());
    return kExitCheck;
  }

  ArrayFile est = image_array(r.estimate, "estimate");
  est.meta["method"] = cfg.method == ReconMethod::Cg ? "cg" : "landweber";
  write_array(join(dir, "estimate.tatarr"), est);
  write_pgm16(join(dir, "estimate.pgm"), g.n, g.n, r.estimate.f, {{"kind", "estimate"}});

  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < r.residual_history.size(); ++k) {
    rows.push_back({std::to_string(k), format_double(r.residual_history[k])});
  }
  write_csv(join(dir, "residuals.csv"), {"iteration", "residual"}, rows);

  json rep;
  rep["method"] = est.meta["method"];
  rep["iterations"] = r.iterations;
  rep["stop_reason"] = r.stop_reason;
  rep["step_size"] = r.step_size;
  rep["initial_residual"] = r.residual_history.front();
  rep["final_residual"] = r.residual_history.back();
  rep["sinogram"] = sino_path;
  if (cfg.has_phantom) {
    const Phantom truth = make_phantom(cfg.phantom, g);
    rep["relative_l2_error"] = relative_l2_error(r.estimate.f, truth.f);
  } else {
    rep["relative_l2_error"] = nullptr;
  }
  write_json(join(dir, "report.json"), rep);
  std::printf("reconstruct: %s, %d iterations (%s), residual %.4g -> %.4g", rep["method"].get<std::string>().c_str(),
              r.iterations, r.stop_reason.c_str(), r.residual_history.front(), r.residual_history.back());
  if (cfg.has_phantom) std::printf(", relative L2 error %.4f", rep["relative_l2_error"].get<double>());
  std::printf("\n");
  return kExitOk;
}

int cmd_visibility(const CommonOpts& o) {
  const ExperimentConfig cfg = load(o);
  const std::string dir = out_dir(o, cfg);
  SpeedModel model = [&] {
    try {
      return SpeedModel(cfg.speed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("speed: ") + e.what());
    }
  }();
  const Grid2D g = cfg.grid();
  const Phantom f = make_phantom(cfg.phantom, g);
  const std::vector<Covector> wf = phantom_edges(f, cfg.edge_threshold);
  if (wf.empty()) std::fprintf(stderr, "visibility: warning: phantom has no edges, report is empty\n");
  const VisibilityReport rep = visibility(model, wf, cfg.aperture(), cfg.detector, cfg.vis);

  std::vector<std::vector<std::string>> rows;
  for (const VisibilityEntry& e : rep.entries) {
    const bool w = e.has_witness;
    rows.push_back({format_double(e.cv.y.x), format_double(e.cv.y.y), format_double(e.cv.xi.x),
                    format_double(e.cv.xi.y), to_string(e.verdict), w ? format_double(e.witness.t) : "",
                    w ? format_double(e.witness.theta) : "", w ? std::to_string(e.witness.branch) : "",
                    w ? std::to_string(e.witness.sigma) : ""});
  }
  write_csv(join(dir, "visibility.csv"),
            {"y_x", "y_y", "xi_x", "xi_y", "verdict", "witness_t", "witness_theta", "branch", "sigma"}, rows);

  // Phantom in [0, 0.5]; edge nodes 1.0 if any codirection is visible,
  // 0.75 if masked, 0.6 if out of aperture.
  double fmax = 0.0;
  for (double v : f.f) fmax = std::max(fmax, std::abs(v));
  std::vector<double> overlay(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) overlay[i] = fmax > 0.0 ? 0.5 * f.f[i] / fmax : 0.0;
  std::vector<double> mark(g.size(), 0.0);
  for (const VisibilityEntry& e : rep.entries) {
    const int ix = static_cast<int>(std::lround((e.cv.y.x + g.half_width) / g.h));
    const int iy = static_cast<int>(std::lround((e.cv.y.y + g.half_width) / g.h));
    const double level = e.verdict == Verdict::Visible ? 1.0 : e.verdict == Verdict::Masked ? 0.75 : 0.6;
    auto& m = mark[g.index(ix, iy)];
    m = std::max(m, level);
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (mark[i] > 0.0) overlay[i] = mark[i];
  }
  overlay[0] = 1.0;  // pins the scale so levels map to the same grey in every image
  write_pgm16(join(dir, "visibility.pgm"), g.n, g.n, overlay,
              {{"kind", "visibility_overlay"},
               {"levels", {{"phantom", "0 .. 0.5"}, {"visible", 1.0}, {"masked", 0.75}, {"out_of_aperture", 0.6}}},
               {"pinned_node", 0}});

  json summary;
  summary["edges"] = rep.entries.size();
  summary["visible"] = rep.count(Verdict::Visible);
  summary["masked"] = rep.count(Verdict::Masked);
  summary["out_of_aperture"] = rep.count(Verdict::OutOfAperture);
  summary["coverage_time"] = coverage_time(cfg.detector);
  write_json(join(dir, "visibility.json"), summary);
  std::printf("visibility: %zu edge covectors, %zu visible, %zu masked, %zu out_of_aperture\n", rep.entries.size(),
              rep.count(Verdict::Visible), rep.count(Verdict::Masked), rep.count(Verdict::OutOfAperture));
  return kExitOk;
}

int cmd_selftest(const CommonOpts& o, const std::string& level, bool break_adjoint) {
  if (level != "quick" && level != "full") throw ConfigError("--level must be quick or full");
  const auto results = run_selftest(level, break_adjoint, [](const CheckResult& r) {
    std::printf("%s %s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    std::fflush(stdout);
  });
  bool ok = true;
  json j = json::array();
  for (const auto& r : results) {
    ok = ok && r.pass;
    j.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  }
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    write_json(join(o.out, "selftest.json"), j);
  }
  std::printf("selftest %s: %s\n", level.c_str(), ok ? "all checks passed" : "FAILED");
  return ok ? kExitOk : kExitCheck;
}

int cmd_sweep(const CommonOpts& o, int levels_flag) {
  ExperimentConfig cfg;
  if (!o.config.empty()) cfg = load(o);
  const int levels = levels_flag > 0 ? levels_flag : cfg.sweep_levels;
  if (levels < 2) throw ConfigError("sweep needs at least 2 levels");
  std::printf("level n rms_small rms_large rms_wrong\n");
  int lev = 0;
  const ConvergenceStudy s = residual_convergence_study(levels, cfg.sweep_n0, [&](const ConvergenceLevel& l) {
    std::printf("%d %d %.6e %.6e %.6e\n", lev++, l.n, l.rms_small, l.rms_large, l.rms_wrong);
    std::fflush(stdout);
  });
  const auto rs = s.ratios(&ConvergenceLevel::rms_small);
  const auto rl = s.ratios(&ConvergenceLevel::rms_large);
  const auto rw = s.ratios(&ConvergenceLevel::rms_wrong);
  bool ok = true;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    std::printf("ratio %zu: small %.3f large %.3f wrong %.3f\n", i, rs[i], rl[i], rw[i]);
    ok = ok && rs[i] >= 3.2 && rs[i] <= 4.8 && rl[i] >= 3.2 && rl[i] <= 4.8;
  }
  ok = ok && rw.back() < 3.2;
  const std::string dir = o.out.empty() ? cfg.output_dir : o.out;
  std::filesystem::create_directories(dir);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < s.levels.size(); ++i) {
    const auto& l = s.levels[i];
    rows.push_back({std::to_string(i), std::to_string(l.n), format_double(l.rms_small), format_double(l.rms_large),
                    format_double(l.rms_wrong)});
  }
  write_csv(join(dir, "sweep.csv"), {"level", "n", "rms_small", "rms_large", "rms_wrong"}, rows);
  std::printf("sweep: %s\n", ok ? "second-order decay confirmed" : "decay outside [3.2, 4.8]");
  return ok ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermoacoustic tomography with circular integrating detectors"};
  app.require_subcommand(1);
  CommonOpts o;
  std::string level = "quick", sino;
  bool broken = false;
  int sweep_levels = 0;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", o.config, "experiment config (INI)");
    if (needs_config) opt->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "overrides [run] seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--threads", o.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  };
  auto* fwd = app.add_subcommand("forward", "simulate a sinogram");
  common(fwd, true);
  auto* rec = app.add_subcommand("reconstruct", "iterative reconstruction from a sinogram");
  common(rec, true);
  rec->add_option("--sinogram", sino, "sinogram array file")->required();
  auto* vis = app.add_subcommand("visibility", "classify phantom edges as visible, masked or out of aperture");
  common(vis, true);
  auto* st = app.add_subcommand("selftest", "numerical self checks");
  common(st, false);
  st->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  st->add_flag("--break-adjoint", broken, "inject an adjoint fault (the adjoint checks must fail)");
  auto* sw = app.add_subcommand("sweep", "cylinder-PDE residual convergence study");
  common(sw, false);
  sw->add_option("--level", sweep_levels, "number of refinement levels (default from config or 3)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  if (o.threads > 0) omp_set_num_threads(o.threads);

  try {
    if (*fwd) return cmd_forward(o);
    if (*rec) return cmd_reconstruct(o, sino);
    if (*vis) return cmd_visibility(o);
    if (*st) return cmd_selftest(o, level, broken);
    if (*sw) return cmd_sweep(o, sweep_levels);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheck;
  }
  return kExitUsage;
}
