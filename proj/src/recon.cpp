#include "ctat/recon.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ctat {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace

double TimeCutoff::value(double t) const {
  if (t <= T) return 1.0;
  if (t >= T1) return 0.0;
  return 1.0 - smooth_step((t - T) / (T1 - T));
}

TimeCutoff time_cutoff_chi(double T, double T1, int nt, double dt) {
  if (!(T > 0.0)) throw std::invalid_argument("time cutoff: T must be positive");
  if (!(T < T1)) throw std::invalid_argument("time cutoff: need T < T1");
  if (nt < 1 || !(dt > 0.0)) throw std::invalid_argument("time cutoff: empty time axis");
  if (T1 > (nt - 1) * dt + 1e-9 * dt) throw std::invalid_argument("time cutoff: T1 beyond the recorded window");
  TimeCutoff c;
  c.T = T;
  c.T1 = T1;
  c.weights.resize(nt);
  for (int k = 0; k < nt; ++k) c.weights[k] = c.value(k * dt);
  return c;
}

TimeCutoff time_cutoff_chi(double T, double T1, const TimeAxis& axis) {
  return time_cutoff_chi(T, T1, axis.nt, axis.dt);
}

MeasurementOperator::MeasurementOperator(const SpeedField& speed, const DetectorConfig& config, const PmlProfile& pml,
                                         Interpolation interp)
    : speed_(speed),
      config_(config),
      pml_(pml),
      time_(make_time_axis(speed, config.record_time, config.cfl)),
      theta_(config.theta_grid()),
      ring_((check_detector_clearance(speed.grid, config), speed.grid), detector_circles(config), config.n_alpha,
            interp) {}

std::vector<double> MeasurementOperator::apply(std::span<const double> f) const {
  if (f.size() != image_size()) throw std::invalid_argument("measurement: image size mismatch");
  const std::size_t C = theta_.size();
  std::vector<double> out(data_size());
  WaveSolver solver(speed_, pml_, time_.dt);
  WaveState s = solver.initial_state(f);
  for (int k = 0; k < time_.nt; ++k) {
    ring_.apply(s.u_curr, std::span<double>(out.data() + static_cast<std::size_t>(k) * C, C));
    if (k + 1 < time_.nt) solver.advance(s);
  }
  solver.check_finite(s);
  return out;
}

std::vector<double> MeasurementOperator::adjoint(std::span<const double> g) const {
  if (g.size() != data_size()) throw std::invalid_argument("measurement: data size mismatch");
  const std::size_t C = theta_.size();
  WaveSolver solver(speed_, pml_, time_.dt);
  WaveState a = solver.zero_state();
  // Horner form of sum_k I^T (A^T)^k P^T Q^T g_k.
  for (int k = time_.nt - 1; k >= 0; --k) {
    if (!(broken_ && k == time_.nt - 1)) {
      ring_.apply_transpose_add(std::span<const double>(g.data() + static_cast<std::size_t>(k) * C, C), a.u_curr);
    }
    if (k > 0) solver.advance_adjoint(a);
  }
  solver.check_finite(a);
  return solver.initial_state_transpose(a);
}

Sinogram MeasurementOperator::forward(const Phantom& f) const {
  if (!(f.grid == speed_.grid)) throw std::invalid_argument("measurement: phantom and speed grids differ");
  Sinogram s;
  s.config = config_;
  s.theta = theta_;
  s.time = time_;
  s.data = apply(f.f);
  return s;
}

Phantom MeasurementOperator::adjoint_image(const Sinogram& s) const {
  if (!s.config.same_geometry(config_) || !(s.time == time_) || s.theta.size() != theta_.size()) {
    throw std::invalid_argument("measurement: sinogram geometry does not match the operator");
  }
  return Phantom{speed_.grid, adjoint(s.data)};
}

std::vector<double> support_mask(const Grid2D& grid, double radius) {
  std::vector<double> m(grid.size(), 0.0);
  for (int iy = 0; iy < grid.n; ++iy) {
    for (int ix = 0; ix < grid.n; ++ix) {
      if (grid.node(ix, iy).norm() < radius) m[grid.index(ix, iy)] = 1.0;
    }
  }
  return m;
}

ReconProblem::ReconProblem(const MeasurementOperator& op, std::vector<double> chi, std::vector<double> mask,
                           double tikhonov)
    : op_(&op), chi_(std::move(chi)), mask_(std::move(mask)), lambda_(tikhonov) {
  if (chi_.size() != static_cast<std::size_t>(op.time().nt)) {
    throw std::invalid_argument("recon: chi has " + std::to_string(chi_.size()) + " weights for " +
                                std::to_string(op.time().nt) + " time samples");
  }
  if (mask_.size() != op.image_size()) throw std::invalid_argument("recon: mask size mismatch");
  if (lambda_ < 0.0) throw std::invalid_argument("recon: negative Tikhonov weight");
}

void ReconProblem::project(std::vector<double>& f) const {
  for (std::size_t i = 0; i < f.size(); ++i) f[i] *= mask_[i];
}

std::vector<double> ReconProblem::forward(std::span<const double> f) const {
  std::vector<double> pf(f.begin(), f.end());
  project(pf);
  return op_->apply(pf);
}

std::vector<double> ReconProblem::back(std::span<const double> g) const {
  const std::size_t C = op_->theta().size();
  std::vector<double> wg(g.begin(), g.end());
  for (std::size_t i = 0; i < wg.size(); ++i) wg[i] *= chi_[i / C];
  std::vector<double> out = op_->adjoint(wg);
  project(out);
  return out;
}

void ReconProblem::add_penalty_gradient(std::span<const double> f, std::vector<double>& out) const {
  if (lambda_ == 0.0) return;
  // lambda P G^T G P f with forward differences on cell faces.
  const Grid2D& g = op_->grid();
  const int n = g.n;
  const double s = lambda_ / (g.h * g.h);
  std::vector<double> pf(f.begin(), f.end());
  project(pf);
  std::vector<double> acc(g.size(), 0.0);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix + 1 < n; ++ix) {
      const std::size_t a = g.index(ix, iy), b = g.index(ix + 1, iy);
      const double d = pf[b] - pf[a];
      acc[a] -= d;
      acc[b] += d;
    }
  }
  for (int iy = 0; iy + 1 < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const std::size_t a = g.index(ix, iy), b = g.index(ix, iy + 1);
      const double d = pf[b] - pf[a];
      acc[a] -= d;
      acc[b] += d;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * mask_[i] * acc[i];
}

std::vector<double> ReconProblem::normal(std::span<const double> f) const {
  std::vector<double> out = back(forward(f));
  if (lambda_ > 0.0) add_penalty_gradient(f, out);
  return out;
}

double ReconProblem::weighted_norm2(std::span<const double> g) const {
  const std::size_t C = op_->theta().size();
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += chi_[i / C] * g[i] * g[i];
  return s;
}

double ReconProblem::gradient_norm2(std::span<const double> f) const {
  if (lambda_ == 0.0) return 0.0;
  const Grid2D& g = op_->grid();
  std::vector<double> pf(f.begin(), f.end());
  project(pf);
  double s = 0.0;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const double v = pf[g.index(ix, iy)];
      if (ix + 1 < g.n) s += std::pow(pf[g.index(ix + 1, iy)] - v, 2);
      if (iy + 1 < g.n) s += std::pow(pf[g.index(ix, iy + 1)] - v, 2);
    }
  }
  return s / (g.h * g.h);
}

NormEstimate operator_norm_estimate(const ReconProblem& problem, int max_iters, std::uint64_t seed, double rel_tol) {
  if (max_iters < 10) throw std::invalid_argument("norm estimate: need at least 10 iterations");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> x(problem.op().image_size());
  for (double& v : x) v = nd(rng);
  problem.project(x);
  double nx = std::sqrt(dot(x, x));
  if (nx == 0.0) throw std::invalid_argument("norm estimate: empty support");
  for (double& v : x) v /= nx;

  NormEstimate est;
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    std::vector<double> y = problem.normal(x);
    const double rq = dot(x, y);
    est.value = rq;
    est.iterations = it;
    est.last_change = prev > 0.0 ? std::abs(rq - prev) / rq : 1.0;
    if (it > 1 && est.last_change <= rel_tol) break;
    prev = rq;
    const double ny = std::sqrt(dot(y, y));
    if (ny == 0.0) break;
    for (std::size_t i = 0; i < y.size(); ++i) x[i] = y[i] / ny;
  }
  return est;
}

namespace {

double misfit(const ReconProblem& p, std::span<const double> res, std::span<const double> f) {
  return std::sqrt(p.weighted_norm2(res) + p.tikhonov() * p.gradient_norm2(f));
}

void check_data(const ReconProblem& p, std::span<const double> data) {
  if (data.size() != p.op().data_size()) {
    throw std::invalid_argument("recon: data has " + std::to_string(data.size()) + " samples, operator expects " +
                                std::to_string(p.op().data_size()));
  }
}

}  // namespace

ReconResult landweber(const ReconProblem& problem, std::span<const double> data, const LandweberOptions& opt) {
  check_data(problem, data);
  if (opt.iterations < 0) throw std::invalid_argument("landweber: negative iteration count");
  ReconResult r;
  r.estimate = Phantom{problem.op().grid(), std::vector<double>(problem.op().image_size(), 0.0)};
  std::vector<double>& f = r.estimate.f;

  std::vector<double> res(data.begin(), data.end());  // s - M P f
  const double m0 = misfit(problem, res, f);
  r.residual_history.push_back(m0);
  if (m0 == 0.0) {
    r.stop_reason = "zero data";
    return r;
  }
  if (opt.step > 0.0) {
    r.step_size = opt.step;
  } else {
    r.step_size = 1.0 / operator_norm_estimate(problem, opt.norm_iters, opt.seed).value;
  }

  int increases = 0;
  r.stop_reason = "iteration budget";
  for (int it = 1; it <= opt.iterations; ++it) {
    std::vector<double> grad = problem.back(res);
    if (problem.tikhonov() > 0.0) {
      std::vector<double> pen(f.size(), 0.0);
      problem.add_penalty_gradient(f, pen);
      for (std::size_t i = 0; i < f.size(); ++i) grad[i] -= pen[i];
    }
    axpy(r.step_size, grad, f);
    problem.project(f);
    const std::vector<double> mf = problem.forward(f);
    for (std::size_t i = 0; i < res.size(); ++i) res[i] = data[i] - mf[i];
    const double m = misfit(problem, res, f);
    if (!std::isfinite(m)) throw std::runtime_error("landweber: non-finite misfit at iteration " + std::to_string(it));
    increases = m > r.residual_history.back() ? increases + 1 : 0;
    r.residual_history.push_back(m);
    r.iterations = it;
    if (increases >= 3) {
      throw std::runtime_error("landweber: misfit grew for 3 consecutive iterations (step " +
                               std::to_string(r.step_size) + ", misfit " + std::to_string(m) + ")");
    }
    if (m <= opt.tol * m0) {
      r.stop_reason = "tolerance";
      break;
    }
  }
  return r;
}

ReconResult cg_normal(const ReconProblem& problem, std::span<const double> data, const CgOptions& opt) {
  check_data(problem, data);
  if (!(opt.tol > 0.0)) throw std::invalid_argument("cg: tolerance must be positive");
  ReconResult r;
  const std::size_t N = problem.op().image_size();
  r.estimate = Phantom{problem.op().grid(), std::vector<double>(N, 0.0)};
  std::vector<double>& f = r.estimate.f;

  std::vector<double> res(data.begin(), data.end());
  const double m0 = misfit(problem, res, f);
  r.residual_history.push_back(m0);
  r.stop_reason = "iteration budget";
  if (m0 == 0.0) {
    r.stop_reason = "zero data";
    return r;
  }
  std::vector<double> g = problem.back(res);  // b - N f
  std::vector<double> p = g;
  double gg = dot(g, g);
  for (int it = 1; it <= opt.iterations; ++it) {
    if (gg == 0.0) {
      r.stop_reason = "exact solution";
      break;
    }
    const std::vector<double> q = problem.forward(p);
    double curv = problem.weighted_norm2(q);
    if (problem.tikhonov() > 0.0) curv += problem.tikhonov() * problem.gradient_norm2(p);
    if (!(curv > 0.0)) throw std::runtime_error("cg: non-positive curvature at iteration " + std::to_string(it));
    const double alpha = gg / curv;
    axpy(alpha, p, f);
    axpy(-alpha, q, res);
    // N p = P M^T w q + lambda P G^T G P p
    std::vector<double> Np = problem.back(q);
    problem.add_penalty_gradient(p, Np);
    axpy(-alpha, Np, g);
    const double gg_new = dot(g, g);
    const double m = misfit(problem, res, f);
    r.residual_history.push_back(m);
    r.iterations = it;
    if (m <= opt.tol * m0) {
      r.stop_reason = "tolerance";
      break;
    }
    const double beta = gg_new / gg;
    for (std::size_t i = 0; i < N; ++i) p[i] = g[i] + beta * p[i];
    gg = gg_new;
  }
  return r;
}

double relative_l2_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("relative error: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    num += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  if (den == 0.0) throw std::invalid_argument("relative error: zero reference");
  return std::sqrt(num / den);
}

std::vector<double> assemble_columns(const MeasurementOperator& op, const std::vector<std::size_t>& nodes) {
  const std::size_t rows = op.data_size();
  std::vector<double> A(rows * nodes.size());
  std::vector<double> e(op.image_size(), 0.0);
  for (std::size_t c = 0; c < nodes.size(); ++c) {
    if (nodes[c] >= e.size()) throw std::out_of_range("assemble: node index out of range");
    e[nodes[c]] = 1.0;
    const std::vector<double> col = op.apply(e);
    std::copy(col.begin(), col.end(), A.begin() + static_cast<std::ptrdiff_t>(c * rows));
    e[nodes[c]] = 0.0;
  }
  return A;
}

}  // namespace ctat
