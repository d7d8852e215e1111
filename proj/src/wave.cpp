#include "ctat/wave.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ctat {

double PmlProfile::sigma_at_depth(double depth) const {
  if (!(width > 0.0) || depth <= 0.0) return 0.0;
  return sigma_max * std::pow(std::min(depth, width) / width, order);
}

PmlProfile PmlProfile::none(const Grid2D& grid) {
  PmlProfile p;
  p.node.assign(grid.n, 0.0);
  p.face.assign(grid.n - 1, 0.0);
  return p;
}

double nominal_sigma_max(double width, int order, double reflection) {
  return (order + 1) * std::log(1.0 / reflection) / (2.0 * width);
}

PmlProfile pml_profile(const Grid2D& grid, double width, double sigma_max, int order) {
  if (!(width > 0.0)) throw std::invalid_argument("pml: width must be > 0");
  if (!(sigma_max >= 0.0)) throw std::invalid_argument("pml: sigma_max must be >= 0");
  if (order < 1) throw std::invalid_argument("pml: order must be >= 1");
  if (!(grid.half_width - width > 1.0)) {
    throw std::invalid_argument("pml: layer of width " + std::to_string(width) + " overlaps B_1(0)");
  }
  PmlProfile p;
  p.width = width;
  p.sigma_max = sigma_max;
  p.order = order;
  const double inner = grid.half_width - width;
  p.node.resize(grid.n);
  p.face.resize(grid.n - 1);
  for (int i = 0; i < grid.n; ++i) {
    p.node[i] = p.sigma_at_depth(std::abs(grid.coord(i)) - inner);
  }
  for (int i = 0; i + 1 < grid.n; ++i) {
    p.face[i] = p.sigma_at_depth(std::abs(grid.coord(i) + 0.5 * grid.h) - inner);
  }
  return p;
}

PmlProfile pml_profile(const Grid2D& grid, double width, double sigma_max, int order, double detector_extent) {
  if (grid.half_width - width < detector_extent) {
    throw std::invalid_argument("pml: layer of width " + std::to_string(width) +
                                " overlaps detector circles reaching |x| = " + std::to_string(detector_extent));
  }
  return pml_profile(grid, width, sigma_max, order);
}

double cfl_time_step(const SpeedField& speed, double cfl) {
  if (!(cfl > 0.0) || cfl > 1.0) throw std::invalid_argument("cfl safety must be in (0, 1]");
  return cfl * speed.grid.h / (std::sqrt(2.0) * speed.max_speed());
}

TimeAxis make_time_axis(const SpeedField& speed, double T, double cfl) {
  if (!(T > 0.0)) throw std::invalid_argument("time axis: T must be > 0");
  const double dt_max = cfl_time_step(speed, cfl);
  const int steps = static_cast<int>(std::ceil(T / dt_max - 1e-12));
  return TimeAxis{T / steps, steps + 1};
}

WaveSolver::WaveSolver(const SpeedField& speed, const PmlProfile& pml, double dt)
    : grid_(speed.grid), dt_(dt), pml_active_(pml.active()) {
  const int n = grid_.n;
  if (!(dt > 0.0)) throw std::invalid_argument("wave: dt must be > 0");
  const double limit = grid_.h / (std::sqrt(2.0) * speed.max_speed());
  if (dt > limit * (1.0 + 1e-12)) {
    throw std::invalid_argument("wave: CFL violation, dt = " + std::to_string(dt) + " exceeds h/(sqrt2 max c) = " +
                                std::to_string(limit));
  }
  if (static_cast<int>(pml.node.size()) != n || static_cast<int>(pml.face.size()) != n - 1) {
    throw std::invalid_argument("wave: PML profile does not match grid");
  }
  const std::size_t N = grid_.size();
  c2_.resize(N);
  inv_e_.resize(N);
  bcoef_.resize(N);
  pcoef_.resize(N);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const std::size_t k = grid_.index(ix, iy);
      const double c = speed.c[k];
      const double sx = pml.node[ix], sy = pml.node[iy];
      c2_[k] = c * c;
      inv_e_[k] = 1.0 / (1.0 + 0.5 * dt * (sx + sy));
      bcoef_[k] = 1.0 - 0.5 * dt * (sx + sy);
      pcoef_[k] = sx * sy;
    }
  }
  fx_.assign(static_cast<std::size_t>(n - 1) * n, 1.0);
  kx_.assign(fx_.size(), 0.0);
  fy_.assign(static_cast<std::size_t>(n - 1) * n, 1.0);
  ky_.assign(fy_.size(), 0.0);
  if (pml_active_) {
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix + 1 < n; ++ix) {
        const std::size_t f = static_cast<std::size_t>(iy) * (n - 1) + ix;
        const double z1 = pml.face[ix], z2 = pml.node[iy];
        const double den = 1.0 + 0.5 * dt * z1;
        fx_[f] = (1.0 - 0.5 * dt * z1) / den;
        kx_[f] = 0.5 * dt * (z2 - z1) / den;
      }
    }
    for (int iy = 0; iy + 1 < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const std::size_t f = static_cast<std::size_t>(iy) * n + ix;
        const double z2 = pml.face[iy], z1 = pml.node[ix];
        const double den = 1.0 + 0.5 * dt * z2;
        fy_[f] = (1.0 - 0.5 * dt * z2) / den;
        ky_[f] = 0.5 * dt * (z1 - z2) / den;
      }
    }
  }
  w_.resize(N);
  v_.resize(N);
  g_.resize(N);
}

WaveState WaveSolver::zero_state() const {
  const std::size_t N = grid_.size();
  const std::size_t F = static_cast<std::size_t>(grid_.n - 1) * grid_.n;
  WaveState s;
  s.u_curr.assign(N, 0.0);
  s.u_prev.assign(N, 0.0);
  s.psi_x.assign(F, 0.0);
  s.psi_y.assign(F, 0.0);
  s.dt = dt_;
  return s;
}

WaveState WaveSolver::initial_state(std::span<const double> f) const {
  if (f.size() != grid_.size()) throw std::invalid_argument("wave: initial data does not match grid");
  WaveState s = zero_state();
  const int n = grid_.n;
  const double ih2 = 1.0 / (grid_.h * grid_.h);
  const double half_dt2 = 0.5 * dt_ * dt_;
  std::copy(f.begin(), f.end(), s.u_curr.begin());
  std::copy(f.begin(), f.end(), s.u_prev.begin());
#pragma omp parallel for schedule(static)
  for (int iy = 1; iy < n - 1; ++iy) {
    for (int ix = 1; ix < n - 1; ++ix) {
      const std::size_t k = grid_.index(ix, iy);
      const double lap = (f[k + 1] + f[k - 1] + f[k + n] + f[k - n] - 4.0 * f[k]) * ih2;
      s.u_prev[k] += half_dt2 * c2_[k] * lap;
    }
  }
  return s;
}

void WaveSolver::laplacian_transpose(const std::vector<double>& v, std::vector<double>& out) const {
  // v vanishes on the boundary ring; out receives (Lap_h restricted to interior rows)^T v.
  const int n = grid_.n;
  const double ih2 = 1.0 / (grid_.h * grid_.h);
  auto at = [&](int ix, int iy) -> double {
    if (ix < 0 || iy < 0 || ix >= n || iy >= n) return 0.0;
    return v[grid_.index(ix, iy)];
  };
#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < n; ++iy) {
    const bool edge_row = iy == 0 || iy == n - 1;
    for (int ix = 0; ix < n; ++ix) {
      const std::size_t k = grid_.index(ix, iy);
      if (edge_row || ix == 0 || ix == n - 1) {
        out[k] = (at(ix + 1, iy) + at(ix - 1, iy) + at(ix, iy + 1) + at(ix, iy - 1) - 4.0 * v[k]) * ih2;
      } else {
        out[k] = (v[k + 1] + v[k - 1] + v[k + n] + v[k - n] - 4.0 * v[k]) * ih2;
      }
    }
  }
}

std::vector<double> WaveSolver::initial_state_transpose(const WaveState& adj) const {
  const int n = grid_.n;
  const std::size_t N = grid_.size();
  std::vector<double> v(N, 0.0), lt(N);
  for (int iy = 1; iy < n - 1; ++iy) {
    for (int ix = 1; ix < n - 1; ++ix) {
      const std::size_t k = grid_.index(ix, iy);
      v[k] = c2_[k] * adj.u_prev[k];
    }
  }
  laplacian_transpose(v, lt);
  std::vector<double> out(N);
  const double half_dt2 = 0.5 * dt_ * dt_;
  for (std::size_t k = 0; k < N; ++k) out[k] = adj.u_curr[k] + adj.u_prev[k] + half_dt2 * lt[k];
  return out;
}

void WaveSolver::advance(WaveState& s, std::span<const double> source) const {
  const int n = grid_.n;
  const double ih = 1.0 / grid_.h;
  const double ih2 = ih * ih;
  const double dt2 = dt_ * dt_;
  const bool has_source = !source.empty();
  if (has_source && source.size() != grid_.size()) {
    throw std::invalid_argument("wave: source does not match grid");
  }
  const double* a = s.u_curr.data();
  double* b = s.u_prev.data();  // overwritten with u_next
  const double* px = s.psi_x.data();
  const double* py = s.psi_y.data();
  const bool pml = pml_active_;

#pragma omp parallel for schedule(static)
  for (int iy = 1; iy < n - 1; ++iy) {
    for (int ix = 1; ix < n - 1; ++ix) {
      const std::size_t k = grid_.index(ix, iy);
      const double lap = (a[k + 1] + a[k - 1] + a[k + n] + a[k - n] - 4.0 * a[k]) * ih2;
      double rhs = c2_[k] * lap;
      if (pml) {
        const std::size_t fx = static_cast<std::size_t>(iy) * (n - 1) + ix;
        const std::size_t fy = k;
        const double div = (px[fx] - px[fx - 1] + py[fy] - py[fy - n]) * ih;
        rhs += div - pcoef_[k] * a[k];
      }
      if (has_source) rhs += source[k];
      b[k] = inv_e_[k] * (2.0 * a[k] - bcoef_[k] * b[k] + dt2 * rhs);
    }
  }
  // Dirichlet ring
  for (int i = 0; i < n; ++i) {
    b[grid_.index(i, 0)] = 0.0;
    b[grid_.index(i, n - 1)] = 0.0;
    b[grid_.index(0, i)] = 0.0;
    b[grid_.index(n - 1, i)] = 0.0;
  }

  if (pml) {
    // psi^{n+1} = F psi^n + K Grad(u^{n+1} + u^n)
    const double* un = b;
#pragma omp parallel for schedule(static)
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix + 1 < n; ++ix) {
        const std::size_t f = static_cast<std::size_t>(iy) * (n - 1) + ix;
        if (kx_[f] == 0.0 && fx_[f] == 1.0) continue;
        const std::size_t k = grid_.index(ix, iy);
        const double g = (un[k + 1] - un[k] + a[k + 1] - a[k]) * ih;
        s.psi_x[f] = fx_[f] * s.psi_x[f] + kx_[f] * g;
      }
    }
#pragma omp parallel for schedule(static)
    for (int iy = 0; iy < n - 1; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const std::size_t f = static_cast<std::size_t>(iy) * n + ix;
        if (ky_[f] == 0.0 && fy_[f] == 1.0) continue;
        const std::size_t k = f;
        const double g = (un[k + n] - un[k] + a[k + n] - a[k]) * ih;
        s.psi_y[f] = fy_[f] * s.psi_y[f] + ky_[f] * g;
      }
    }
  }

  std::swap(s.u_curr, s.u_prev);
  s.t += dt_;
  ++s.steps;
  if (s.steps % 100 == 0) check_finite(s);
}

void WaveSolver::face_divergence_transpose(const WaveState& adj, std::vector<double>& out) const {
  // out = G^T (K . pi): node contributions from the faces on either side.
  const int n = grid_.n;
  const double ih = 1.0 / grid_.h;
#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      double acc = 0.0;
      const std::size_t rx = static_cast<std::size_t>(iy) * (n - 1);
      if (ix > 0) acc += kx_[rx + ix - 1] * adj.psi_x[rx + ix - 1];
      if (ix < n - 1) acc -= kx_[rx + ix] * adj.psi_x[rx + ix];
      if (iy > 0) {
        const std::size_t f = static_cast<std::size_t>(iy - 1) * n + ix;
        acc += ky_[f] * adj.psi_y[f];
      }
      if (iy < n - 1) {
        const std::size_t f = static_cast<std::size_t>(iy) * n + ix;
        acc -= ky_[f] * adj.psi_y[f];
      }
      out[grid_.index(ix, iy)] = acc * ih;
    }
  }
}

void WaveSolver::advance_adjoint(WaveState& adj) const {
  // Adjoint variables (alpha, beta, pi) are conjugate to (u_curr, u_prev, psi).
  const int n = grid_.n;
  const std::size_t N = grid_.size();
  const double ih = 1.0 / grid_.h;
  const double dt2 = dt_ * dt_;
  const bool pml = pml_active_;

  if (pml) {
    face_divergence_transpose(adj, g_);
  } else {
    std::fill(g_.begin(), g_.end(), 0.0);
  }

  // w = mask . E . (alpha + G^T K pi); v = c^2 w
  std::fill(w_.begin(), w_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
#pragma omp parallel for schedule(static)
  for (int iy = 1; iy < n - 1; ++iy) {
    for (int ix = 1; ix < n - 1; ++ix) {
      const std::size_t k = grid_.index(ix, iy);
      const double w = inv_e_[k] * (adj.u_curr[k] + g_[k]);
      w_[k] = w;
      v_[k] = c2_[k] * w;
    }
  }

  std::vector<double>& lt = adj.u_curr;  // alpha no longer needed once w is known
  laplacian_transpose(v_, lt);
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < N; ++k) {
    const double beta = adj.u_prev[k];
    const double w = w_[k];
    lt[k] = beta + g_[k] + 2.0 * w + dt2 * (lt[k] - pcoef_[k] * w);
    adj.u_prev[k] = -bcoef_[k] * w;
  }

  if (pml) {
    // pi' = F pi + (Dv)^T (dt^2 w) = F pi - dt^2 G w
#pragma omp parallel for schedule(static)
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix + 1 < n; ++ix) {
        const std::size_t f = static_cast<std::size_t>(iy) * (n - 1) + ix;
        const std::size_t k = grid_.index(ix, iy);
        adj.psi_x[f] = fx_[f] * adj.psi_x[f] - dt2 * (w_[k + 1] - w_[k]) * ih;
      }
    }
#pragma omp parallel for schedule(static)
    for (int iy = 0; iy < n - 1; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const std::size_t f = static_cast<std::size_t>(iy) * n + ix;
        adj.psi_y[f] = fy_[f] * adj.psi_y[f] - dt2 * (w_[f + n] - w_[f]) * ih;
      }
    }
  }
  adj.t -= dt_;
  ++adj.steps;
}

void WaveSolver::check_finite(const WaveState& s) const {
  for (double v : s.u_curr) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("wave: non-finite field at step " + std::to_string(s.steps) + " (t = " +
                               std::to_string(s.t) + "); check the CFL safety factor and PML strength");
    }
  }
}

namespace {

double energy_impl(const WaveState& s, const SpeedField& speed, const std::function<bool(Vec2)>* inside) {
  const Grid2D& g = speed.grid;
  const int n = g.n;
  const double ih = 1.0 / g.h;
  std::vector<char> mask;
  if (inside) {
    mask.resize(g.size());
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) mask[g.index(ix, iy)] = (*inside)(g.node(ix, iy)) ? 1 : 0;
  }
  auto in = [&](std::size_t k) { return !inside || mask[k]; };
  double kin = 0.0, pot = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!in(k)) continue;
    const double v = (s.u_curr[k] - s.u_prev[k]) / s.dt;
    kin += v * v / (speed.c[k] * speed.c[k]);
  }
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix + 1 < n; ++ix) {
      const std::size_t k = g.index(ix, iy);
      if (!in(k) || !in(k + 1)) continue;
      pot += (s.u_curr[k + 1] - s.u_curr[k]) * (s.u_prev[k + 1] - s.u_prev[k]) * ih * ih;
    }
  }
  for (int iy = 0; iy + 1 < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const std::size_t k = g.index(ix, iy);
      if (!in(k) || !in(k + n)) continue;
      pot += (s.u_curr[k + n] - s.u_curr[k]) * (s.u_prev[k + n] - s.u_prev[k]) * ih * ih;
    }
  }
  return 0.5 * g.h * g.h * (kin + pot);
}

}  // namespace

double energy(const WaveState& state, const SpeedField& speed) { return energy_impl(state, speed, nullptr); }

double energy_in(const WaveState& state, const SpeedField& speed, const std::function<bool(Vec2)>& inside) {
  return energy_impl(state, speed, &inside);
}

WaveState init_state(const Phantom& f, const SpeedField& speed, double dt) {
  if (!(f.grid == speed.grid)) throw std::invalid_argument("wave: phantom and speed grids differ");
  WaveSolver solver(speed, PmlProfile::none(speed.grid), dt);
  return solver.initial_state(f.f);
}

WaveState step(const WaveState& state, const SpeedField& speed, const PmlProfile& pml) {
  WaveSolver solver(speed, pml, state.dt);
  WaveState next = state;
  solver.advance(next);
  return next;
}

WaveState solve_forward(const Phantom& f, const SpeedField& speed, double T, const PmlProfile& pml,
                        const Probe& probe, double cfl) {
  if (!(f.grid == speed.grid)) throw std::invalid_argument("wave: phantom and speed grids differ");
  const TimeAxis axis = make_time_axis(speed, T, cfl);
  WaveSolver solver(speed, pml, axis.dt);
  WaveState s = solver.initial_state(f.f);
  for (int k = 0; k < axis.nt; ++k) {
    if (probe) probe(k, axis.t(k), s.u_curr);
    if (k + 1 < axis.nt) solver.advance(s);
  }
  solver.check_finite(s);
  return s;
}

WaveState solve_with_sources(const SourceFn& source, int source_steps, const SpeedField& speed,
                             const TimeAxis& axis, const PmlProfile& pml, const Probe& probe) {
  if (source_steps != axis.nt - 1) {
    throw std::invalid_argument("wave: source series has " + std::to_string(source_steps) + " steps, axis has " +
                                std::to_string(axis.nt - 1));
  }
  WaveSolver solver(speed, pml, axis.dt);
  WaveState s = solver.zero_state();
  std::vector<double> buf(speed.grid.size());
  for (int k = 0; k < axis.nt; ++k) {
    if (probe) probe(k, axis.t(k), s.u_curr);
    if (k + 1 < axis.nt) {
      std::fill(buf.begin(), buf.end(), 0.0);
      if (source) source(k, buf);
      solver.advance(s, buf);
    }
  }
  solver.check_finite(s);
  return s;
}

}  // namespace ctat
