#include "ibp/flow.hpp"

#include <cmath>
#include <cstring>

#include "ibp/errors.hpp"
#include "ibp/rng.hpp"

namespace ibp {

TimeGrid::TimeGrid(double horizon, int steps) : T(horizon), n_steps(steps) {
  if (!(T > 0.0)) throw ConfigError("time grid: T must be > 0");
  if (n_steps < 1) throw ConfigError("time grid: n_steps must be >= 1");
}

void sample_noise(NoisePath& out, std::uint64_t seed, std::uint64_t path_index,
                  const TimeGrid& grid, int m) {
  out.resize(grid.n_steps, m);
  const double sdt = std::sqrt(grid.dt());
  for (int i = 0; i < grid.n_steps; ++i) {
    double* row = out.row(i);
    for (int k = 0; k < m; ++k)
      row[k] = sdt * rng::gauss(seed, path_index, static_cast<std::uint32_t>(i),
                                static_cast<std::uint32_t>(k));
  }
}

void FlowWorkspace::ensure(int d, int m) {
  if (B.dim() == d && static_cast<int>(Sig.size()) == m) return;
  B.resize(d);
  S2.resize(d);
  tmp.resize(d);
  tmp2.resize(d);
  Sig.assign(m, Mat(d));
  b.assign(d, 0.0);
  col.assign(d, 0.0);
  acc.assign(d, 0.0);
  eadt.assign(d, 1.0);
}

namespace {

void resize_trajectory(Trajectory& out, const Model& model, const TimeGrid& grid, bool flows) {
  const int d = model.dim();
  const int n = grid.n_steps;
  out.grid = grid;
  out.d = d;
  out.m = model.noise_dim();
  out.has_flows = flows;
  out.X.assign(static_cast<std::size_t>(n + 1) * d, 0.0);
  if (flows) {
    out.J.assign(static_cast<std::size_t>(n + 1) * d * d, 0.0);
    out.Jinv.assign(static_cast<std::size_t>(n + 1) * d * d, 0.0);
    out.JA.assign(static_cast<std::size_t>(n + 1) * d * d, 0.0);
  } else {
    out.J.clear();
    out.Jinv.clear();
    out.JA.clear();
  }
}

void set_identity_raw(double* p, int d) {
  std::memset(p, 0, sizeof(double) * d * d);
  for (int i = 0; i < d; ++i) p[i * d + i] = 1.0;
}

}  // namespace

void simulate_from_noise(Trajectory& out, const Model& model, const Conjugated& conj,
                         const double* x0, const TimeGrid& grid, const NoisePath& noise,
                         FlowWorkspace& ws, const SimOptions& opts) {
  const int d = model.dim();
  const int m = model.noise_dim();
  const int n = grid.n_steps;
  const double dt = grid.dt();
  if (noise.n_steps != n || noise.m != m)
    throw ConfigError("simulate: noise dimensions do not match grid/model");

  resize_trajectory(out, model, grid, opts.flows);
  if (&out.noise != &noise) out.noise = noise;
  ws.ensure(d, m);

  copy(x0, out.x(0), d);

  const bool ident = conj.identity_semigroup();
  const bool no_drift_jac = model.zero_drift_jac();
  const bool no_sigma_jac = model.zero_sigma_jac();
  const bool constant_flows = no_drift_jac && no_sigma_jac;

  if (!ident)
    for (int i = 0; i < d; ++i) ws.eadt[i] = std::exp(-model.generator().spectrum[i] * dt);

  if (opts.flows) {
    set_identity_raw(out.jac(0), d);
    set_identity_raw(out.jinv(0), d);
    set_identity_raw(out.ja(0), d);
    if (constant_flows) {
      // J and Jinv stay exactly at the identity (B = Sigma_k = 0)
      for (int i = 1; i <= n; ++i) {
        set_identity_raw(out.jac(i), d);
        set_identity_raw(out.jinv(i), d);
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    const double t = grid.node(i);
    const double* x = out.x(i);
    const double* dw = noise.row(i);

    // state update
    model.drift(t, x, ws.b.data());
    copy(x, ws.acc.data(), d);
    axpy(dt, ws.b.data(), ws.acc.data(), d);
    for (int k = 0; k < m; ++k) {
      model.sigma_col(t, x, k, ws.col.data());
      axpy(dw[k], ws.col.data(), ws.acc.data(), d);
    }
    double* xn = out.x(i + 1);
    if (ident)
      copy(ws.acc.data(), xn, d);
    else
      for (int c = 0; c < d; ++c) xn[c] = ws.eadt[c] * ws.acc[c];
    if (!all_finite(xn, d))
      throw NumericalError("simulate: non-finite state", i + 1);

    if (opts.flows && !constant_flows) {
      const double* J = out.jac(i);
      const double* Ji = out.jinv(i);
      double* Jn = out.jac(i + 1);
      double* Jin = out.jinv(i + 1);

      if (!no_drift_jac)
        conj.B(t, x, ws.B);
      else
        ws.B.set_zero();

      // J_{i+1} = J + B J dt + sum_k Sigma_k J dW^k
      copy(J, Jn, d * d);
      matmul(ws.tmp.data(), ws.B.data(), J, d);
      axpy(dt, ws.tmp.data(), Jn, d * d);

      if (!no_sigma_jac) {
        ws.S2.set_zero();
        for (int k = 0; k < m; ++k) {
          conj.Sigma(t, x, k, ws.Sig[k]);
          matmul(ws.tmp.data(), ws.Sig[k].data(), J, d);
          axpy(dw[k], ws.tmp.data(), Jn, d * d);
          matmul(ws.tmp.data(), ws.Sig[k].data(), ws.Sig[k].data(), d);
          axpy(1.0, ws.tmp.data(), ws.S2.data(), d * d);
        }
        axpy(-1.0, ws.S2, ws.B);  // B <- B - sum_k Sigma_k^2
      }

      // Jinv_{i+1} = Jinv - Jinv (B - sum Sigma_k^2) dt - sum_k Jinv Sigma_k dW^k
      copy(Ji, Jin, d * d);
      matmul(ws.tmp.data(), Ji, ws.B.data(), d);
      axpy(-dt, ws.tmp.data(), Jin, d * d);
      if (!no_sigma_jac)
        for (int k = 0; k < m; ++k) {
          matmul(ws.tmp.data(), Ji, ws.Sig[k].data(), d);
          axpy(-dw[k], ws.tmp.data(), Jin, d * d);
        }
      if (!all_finite(Jn, d * d) || !all_finite(Jin, d * d))
        throw NumericalError("simulate: non-finite flow", i + 1);
    }
  }

  if (opts.flows) {
    if (ident) {
      std::memcpy(out.JA.data(), out.J.data(), sizeof(double) * out.J.size());
    } else {
      const auto& mu = model.generator().spectrum;
      for (int i = 0; i <= n; ++i) {
        const double t = grid.node(i);
        const double* J = out.jac(i);
        double* A = out.ja(i);
        for (int r = 0; r < d; ++r) {
          const double s = std::exp(-mu[r] * t);
          for (int c = 0; c < d; ++c) A[r * d + c] = s * J[r * d + c];
        }
      }
    }
  }
}

void simulate_into(Trajectory& out, const Model& model, const Conjugated& conj, const double* x0,
                   const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_index,
                   FlowWorkspace& ws, const SimOptions& opts) {
  sample_noise(out.noise, seed, path_index, grid, model.noise_dim());
  out.seed = seed;
  out.path_index = path_index;
  simulate_from_noise(out, model, conj, x0, grid, out.noise, ws, opts);
}

Trajectory simulate_path(const Model& model, const Conjugated& conj, const double* x0,
                         const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_index,
                         const SimOptions& opts) {
  Trajectory traj;
  FlowWorkspace ws;
  simulate_into(traj, model, conj, x0, grid, seed, path_index, ws, opts);
  return traj;
}

Trajectory simulate_shifted_path(const Model& model, const Conjugated& conj, const double* x0,
                                 const TimeGrid& grid, const NoisePath& base_noise,
                                 const double* rate, double eps, const SimOptions& opts) {
  Trajectory traj;
  traj.noise = base_noise;
  const double dt = grid.dt();
  for (int i = 0; i < traj.noise.n_steps; ++i) {
    double* row = traj.noise.row(i);
    for (int k = 0; k < traj.noise.m; ++k) row[k] += eps * rate[i * traj.noise.m + k] * dt;
  }
  FlowWorkspace ws;
  simulate_from_noise(traj, model, conj, x0, grid, traj.noise, ws, opts);
  return traj;
}

std::vector<Mat> integrate_JA_direct(const Model& model, const Conjugated& conj,
                                     const Trajectory& traj) {
  const int d = model.dim();
  const int m = model.noise_dim();
  const int n = traj.grid.n_steps;
  const double dt = traj.grid.dt();

  std::vector<Mat> JA(n + 1, Mat(d));
  JA[0].set_identity();
  Mat jac(d), sj(d), tmp(d), acc(d);
  Vec eadt(d, 1.0);
  if (!conj.identity_semigroup())
    for (int i = 0; i < d; ++i) eadt[i] = std::exp(-model.generator().spectrum[i] * dt);

  for (int i = 0; i < n; ++i) {
    const double t = traj.grid.node(i);
    const double* x = traj.x(i);
    const double* dw = traj.noise.row(i);
    acc = JA[i];
    model.drift_jac(t, x, jac);
    matmul(tmp, jac, JA[i]);
    axpy(dt, tmp, acc);
    for (int k = 0; k < m; ++k) {
      model.sigma_jac(t, x, k, sj);
      matmul(tmp, sj, JA[i]);
      axpy(dw[k], tmp, acc);
    }
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) JA[i + 1](r, c) = eadt[r] * acc(r, c);
  }
  return JA;
}

namespace {

void check_coeffs(const SemilinearCoeffs& coeffs, const Mat& Y0, const TimeGrid& grid,
                  const NoisePath& noise) {
  if (Y0.dim() != coeffs.d) throw ConfigError("semilinear: Y0 dimension mismatch");
  if (noise.n_steps != grid.n_steps || noise.m != coeffs.m)
    throw ConfigError("semilinear: noise dimensions do not match");
}

}  // namespace

std::vector<Mat> solve_semilinear_direct(const SemilinearCoeffs& coeffs, const Mat& Y0,
                                         const TimeGrid& grid, const NoisePath& noise) {
  check_coeffs(coeffs, Y0, grid, noise);
  const int d = coeffs.d;
  const int n = grid.n_steps;
  const double dt = grid.dt();

  std::vector<Mat> Y(n + 1, Mat(d));
  Y[0] = Y0;
  Mat a(d), b(d), ck(d), fk(d), tmp(d);
  for (int i = 0; i < n; ++i) {
    const double* dw = noise.row(i);
    Mat& Yn = Y[i + 1];
    Yn = Y[i];
    coeffs.b(i, b);
    matmul(tmp, b, Y[i]);
    axpy(dt, tmp, Yn);
    for (int k = 0; k < coeffs.m; ++k) {
      coeffs.c(i, k, ck);
      matmul(tmp, ck, Y[i]);
      axpy(dw[k], tmp, Yn);
    }
    coeffs.a(i, a);
    axpy(dt, a, Yn);
    for (int k = 0; k < coeffs.m; ++k) {
      coeffs.f(i, k, fk);
      axpy(dw[k], fk, Yn);
    }
    if (!all_finite(Yn.data(), d * d))
      throw NumericalError("semilinear direct: non-finite value", i + 1);
  }
  return Y;
}

std::vector<Mat> solve_semilinear_closed_form(const SemilinearCoeffs& coeffs, const Mat& Y0,
                                              const TimeGrid& grid, const NoisePath& noise) {
  check_coeffs(coeffs, Y0, grid, noise);
  const int d = coeffs.d;
  const int n = grid.n_steps;
  const double dt = grid.dt();

  std::vector<Mat> Y(n + 1, Mat(d));
  Mat G = Mat::identity(d), Ginv = Mat::identity(d), Acc = Y0;
  Mat a(d), b(d), ck(d), fk(d), tmp(d), tmp2(d), S2(d), Gn(d), Ginvn(d);
  matmul(Y[0], G, Acc);

  for (int i = 0; i < n; ++i) {
    const double* dw = noise.row(i);

    // bracket accumulation with left-point G^{-1}
    coeffs.a(i, a);
    matmul(tmp, Ginv, a);
    axpy(dt, tmp, Acc);
    for (int k = 0; k < coeffs.m; ++k) {
      coeffs.f(i, k, fk);
      matmul(tmp, Ginv, fk);
      axpy(dw[k], tmp, Acc);
      coeffs.c(i, k, ck);
      matmul(tmp, ck, fk);
      matmul(tmp2, Ginv, tmp);
      axpy(-dt, tmp2, Acc);
    }

    // advance G and G^{-1} from their SDEs
    coeffs.b(i, b);
    Gn = G;
    matmul(tmp, b, G);
    axpy(dt, tmp, Gn);
    S2.set_zero();
    for (int k = 0; k < coeffs.m; ++k) {
      coeffs.c(i, k, ck);
      matmul(tmp, ck, G);
      axpy(dw[k], tmp, Gn);
      matmul(tmp, ck, ck);
      axpy(1.0, tmp, S2);
    }
    axpy(-1.0, S2, b);  // b <- b - sum_k c_k^2
    Ginvn = Ginv;
    matmul(tmp, Ginv, b);
    axpy(-dt, tmp, Ginvn);
    for (int k = 0; k < coeffs.m; ++k) {
      coeffs.c(i, k, ck);
      matmul(tmp, Ginv, ck);
      axpy(-dw[k], tmp, Ginvn);
    }
    G = Gn;
    Ginv = Ginvn;

    matmul(Y[i + 1], G, Acc);
    if (!all_finite(Y[i + 1].data(), d * d))
      throw NumericalError("semilinear closed form: non-finite value", i + 1);
  }
  return Y;
}

}  // namespace ibp
