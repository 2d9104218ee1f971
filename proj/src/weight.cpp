#include "ibp/weight.hpp"

#include <cmath>

#include "ibp/errors.hpp"

namespace ibp {

namespace {

// y = M^T x
inline void matvec_t(const Mat& M, const double* x, double* y) {
  const int d = M.dim();
  for (int c = 0; c < d; ++c) y[c] = 0.0;
  for (int r = 0; r < d; ++r) {
    const double xr = x[r];
    const double* row = M.data() + static_cast<std::size_t>(r) * d;
    for (int c = 0; c < d; ++c) y[c] += row[c] * xr;
  }
}

inline double row_dot(const double* M, int r, const double* x, int d) {
  return dot(M + static_cast<std::size_t>(r) * d, x, d);
}

inline void column_of(const double* M, int c, double* out, int d) {
  for (int r = 0; r < d; ++r) out[r] = M[r * d + c];
}

}  // namespace

void WeightWorkspace::ensure(int d, int m) {
  if (sinv.dim() == d && static_cast<int>(Sig.size()) == m) return;
  sinv.resize(d);
  P.resize(d);
  Sig.assign(m, Mat(d));
  w.assign(d, 0.0);
  u.assign(d, 0.0);
  acol.assign(d, 0.0);
  bh.assign(d, 0.0);
  sh.assign(d, 0.0);
  sv.assign(d, 0.0);
  q.assign(d, 0.0);
  tmp.assign(d, 0.0);
  acc1.assign(d, 0.0);
  work.assign(d, 0.0);
}

WeightBreakdown weight_for_path(const Trajectory& traj, const Model& model,
                                const Conjugated& conj, const double* v, WeightWorkspace& ws,
                                const WeightOptions& opts) {
  if (!traj.has_flows) throw ConfigError("weight_for_path: trajectory was simulated without flows");
  const int d = traj.d;
  const int m = traj.m;
  const int n = traj.grid.n_steps;
  const double dt = traj.grid.dt();
  ws.ensure(d, m);

  const bool has_drift_hess = !model.zero_drift_hess();
  const bool has_sigma = !model.zero_sigma_jac();

  // Jinv_n v is a constant contraction outside every integral; u_i = J_i (Jinv_n v).
  matvec(traj.jinv(n), v, ws.w.data(), d);

  double th1 = 0.0, th2 = 0.0, th3 = 0.0, th4 = 0.0, th5 = 0.0;
  std::fill(ws.acc1.begin(), ws.acc1.end(), 0.0);

  Mat A_view(d);
  for (int i = 0; i < n; ++i) {
    const double t = traj.grid.node(i);
    const double* x = traj.x(i);
    const double* J = traj.jac(i);
    const double* Ji = traj.jinv(i);
    const double* A = traj.ja(i);
    const double* dw = traj.noise.row(i);

    matvec(J, ws.w.data(), ws.u.data(), d);
    model.sigma_inv(t, x, ws.sinv);

    if (has_sigma) {
      // P = sigma^{-1} JA, reused by theta1 and theta4
      copy(A, A_view.data(), d * d);
      matmul(ws.P, ws.sinv, A_view);
      if (opts.theta1_scalar_order) {
        matvec(ws.P, ws.w.data(), ws.tmp.data());
        th1 += dot(dw, ws.tmp.data(), m);
      } else {
        matvec_t(ws.P, dw, ws.tmp.data());
        axpy(1.0, ws.tmp.data(), ws.acc1.data(), d);
      }
    } else {
      // [sigma^{-1} JA]^T dw = JA^T (sigma^{-T} dw) without forming the product
      matvec_t(ws.sinv, dw, ws.tmp.data());
      copy(A, A_view.data(), d * d);
      matvec_t(A_view, ws.tmp.data(), ws.sv.data());
      if (opts.theta1_scalar_order)
        th1 += dot(ws.sv.data(), ws.w.data(), d);
      else
        axpy(1.0, ws.sv.data(), ws.acc1.data(), d);
    }

    if (has_drift_hess) {
      // theta2: t * Tr{ Jinv [ (grad B)(u, JA) ] } dt
      double tr = 0.0;
      for (int r = 0; r < d; ++r) {
        column_of(A, r, ws.acol.data(), d);
        conj.B_hess(t, x, ws.u.data(), ws.acol.data(), ws.bh.data(), ws.work.data());
        tr += row_dot(Ji, r, ws.bh.data(), d);
      }
      th2 += t * tr * dt;
    }

    if (has_sigma) {
      // theta4: sum_{k,j} <sigma^{-1} JA e_k, e_j> <Jinv Sigma_j u, e_k> dt
      double s4 = 0.0;
      for (int j = 0; j < m; ++j) {
        conj.Sigma(t, x, j, ws.Sig[j]);
        matvec(ws.Sig[j], ws.u.data(), ws.sv.data());
        matvec(Ji, ws.sv.data(), ws.q.data(), d);
        s4 += row_dot(ws.P.data(), j, ws.q.data(), d);
      }
      th4 += s4 * dt;

      // theta3 / theta5 share the Hessian directions (u, JA e_k)
      double s3 = 0.0, s5 = 0.0;
      for (int k = 0; k < d; ++k) {
        column_of(A, k, ws.acol.data(), d);
        for (int j = 0; j < m; ++j) {
          conj.Sigma_hess(t, x, j, ws.u.data(), ws.acol.data(), ws.sh.data(), ws.work.data());
          s3 += dw[j] * row_dot(Ji, k, ws.sh.data(), d);
          matvec(ws.Sig[j], ws.sh.data(), ws.sv.data());
          s5 += row_dot(Ji, k, ws.sv.data(), d);
        }
      }
      th3 += t * s3;
      th5 -= t * s5 * dt;
    }
  }
  if (!opts.theta1_scalar_order) th1 = dot(ws.acc1.data(), ws.w.data(), d);

  WeightBreakdown out;
  out.theta = {th1, th2, th3, th4, th5};
  for (int i = 0; i < 5; ++i)
    if (!std::isfinite(out.theta[i]))
      throw NumericalError("weight: non-finite theta term", i + 1);
  out.total = th1 + th2 + th3 + th4 + th5;
  return out;
}

double weight_linearity_defect(const Trajectory& traj, const Model& model, const Conjugated& conj,
                               const double* v1, const double* v2, double alpha, double beta) {
  const int d = traj.d;
  WeightWorkspace ws;
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = alpha * v1[i] + beta * v2[i];
  const double m_combined = weight_for_path(traj, model, conj, v.data(), ws).total;
  const double m1 = weight_for_path(traj, model, conj, v1, ws).total;
  const double m2 = weight_for_path(traj, model, conj, v2, ws).total;
  return std::abs(m_combined - alpha * m1 - beta * m2);
}

}  // namespace ibp
