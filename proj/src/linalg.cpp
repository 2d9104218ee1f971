#include "ibp/linalg.hpp"

#include <algorithm>

namespace ibp {

double frobenius_norm(const double* A, int d) {
  return norm2(A, d * d);
}

double identity_defect(const double* A, int d) {
  double m = 0.0;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      const double v = std::abs(A[r * d + c] - (r == c ? 1.0 : 0.0));
      m = std::max(m, v);
    }
  return m;
}

namespace {

// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
// S is destroyed. Deterministic, converges quadratically for the tiny
// dimensions used here.
double sym_eig_max(std::vector<double>& S, int d) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += std::abs(S[p * d + q]);
    double scale = 0.0;
    for (int i = 0; i < d; ++i) scale = std::max(scale, std::abs(S[i * d + i]));
    if (off <= 1e-15 * std::max(scale, 1e-300)) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = S[p * d + q];
        if (apq == 0.0) continue;
        const double app = S[p * d + p];
        const double aqq = S[q * d + q];
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                     : 1.0 / (tau - std::sqrt(1.0 + tau * tau)));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double skp = S[k * d + p];
          const double skq = S[k * d + q];
          S[k * d + p] = c * skp - s * skq;
          S[k * d + q] = s * skp + c * skq;
        }
        for (int k = 0; k < d; ++k) {
          const double spk = S[p * d + k];
          const double sqk = S[q * d + k];
          S[p * d + k] = c * spk - s * sqk;
          S[q * d + k] = s * spk + c * sqk;
        }
      }
    }
  }
  double lam = S[0];
  for (int i = 1; i < d; ++i) lam = std::max(lam, S[i * d + i]);
  return lam;
}

}  // namespace

double operator_norm(const double* A, int d) {
  if (d == 1) return std::abs(A[0]);
  if (d == 2) {
    // closed form: s_max^2 = (f + sqrt(f^2 - 4 det^2)) / 2 with f = ||A||_F^2
    const double f = A[0] * A[0] + A[1] * A[1] + A[2] * A[2] + A[3] * A[3];
    const double det = A[0] * A[3] - A[1] * A[2];
    const double disc = std::max(f * f - 4.0 * det * det, 0.0);
    return std::sqrt(0.5 * (f + std::sqrt(disc)));
  }
  std::vector<double> S(static_cast<std::size_t>(d) * d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += A[k * d + r] * A[k * d + c];
      S[r * d + c] = s;
    }
  return std::sqrt(std::max(sym_eig_max(S, d), 0.0));
}

}  // namespace ibp
