#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ibp/linalg.hpp"
#include "ibp/model.hpp"

// Euler-Maruyama integration of the state X together with the Jacobian flow J,
// the inverse flow Jinv (from its own SDE, not by matrix inversion) and
// JA = e^{At} J, all sharing one set of Brownian increments.

namespace ibp {

struct TimeGrid {
  double T = 1.0;
  int n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double horizon, int steps);

  double dt() const { return T / n_steps; }
  double node(int i) const { return (T * i) / n_steps; }
};

struct NoisePath {
  int n_steps = 0;
  int m = 0;
  std::vector<double> incr;  // (n_steps x m), increment ~ N(0, dt)

  void resize(int steps, int noise_dim) {
    n_steps = steps;
    m = noise_dim;
    incr.assign(static_cast<std::size_t>(steps) * noise_dim, 0.0);
  }
  double* row(int i) { return incr.data() + static_cast<std::size_t>(i) * m; }
  const double* row(int i) const { return incr.data() + static_cast<std::size_t>(i) * m; }
  double dw(int i, int k) const { return row(i)[k]; }
};

// Regenerates bit-exactly from (seed, path_index).
void sample_noise(NoisePath& out, std::uint64_t seed, std::uint64_t path_index,
                  const TimeGrid& grid, int m);

struct Trajectory {
  TimeGrid grid;
  int d = 0;
  int m = 0;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  NoisePath noise;
  std::vector<double> X;     // (n_steps+1) x d
  std::vector<double> J;     // (n_steps+1) x d*d
  std::vector<double> Jinv;  // (n_steps+1) x d*d
  std::vector<double> JA;    // (n_steps+1) x d*d
  bool has_flows = false;

  double* x(int i) { return X.data() + static_cast<std::size_t>(i) * d; }
  const double* x(int i) const { return X.data() + static_cast<std::size_t>(i) * d; }
  double* jac(int i) { return J.data() + static_cast<std::size_t>(i) * d * d; }
  const double* jac(int i) const { return J.data() + static_cast<std::size_t>(i) * d * d; }
  double* jinv(int i) { return Jinv.data() + static_cast<std::size_t>(i) * d * d; }
  const double* jinv(int i) const { return Jinv.data() + static_cast<std::size_t>(i) * d * d; }
  double* ja(int i) { return JA.data() + static_cast<std::size_t>(i) * d * d; }
  const double* ja(int i) const { return JA.data() + static_cast<std::size_t>(i) * d * d; }
};

struct SimOptions {
  // skip J / Jinv / JA (state-only runs, e.g. the IBP left-hand side)
  bool flows = true;
};

// Scratch buffers reused across paths by one worker.
class FlowWorkspace {
 public:
  void ensure(int d, int m);

  Mat B, S2, tmp, tmp2;
  std::vector<Mat> Sig;  // one per noise component
  Vec b, col, acc, eadt;
};

// Euler-Maruyama with exponential (splitting) treatment of the generator:
//   X_{i+1}    = e^{A dt} (X_i + b dt + sum_k sigma_k dW^k)
//   J_{i+1}    = J_i + B J_i dt + sum_k Sigma_k J_i dW^k
//   Jinv_{i+1} = Jinv_i - Jinv_i (B - sum_k Sigma_k^2) dt - sum_k Jinv_i Sigma_k dW^k
//   JA_i       = e^{A t_i} J_i
// Aborts with NumericalError (carrying the step) on non-finite state.
void simulate_from_noise(Trajectory& out, const Model& model, const Conjugated& conj,
                         const double* x0, const TimeGrid& grid, const NoisePath& noise,
                         FlowWorkspace& ws, const SimOptions& opts = {});

void simulate_into(Trajectory& out, const Model& model, const Conjugated& conj, const double* x0,
                   const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_index,
                   FlowWorkspace& ws, const SimOptions& opts = {});

Trajectory simulate_path(const Model& model, const Conjugated& conj, const double* x0,
                         const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_index,
                         const SimOptions& opts = {});

// Re-runs the base noise with increments dW_i^k + eps * rate(i,k) * dt
// (Cameron-Martin direction sampled on the grid from a base trajectory).
// rate points to n_steps x m values.
Trajectory simulate_shifted_path(const Model& model, const Conjugated& conj, const double* x0,
                                 const TimeGrid& grid, const NoisePath& base_noise,
                                 const double* rate, double eps, const SimOptions& opts = {});

// Diagnostic: integrate JA from its own SDE (same splitting as X) instead of
// using the identity JA = e^{At} J. Returns (n_steps+1) matrices.
std::vector<Mat> integrate_JA_direct(const Model& model, const Conjugated& conj,
                                     const Trajectory& traj);

// Coefficient processes of the semilinear matrix SDE
//   dY = a dt + b Y dt + sum_k c^k Y dw^k + sum_k f^k dw^k
// sampled on the grid nodes.
struct SemilinearCoeffs {
  int d = 1;
  int m = 1;
  std::function<void(int, Mat&)> a, b;
  std::function<void(int, int, Mat&)> c, f;
};

// Direct Euler-Maruyama discretization (the oracle for the closed form).
std::vector<Mat> solve_semilinear_direct(const SemilinearCoeffs& coeffs, const Mat& Y0,
                                         const TimeGrid& grid, const NoisePath& noise);

// Integrating-factor solution: Y_t = G_t { Y_0 + int G^{-1} a ds
//   + int G^{-1} sum_k f^k dw^k - int G^{-1} sum_k c^k f^k ds },
// with G and G^{-1} integrated from their SDEs and left-point quadrature
// sharing the same increments.
std::vector<Mat> solve_semilinear_closed_form(const SemilinearCoeffs& coeffs, const Mat& Y0,
                                              const TimeGrid& grid, const NoisePath& noise);

}  // namespace ibp
