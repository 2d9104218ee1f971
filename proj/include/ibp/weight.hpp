#pragma once

#include <array>

#include "ibp/flow.hpp"
#include "ibp/linalg.hpp"
#include "ibp/model.hpp"

// Second pass over a stored trajectory: evaluates the integration-by-parts
// weight M_T^v and its five-term breakdown with left-point sums over the same
// Brownian increments that drove the path.

namespace ibp {

struct WeightBreakdown {
  std::array<double, 5> theta{};
  double total = 0.0;

  double theta1() const { return theta[0]; }
  double theta2() const { return theta[1]; }
  double theta3() const { return theta[2]; }
  double theta4() const { return theta[3]; }
  double theta5() const { return theta[4]; }
};

struct WeightOptions {
  // accumulate theta1 as a running scalar against Jinv_n v instead of
  // accumulating the vector integral first (same value up to rounding)
  bool theta1_scalar_order = false;
};

class WeightWorkspace {
 public:
  void ensure(int d, int m);

  Mat sinv, P;
  std::vector<Mat> Sig;
  Vec w, u, acol, bh, sh, sv, q, tmp, acc1, work;
};

WeightBreakdown weight_for_path(const Trajectory& traj, const Model& model,
                                const Conjugated& conj, const double* v, WeightWorkspace& ws,
                                const WeightOptions& opts = {});

inline WeightBreakdown weight_for_path(const Trajectory& traj, const Model& model,
                                       const Conjugated& conj, const double* v) {
  WeightWorkspace ws;
  return weight_for_path(traj, model, conj, v, ws);
}

// | M^{a v1 + b v2} - a M^{v1} - b M^{v2} | on one trajectory.
double weight_linearity_defect(const Trajectory& traj, const Model& model, const Conjugated& conj,
                               const double* v1, const double* v2, double alpha, double beta);

}  // namespace ibp
