#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ibp/flow.hpp"
#include "ibp/model.hpp"
#include "ibp/weight.hpp"

// Monte Carlo verification engine: both sides of the integration-by-parts
// identity, empirical moments against the closed-form constants, the kernel
// density log-gradient, and the Cameron-Martin shift check.

namespace ibp {

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample_std / sqrt(n)
  std::uint64_t n_paths = 0;
  std::uint64_t seed = 0;
};

struct TestFunction {
  std::string name;
  double (*f)(const double*, int);
  void (*grad)(const double*, int, double*);
};

const TestFunction& test_function(const std::string& name);
std::vector<std::string> test_function_names();

// P_T(grad_{e^{AT} v} f): pathwise <grad f(X_T), e^{AT} v>.
Estimate estimate_lhs(const Model& model, const Conjugated& conj, const double* x0,
                      const double* v, const TimeGrid& grid, const TestFunction& f,
                      std::uint64_t n_paths, std::uint64_t seed, int threads);

struct RhsResult {
  Estimate est;
  std::array<double, 5> theta_means{};
  // per-path rows [f(X_T) M/T, theta1..theta5] when requested by the caller
  std::vector<double>* table = nullptr;
};

// (1/T) E{ f(X_T) M_T^v }
RhsResult estimate_rhs(const Model& model, const Conjugated& conj, const double* x0,
                       const double* v, const TimeGrid& grid, const TestFunction& f,
                       std::uint64_t n_paths, std::uint64_t seed, int threads,
                       std::vector<double>* table_out = nullptr);

struct IbpResult {
  Estimate lhs;
  Estimate rhs;
  double z = 0.0;
  double z_threshold = 4.0;
  std::array<double, 5> theta_means{};
  bool pass = false;
};

// Two-sided check of the IBP identity with independent seeds per side.
IbpResult verify_ibp(const Model& model, const Conjugated& conj, const double* x0,
                     const double* v, const TimeGrid& grid, const TestFunction& f,
                     std::uint64_t n_paths, std::uint64_t seed, int threads,
                     double z_threshold = 4.0);

// Closed-form constants of the moment bounds. All evaluators are exposed in
// log space as well: the exponentials overflow double for large K1^p.
class BoundConstants {
 public:
  BoundConstants(std::function<double(double)> K1, std::function<double(double)> K2,
                 std::function<double(double)> lambda, int d, double C_q_override = 0.0);
  static BoundConstants from_model(const Model& model, double C_q_override = 0.0);

  // beta1(p,t) = 3^{p-1} exp{3^{p-1} (t^{p-1} + t^{p/2-1}) K1(t)^p}, p >= 2
  double log_beta1(double p, double t) const;
  double beta1(double p, double t) const;
  // beta2(p,t) = 3^{p-1} exp{3^{p-1} [t^{p-1}(K1+K1^2)^p + t^{p/2-1} K1^p]}
  double log_beta2(double p, double t) const;
  double beta2(double p, double t) const;

  // Burkholder-Davis-Gundy constant (documented over-estimate, overridable)
  double C(double q) const;

  double log_Gamma(double T) const;
  double Gamma(double T) const;
  double log_Gamma_q(double T, double q) const;  // q >= 2

  // per-|v| bounds on E|Theta_i|, i in 1..5
  double log_theta_bound(int i, double T) const;

 private:
  std::function<double(double)> K1_, K2_, lam_;
  int d_;
  double cq_override_;
};

struct MomentEntry {
  double p = 0.0;
  double emp_J = 0.0;     // sup over grid nodes of mean ||J_i||^p
  double emp_Jinv = 0.0;  // same for ||Jinv_i||^p
  double log_beta1 = 0.0;
  double log_beta2 = 0.0;
  bool pass_J = false;
  bool pass_Jinv = false;
};

struct MomentReport {
  std::vector<MomentEntry> entries;
  double mean_max_defect = 0.0;  // mean over paths of max_i ||J_i Jinv_i - I||
  std::uint64_t n_paths = 0;
  std::uint64_t seed = 0;
  bool pass = false;
};

MomentReport check_moment_bounds(const Model& model, const Conjugated& conj, const double* x0,
                                 const TimeGrid& grid, const std::vector<double>& p_list,
                                 std::uint64_t n_paths, std::uint64_t seed, int threads);

// mean over paths of max_i ||J_i Jinv_i - I|| (operator norm)
double inverse_flow_defect(const Model& model, const Conjugated& conj, const double* x0,
                           const TimeGrid& grid, std::uint64_t n_paths, std::uint64_t seed,
                           int threads);

struct WeightMomentReport {
  double q = 2.0;
  double emp_l1 = 0.0;     // E|M_T^v|
  double emp_l1_se = 0.0;  // standard error of the E|M| estimate
  double emp_lq = 0.0;     // (E|M_T^v|^q)^{1/q}
  double log_l1_bound = 0.0;
  double log_lq_bound = 0.0;
  bool pass_l1 = false;
  bool pass_lq = false;
  double v_norm = 0.0;
  std::uint64_t n_paths = 0;
  std::uint64_t seed = 0;
  bool pass() const { return pass_l1 && pass_lq; }
};

// table_out, when given, receives per-path rows [|M|, |M|^q, theta1..theta5].
WeightMomentReport check_weight_moment(const Model& model, const Conjugated& conj,
                                       const double* x0, const double* v, const TimeGrid& grid,
                                       std::uint64_t n_paths, std::uint64_t seed, int threads,
                                       double q, double C_q_override = 0.0,
                                       std::vector<double>* table_out = nullptr);

struct DensityGradReport {
  int d = 1;
  std::vector<double> eval_points;     // n_eval x d, flattened
  std::vector<double> est_grad_log_p;  // per eval point
  std::vector<bool> reliable;          // kernel mass >= 10 effective samples
  double bandwidth = 0.0;
  double sample_std = 0.0;
  std::uint64_t n_paths = 0;
  std::uint64_t seed = 0;
  double integrated_mean_abs = 0.0;  // (1/n) sum_p |est(X_T^p)| (binned evaluation)
  double log_gamma_over_T = 0.0;
  bool integrated_ok = false;
};

// Nadaraya-Watson estimate of -E[M_T^v | X_T = y] (Gaussian kernel, Silverman
// bandwidth unless overridden). Guarded to d <= 3.
DensityGradReport density_log_gradient(const Model& model, const Conjugated& conj,
                                       const double* x0, const double* v, const TimeGrid& grid,
                                       std::uint64_t n_paths, std::uint64_t seed, int threads,
                                       const std::vector<double>& eval_points,
                                       double bandwidth_override = 0.0,
                                       double C_q_override = 0.0);

struct PerturbReport {
  std::vector<double> eps;
  std::vector<double> defect;  // ||(X^eps_T - X_T)/eps - T e^{AT} v||
  std::vector<double> order;   // empirical order between consecutive eps
  bool monotone = false;       // defect non-increasing as eps decreases
  bool bounded = false;        // defect <= 10 (eps + dt) per entry
  std::uint64_t seed = 0;
};

// Cameron-Martin shift check of D_h X_T = T e^{AT} v on one base path.
PerturbReport perturbation_check(const Model& model, const Conjugated& conj, const double* x0,
                                 const double* v, const TimeGrid& grid, std::uint64_t seed,
                                 const std::vector<double>& eps_list);

struct Lemma31Report {
  int n_systems = 0;
  double dt = 0.0;
  std::vector<double> rel_err;       // closed form vs direct, terminal, at dt
  std::vector<double> rel_err_half;  // same systems at dt/2
  double mean_err = 0.0;
  double mean_err_half = 0.0;
  double ratio = 0.0;   // mean_err / mean_err_half
  double mean_C = 0.0;  // mean_err / dt
  std::uint64_t seed = 0;
  bool pass = false;  // finiteness sanity
};

// Random bounded constant-coefficient scalar and 2x2 systems, shared noise
// between the two solvers at each resolution.
Lemma31Report lemma31_study(int n_systems, const TimeGrid& grid, std::uint64_t seed);

Estimate summarize(const std::vector<double>& table, std::size_t stride, std::size_t offset,
                   std::uint64_t n_paths, std::uint64_t seed);

}  // namespace ibp
