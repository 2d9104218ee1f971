#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ibp/linalg.hpp"

// SDE problem definition: coefficients b, sigma, their first and second
// directional derivatives, the inverse diffusion, the declared assumption
// constants, and the conjugation by the diagonal semigroup exp(A t).

namespace ibp {

struct GeneratorSpec {
  enum class Mode { kZero, kDiagonal };
  Mode mode = Mode::kZero;
  // A = -diag(spectrum), spectrum entries >= 0 (contraction semigroup).
  std::vector<double> spectrum;

  bool is_zero() const { return mode == Mode::kZero; }
};

struct ModelParams {
  std::map<std::string, double> scalars;
  std::map<std::string, std::vector<double>> vectors;

  double get(const std::string& key, double fallback) const;
  double require(const std::string& key) const;
  const std::vector<double>& require_vector(const std::string& key) const;
  bool has_vector(const std::string& key) const { return vectors.count(key) > 0; }
};

class Model {
 public:
  virtual ~Model() = default;

  int dim() const { return d_; }
  int noise_dim() const { return m_; }
  const GeneratorSpec& generator() const { return gen_; }
  const std::string& name() const { return name_; }
  const ModelParams& params() const { return params_; }

  virtual void drift(double t, const double* x, double* out) const = 0;
  // action convention: drift_jac(t,x) * u = directional derivative of b in u
  virtual void drift_jac(double t, const double* x, Mat& out) const = 0;
  // out = grad_w( drift_jac(.) u )(x)
  virtual void drift_hess(double t, const double* x, const double* u, const double* w,
                          double* out) const = 0;
  virtual void sigma_col(double t, const double* x, int k, double* out) const = 0;
  virtual void sigma_jac(double t, const double* x, int k, Mat& out) const = 0;
  virtual void sigma_hess(double t, const double* x, int k, const double* u, const double* w,
                          double* out) const = 0;
  virtual void sigma_inv(double t, const double* x, Mat& out) const = 0;

  // Declared assumption constants, increasing in t.
  virtual double K1(double t) const = 0;
  virtual double K2(double t) const = 0;
  virtual double lambda_bound(double t) const = 0;
  // First-derivative bound on the raw coefficients; reported by validation only.
  virtual double K(double t) const { return K1(t); }

  // Structural flags; identically-zero terms may be skipped by the kernels.
  virtual bool zero_drift_jac() const { return false; }
  virtual bool zero_drift_hess() const { return false; }
  virtual bool zero_sigma_jac() const { return false; }

 protected:
  Model(std::string name, int d, int m, GeneratorSpec gen, ModelParams params)
      : name_(std::move(name)), d_(d), m_(m), gen_(std::move(gen)), params_(std::move(params)) {}

  std::string name_;
  int d_;
  int m_;
  GeneratorSpec gen_;
  ModelParams params_;
};

// Coefficient views conjugated by the semigroup: B = e^{-At} drift_jac e^{At},
// Sigma_k = e^{-At} sigma_jac_k e^{At}. Diagonal generators only, so every
// conjugation is an elementwise scaling. Immutable and safe to share across
// path workers.
class Conjugated {
 public:
  explicit Conjugated(const Model& model);

  const Model& model() const { return *model_; }
  bool identity_semigroup() const { return identity_; }

  // e^{At} x (elementwise e^{-mu_i t})
  void semigroup_apply(double t, const double* x, double* out) const;
  void semigroup_inv_apply(double t, const double* x, double* out) const;
  void semigroup_dense(double t, Mat& out) const;
  void semigroup_inv_dense(double t, Mat& out) const;

  void B(double t, const double* x, Mat& out) const;
  void Sigma(double t, const double* x, int k, Mat& out) const;
  // out = grad_w( B(.) u )(x); work must hold dim() doubles
  void B_hess(double t, const double* x, const double* u, const double* w, double* out,
              double* work) const;
  void Sigma_hess(double t, const double* x, int k, const double* u, const double* w,
                  double* out, double* work) const;

 private:
  void scale_conjugate(double t, Mat& m) const;  // m <- e^{-At} m e^{At}

  const Model* model_;
  bool identity_;
};

std::unique_ptr<const Model> make_model(const std::string& name, const ModelParams& params);

// Statistical check of the declared bounds (H1)/(H2) by sampling (t, x) with
// |x| <= radius, t in [0, t_max].
struct AssumptionViolation {
  long sample;
  std::string quantity;
  double value;
  double bound;
  double t;
};

struct AssumptionReport {
  long sample_count = 0;
  double region_radius = 0.0;
  double t_max = 0.0;
  double max_B_norm = 0.0;
  double max_Sigma_l2 = 0.0;   // (sum_k ||Sigma_k||^2)^{1/2}
  double max_Sigma_sum = 0.0;  // sum_k ||Sigma_k||
  double max_gradB_fd = 0.0;   // finite-difference proxy for ||grad B||
  double max_gradSigma_fd_l2 = 0.0;
  double max_sigma_inv_norm = 0.0;
  double max_raw_grad = 0.0;  // ||grad b|| v ||grad sigma||_HS proxy, vs K
  double max_sigma_inv_residual = 0.0;
  double hs_integral = 0.0;  // int_0^{t_max} ||e^{At}||_HS^2 dt (finite-mode diagnostic)
  std::vector<AssumptionViolation> violations;

  bool pass() const { return violations.empty(); }
};

AssumptionReport validate_assumptions(const Model& model, const Conjugated& conj,
                                      long sample_count, double region_radius, double t_max,
                                      std::uint64_t seed);

}  // namespace ibp
