#include "ibp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ibp/errors.hpp"
#include "ibp/rng.hpp"

namespace ibp {

double ModelParams::get(const std::string& key, double fallback) const {
  auto it = scalars.find(key);
  return it == scalars.end() ? fallback : it->second;
}

double ModelParams::require(const std::string& key) const {
  auto it = scalars.find(key);
  if (it == scalars.end()) throw ConfigError("missing model parameter '" + key + "'");
  return it->second;
}

const std::vector<double>& ModelParams::require_vector(const std::string& key) const {
  auto it = vectors.find(key);
  if (it == vectors.end()) throw ConfigError("missing model parameter '" + key + "'");
  return it->second;
}

namespace {

int dim_param(const ModelParams& p) {
  const double dv = p.get("d", 1.0);
  const int d = static_cast<int>(std::llround(dv));
  if (d < 1 || static_cast<double>(d) != dv) throw ConfigError("model dimension d must be a positive integer");
  return d;
}

void fill_zero(double* out, int n) { std::fill(out, out + n, 0.0); }

// b = 0, sigma = sigma0 * I. The classical Gaussian case: J = Jinv = I and
// the weight collapses to the Bismut formula <W_T, v>/sigma0.
class AdditiveGaussModel final : public Model {
 public:
  AdditiveGaussModel(ModelParams params)
      : Model("additive_gauss", dim_param(params), dim_param(params), GeneratorSpec{}, params),
        sigma0_(params.get("sigma0", 1.0)) {
    if (!(sigma0_ > 0.0)) throw ConfigError("additive_gauss: sigma0 must be > 0");
  }

  void drift(double, const double*, double* out) const override { fill_zero(out, d_); }
  void drift_jac(double, const double*, Mat& out) const override { out.set_zero(); }
  void drift_hess(double, const double*, const double*, const double*, double* out) const override {
    fill_zero(out, d_);
  }
  void sigma_col(double, const double*, int k, double* out) const override {
    fill_zero(out, d_);
    out[k] = sigma0_;
  }
  void sigma_jac(double, const double*, int, Mat& out) const override { out.set_zero(); }
  void sigma_hess(double, const double*, int, const double*, const double*, double* out) const override {
    fill_zero(out, d_);
  }
  void sigma_inv(double, const double*, Mat& out) const override {
    out.set_zero();
    for (int i = 0; i < d_; ++i) out(i, i) = 1.0 / sigma0_;
  }
  double K1(double) const override { return 0.0; }
  double K2(double) const override { return 0.0; }
  double lambda_bound(double) const override { return 1.0 / sigma0_; }
  bool zero_drift_jac() const override { return true; }
  bool zero_drift_hess() const override { return true; }
  bool zero_sigma_jac() const override { return true; }

 private:
  double sigma0_;
};

// b_i(x) = alpha sin(x_i), sigma(x) = (1 + eps sin(x_1)) I. Smooth,
// bounded-derivative multiplicative noise; (H2) needs |eps| < 1.
class TrigModel : public Model {
 public:
  TrigModel(std::string name, GeneratorSpec gen, ModelParams params)
      : Model(std::move(name), dim_param(params), dim_param(params), std::move(gen), params),
        eps_(params.get("epsilon", 0.3)),
        alpha_(params.get("alpha", 0.1)) {
    if (!(std::abs(eps_) < 1.0 - 1e-8))
      throw ConfigError("trig model: |epsilon| must stay strictly below 1 (non-degenerate sigma)");
    if (!std::isfinite(alpha_)) throw ConfigError("trig model: alpha must be finite");
  }

  void drift(double, const double* x, double* out) const override {
    for (int i = 0; i < d_; ++i) out[i] = alpha_ * std::sin(x[i]);
  }
  void drift_jac(double, const double* x, Mat& out) const override {
    out.set_zero();
    for (int i = 0; i < d_; ++i) out(i, i) = alpha_ * std::cos(x[i]);
  }
  void drift_hess(double, const double* x, const double* u, const double* w,
                  double* out) const override {
    for (int i = 0; i < d_; ++i) out[i] = -alpha_ * std::sin(x[i]) * u[i] * w[i];
  }
  void sigma_col(double, const double* x, int k, double* out) const override {
    fill_zero(out, d_);
    out[k] = 1.0 + eps_ * std::sin(x[0]);
  }
  void sigma_jac(double, const double* x, int k, Mat& out) const override {
    out.set_zero();
    out(k, 0) = eps_ * std::cos(x[0]);
  }
  void sigma_hess(double, const double* x, int k, const double* u, const double* w,
                  double* out) const override {
    fill_zero(out, d_);
    out[k] = -eps_ * std::sin(x[0]) * u[0] * w[0];
  }
  void sigma_inv(double, const double* x, Mat& out) const override {
    out.set_zero();
    const double s = 1.0 / (1.0 + eps_ * std::sin(x[0]));
    for (int i = 0; i < d_; ++i) out(i, i) = s;
  }
  double K1(double) const override { return std::max(std::abs(alpha_), d_ * std::abs(eps_)); }
  double K2(double) const override { return std::max(std::abs(alpha_), d_ * std::abs(eps_)); }
  double lambda_bound(double) const override { return 1.0 / (1.0 - std::abs(eps_)); }
  double K(double) const override {
    return std::max(std::abs(alpha_), std::sqrt(static_cast<double>(d_)) * std::abs(eps_));
  }

 protected:
  double eps_;
  double alpha_;
};

// Trig coefficients under A = -diag(mu). The conjugated sigma derivatives pick
// up e^{(mu_k - mu_1) t} factors, so the declared K bounds grow in t.
class GalerkinDiagModel final : public TrigModel {
 public:
  GalerkinDiagModel(ModelParams params)
      : TrigModel("galerkin_diag", make_generator(params), params) {}

  double K1(double t) const override { return std::max(std::abs(alpha_), std::abs(eps_) * growth(t)); }
  double K2(double t) const override { return K1(t); }

 private:
  static GeneratorSpec make_generator(const ModelParams& params) {
    GeneratorSpec gen;
    gen.mode = GeneratorSpec::Mode::kDiagonal;
    gen.spectrum = params.require_vector("mu");
    if (static_cast<int>(gen.spectrum.size()) != dim_param(params))
      throw ConfigError("galerkin_diag: mu must have length d");
    for (double mu : gen.spectrum)
      if (!(mu >= 0.0)) throw ConfigError("galerkin_diag: generator spectrum must be nonnegative");
    return gen;
  }
  double growth(double t) const {
    double s = 0.0;
    for (double mu : gen_.spectrum) s += std::exp(std::max(0.0, mu - gen_.spectrum[0]) * t);
    return s;
  }
};

// b(x) = M x, sigma = sigma0 * I.
class LinearDriftModel final : public Model {
 public:
  LinearDriftModel(ModelParams params)
      : Model("linear_drift_const_sigma", dim_param(params), dim_param(params), GeneratorSpec{},
              params),
        sigma0_(params.get("sigma0", 1.0)),
        M_(dim_param(params)) {
    if (!(sigma0_ > 0.0)) throw ConfigError("linear_drift_const_sigma: sigma0 must be > 0");
    const auto& m = params.require_vector("M");
    if (static_cast<int>(m.size()) != d_ * d_)
      throw ConfigError("linear_drift_const_sigma: M must have d*d entries (row-major)");
    std::copy(m.begin(), m.end(), M_.data());
    norm_M_ = operator_norm(M_);
  }

  void drift(double, const double* x, double* out) const override { matvec(M_, x, out); }
  void drift_jac(double, const double*, Mat& out) const override { out = M_; }
  void drift_hess(double, const double*, const double*, const double*, double* out) const override {
    fill_zero(out, d_);
  }
  void sigma_col(double, const double*, int k, double* out) const override {
    fill_zero(out, d_);
    out[k] = sigma0_;
  }
  void sigma_jac(double, const double*, int, Mat& out) const override { out.set_zero(); }
  void sigma_hess(double, const double*, int, const double*, const double*, double* out) const override {
    fill_zero(out, d_);
  }
  void sigma_inv(double, const double*, Mat& out) const override {
    out.set_zero();
    for (int i = 0; i < d_; ++i) out(i, i) = 1.0 / sigma0_;
  }
  double K1(double) const override { return norm_M_; }
  double K2(double) const override { return 0.0; }
  double lambda_bound(double) const override { return 1.0 / sigma0_; }
  bool zero_drift_hess() const override { return true; }
  bool zero_sigma_jac() const override { return true; }

 private:
  double sigma0_;
  Mat M_;
  double norm_M_ = 0.0;
};

}  // namespace

std::unique_ptr<const Model> make_model(const std::string& name, const ModelParams& params) {
  if (name == "additive_gauss") return std::make_unique<AdditiveGaussModel>(params);
  if (name == "trig_multiplicative")
    return std::make_unique<TrigModel>("trig_multiplicative", GeneratorSpec{}, params);
  if (name == "linear_drift_const_sigma") return std::make_unique<LinearDriftModel>(params);
  if (name == "galerkin_diag") return std::make_unique<GalerkinDiagModel>(params);
  throw ConfigError("unknown model '" + name + "'");
}

Conjugated::Conjugated(const Model& model) : model_(&model) {
  const auto& gen = model.generator();
  for (double mu : gen.spectrum)
    if (!(mu >= 0.0)) throw ConfigError("generator spectrum must be nonnegative");
  identity_ = gen.is_zero();
  if (!identity_ && static_cast<int>(gen.spectrum.size()) != model.dim())
    throw ConfigError("generator spectrum length must equal the model dimension");
}

void Conjugated::semigroup_apply(double t, const double* x, double* out) const {
  const int d = model_->dim();
  if (identity_) {
    copy(x, out, d);
    return;
  }
  const auto& mu = model_->generator().spectrum;
  for (int i = 0; i < d; ++i) out[i] = std::exp(-mu[i] * t) * x[i];
}

void Conjugated::semigroup_inv_apply(double t, const double* x, double* out) const {
  const int d = model_->dim();
  if (identity_) {
    copy(x, out, d);
    return;
  }
  const auto& mu = model_->generator().spectrum;
  for (int i = 0; i < d; ++i) out[i] = std::exp(mu[i] * t) * x[i];
}

void Conjugated::semigroup_dense(double t, Mat& out) const {
  const int d = model_->dim();
  out.resize(d);
  for (int i = 0; i < d; ++i)
    out(i, i) = identity_ ? 1.0 : std::exp(-model_->generator().spectrum[i] * t);
}

void Conjugated::semigroup_inv_dense(double t, Mat& out) const {
  const int d = model_->dim();
  out.resize(d);
  for (int i = 0; i < d; ++i)
    out(i, i) = identity_ ? 1.0 : std::exp(model_->generator().spectrum[i] * t);
}

void Conjugated::scale_conjugate(double t, Mat& m) const {
  if (identity_) return;
  const int d = model_->dim();
  const auto& mu = model_->generator().spectrum;
  for (int r = 0; r < d; ++r) {
    const double er = std::exp(mu[r] * t);
    for (int c = 0; c < d; ++c) m(r, c) *= er * std::exp(-mu[c] * t);
  }
}

void Conjugated::B(double t, const double* x, Mat& out) const {
  model_->drift_jac(t, x, out);
  scale_conjugate(t, out);
}

void Conjugated::Sigma(double t, const double* x, int k, Mat& out) const {
  model_->sigma_jac(t, x, k, out);
  scale_conjugate(t, out);
}

void Conjugated::B_hess(double t, const double* x, const double* u, const double* w, double* out,
                        double* work) const {
  if (identity_) {
    model_->drift_hess(t, x, u, w, out);
    return;
  }
  semigroup_apply(t, u, work);
  model_->drift_hess(t, x, work, w, out);
  const int d = model_->dim();
  const auto& mu = model_->generator().spectrum;
  for (int i = 0; i < d; ++i) out[i] *= std::exp(mu[i] * t);
}

void Conjugated::Sigma_hess(double t, const double* x, int k, const double* u, const double* w,
                            double* out, double* work) const {
  if (identity_) {
    model_->sigma_hess(t, x, k, u, w, out);
    return;
  }
  semigroup_apply(t, u, work);
  model_->sigma_hess(t, x, k, work, w, out);
  const int d = model_->dim();
  const auto& mu = model_->generator().spectrum;
  for (int i = 0; i < d; ++i) out[i] *= std::exp(mu[i] * t);
}

namespace {

void check_finite_or_throw(const double* p, int n, const char* what, long sample) {
  if (!all_finite(p, n))
    throw NumericalError(std::string("non-finite ") + what + " during assumption validation",
                         sample);
}

}  // namespace

AssumptionReport validate_assumptions(const Model& model, const Conjugated& conj,
                                      long sample_count, double region_radius, double t_max,
                                      std::uint64_t seed) {
  if (sample_count < 1) throw ConfigError("validate_assumptions: sample_count must be >= 1");
  if (!(region_radius > 0.0) || !(t_max > 0.0))
    throw ConfigError("validate_assumptions: region_radius and t_max must be > 0");

  const int d = model.dim();
  const int m = model.noise_dim();
  AssumptionReport rep;
  rep.sample_count = sample_count;
  rep.region_radius = region_radius;
  rep.t_max = t_max;

  Vec x(d), xp(d), xm(d), w(d), col(d), tmp(d);
  Mat B(d), Bp(d), Bm(d), S(d), Sp(d), Sm(d), sig(d), sinv(d), prod(d);
  const double h = 1e-5 * std::max(1.0, region_radius);

  auto flag = [&](long s, const char* q, double value, double bound, double t) {
    // small slack absorbs finite-difference truncation error in the proxies
    if (value > bound * (1.0 + 1e-6) + 1e-8)
      rep.violations.push_back({s, q, value, bound, t});
  };

  for (long s = 0; s < sample_count; ++s) {
    const double t = rng::uniform(seed, rng::kStreamValidation, s, 0, 0, 0.0, t_max);
    // uniform in the ball |x| <= R by rejection from the box
    for (std::uint32_t attempt = 0;; ++attempt) {
      for (int c = 0; c < d; ++c)
        x[c] = rng::uniform(seed, rng::kStreamValidation, s, 1 + attempt, c, -region_radius,
                            region_radius);
      if (norm2(x.data(), d) <= region_radius || attempt > 200) break;
    }
    // random unit direction for the derivative proxies
    for (int c = 0; c < d; ++c) w[c] = rng::normal(seed, rng::kStreamValidation, s, 0, 1000 + c);
    const double wn = norm2(w.data(), d);
    for (int c = 0; c < d; ++c) w[c] /= (wn > 0 ? wn : 1.0);

    const double k1 = model.K1(t);
    const double k2 = model.K2(t);
    const double lam = model.lambda_bound(t);

    conj.B(t, x.data(), B);
    check_finite_or_throw(B.data(), d * d, "B", s);
    const double bn = operator_norm(B);
    rep.max_B_norm = std::max(rep.max_B_norm, bn);
    flag(s, "B_norm_vs_K1", bn, k1, t);

    for (int c = 0; c < d; ++c) {
      xp[c] = x[c] + h * w[c];
      xm[c] = x[c] - h * w[c];
    }
    conj.B(t, xp.data(), Bp);
    conj.B(t, xm.data(), Bm);
    axpy(-1.0, Bm, Bp);
    const double gradB = operator_norm(Bp) / (2.0 * h);
    rep.max_gradB_fd = std::max(rep.max_gradB_fd, gradB);
    flag(s, "gradB_fd_vs_K2", gradB, k2, t);

    double sig_l2 = 0.0, sig_sum = 0.0, grad_sig_l2 = 0.0, raw_hs = 0.0;
    for (int k = 0; k < m; ++k) {
      conj.Sigma(t, x.data(), k, S);
      check_finite_or_throw(S.data(), d * d, "Sigma", s);
      const double sn = operator_norm(S);
      sig_l2 += sn * sn;
      sig_sum += sn;
      conj.Sigma(t, xp.data(), k, Sp);
      conj.Sigma(t, xm.data(), k, Sm);
      axpy(-1.0, Sm, Sp);
      const double g = operator_norm(Sp) / (2.0 * h);
      grad_sig_l2 += g * g;
      model.sigma_jac(t, x.data(), k, S);
      matvec(S, w.data(), tmp.data());
      raw_hs += dot(tmp.data(), tmp.data(), d);
    }
    sig_l2 = std::sqrt(sig_l2);
    grad_sig_l2 = std::sqrt(grad_sig_l2);
    rep.max_Sigma_l2 = std::max(rep.max_Sigma_l2, sig_l2);
    rep.max_Sigma_sum = std::max(rep.max_Sigma_sum, sig_sum);
    rep.max_gradSigma_fd_l2 = std::max(rep.max_gradSigma_fd_l2, grad_sig_l2);
    flag(s, "Sigma_l2_vs_K1", sig_l2, k1, t);
    flag(s, "Sigma_sum_vs_K1", sig_sum, k1, t);
    flag(s, "gradSigma_l2_vs_K2", grad_sig_l2, k2, t);

    model.drift_jac(t, x.data(), B);
    const double raw = std::max(operator_norm(B), std::sqrt(raw_hs));
    rep.max_raw_grad = std::max(rep.max_raw_grad, raw);
    flag(s, "raw_grad_vs_K", raw, model.K(t), t);

    model.sigma_inv(t, x.data(), sinv);
    check_finite_or_throw(sinv.data(), d * d, "sigma_inv", s);
    const double sin_n = operator_norm(sinv);
    rep.max_sigma_inv_norm = std::max(rep.max_sigma_inv_norm, sin_n);
    flag(s, "sigma_inv_vs_lambda", sin_n, lam, t);

    for (int k = 0; k < m; ++k) {
      model.sigma_col(t, x.data(), k, col.data());
      for (int r = 0; r < d; ++r) sig(r, k) = col[r];
    }
    matmul(prod, sinv, sig);
    const double resid = identity_defect(prod.data(), d);
    rep.max_sigma_inv_residual = std::max(rep.max_sigma_inv_residual, resid);
    if (resid > 1e-8) rep.violations.push_back({s, "sigma_inv_residual", resid, 1e-8, t});
  }

  if (model.generator().is_zero()) {
    rep.hs_integral = d * t_max;
  } else {
    for (double mu : model.generator().spectrum)
      rep.hs_integral += mu > 1e-300 ? (1.0 - std::exp(-2.0 * mu * t_max)) / (2.0 * mu) : t_max;
  }
  return rep;
}

}  // namespace ibp
