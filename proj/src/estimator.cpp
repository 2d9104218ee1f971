#include "ibp/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ibp/engine.hpp"
#include "ibp/errors.hpp"
#include "ibp/rng.hpp"

namespace ibp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double f_linear_x1(const double* x, int) { return x[0]; }
void g_linear_x1(const double*, int d, double* g) {
  std::fill(g, g + d, 0.0);
  g[0] = 1.0;
}

double f_quadratic_x1(const double* x, int) { return x[0] * x[0]; }
void g_quadratic_x1(const double* x, int d, double* g) {
  std::fill(g, g + d, 0.0);
  g[0] = 2.0 * x[0];
}

double f_sin_x1(const double* x, int) { return std::sin(x[0]); }
void g_sin_x1(const double* x, int d, double* g) {
  std::fill(g, g + d, 0.0);
  g[0] = std::cos(x[0]);
}

double f_x1_exp_neg_sq(const double* x, int d) {
  return x[0] * std::exp(-dot(x, x, d));
}
void g_x1_exp_neg_sq(const double* x, int d, double* g) {
  const double e = std::exp(-dot(x, x, d));
  for (int j = 0; j < d; ++j) g[j] = -2.0 * x[0] * x[j] * e;
  g[0] += e;
}

double f_one(const double*, int) { return 1.0; }
void g_one(const double*, int d, double* g) { std::fill(g, g + d, 0.0); }

const TestFunction kTestFunctions[] = {
    {"linear_x1", f_linear_x1, g_linear_x1},
    {"quadratic_x1", f_quadratic_x1, g_quadratic_x1},
    {"sin_x1", f_sin_x1, g_sin_x1},
    {"x1_exp_neg_sq", f_x1_exp_neg_sq, g_x1_exp_neg_sq},
    {"one", f_one, g_one},
};

double logsumexp3(double a, double b, double c) {
  const double m = std::max({a, b, c});
  if (m == -kInf) return -kInf;
  return m + std::log(std::exp(a - m) + std::exp(b - m) + std::exp(c - m));
}

struct PathState {
  Trajectory traj;
  FlowWorkspace flow_ws;
  WeightWorkspace weight_ws;
  Vec grad;
};

}  // namespace

const TestFunction& test_function(const std::string& name) {
  for (const auto& tf : kTestFunctions)
    if (tf.name == name) return tf;
  throw ConfigError("unknown test function '" + name + "'");
}

std::vector<std::string> test_function_names() {
  std::vector<std::string> out;
  for (const auto& tf : kTestFunctions) out.push_back(tf.name);
  return out;
}

Estimate summarize(const std::vector<double>& table, std::size_t stride, std::size_t offset,
                   std::uint64_t n_paths, std::uint64_t seed) {
  Estimate e;
  e.n_paths = n_paths;
  e.seed = seed;
  double sum = 0.0;
  for (std::uint64_t p = 0; p < n_paths; ++p) sum += table[p * stride + offset];
  e.mean = sum / static_cast<double>(n_paths);
  if (n_paths > 1) {
    double ss = 0.0;
    for (std::uint64_t p = 0; p < n_paths; ++p) {
      const double dv = table[p * stride + offset] - e.mean;
      ss += dv * dv;
    }
    e.std_error = std::sqrt(ss / static_cast<double>(n_paths - 1)) /
                  std::sqrt(static_cast<double>(n_paths));
  }
  return e;
}

Estimate estimate_lhs(const Model& model, const Conjugated& conj, const double* x0,
                      const double* v, const TimeGrid& grid, const TestFunction& f,
                      std::uint64_t n_paths, std::uint64_t seed, int threads) {
  if (n_paths < 1) throw ConfigError("estimate_lhs: n_paths must be >= 1");
  const int d = model.dim();
  Vec ev(d);
  conj.semigroup_apply(grid.T, v, ev.data());

  std::vector<double> table(n_paths, 0.0);
  run_paths<PathState>(
      n_paths, threads,
      [&] {
        PathState s;
        s.grad.assign(d, 0.0);
        return s;
      },
      [&](PathState& s, std::uint64_t p) {
        simulate_into(s.traj, model, conj, x0, grid, seed, p, s.flow_ws, SimOptions{false});
        f.grad(s.traj.x(grid.n_steps), d, s.grad.data());
        table[p] = dot(s.grad.data(), ev.data(), d);
      });
  return summarize(table, 1, 0, n_paths, seed);
}

RhsResult estimate_rhs(const Model& model, const Conjugated& conj, const double* x0,
                       const double* v, const TimeGrid& grid, const TestFunction& f,
                       std::uint64_t n_paths, std::uint64_t seed, int threads,
                       std::vector<double>* table_out) {
  if (n_paths < 1) throw ConfigError("estimate_rhs: n_paths must be >= 1");
  const int d = model.dim();
  constexpr std::size_t kW = 6;  // f M / T, theta1..theta5

  std::vector<double> local;
  std::vector<double>& table = table_out ? *table_out : local;
  table.assign(n_paths * kW, 0.0);

  run_paths<PathState>(
      n_paths, threads, [&] { return PathState{}; },
      [&](PathState& s, std::uint64_t p) {
        simulate_into(s.traj, model, conj, x0, grid, seed, p, s.flow_ws);
        const WeightBreakdown wb = weight_for_path(s.traj, model, conj, v, s.weight_ws);
        double* row = table.data() + p * kW;
        row[0] = f.f(s.traj.x(grid.n_steps), d) * wb.total / grid.T;
        for (int i = 0; i < 5; ++i) row[1 + i] = wb.theta[i];
      });

  RhsResult out;
  out.est = summarize(table, kW, 0, n_paths, seed);
  for (int i = 0; i < 5; ++i)
    out.theta_means[i] = summarize(table, kW, 1 + i, n_paths, seed).mean;
  return out;
}

IbpResult verify_ibp(const Model& model, const Conjugated& conj, const double* x0,
                     const double* v, const TimeGrid& grid, const TestFunction& f,
                     std::uint64_t n_paths, std::uint64_t seed, int threads, double z_threshold) {
  IbpResult out;
  out.z_threshold = z_threshold;
  out.lhs = estimate_lhs(model, conj, x0, v, grid, f, n_paths, seed, threads);
  const std::uint64_t rhs_seed = rng::derive_seed(seed, 1);
  RhsResult rhs = estimate_rhs(model, conj, x0, v, grid, f, n_paths, rhs_seed, threads);
  out.rhs = rhs.est;
  out.theta_means = rhs.theta_means;
  const double var = out.lhs.std_error * out.lhs.std_error + out.rhs.std_error * out.rhs.std_error;
  out.z = var > 0.0 ? (out.lhs.mean - out.rhs.mean) / std::sqrt(var)
                    : (out.lhs.mean == out.rhs.mean ? 0.0 : kInf);
  out.pass = std::abs(out.z) <= z_threshold;
  return out;
}

BoundConstants::BoundConstants(std::function<double(double)> K1, std::function<double(double)> K2,
                               std::function<double(double)> lambda, int d, double C_q_override)
    : K1_(std::move(K1)), K2_(std::move(K2)), lam_(std::move(lambda)), d_(d),
      cq_override_(C_q_override) {
  if (d_ < 1) throw ConfigError("BoundConstants: d must be >= 1");
}

BoundConstants BoundConstants::from_model(const Model& model, double C_q_override) {
  return BoundConstants([&model](double t) { return model.K1(t); },
                        [&model](double t) { return model.K2(t); },
                        [&model](double t) { return model.lambda_bound(t); }, model.dim(),
                        C_q_override);
}

double BoundConstants::log_beta1(double p, double t) const {
  if (p < 2.0) throw ConfigError("beta1 requires p >= 2");
  const double k1 = K1_(t);
  const double pre = std::pow(3.0, p - 1.0);
  return (p - 1.0) * std::log(3.0) +
         pre * (std::pow(t, p - 1.0) + std::pow(t, p / 2.0 - 1.0)) * std::pow(k1, p);
}

double BoundConstants::beta1(double p, double t) const { return std::exp(log_beta1(p, t)); }

double BoundConstants::log_beta2(double p, double t) const {
  if (p < 2.0) throw ConfigError("beta2 requires p >= 2");
  const double k1 = K1_(t);
  const double pre = std::pow(3.0, p - 1.0);
  return (p - 1.0) * std::log(3.0) +
         pre * (std::pow(t, p - 1.0) * std::pow(k1 + k1 * k1, p) +
                std::pow(t, p / 2.0 - 1.0) * std::pow(k1, p));
}

double BoundConstants::beta2(double p, double t) const { return std::exp(log_beta2(p, t)); }

double BoundConstants::C(double q) const {
  if (cq_override_ > 0.0) return cq_override_;
  return std::pow(q * (q - 1.0) / 2.0, q / 2.0) * std::pow(q, q / 2.0);
}

double BoundConstants::log_Gamma(double T) const {
  const double k1 = K1_(T), k2 = K2_(T), lam = lam_(T);
  const double ld = std::log(static_cast<double>(d_));
  const double lT = std::log(T);
  const double t1 = std::log(lam) + 0.5 * (ld + lT) + 0.5 * (log_beta1(2, T) + log_beta2(2, T));
  const double t2 = ld + 2.0 * lT + std::log(k2) +
                    0.25 * (log_beta2(4, T) + log_beta1(8, T) + 2.0 * log_beta2(2, T));
  const double coef3 = d_ * T * T * k2 + d_ * T * lam * k1 + d_ * T * T * k1 * k2;
  const double t3 = std::log(coef3) + 0.5 * (log_beta1(4, T) + log_beta2(4, T));
  return logsumexp3(t1, t2, t3);
}

double BoundConstants::Gamma(double T) const { return std::exp(log_Gamma(T)); }

double BoundConstants::log_Gamma_q(double T, double q) const {
  if (q < 2.0) throw ConfigError("Gamma_{T,q} requires q >= 2");
  const double k1 = K1_(T), k2 = K2_(T), lam = lam_(T);
  const double ld = std::log(static_cast<double>(d_));
  const double lT = std::log(T);
  const double lC = std::log(C(q));
  const double t1 = lC + q * std::log(lam) + 0.5 * q * (ld + lT) +
                    0.5 * (log_beta1(2 * q, T) + log_beta2(2 * q, T));
  const double t2 = lC + q * ld + 0.5 * (3.0 * q + 1.0) * lT + q * std::log(k2) +
                    0.25 * (log_beta2(4 * q, T) + log_beta1(8 * q, T) + 2.0 * log_beta2(2 * q, T));
  const double coef3 = logsumexp3(q * (ld + 2.0 * lT + std::log(k2)),
                                  q * (ld + lT + std::log(lam) + std::log(k1)),
                                  q * (ld + 2.0 * lT + std::log(k1) + std::log(k2)));
  const double t3 = coef3 + 0.5 * (log_beta1(4 * q, T) + log_beta2(4 * q, T));
  return logsumexp3(t1, t2, t3);
}

double BoundConstants::log_theta_bound(int i, double T) const {
  const double k1 = K1_(T), k2 = K2_(T), lam = lam_(T);
  const double ld = std::log(static_cast<double>(d_));
  const double lT = std::log(T);
  switch (i) {
    case 1:
      return std::log(lam) + 0.5 * (ld + lT) + 0.5 * (log_beta1(2, T) + log_beta2(2, T));
    case 2:
      return ld + 2.0 * lT + std::log(k2) + 0.5 * (log_beta1(4, T) + log_beta2(4, T));
    case 3:
      return ld + 2.0 * lT + std::log(k2) +
             0.25 * (log_beta2(4, T) + log_beta1(8, T) + 2.0 * log_beta2(2, T));
    case 4:
      return ld + lT + std::log(lam) + std::log(k1) +
             0.5 * (log_beta1(4, T) + log_beta2(4, T));
    case 5:
      return ld + 2.0 * lT + std::log(k1) + std::log(k2) +
             0.5 * (log_beta1(4, T) + log_beta2(4, T));
    default:
      throw ConfigError("theta bound index must be in 1..5");
  }
}

namespace {

double pow_fast(double x, double p) {
  if (p == 2.0) return x * x;
  if (p == 4.0) {
    const double s = x * x;
    return s * s;
  }
  return std::pow(x, p);
}

struct MomentState {
  Trajectory traj;
  FlowWorkspace flow_ws;
  Mat prod;
};

}  // namespace

MomentReport check_moment_bounds(const Model& model, const Conjugated& conj, const double* x0,
                                 const TimeGrid& grid, const std::vector<double>& p_list,
                                 std::uint64_t n_paths, std::uint64_t seed, int threads) {
  if (p_list.empty()) throw ConfigError("check_moment_bounds: p_list must not be empty");
  for (double p : p_list)
    if (p < 2.0) throw ConfigError("check_moment_bounds: p must be >= 2");
  if (n_paths < 1) throw ConfigError("check_moment_bounds: n_paths must be >= 1");

  const int d = model.dim();
  const int n = grid.n_steps;
  const std::size_t np = p_list.size();
  const std::size_t per_p = 2 * static_cast<std::size_t>(n + 1);
  const std::size_t acc_len = np * per_p + 1;  // + mean of per-path max defect

  std::vector<double> acc(acc_len, 0.0);
  run_paths_reduce<MomentState>(
      n_paths, acc_len, threads,
      [&] {
        MomentState s;
        s.prod.resize(d);
        return s;
      },
      [&](MomentState& s, std::uint64_t p, double* a) {
        simulate_into(s.traj, model, conj, x0, grid, seed, p, s.flow_ws);
        double max_defect = 0.0;
        for (int i = 0; i <= n; ++i) {
          const double nj = operator_norm(s.traj.jac(i), d);
          const double nji = operator_norm(s.traj.jinv(i), d);
          for (std::size_t ip = 0; ip < np; ++ip) {
            a[ip * per_p + i] += pow_fast(nj, p_list[ip]);
            a[ip * per_p + (n + 1) + i] += pow_fast(nji, p_list[ip]);
          }
          matmul(s.prod.data(), s.traj.jac(i), s.traj.jinv(i), d);
          for (int r = 0; r < d; ++r) s.prod(r, r) -= 1.0;
          max_defect = std::max(max_defect, operator_norm(s.prod));
        }
        a[np * per_p] += max_defect;
      },
      acc.data());

  MomentReport rep;
  rep.n_paths = n_paths;
  rep.seed = seed;
  rep.mean_max_defect = acc[np * per_p] / static_cast<double>(n_paths);
  const BoundConstants bc = BoundConstants::from_model(model);
  rep.pass = true;
  for (std::size_t ip = 0; ip < np; ++ip) {
    MomentEntry e;
    e.p = p_list[ip];
    for (int i = 0; i <= n; ++i) {
      e.emp_J = std::max(e.emp_J, acc[ip * per_p + i] / static_cast<double>(n_paths));
      e.emp_Jinv = std::max(e.emp_Jinv, acc[ip * per_p + (n + 1) + i] / static_cast<double>(n_paths));
    }
    e.log_beta1 = bc.log_beta1(e.p, grid.T);
    e.log_beta2 = bc.log_beta2(e.p, grid.T);
    e.pass_J = std::log(e.emp_J) <= e.log_beta1;
    e.pass_Jinv = std::log(e.emp_Jinv) <= e.log_beta2;
    rep.pass = rep.pass && e.pass_J && e.pass_Jinv;
    rep.entries.push_back(e);
  }
  return rep;
}

double inverse_flow_defect(const Model& model, const Conjugated& conj, const double* x0,
                           const TimeGrid& grid, std::uint64_t n_paths, std::uint64_t seed,
                           int threads) {
  const int d = model.dim();
  const int n = grid.n_steps;
  double acc = 0.0;
  run_paths_reduce<MomentState>(
      n_paths, 1, threads,
      [&] {
        MomentState s;
        s.prod.resize(d);
        return s;
      },
      [&](MomentState& s, std::uint64_t p, double* a) {
        simulate_into(s.traj, model, conj, x0, grid, seed, p, s.flow_ws);
        double max_defect = 0.0;
        for (int i = 0; i <= n; ++i) {
          matmul(s.prod.data(), s.traj.jac(i), s.traj.jinv(i), d);
          for (int r = 0; r < d; ++r) s.prod(r, r) -= 1.0;
          max_defect = std::max(max_defect, operator_norm(s.prod));
        }
        a[0] += max_defect;
      },
      &acc);
  return acc / static_cast<double>(n_paths);
}

WeightMomentReport check_weight_moment(const Model& model, const Conjugated& conj,
                                       const double* x0, const double* v, const TimeGrid& grid,
                                       std::uint64_t n_paths, std::uint64_t seed, int threads,
                                       double q, double C_q_override,
                                       std::vector<double>* table_out) {
  if (q < 1.0) throw ConfigError("check_weight_moment: q must be >= 1");
  if (n_paths < 1) throw ConfigError("check_weight_moment: n_paths must be >= 1");
  const int d = model.dim();

  constexpr std::size_t kW = 7;  // |M|, |M|^q, theta1..theta5
  std::vector<double> local;
  std::vector<double>& table = table_out ? *table_out : local;
  table.assign(n_paths * kW, 0.0);
  run_paths<PathState>(
      n_paths, threads, [&] { return PathState{}; },
      [&](PathState& s, std::uint64_t p) {
        simulate_into(s.traj, model, conj, x0, grid, seed, p, s.flow_ws);
        const WeightBreakdown wb = weight_for_path(s.traj, model, conj, v, s.weight_ws);
        double* row = table.data() + p * kW;
        row[0] = std::abs(wb.total);
        row[1] = std::pow(std::abs(wb.total), q);
        for (int i = 0; i < 5; ++i) row[2 + i] = wb.theta[i];
      });

  WeightMomentReport rep;
  rep.q = q;
  rep.n_paths = n_paths;
  rep.seed = seed;
  rep.v_norm = norm2(v, d);
  const Estimate l1 = summarize(table, kW, 0, n_paths, seed);
  rep.emp_l1 = l1.mean;
  rep.emp_l1_se = l1.std_error;
  rep.emp_lq = std::pow(summarize(table, kW, 1, n_paths, seed).mean, 1.0 / q);

  const BoundConstants bc = BoundConstants::from_model(model, C_q_override);
  const double q2 = std::max(q, 2.0);
  rep.log_l1_bound = std::log(rep.v_norm) + bc.log_Gamma(grid.T);
  rep.log_lq_bound = std::log(rep.v_norm) +
                     ((q2 - 1.0) * std::log(5.0) + bc.log_Gamma_q(grid.T, q2)) / q2;
  rep.pass_l1 = std::log(rep.emp_l1) <= rep.log_l1_bound;
  rep.pass_lq = std::log(rep.emp_lq) <= rep.log_lq_bound;
  return rep;
}

namespace {

// Binned kernel regression over the sample cloud: used only for the
// integrated |grad log p| diagnostic, where an exact per-sample evaluation
// would cost O(n^2). Bin resolution is far below the bandwidth.
struct BinnedNW {
  int d = 1;
  int bins_per_axis = 1;
  std::vector<double> lo, width;
  std::vector<double> count, sum;

  void build(const std::vector<double>& table, std::size_t stride, std::uint64_t n, int dim,
             double pad) {
    d = dim;
    bins_per_axis = dim == 1 ? 4096 : (dim == 2 ? 96 : 32);
    lo.assign(d, kInf);
    width.assign(d, 0.0);
    std::vector<double> hi(d, -kInf);
    for (std::uint64_t p = 0; p < n; ++p)
      for (int c = 0; c < d; ++c) {
        lo[c] = std::min(lo[c], table[p * stride + c]);
        hi[c] = std::max(hi[c], table[p * stride + c]);
      }
    std::size_t cells = 1;
    for (int c = 0; c < d; ++c) {
      lo[c] -= pad;
      hi[c] += pad;
      width[c] = (hi[c] - lo[c]) / bins_per_axis;
      if (!(width[c] > 0.0)) width[c] = 1.0;
      cells *= bins_per_axis;
    }
    count.assign(cells, 0.0);
    sum.assign(cells, 0.0);
    for (std::uint64_t p = 0; p < n; ++p) {
      std::size_t idx = 0;
      for (int c = 0; c < d; ++c) {
        int b = static_cast<int>((table[p * stride + c] - lo[c]) / width[c]);
        b = std::clamp(b, 0, bins_per_axis - 1);
        idx = idx * bins_per_axis + b;
      }
      count[idx] += 1.0;
      sum[idx] += -table[p * stride + d];  // -M
    }
  }

  double center(int c, int b) const { return lo[c] + (b + 0.5) * width[c]; }
};

}  // namespace

DensityGradReport density_log_gradient(const Model& model, const Conjugated& conj,
                                       const double* x0, const double* v, const TimeGrid& grid,
                                       std::uint64_t n_paths, std::uint64_t seed, int threads,
                                       const std::vector<double>& eval_points,
                                       double bandwidth_override, double C_q_override) {
  const int d = model.dim();
  if (d > 3) throw ConfigError("density_log_gradient: kernel regression is guarded to d <= 3");
  if (n_paths < 1000) throw ConfigError("density_log_gradient: n_paths must be >= 1000");
  if (eval_points.size() % d != 0)
    throw ConfigError("density_log_gradient: eval_points length must be a multiple of d");

  const std::size_t stride = d + 1;  // X_T, M
  std::vector<double> table(n_paths * stride, 0.0);
  run_paths<PathState>(
      n_paths, threads, [&] { return PathState{}; },
      [&](PathState& s, std::uint64_t p) {
        simulate_into(s.traj, model, conj, x0, grid, seed, p, s.flow_ws);
        double* row = table.data() + p * stride;
        copy(s.traj.x(grid.n_steps), row, d);
        row[d] = weight_for_path(s.traj, model, conj, v, s.weight_ws).total;
      });

  DensityGradReport rep;
  rep.d = d;
  rep.n_paths = n_paths;
  rep.seed = seed;
  rep.eval_points = eval_points;

  // Silverman: h = (4/(d+2))^{1/(d+4)} n^{-1/(d+4)} * sample_std
  double std_avg = 0.0;
  for (int c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::uint64_t p = 0; p < n_paths; ++p) mean += table[p * stride + c];
    mean /= static_cast<double>(n_paths);
    double ss = 0.0;
    for (std::uint64_t p = 0; p < n_paths; ++p) {
      const double dv = table[p * stride + c] - mean;
      ss += dv * dv;
    }
    std_avg += std::sqrt(ss / static_cast<double>(n_paths - 1));
  }
  rep.sample_std = std_avg / d;
  rep.bandwidth = bandwidth_override > 0.0
                      ? bandwidth_override
                      : std::pow(4.0 / (d + 2), 1.0 / (d + 4)) *
                            std::pow(static_cast<double>(n_paths), -1.0 / (d + 4)) *
                            rep.sample_std;
  if (!(rep.bandwidth > 0.0)) throw ConfigError("density_log_gradient: bandwidth must be > 0");
  const double h = rep.bandwidth;
  const double inv2h2 = 1.0 / (2.0 * h * h);

  const std::size_t n_eval = eval_points.size() / d;
  rep.est_grad_log_p.assign(n_eval, 0.0);
  rep.reliable.assign(n_eval, false);
  for (std::size_t e = 0; e < n_eval; ++e) {
    const double* y = eval_points.data() + e * d;
    double num = 0.0, den = 0.0;
    for (std::uint64_t p = 0; p < n_paths; ++p) {
      const double* row = table.data() + p * stride;
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double dv = row[c] - y[c];
        r2 += dv * dv;
      }
      const double k = std::exp(-r2 * inv2h2);
      num += k * (-row[d]);
      den += k;
    }
    rep.est_grad_log_p[e] = den > 0.0 ? num / den : 0.0;
    rep.reliable[e] = den >= 10.0;  // kernel mass >= 10/n
  }

  // integrated (1/n) sum_p |est(X_T^p)|, evaluated at bin resolution
  BinnedNW bins;
  bins.build(table, stride, n_paths, d, h);
  const int G = bins.bins_per_axis;
  std::vector<int> radius(d);
  for (int c = 0; c < d; ++c)
    radius[c] = std::min(G, static_cast<int>(8.0 * h / bins.width[c]) + 1);

  double integrated = 0.0;
  std::vector<int> idx(d), jdx(d);
  const std::size_t cells = bins.count.size();
  for (std::size_t cell = 0; cell < cells; ++cell) {
    if (bins.count[cell] == 0.0) continue;
    std::size_t rem = cell;
    for (int c = d - 1; c >= 0; --c) {
      idx[c] = static_cast<int>(rem % G);
      rem /= G;
    }
    double num = 0.0, den = 0.0;
    std::vector<std::pair<int, int>> range(d);
    for (int c = 0; c < d; ++c)
      range[c] = {std::max(0, idx[c] - radius[c]), std::min(G - 1, idx[c] + radius[c])};
    jdx = idx;
    std::function<void(int)> sweep = [&](int c) {
      if (c == d) {
        std::size_t j = 0;
        for (int cc = 0; cc < d; ++cc) j = j * G + jdx[cc];
        if (bins.count[j] == 0.0) return;
        double r2 = 0.0;
        for (int cc = 0; cc < d; ++cc) {
          const double dv = (idx[cc] - jdx[cc]) * bins.width[cc];
          r2 += dv * dv;
        }
        const double k = std::exp(-r2 * inv2h2);
        num += k * bins.sum[j];
        den += k * bins.count[j];
        return;
      }
      for (jdx[c] = range[c].first; jdx[c] <= range[c].second; ++jdx[c]) sweep(c + 1);
    };
    sweep(0);
    integrated += bins.count[cell] * std::abs(den > 0.0 ? num / den : 0.0);
  }
  rep.integrated_mean_abs = integrated / static_cast<double>(n_paths);

  const BoundConstants bc = BoundConstants::from_model(model, C_q_override);
  rep.log_gamma_over_T = std::log(norm2(v, d)) + bc.log_Gamma(grid.T) - std::log(grid.T);
  rep.integrated_ok = std::log(rep.integrated_mean_abs) <= rep.log_gamma_over_T;
  return rep;
}

PerturbReport perturbation_check(const Model& model, const Conjugated& conj, const double* x0,
                                 const double* v, const TimeGrid& grid, std::uint64_t seed,
                                 const std::vector<double>& eps_list) {
  if (eps_list.empty()) throw ConfigError("perturbation_check: eps_list must not be empty");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw ConfigError("perturbation_check: eps must be > 0");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1]))
      throw ConfigError("perturbation_check: eps_list must be strictly decreasing");
  }
  const int d = model.dim();
  const int m = model.noise_dim();
  const int n = grid.n_steps;
  const double dt = grid.dt();

  const Trajectory base = simulate_path(model, conj, x0, grid, seed, 0);

  // h'(t_i) = sigma^{-1}(t_i, X_i) JA_i Jinv_n v, sampled from the base path
  Vec w(d), ju(d), rate(static_cast<std::size_t>(n) * m, 0.0);
  Mat sinv(d);
  matvec(base.jinv(n), v, w.data(), d);
  for (int i = 0; i < n; ++i) {
    const double t = grid.node(i);
    matvec(base.ja(i), w.data(), ju.data(), d);
    model.sigma_inv(t, base.x(i), sinv);
    matvec(sinv, ju.data(), rate.data() + static_cast<std::size_t>(i) * m);
  }

  Vec target(d), diff(d);
  conj.semigroup_apply(grid.T, v, target.data());
  for (int c = 0; c < d; ++c) target[c] *= grid.T;

  PerturbReport rep;
  rep.seed = seed;
  rep.eps = eps_list;
  for (double eps : eps_list) {
    const Trajectory shifted = simulate_shifted_path(model, conj, x0, grid, base.noise,
                                                     rate.data(), eps, SimOptions{false});
    for (int c = 0; c < d; ++c)
      diff[c] = (shifted.x(n)[c] - base.x(n)[c]) / eps - target[c];
    rep.defect.push_back(norm2(diff.data(), d));
  }
  rep.monotone = true;
  rep.bounded = true;
  for (std::size_t i = 0; i < rep.defect.size(); ++i) {
    if (i > 0) {
      rep.order.push_back(std::log(rep.defect[i - 1] / std::max(rep.defect[i], 1e-300)) /
                          std::log(eps_list[i - 1] / eps_list[i]));
      rep.monotone = rep.monotone && rep.defect[i] <= rep.defect[i - 1] * (1.0 + 1e-9) + 1e-14;
    }
    rep.bounded = rep.bounded && rep.defect[i] <= 10.0 * (eps_list[i] + dt);
  }
  return rep;
}

namespace {

Mat random_coeff_mat(int d, std::uint64_t seed, std::uint64_t system, std::uint32_t slot) {
  Mat m(d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      m(r, c) = rng::uniform(seed, rng::kStreamCoefficients, system, slot,
                             static_cast<std::uint32_t>(r * d + c), -0.8, 0.8);
  return m;
}

double lemma31_rel_err(const SemilinearCoeffs& coeffs, const Mat& Y0, const TimeGrid& grid,
                       const NoisePath& noise) {
  const auto direct = solve_semilinear_direct(coeffs, Y0, grid, noise);
  const auto closed = solve_semilinear_closed_form(coeffs, Y0, grid, noise);
  Mat diff = closed.back();
  axpy(-1.0, direct.back(), diff);
  return frobenius_norm(diff) / std::max(frobenius_norm(direct.back()), 1e-12);
}

}  // namespace

Lemma31Report lemma31_study(int n_systems, const TimeGrid& grid, std::uint64_t seed) {
  if (n_systems < 1) throw ConfigError("lemma31_study: n_systems must be >= 1");
  Lemma31Report rep;
  rep.n_systems = n_systems;
  rep.dt = grid.dt();
  rep.seed = seed;
  const TimeGrid half(grid.T, 2 * grid.n_steps);

  for (int s = 0; s < n_systems; ++s) {
    const int d = (s % 2 == 0) ? 1 : 2;
    const Mat a = random_coeff_mat(d, seed, s, 0);
    const Mat b = random_coeff_mat(d, seed, s, 1);
    std::vector<Mat> c(d), f(d);
    for (int k = 0; k < d; ++k) {
      c[k] = random_coeff_mat(d, seed, s, 2 + k);
      f[k] = random_coeff_mat(d, seed, s, 2 + d + k);
    }
    SemilinearCoeffs coeffs;
    coeffs.d = d;
    coeffs.m = d;
    coeffs.a = [&a](int, Mat& out) { out = a; };
    coeffs.b = [&b](int, Mat& out) { out = b; };
    coeffs.c = [&c](int, int k, Mat& out) { out = c[k]; };
    coeffs.f = [&f](int, int k, Mat& out) { out = f[k]; };
    const Mat Y0 = Mat::identity(d);

    // Fixed Brownian paths per system, the coarse increments being pairwise
    // sums of the fine ones so that refining dt keeps the same noise. The
    // per-system error is averaged over a few paths: a single draw scatters
    // by a factor ~3 and would drown the halving ratio.
    const std::uint64_t sys_seed = rng::derive_seed(seed, 100 + s);
    double err = 0.0, err_half = 0.0;
    constexpr int kDraws = 16;
    NoisePath noise, noise_half;
    for (int draw = 0; draw < kDraws; ++draw) {
      sample_noise(noise_half, sys_seed, draw, half, d);
      noise.resize(grid.n_steps, d);
      for (int i = 0; i < grid.n_steps; ++i)
        for (int k = 0; k < d; ++k)
          noise.row(i)[k] = noise_half.dw(2 * i, k) + noise_half.dw(2 * i + 1, k);
      err += lemma31_rel_err(coeffs, Y0, grid, noise) / kDraws;
      err_half += lemma31_rel_err(coeffs, Y0, half, noise_half) / kDraws;
    }
    rep.rel_err.push_back(err);
    rep.rel_err_half.push_back(err_half);
  }
  for (int s = 0; s < n_systems; ++s) {
    rep.mean_err += rep.rel_err[s] / n_systems;
    rep.mean_err_half += rep.rel_err_half[s] / n_systems;
  }
  rep.ratio = rep.mean_err / std::max(rep.mean_err_half, 1e-300);
  rep.mean_C = rep.mean_err / rep.dt;
  rep.pass = std::isfinite(rep.mean_err) && std::isfinite(rep.mean_err_half) && rep.mean_err <= 1.0;
  return rep;
}

}  // namespace ibp
