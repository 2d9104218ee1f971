#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ibp/errors.hpp"
#include "ibp/estimator.hpp"
#include "ibp/flow.hpp"
#include "ibp/model.hpp"
#include "ibp/rng.hpp"
#include "ibp/weight.hpp"

// Config-driven experiment runner. Every verification from the library is a
// subcommand; reports go to <output_dir>/report.json. Exit codes: 0 all checks
// passed, 1 a check failed, 2 config error, 3 numerical abort.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "ibp 1.0.0";

struct Config {
  std::string model_name;
  ibp::ModelParams model_params;
  double T = 1.0;
  int n_steps = 1000;
  std::uint64_t n_paths = 10000;
  std::vector<double> x0;
  std::vector<double> v;
  std::string f_name = "sin_x1";
  std::uint64_t seed = 12345;
  int threads = 1;
  std::string output_dir = "out";
  std::vector<double> p_list = {2.0, 4.0};
  double q = 2.0;
  std::vector<double> eval_points;  // flattened, n_eval x d
  std::vector<double> eps_list = {1e-2, 5e-3};
  int n_systems = 20;
  long sample_count = 1000;
  double region_radius = 3.0;
  bool dump_trajectory = false;
  bool dump_weights = false;
  double bandwidth = 0.0;
  double z_threshold = 4.0;
  double C_q = 0.0;

  json echo;  // resolved config as written to the report
};

struct FlagOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> paths;
  std::optional<int> steps;
  std::optional<int> threads;
  std::optional<std::string> out;
};

std::vector<double> flatten_numbers(const json& j, const std::string& key) {
  std::vector<double> out;
  if (!j.is_array()) throw ibp::ConfigError("config: '" + key + "' must be an array");
  for (const auto& e : j) {
    if (e.is_array()) {
      for (const auto& x : e) out.push_back(x.get<double>());
    } else {
      out.push_back(e.get<double>());
    }
  }
  return out;
}

Config load_config(const std::string& path, const FlagOverrides& flags) {
  std::ifstream in(path);
  if (!in) throw ibp::ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ibp::ConfigError(std::string("config parse error: ") + e.what());
  }

  Config cfg;
  try {
    if (!j.contains("model") || !j["model"].contains("name"))
      throw ibp::ConfigError("config: missing model.name");
    cfg.model_name = j["model"]["name"].get<std::string>();
    if (j["model"].contains("params")) {
      for (const auto& [key, val] : j["model"]["params"].items()) {
        if (val.is_number()) {
          cfg.model_params.scalars[key] = val.get<double>();
        } else if (val.is_array()) {
          cfg.model_params.vectors[key] = flatten_numbers(val, key);
        } else {
          throw ibp::ConfigError("config: model parameter '" + key + "' must be number or array");
        }
      }
    }
    cfg.T = j.value("T", cfg.T);
    cfg.n_steps = j.value("n_steps", cfg.n_steps);
    cfg.n_paths = j.value("n_paths", cfg.n_paths);
    if (j.contains("x0")) cfg.x0 = flatten_numbers(j["x0"], "x0");
    if (j.contains("v")) cfg.v = flatten_numbers(j["v"], "v");
    cfg.f_name = j.value("f_name", cfg.f_name);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("p_list")) cfg.p_list = flatten_numbers(j["p_list"], "p_list");
    cfg.q = j.value("q", cfg.q);
    if (j.contains("eval_points")) cfg.eval_points = flatten_numbers(j["eval_points"], "eval_points");
    if (j.contains("eps_list")) cfg.eps_list = flatten_numbers(j["eps_list"], "eps_list");
    cfg.n_systems = j.value("n_systems", cfg.n_systems);
    cfg.sample_count = j.value("sample_count", static_cast<long long>(cfg.sample_count));
    cfg.region_radius = j.value("region_radius", cfg.region_radius);
    cfg.dump_trajectory = j.value("dump_trajectory", cfg.dump_trajectory);
    cfg.dump_weights = j.value("dump_weights", cfg.dump_weights);
    if (j.contains("overrides")) {
      const auto& o = j["overrides"];
      cfg.bandwidth = o.value("bandwidth", cfg.bandwidth);
      cfg.z_threshold = o.value("z_threshold", cfg.z_threshold);
      cfg.C_q = o.value("C_q", cfg.C_q);
    }
  } catch (const json::exception& e) {
    throw ibp::ConfigError(std::string("config type error: ") + e.what());
  }

  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.paths) cfg.n_paths = *flags.paths;
  if (flags.steps) cfg.n_steps = *flags.steps;
  if (flags.threads) cfg.threads = *flags.threads;
  if (flags.out) cfg.output_dir = *flags.out;

  if (cfg.n_steps < 1) throw ibp::ConfigError("config: n_steps must be >= 1");
  if (cfg.n_paths < 1) throw ibp::ConfigError("config: n_paths must be >= 1");
  if (!(cfg.T > 0.0)) throw ibp::ConfigError("config: T must be > 0");
  if (cfg.threads < 1) throw ibp::ConfigError("config: threads must be >= 1");
  return cfg;
}

json echo_config(const Config& cfg) {
  json params = json::object();
  for (const auto& [k, v] : cfg.model_params.scalars) params[k] = v;
  for (const auto& [k, v] : cfg.model_params.vectors) params[k] = v;
  json j{{"model", {{"name", cfg.model_name}, {"params", params}}},
         {"T", cfg.T},
         {"n_steps", cfg.n_steps},
         {"n_paths", cfg.n_paths},
         {"x0", cfg.x0},
         {"v", cfg.v},
         {"f_name", cfg.f_name},
         {"seed", cfg.seed},
         {"threads", cfg.threads},
         {"output_dir", cfg.output_dir},
         {"p_list", cfg.p_list},
         {"q", cfg.q},
         {"eval_points", cfg.eval_points},
         {"eps_list", cfg.eps_list},
         {"n_systems", cfg.n_systems},
         {"sample_count", cfg.sample_count},
         {"region_radius", cfg.region_radius},
         {"dump_trajectory", cfg.dump_trajectory},
         {"dump_weights", cfg.dump_weights},
         {"overrides",
          {{"bandwidth", cfg.bandwidth}, {"z_threshold", cfg.z_threshold}, {"C_q", cfg.C_q}}}};
  return j;
}

struct Problem {
  std::unique_ptr<const ibp::Model> model;
  std::unique_ptr<ibp::Conjugated> conj;
  ibp::TimeGrid grid;
};

Problem build_problem(Config& cfg) {
  Problem pb;
  pb.model = ibp::make_model(cfg.model_name, cfg.model_params);
  pb.conj = std::make_unique<ibp::Conjugated>(*pb.model);
  pb.grid = ibp::TimeGrid(cfg.T, cfg.n_steps);
  const int d = pb.model->dim();
  if (cfg.x0.empty()) cfg.x0.assign(d, 0.0);
  if (cfg.v.empty()) {
    cfg.v.assign(d, 0.0);
    cfg.v[0] = 1.0;
  }
  if (static_cast<int>(cfg.x0.size()) != d)
    throw ibp::ConfigError("config: x0 dimension does not match the model dimension");
  if (static_cast<int>(cfg.v.size()) != d)
    throw ibp::ConfigError("config: v dimension does not match the model dimension");
  if (cfg.eval_points.empty()) {
    if (d == 1)
      cfg.eval_points = {-2.0, -1.0, 0.0, 1.0, 2.0};
    else
      cfg.eval_points.assign(d, 0.0);
  }
  if (cfg.eval_points.size() % d != 0)
    throw ibp::ConfigError("config: eval_points length must be a multiple of d");
  return pb;
}

json to_json(const ibp::Estimate& e) {
  return json{{"mean", e.mean}, {"std_error", e.std_error}, {"n", e.n_paths}, {"seed", e.seed}};
}

json theta_json(const std::array<double, 5>& t) {
  return json{{"theta1", t[0]}, {"theta2", t[1]}, {"theta3", t[2]}, {"theta4", t[3]},
              {"theta5", t[4]}};
}

// exp(log_value) when it fits a double; JSON has no inf literal
json safe_exp(double log_value) {
  const double v = std::exp(log_value);
  if (std::isfinite(v)) return v;
  return json();  // null: see the paired *_log key
}

void dump_trajectory_csv(const Problem& pb, const Config& cfg, const fs::path& path) {
  const ibp::Trajectory traj =
      ibp::simulate_path(*pb.model, *pb.conj, cfg.x0.data(), pb.grid, cfg.seed, 0);
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw ibp::ConfigError("cannot open '" + path.string() + "' for writing");
  const int d = traj.d;
  std::fprintf(f, "t");
  for (int c = 0; c < d; ++c) std::fprintf(f, ",X_%d", c + 1);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) std::fprintf(f, ",J_%d%d", r + 1, c + 1);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) std::fprintf(f, ",Jinv_%d%d", r + 1, c + 1);
  std::fprintf(f, "\n");
  for (int i = 0; i <= traj.grid.n_steps; ++i) {
    std::fprintf(f, "%.17g", traj.grid.node(i));
    for (int c = 0; c < d; ++c) std::fprintf(f, ",%.17g", traj.x(i)[c]);
    for (int k = 0; k < d * d; ++k) std::fprintf(f, ",%.17g", traj.jac(i)[k]);
    for (int k = 0; k < d * d; ++k) std::fprintf(f, ",%.17g", traj.jinv(i)[k]);
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

void dump_weights_csv(const std::vector<double>& table, std::size_t stride, std::size_t offset,
                      std::uint64_t n_paths, const fs::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw ibp::ConfigError("cannot open '" + path.string() + "' for writing");
  std::fprintf(f, "path_index,theta1,theta2,theta3,theta4,theta5,total\n");
  for (std::uint64_t p = 0; p < n_paths; ++p) {
    const double* th = table.data() + p * stride + offset;
    double total = 0.0;
    for (int i = 0; i < 5; ++i) total += th[i];
    std::fprintf(f, "%llu", static_cast<unsigned long long>(p));
    for (int i = 0; i < 5; ++i) std::fprintf(f, ",%.17g", th[i]);
    std::fprintf(f, ",%.17g\n", total);
  }
  std::fclose(f);
}

struct SubResult {
  json results;
  bool pass = false;
  std::vector<double> headline_values;
  std::vector<std::string> headline_names;
};

SubResult run_verify_ibp(const Problem& pb, const Config& cfg) {
  const auto& f = ibp::test_function(cfg.f_name);
  std::vector<double> rhs_table;
  ibp::IbpResult r;
  r.z_threshold = cfg.z_threshold;
  r.lhs = ibp::estimate_lhs(*pb.model, *pb.conj, cfg.x0.data(), cfg.v.data(), pb.grid, f,
                            cfg.n_paths, cfg.seed, cfg.threads);
  const std::uint64_t rhs_seed = ibp::rng::derive_seed(cfg.seed, 1);
  ibp::RhsResult rhs = ibp::estimate_rhs(*pb.model, *pb.conj, cfg.x0.data(), cfg.v.data(), pb.grid,
                                         f, cfg.n_paths, rhs_seed, cfg.threads,
                                         cfg.dump_weights ? &rhs_table : nullptr);
  r.rhs = rhs.est;
  r.theta_means = rhs.theta_means;
  const double var = r.lhs.std_error * r.lhs.std_error + r.rhs.std_error * r.rhs.std_error;
  r.z = var > 0.0 ? (r.lhs.mean - r.rhs.mean) / std::sqrt(var)
                  : (r.lhs.mean == r.rhs.mean ? 0.0 : std::numeric_limits<double>::infinity());
  r.pass = std::abs(r.z) <= r.z_threshold;

  if (cfg.dump_weights)
    dump_weights_csv(rhs_table, 6, 1, cfg.n_paths, fs::path(cfg.output_dir) / "weights.csv");

  SubResult out;
  out.results = json{{"lhs", to_json(r.lhs)},
                     {"rhs", to_json(r.rhs)},
                     {"z", r.z},
                     {"z_threshold", r.z_threshold},
                     {"theta_means", theta_json(r.theta_means)},
                     {"pass_flags", {{"z_within_threshold", r.pass}}}};
  out.pass = r.pass;
  out.headline_names = {"lhs_mean", "lhs_std_error", "rhs_mean", "rhs_std_error", "z"};
  out.headline_values = {r.lhs.mean, r.lhs.std_error, r.rhs.mean, r.rhs.std_error, r.z};
  return out;
}

SubResult run_moments(const Problem& pb, const Config& cfg) {
  const ibp::MomentReport rep =
      ibp::check_moment_bounds(*pb.model, *pb.conj, cfg.x0.data(), pb.grid, cfg.p_list,
                               cfg.n_paths, cfg.seed, cfg.threads);
  json entries = json::array();
  for (const auto& e : rep.entries) {
    entries.push_back({{"p", e.p},
                       {"emp_sup_J", e.emp_J},
                       {"emp_sup_Jinv", e.emp_Jinv},
                       {"beta1_log", e.log_beta1},
                       {"beta1", safe_exp(e.log_beta1)},
                       {"beta2_log", e.log_beta2},
                       {"beta2", safe_exp(e.log_beta2)},
                       {"pass_J", e.pass_J},
                       {"pass_Jinv", e.pass_Jinv}});
  }
  SubResult out;
  out.results = json{{"entries", entries},
                     {"mean_max_inverse_defect", rep.mean_max_defect},
                     {"pass_flags", {{"all_bounds", rep.pass}}}};
  out.pass = rep.pass;
  out.headline_names = {"mean_max_inverse_defect"};
  out.headline_values = {rep.mean_max_defect};
  return out;
}

SubResult run_weight_moments(const Problem& pb, const Config& cfg) {
  std::vector<double> table;
  const ibp::WeightMomentReport rep = ibp::check_weight_moment(
      *pb.model, *pb.conj, cfg.x0.data(), cfg.v.data(), pb.grid, cfg.n_paths, cfg.seed,
      cfg.threads, cfg.q, cfg.C_q, cfg.dump_weights ? &table : nullptr);
  if (cfg.dump_weights)
    dump_weights_csv(table, 7, 2, cfg.n_paths, fs::path(cfg.output_dir) / "weights.csv");
  SubResult out;
  out.results = json{{"q", rep.q},
                     {"emp_l1", rep.emp_l1},
                     {"l1_bound_log", rep.log_l1_bound},
                     {"l1_bound", safe_exp(rep.log_l1_bound)},
                     {"emp_lq", rep.emp_lq},
                     {"lq_bound_log", rep.log_lq_bound},
                     {"lq_bound", safe_exp(rep.log_lq_bound)},
                     {"v_norm", rep.v_norm},
                     {"pass_flags", {{"l1_bound", rep.pass_l1}, {"lq_bound", rep.pass_lq}}}};
  out.pass = rep.pass();
  out.headline_names = {"emp_l1", "emp_lq"};
  out.headline_values = {rep.emp_l1, rep.emp_lq};
  return out;
}

SubResult run_density(const Problem& pb, const Config& cfg) {
  const ibp::DensityGradReport rep = ibp::density_log_gradient(
      *pb.model, *pb.conj, cfg.x0.data(), cfg.v.data(), pb.grid, cfg.n_paths, cfg.seed,
      cfg.threads, cfg.eval_points, cfg.bandwidth, cfg.C_q);
  json pts = json::array();
  const int d = rep.d;
  for (std::size_t e = 0; e < rep.est_grad_log_p.size(); ++e) {
    std::vector<double> y(rep.eval_points.begin() + e * d, rep.eval_points.begin() + (e + 1) * d);
    pts.push_back({{"y", y},
                   {"est_grad_log_p", rep.est_grad_log_p[e]},
                   {"reliable", static_cast<bool>(rep.reliable[e])}});
  }
  SubResult out;
  out.results = json{{"points", pts},
                     {"bandwidth", rep.bandwidth},
                     {"sample_std", rep.sample_std},
                     {"integrated_mean_abs", rep.integrated_mean_abs},
                     {"gamma_over_T_log", rep.log_gamma_over_T},
                     {"gamma_over_T", safe_exp(rep.log_gamma_over_T)},
                     {"pass_flags", {{"integrated_bound", rep.integrated_ok}}}};
  out.pass = rep.integrated_ok;
  out.headline_names = {"integrated_mean_abs", "bandwidth"};
  out.headline_values = {rep.integrated_mean_abs, rep.bandwidth};
  return out;
}

SubResult run_perturb(const Problem& pb, const Config& cfg) {
  const ibp::PerturbReport rep = ibp::perturbation_check(*pb.model, *pb.conj, cfg.x0.data(),
                                                         cfg.v.data(), pb.grid, cfg.seed,
                                                         cfg.eps_list);
  json entries = json::array();
  for (std::size_t i = 0; i < rep.eps.size(); ++i)
    entries.push_back({{"eps", rep.eps[i]}, {"defect", rep.defect[i]}});
  SubResult out;
  out.results = json{{"entries", entries},
                     {"orders", rep.order},
                     {"pass_flags", {{"monotone", rep.monotone}, {"bounded", rep.bounded}}}};
  out.pass = rep.monotone && rep.bounded;
  out.headline_names = {"eps", "defect"};
  out.headline_values = {rep.eps.back(), rep.defect.back()};
  return out;
}

SubResult run_lemma31(const Problem& pb, const Config& cfg) {
  const ibp::Lemma31Report rep = ibp::lemma31_study(cfg.n_systems, pb.grid, cfg.seed);
  SubResult out;
  out.results = json{{"n_systems", rep.n_systems},
                     {"dt", rep.dt},
                     {"rel_err", rep.rel_err},
                     {"rel_err_half_dt", rep.rel_err_half},
                     {"mean_err", rep.mean_err},
                     {"mean_err_half_dt", rep.mean_err_half},
                     {"halving_ratio", rep.ratio},
                     {"mean_C", rep.mean_C},
                     {"pass_flags", {{"sanity", rep.pass}}}};
  out.pass = rep.pass;
  out.headline_names = {"mean_err", "halving_ratio", "mean_C"};
  out.headline_values = {rep.mean_err, rep.ratio, rep.mean_C};
  return out;
}

SubResult run_validate_model(const Problem& pb, const Config& cfg) {
  const ibp::AssumptionReport rep = ibp::validate_assumptions(
      *pb.model, *pb.conj, cfg.sample_count, cfg.region_radius, cfg.T, cfg.seed);
  json viols = json::array();
  for (const auto& v : rep.violations)
    viols.push_back({{"sample", v.sample},
                     {"quantity", v.quantity},
                     {"value", v.value},
                     {"bound", v.bound},
                     {"t", v.t}});
  SubResult out;
  out.results = json{{"sample_count", rep.sample_count},
                     {"region_radius", rep.region_radius},
                     {"t_max", rep.t_max},
                     {"max_B_norm", rep.max_B_norm},
                     {"max_Sigma_l2", rep.max_Sigma_l2},
                     {"max_Sigma_sum", rep.max_Sigma_sum},
                     {"max_gradB_fd", rep.max_gradB_fd},
                     {"max_gradSigma_fd_l2", rep.max_gradSigma_fd_l2},
                     {"max_sigma_inv_norm", rep.max_sigma_inv_norm},
                     {"max_raw_grad", rep.max_raw_grad},
                     {"max_sigma_inv_residual", rep.max_sigma_inv_residual},
                     {"hs_integral", rep.hs_integral},
                     {"violations", viols},
                     {"pass_flags", {{"no_violations", rep.pass()}}}};
  out.pass = rep.pass();
  out.headline_names = {"violations"};
  out.headline_values = {static_cast<double>(rep.violations.size())};
  return out;
}

SubResult dispatch(const std::string& sub, const Problem& pb, const Config& cfg) {
  if (sub == "verify-ibp") return run_verify_ibp(pb, cfg);
  if (sub == "moments") return run_moments(pb, cfg);
  if (sub == "weight-moments") return run_weight_moments(pb, cfg);
  if (sub == "density") return run_density(pb, cfg);
  if (sub == "perturb-check") return run_perturb(pb, cfg);
  if (sub == "lemma31-check") return run_lemma31(pb, cfg);
  if (sub == "validate-model") return run_validate_model(pb, cfg);
  throw ibp::ConfigError("unknown subcommand '" + sub + "'");
}

int run_one(const std::string& sub, const std::string& config_path, const FlagOverrides& flags) {
  Config cfg = load_config(config_path, flags);
  Problem pb = build_problem(cfg);
  cfg.echo = echo_config(cfg);

  fs::create_directories(cfg.output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  SubResult res = dispatch(sub, pb, cfg);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (cfg.dump_trajectory)
    dump_trajectory_csv(pb, cfg, fs::path(cfg.output_dir) / "trajectories.csv");

  json report{{"subcommand", sub},
              {"config", cfg.echo},
              {"results", res.results},
              {"pass", res.pass},
              {"meta", {{"wall_time_s", wall}, {"version", kVersion}}}};
  std::ofstream out(fs::path(cfg.output_dir) / "report.json");
  out << report.dump(2) << "\n";
  out.close();

  std::cout << sub << ": " << (res.pass ? "PASS" : "FAIL") << " (report: "
            << (fs::path(cfg.output_dir) / "report.json").string() << ")\n";
  return res.pass ? 0 : 1;
}

int run_sweep(const std::string& target, const std::string& config_path,
              const std::string& param, const std::vector<double>& values,
              const FlagOverrides& flags) {
  if (values.empty()) throw ibp::ConfigError("sweep: values must not be empty");
  if (param != "n_steps" && param != "n_paths" && param != "epsilon")
    throw ibp::ConfigError("sweep: param must be one of n_steps, n_paths, epsilon");

  Config base = load_config(config_path, flags);
  fs::create_directories(base.output_dir);

  std::FILE* csv = nullptr;
  int exit_code = 0;
  std::vector<std::string> names;
  for (double value : values) {
    Config cfg = load_config(config_path, flags);
    if (param == "n_steps") {
      cfg.n_steps = static_cast<int>(std::llround(value));
    } else if (param == "n_paths") {
      cfg.n_paths = static_cast<std::uint64_t>(std::llround(value));
    } else {
      cfg.eps_list = {value};
    }
    char tag[64];
    std::snprintf(tag, sizeof(tag), "sweep_%s_%.17g", param.c_str(), value);
    cfg.output_dir = (fs::path(base.output_dir) / tag).string();
    fs::create_directories(cfg.output_dir);

    Problem pb = build_problem(cfg);
    cfg.echo = echo_config(cfg);
    SubResult res = dispatch(target, pb, cfg);
    json report{{"subcommand", target}, {"config", cfg.echo}, {"results", res.results},
                {"pass", res.pass},
                {"meta", {{"wall_time_s", 0.0}, {"version", kVersion}}}};
    std::ofstream out(fs::path(cfg.output_dir) / "report.json");
    out << report.dump(2) << "\n";

    if (!csv) {
      csv = std::fopen((fs::path(base.output_dir) / "sweep.csv").string().c_str(), "w");
      if (!csv) throw ibp::ConfigError("cannot open sweep.csv for writing");
      std::fprintf(csv, "param,value");
      for (const auto& n : res.headline_names) std::fprintf(csv, ",%s", n.c_str());
      std::fprintf(csv, ",pass\n");
      names = res.headline_names;
    }
    std::fprintf(csv, "%s,%.17g", param.c_str(), value);
    for (double hv : res.headline_values) std::fprintf(csv, ",%.17g", hv);
    std::fprintf(csv, ",%d\n", res.pass ? 1 : 0);
    if (!res.pass) exit_code = 1;
  }
  if (csv) std::fclose(csv);
  std::cout << "sweep " << target << " over " << param << ": wrote "
            << (fs::path(base.output_dir) / "sweep.csv").string() << "\n";
  return exit_code;
}

void print_error(const std::string& type, const std::string& message, long step = -1) {
  json err{{"error", {{"type", type}, {"message", message}}}};
  if (step >= 0) err["error"]["step"] = step;
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo verification of the multiplicative-noise integration-by-parts "
               "weight and its moment bounds"};
  app.require_subcommand(1);

  const std::vector<std::string> subs = {"verify-ibp",    "moments",       "weight-moments",
                                         "density",       "perturb-check", "lemma31-check",
                                         "validate-model"};

  std::string config_path, out_dir, sweep_target, sweep_param;
  std::vector<double> sweep_values;
  FlagOverrides flags;
  std::uint64_t flag_seed = 0, flag_paths = 0;
  int flag_steps = 0, flag_threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", flag_seed, "override config seed");
    cmd->add_option("--paths", flag_paths, "override config n_paths");
    cmd->add_option("--steps", flag_steps, "override config n_steps");
    cmd->add_option("--threads", flag_threads, "override config threads");
    cmd->add_option("--out", out_dir, "override config output_dir");
  };
  auto collect_flags = [&](CLI::App* cmd) {
    if (cmd->count("--seed")) flags.seed = flag_seed;
    if (cmd->count("--paths")) flags.paths = flag_paths;
    if (cmd->count("--steps")) flags.steps = flag_steps;
    if (cmd->count("--threads")) flags.threads = flag_threads;
    if (cmd->count("--out")) flags.out = out_dir;
  };

  for (const auto& s : subs) add_common(app.add_subcommand(s, ""));
  CLI::App* sweep = app.add_subcommand("sweep", "run a subcommand across parameter values");
  sweep->add_option("target", sweep_target, "subcommand to sweep")->required();
  sweep->add_option("--param", sweep_param, "n_steps | n_paths | epsilon")->required();
  sweep->add_option("--values", sweep_values, "comma separated values")
      ->required()
      ->delimiter(',');
  add_common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config", e.what());
    return 2;
  }

  try {
    if (sweep->parsed()) {
      collect_flags(sweep);
      return run_sweep(sweep_target, config_path, sweep_param, sweep_values, flags);
    }
    for (const auto& s : subs)
      if (app.get_subcommand(s)->parsed()) {
        collect_flags(app.get_subcommand(s));
        return run_one(s, config_path, flags);
      }
    print_error("config", "no subcommand given");
    return 2;
  } catch (const ibp::ConfigError& e) {
    print_error("config", e.what());
    return 2;
  } catch (const ibp::NumericalError& e) {
    print_error("numerical", e.what(), e.step());
    return 3;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 3;
  }
}
