#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "ibp/engine.hpp"
#include "ibp/estimator.hpp"
#include "ibp/flow.hpp"
#include "ibp/model.hpp"
#include "ibp/weight.hpp"

// Times the serial reference path loop against the OpenMP runner on the same
// workload (trig model, simulate + weight per path) and checks that the two
// produce bit-identical tables.
//
//   ibp_bench [n_paths] [n_steps] [d] [max_threads]

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Workload {
  const ibp::Model* model;
  const ibp::Conjugated* conj;
  ibp::TimeGrid grid;
  std::vector<double> x0, v;
  std::uint64_t seed = 7;

  struct State {
    ibp::Trajectory traj;
    ibp::FlowWorkspace flow_ws;
    ibp::WeightWorkspace weight_ws;
  };

  void fill_row(State& s, std::uint64_t p, double* row) const {
    ibp::simulate_into(s.traj, *model, *conj, x0.data(), grid, seed, p, s.flow_ws);
    const ibp::WeightBreakdown wb =
        ibp::weight_for_path(s.traj, *model, *conj, v.data(), s.weight_ws);
    row[0] = s.traj.x(grid.n_steps)[0];
    row[1] = wb.total;
  }
};

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t n_paths = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 4000;
  const int n_steps = argc > 2 ? std::atoi(argv[2]) : 500;
  const int d = argc > 3 ? std::atoi(argv[3]) : 2;
  const int max_threads = argc > 4 ? std::atoi(argv[4]) : 8;

  ibp::ModelParams params;
  params.scalars["epsilon"] = 0.3;
  params.scalars["alpha"] = 0.1;
  params.scalars["d"] = d;
  const auto model = ibp::make_model("trig_multiplicative", params);
  const ibp::Conjugated conj(*model);

  Workload w;
  w.model = model.get();
  w.conj = &conj;
  w.grid = ibp::TimeGrid(1.0, n_steps);
  w.x0.assign(d, 0.0);
  w.v.assign(d, 0.0);
  w.v[0] = 1.0;

  std::printf("workload: trig_multiplicative d=%d, %llu paths x %d steps (simulate + weight)\n",
              d, static_cast<unsigned long long>(n_paths), n_steps);

  std::vector<double> ref(n_paths * 2, 0.0);
  const double t0 = now_s();
  ibp::run_paths_serial<Workload::State>(
      n_paths, [] { return Workload::State{}; },
      [&](Workload::State& s, std::uint64_t p) { w.fill_row(s, p, ref.data() + p * 2); });
  const double serial_s = now_s() - t0;
  std::printf("%-10s %8.3f s  %10.0f paths/s\n", "serial", serial_s, n_paths / serial_s);

  for (int threads = 2; threads <= max_threads; threads *= 2) {
    std::vector<double> table(n_paths * 2, 0.0);
    const double t1 = now_s();
    ibp::run_paths<Workload::State>(
        n_paths, threads, [] { return Workload::State{}; },
        [&](Workload::State& s, std::uint64_t p) { w.fill_row(s, p, table.data() + p * 2); });
    const double par_s = now_s() - t1;
    const bool identical =
        std::memcmp(ref.data(), table.data(), sizeof(double) * ref.size()) == 0;
    std::printf("%-2d threads %8.3f s  %10.0f paths/s  speedup %4.2fx  bit-identical: %s\n",
                threads, par_s, n_paths / par_s, serial_s / par_s, identical ? "yes" : "NO");
    if (!identical) return 1;
  }
  return 0;
}
