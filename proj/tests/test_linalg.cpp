#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ibp/linalg.hpp"
#include "ibp/rng.hpp"

using namespace ibp;

TEST_CASE("matmul and matvec against hand results") {
  Mat A(2), B(2);
  A(0, 0) = 1; A(0, 1) = 2; A(1, 0) = 3; A(1, 1) = 4;
  B(0, 0) = 5; B(0, 1) = 6; B(1, 0) = 7; B(1, 1) = 8;
  Mat C(2);
  matmul(C, A, B);
  CHECK(C(0, 0) == 19);
  CHECK(C(0, 1) == 22);
  CHECK(C(1, 0) == 43);
  CHECK(C(1, 1) == 50);

  double x[2] = {1.0, -1.0}, y[2];
  matvec(A, x, y);
  CHECK(y[0] == -1.0);
  CHECK(y[1] == -1.0);
}

TEST_CASE("norms on known matrices") {
  Mat D(2);
  D(0, 0) = 3.0;
  D(1, 1) = -5.0;
  CHECK(operator_norm(D) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(frobenius_norm(D) == doctest::Approx(std::sqrt(34.0)).epsilon(1e-14));

  Mat N(2);
  N(0, 1) = 1.0;  // nilpotent shift, singular values {1, 0}
  CHECK(operator_norm(N) == doctest::Approx(1.0).epsilon(1e-14));

  Mat one(1);
  one(0, 0) = -2.5;
  CHECK(operator_norm(one) == 2.5);

  CHECK(identity_defect(Mat::identity(3).data(), 3) == 0.0);
}

namespace {

// independent oracle: power iteration on A^T A
double opnorm_power(const Mat& A) {
  const int d = A.dim();
  std::vector<double> x(d, 1.0), y(d), z(d);
  double lam = 0.0;
  for (int it = 0; it < 5000; ++it) {
    matvec(A, x.data(), y.data());
    for (int c = 0; c < d; ++c) {
      z[c] = 0.0;
      for (int r = 0; r < d; ++r) z[c] += A(r, c) * y[r];
    }
    lam = norm2(z.data(), d);
    for (int c = 0; c < d; ++c) x[c] = z[c] / lam;
  }
  return std::sqrt(lam);
}

}  // namespace

TEST_CASE("operator norm matches power iteration on random matrices") {
  for (int d = 2; d <= 4; ++d) {
    for (int trial = 0; trial < 20; ++trial) {
      Mat A(d);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
          A(r, c) = rng::uniform(1234, rng::kStreamCoefficients, trial, d, r * d + c, -2.0, 2.0);
      CHECK(operator_norm(A) == doctest::Approx(opnorm_power(A)).epsilon(1e-8));
    }
  }
}
