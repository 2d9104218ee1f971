#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

// Small dense kernels for the d x d state-space objects (d is tiny, typically
// 1..4). Everything works on contiguous row-major storage and never allocates,
// so the per-step loops stay allocation-free.

namespace ibp {

using Vec = std::vector<double>;

class Mat {
 public:
  Mat() = default;
  explicit Mat(int d) : d_(d), a_(static_cast<std::size_t>(d) * d, 0.0) {}

  int dim() const { return d_; }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  double& operator()(int r, int c) { return a_[static_cast<std::size_t>(r) * d_ + c]; }
  double operator()(int r, int c) const { return a_[static_cast<std::size_t>(r) * d_ + c]; }

  void resize(int d) {
    d_ = d;
    a_.assign(static_cast<std::size_t>(d) * d, 0.0);
  }
  void set_zero() { a_.assign(a_.size(), 0.0); }
  void set_identity() {
    set_zero();
    for (int i = 0; i < d_; ++i) (*this)(i, i) = 1.0;
  }
  static Mat identity(int d) {
    Mat m(d);
    m.set_identity();
    return m;
  }

 private:
  int d_ = 0;
  std::vector<double> a_;
};

// y = A x, y must not alias x
inline void matvec(const double* A, const double* x, double* y, int d) {
  for (int r = 0; r < d; ++r) {
    double s = 0.0;
    const double* row = A + static_cast<std::size_t>(r) * d;
    for (int c = 0; c < d; ++c) s += row[c] * x[c];
    y[r] = s;
  }
}
inline void matvec(const Mat& A, const double* x, double* y) { matvec(A.data(), x, y, A.dim()); }

// C = A B, C must not alias A or B
inline void matmul(double* C, const double* A, const double* B, int d) {
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += A[r * d + k] * B[k * d + c];
      C[r * d + c] = s;
    }
  }
}
inline void matmul(Mat& C, const Mat& A, const Mat& B) { matmul(C.data(), A.data(), B.data(), A.dim()); }

inline void axpy(double s, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += s * x[i];
}
inline void axpy(double s, const Mat& X, Mat& Y) { axpy(s, X.data(), Y.data(), X.dim() * X.dim()); }

inline void copy(const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] = x[i];
}

inline double dot(const double* x, const double* y, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

inline double norm2(const double* x, int n) { return std::sqrt(dot(x, x, n)); }

inline bool all_finite(const double* x, int n) {
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

double frobenius_norm(const double* A, int d);
inline double frobenius_norm(const Mat& A) { return frobenius_norm(A.data(), A.dim()); }

// Largest singular value (the operator norm on R^d).
double operator_norm(const double* A, int d);
inline double operator_norm(const Mat& A) { return operator_norm(A.data(), A.dim()); }

// max_{r,c} |A - I|
double identity_defect(const double* A, int d);

}  // namespace ibp
