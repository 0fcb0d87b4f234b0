#pragma once

#include <cstddef>
#include <exception>
#include <span>

#include <Eigen/Dense>

// Dense scalar kernels used on the hot path of the scalar GAMP loop.
//
// Every kernel has a serial reference in `serial::` and an OpenMP version in
// `parallel::`. Both accumulate each output element in the same order, so the
// two produce bit-identical results for any thread count.
namespace hgamp::kernels {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Exec { serial, parallel };

// Runs f(0..n-1). In parallel mode the first exception thrown by any
// iteration is rethrown on the calling thread once the loop has finished.
template <class F>
void for_each_index(Exec exec, std::size_t n, F&& f) {
  if (exec == Exec::parallel) {
    const auto count = static_cast<std::ptrdiff_t>(n);
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        f(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(hgamp_for_each_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t i = 0; i < n; ++i) f(i);
  }
}

namespace serial {
// out = M x
void matvec(const RowMatrix& m, std::span<const double> x, std::span<double> out);
// out_a = A x, out_b = B v, one pass over the rows of both matrices.
void matvec_pair(const RowMatrix& a, std::span<const double> x, const RowMatrix& b,
                 std::span<const double> v, std::span<double> out_a, std::span<double> out_b);
}  // namespace serial

namespace parallel {
void matvec(const RowMatrix& m, std::span<const double> x, std::span<double> out);
void matvec_pair(const RowMatrix& a, std::span<const double> x, const RowMatrix& b,
                 std::span<const double> v, std::span<double> out_a, std::span<double> out_b);
}  // namespace parallel

void matvec(Exec exec, const RowMatrix& m, std::span<const double> x, std::span<double> out);
void matvec_pair(Exec exec, const RowMatrix& a, std::span<const double> x, const RowMatrix& b,
                 std::span<const double> v, std::span<double> out_a, std::span<double> out_b);

/// A dense scalar mixing matrix for the four products of the GAMP linear
/// steps. Only A is stored: |A|^2 is formed on the fly and the adjoint runs
/// over the rows of A, so each product streams the matrix once. The adjoint
/// accumulates every output in row order; the parallel version splits the
/// columns among threads and keeps that order.
class DenseOperator {
 public:
  DenseOperator() = default;
  explicit DenseOperator(const Eigen::MatrixXd& a);

  std::size_t rows() const { return static_cast<std::size_t>(a_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(a_.cols()); }
  const RowMatrix& a() const { return a_; }

  // out_z = A x, out_p = |A|^2 v
  void forward_pair(Exec exec, std::span<const double> x, std::span<const double> v,
                    std::span<double> out_z, std::span<double> out_p) const;
  // out_r = A^T s, out_q = (|A|^2)^T w
  void adjoint_pair(Exec exec, std::span<const double> s, std::span<const double> w,
                    std::span<double> out_r, std::span<double> out_q) const;
  void forward(Exec exec, std::span<const double> x, std::span<double> out) const;
  void adjoint(Exec exec, std::span<const double> s, std::span<double> out) const;

 private:
  void check(std::span<const double> in, std::size_t in_dim, std::span<double> out,
             std::size_t out_dim) const;
  RowMatrix a_;
};

}  // namespace hgamp::kernels
