#include "hgamp/kernels.hpp"

#include <algorithm>
#include <stdexcept>

namespace hgamp::kernels {
namespace {

void check_shapes(const RowMatrix& m, std::span<const double> x, std::span<double> out) {
  if (static_cast<std::size_t>(m.cols()) != x.size() ||
      static_cast<std::size_t>(m.rows()) != out.size()) {
    throw std::invalid_argument("kernels: matrix/vector dimension mismatch");
  }
}

inline double row_dot(const double* row, const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
  return acc;
}

}  // namespace

namespace serial {

void matvec(const RowMatrix& m, std::span<const double> x, std::span<double> out) {
  check_shapes(m, x, out);
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = row_dot(m.data() + i * n, x.data(), n);
  }
}

void matvec_pair(const RowMatrix& a, std::span<const double> x, const RowMatrix& b,
                 std::span<const double> v, std::span<double> out_a, std::span<double> out_b) {
  check_shapes(a, x, out_a);
  check_shapes(b, v, out_b);
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < out_a.size(); ++i) {
    out_a[i] = row_dot(a.data() + i * n, x.data(), n);
    out_b[i] = row_dot(b.data() + i * n, v.data(), n);
  }
}

}  // namespace serial

namespace parallel {

void matvec(const RowMatrix& m, std::span<const double> x, std::span<double> out) {
  check_shapes(m, x, out);
  const std::size_t n = x.size();
  const auto rows = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    out[static_cast<std::size_t>(i)] = row_dot(m.data() + i * static_cast<std::ptrdiff_t>(n), x.data(), n);
  }
}

void matvec_pair(const RowMatrix& a, std::span<const double> x, const RowMatrix& b,
                 std::span<const double> v, std::span<double> out_a, std::span<double> out_b) {
  check_shapes(a, x, out_a);
  check_shapes(b, v, out_b);
  const std::size_t n = x.size();
  const auto rows = static_cast<std::ptrdiff_t>(out_a.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto off = i * static_cast<std::ptrdiff_t>(n);
    out_a[static_cast<std::size_t>(i)] = row_dot(a.data() + off, x.data(), n);
    out_b[static_cast<std::size_t>(i)] = row_dot(b.data() + off, v.data(), n);
  }
}

}  // namespace parallel

void matvec(Exec exec, const RowMatrix& m, std::span<const double> x, std::span<double> out) {
  if (exec == Exec::parallel) {
    parallel::matvec(m, x, out);
  } else {
    serial::matvec(m, x, out);
  }
}

void matvec_pair(Exec exec, const RowMatrix& a, std::span<const double> x, const RowMatrix& b,
                 std::span<const double> v, std::span<double> out_a, std::span<double> out_b) {
  if (exec == Exec::parallel) {
    parallel::matvec_pair(a, x, b, v, out_a, out_b);
  } else {
    serial::matvec_pair(a, x, b, v, out_a, out_b);
  }
}

DenseOperator::DenseOperator(const Eigen::MatrixXd& a) : a_(a) {}

void DenseOperator::check(std::span<const double> in, std::size_t in_dim, std::span<double> out,
                          std::size_t out_dim) const {
  if (in.size() != in_dim || out.size() != out_dim) {
    throw std::invalid_argument("kernels: operator/vector dimension mismatch");
  }
}

void DenseOperator::forward_pair(Exec exec, std::span<const double> x, std::span<const double> v,
                                 std::span<double> out_z, std::span<double> out_p) const {
  check(x, cols(), out_z, rows());
  check(v, cols(), out_p, rows());
  const std::size_t n = cols();
  for_each_index(exec, rows(), [&](std::size_t i) {
    const double* row = a_.data() + i * n;
    double z = 0.0, p = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      z += row[j] * x[j];
      p += (row[j] * row[j]) * v[j];
    }
    out_z[i] = z;
    out_p[i] = p;
  });
}

namespace {

// Accumulates columns [lo, hi) of A^T s (and (|A|^2)^T w when q is set),
// row by row.
void adjoint_columns(const RowMatrix& a, const double* s, const double* w, double* r, double* q,
                     std::size_t lo, std::size_t hi) {
  const auto n = static_cast<std::size_t>(a.cols());
  for (std::size_t j = lo; j < hi; ++j) r[j] = 0.0;
  if (q)
    for (std::size_t j = lo; j < hi; ++j) q[j] = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(a.rows()); ++i) {
    const double* row = a.data() + i * n;
    const double si = s[i];
    for (std::size_t j = lo; j < hi; ++j) r[j] += row[j] * si;
    if (q) {
      const double wi = w[i];
      for (std::size_t j = lo; j < hi; ++j) q[j] += (row[j] * row[j]) * wi;
    }
  }
}

void adjoint_dispatch(Exec exec, const RowMatrix& a, const double* s, const double* w, double* r,
                      double* q) {
  const auto n = static_cast<std::size_t>(a.cols());
  if (exec == Exec::serial) {
    adjoint_columns(a, s, w, r, q, 0, n);
    return;
  }
  // column blocks of a few cache lines keep the row reads contiguous
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  for_each_index(Exec::parallel, blocks, [&](std::size_t b) {
    adjoint_columns(a, s, w, r, q, b * kBlock, std::min(n, (b + 1) * kBlock));
  });
}

}  // namespace

void DenseOperator::adjoint_pair(Exec exec, std::span<const double> s, std::span<const double> w,
                                 std::span<double> out_r, std::span<double> out_q) const {
  check(s, rows(), out_r, cols());
  check(w, rows(), out_q, cols());
  adjoint_dispatch(exec, a_, s.data(), w.data(), out_r.data(), out_q.data());
}

void DenseOperator::forward(Exec exec, std::span<const double> x, std::span<double> out) const {
  matvec(exec, a_, x, out);
}

void DenseOperator::adjoint(Exec exec, std::span<const double> s, std::span<double> out) const {
  check(s, rows(), out, cols());
  adjoint_dispatch(exec, a_, s.data(), nullptr, out.data(), nullptr);
}

}  // namespace hgamp::kernels
