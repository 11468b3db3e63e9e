#pragma once

// Sparse assembly and linear solvers shared by transport and mechanics.
// Storage and factorizations are delegated to Eigen; assembly ordering is
// canonicalized so the result is independent of element visitation order.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace restenosim {

using SpMat = Eigen::SparseMatrix<double>;

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class SparseAssembler {
 public:
  explicit SparseAssembler(int dim) : dim_(dim) {}

  int dim() const { return dim_; }

  void add(int row, int col, double value) {
    if (row < 0 || row >= dim_ || col < 0 || col >= dim_)
      throw SolverError("assembly index out of range");
    entries_.push_back({row, col, value});
  }

  template <class DofMap>
  void add_block(const DofMap& dofs, const Eigen::MatrixXd& local) {
    const int n = static_cast<int>(std::size(dofs));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) add(dofs[a], dofs[b], local(a, b));
  }

  // Canonical reduction: sort by (row, col, bit pattern) and sum in that
  // order, so reversed contribution streams produce bitwise-equal matrices.
  SpMat build() const {
    std::vector<Entry> sorted = entries_;
    std::sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
      if (a.row != b.row) return a.row < b.row;
      if (a.col != b.col) return a.col < b.col;
      return value_bits(a.value) < value_bits(b.value);
    });
    std::vector<Eigen::Triplet<double>> merged;
    merged.reserve(sorted.size());
    size_t i = 0;
    while (i < sorted.size()) {
      size_t j = i;
      double sum = 0.0;
      while (j < sorted.size() && sorted[j].row == sorted[i].row && sorted[j].col == sorted[i].col)
        sum += sorted[j++].value;
      merged.emplace_back(sorted[i].row, sorted[i].col, sum);
      i = j;
    }
    SpMat m(dim_, dim_);
    m.setFromTriplets(merged.begin(), merged.end());
    m.makeCompressed();
    return m;
  }

 private:
  struct Entry {
    int row, col;
    double value;
  };
  static std::uint64_t value_bits(double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, sizeof(b));
    return b;
  }
  int dim_;
  std::vector<Entry> entries_;
};

struct LinearSystem {
  SpMat matrix;
  Eigen::VectorXd rhs;
  std::map<int, double> dirichlet;  // dof -> prescribed value
};

// Row replacement; for symmetric systems the caller may request column
// elimination as well (moves known values to the rhs before zeroing).
inline void apply_dirichlet(LinearSystem& sys, bool symmetric_elimination = false) {
  if (sys.dirichlet.empty()) return;
  const int n = static_cast<int>(sys.matrix.rows());
  std::vector<char> fixed(n, 0);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(n);
  for (auto& [dof, v] : sys.dirichlet) {
    fixed[dof] = 1;
    value[dof] = v;
  }
  if (symmetric_elimination) {
    for (int k = 0; k < sys.matrix.outerSize(); ++k)
      for (SpMat::InnerIterator it(sys.matrix, k); it; ++it)
        if (fixed[it.col()] && !fixed[it.row()]) sys.rhs[it.row()] -= it.value() * value[it.col()];
  }
  for (int k = 0; k < sys.matrix.outerSize(); ++k)
    for (SpMat::InnerIterator it(sys.matrix, k); it; ++it) {
      if (fixed[it.row()])
        it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
      else if (symmetric_elimination && fixed[it.col()])
        it.valueRef() = 0.0;
    }
  for (auto& [dof, v] : sys.dirichlet) sys.rhs[dof] = v;
  sys.matrix.prune(0.0);
}

inline Eigen::VectorXd solve_direct(const SpMat& A, const Eigen::VectorXd& b) {
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success)
    throw SolverError("sparse LU factorization failed (singular matrix?): " + lu.lastErrorMessage());
  Eigen::VectorXd x = lu.solve(b);
  const double res = (A * x - b).norm();
  if (!(res <= 1e-10 * (b.norm() + 1.0)))
    throw SolverError("direct solve residual too large: " + std::to_string(res));
  return x;
}

// Diagonally preconditioned CG for the symmetric transport matrices.
inline Eigen::VectorXd solve_cg(const SpMat& A, const Eigen::VectorXd& b, double tol = 1e-12,
                                int max_iters = 2000) {
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
  cg.setTolerance(tol);
  cg.setMaxIterations(max_iters);
  cg.compute(A);
  Eigen::VectorXd x = cg.solve(b);
  if (cg.info() != Eigen::Success)
    throw SolverError("CG did not converge: error " + std::to_string(cg.error()) + " after " +
                      std::to_string(cg.iterations()) + " iterations");
  return x;
}

inline Eigen::VectorXd solve(LinearSystem sys) {
  apply_dirichlet(sys);
  return solve_direct(sys.matrix, sys.rhs);
}

// Lumped counterpart (row sums) of a consistent mass matrix.
inline Eigen::VectorXd lump_rows(const SpMat& M) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(M.rows());
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it) m[it.row()] += it.value();
  return m;
}

// Matrix Market coordinate format, for debugging.
inline void write_matrix_market(const SpMat& A, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SolverError("cannot open " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << A.rows() << " " << A.cols() << " " << A.nonZeros() << "\n";
  out.precision(17);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      out << it.row() + 1 << " " << it.col() + 1 << " " << it.value() << "\n";
}

}  // namespace restenosim
