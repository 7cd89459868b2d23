#pragma once

#include "tdr/carleman.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <memory>

namespace tdr {

class NormalSolver {
  public:
    virtual ~NormalSolver() = default;
    // Solves A^T A x = g.
    virtual Eigen::VectorXd solve(const Eigen::VectorXd& g, SolveStats& st) const = 0;
    virtual double rcond() const = 0;
};

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

std::unique_ptr<NormalSolver> make_direct_solver(std::shared_ptr<const RowSparse> A, double tol);

// Constant-weight model of A^T A on an n x n interior grid with N modes:
//   c_int |(Lap (x) I - I (x) S) V|^2 + c_bd |d_nu V|^2 + c_reg (|V|^2 + |D V|^2 + |Lap V|^2)
struct StructuredModel {
    int n = 0, N = 0;
    double h = 0.0;
    Eigen::MatrixXd S;
    double c_int = 0.0, c_bd = 0.0, c_reg = 0.0;
    double tol = 1e-10;
    int max_iter = 500;
};

std::unique_ptr<NormalSolver> make_structured_solver(std::shared_ptr<const RowSparse> A, const StructuredModel& m);

// The preconditioner on its own, for testing: applies the exact inverse of
// the constant-weight operator.
class ConstantWeightInverse {
  public:
    explicit ConstantWeightInverse(const StructuredModel& m);
    ~ConstantWeightInverse();
    Eigen::VectorXd apply(const Eigen::VectorXd& r) const;
    double pivot_ratio() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace tdr
