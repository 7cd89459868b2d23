#pragma once

#include "tdr/grid.hpp"
#include "tdr/reduction.hpp"
#include "tdr/time_basis.hpp"

#include <Eigen/SparseCore>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

namespace tdr {

enum class Backend {
    Automatic,   // Direct below CarlemanConfig::direct_limit unknowns, Structured above
    Direct,      // sparse Cholesky of A^T A
    Structured,  // CG on A^T A preconditioned by the exact constant-weight operator
};

struct CarlemanConfig {
    double lambda = 6.0;
    double beta = 10.0;
    double eps = 1e-13;
    double x0 = 0.0, y0 = -3.0;
    std::optional<double> kappa0;  // absolute threshold; default is kappa0_rel * max(1, |U_1|)
    double kappa0_rel = 1e-6;
    int max_iter = 50;
    double solver_tol = 1e-10;
    int max_solver_iter = 500;
    Backend backend = Backend::Automatic;
    long direct_limit = 40000;

    // Throws ConfigError for out-of-range values; DomainViolation when some
    // node of grid has |x - x0| <= 1.
    void validate(const Grid2D& grid) const;
};

struct WeightField {
    ScalarField w;
    Eigen::VectorXd boundary;  // w on grid.boundary() order
    double min = 0.0, max = 0.0;
};

// w(x) = exp(2 lambda |x - x0|^{-beta}).
WeightField build_weight(const Grid2D& grid, const CarlemanConfig& cfg);

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;  // |A^T A x - A^T b| / |A^T b|
    double ms = 0.0;
};

class NormalSolver;

// Least-squares form of the functional: J(V) = |A x - b(W)|^2 with x the
// interior mode values, node-major (interior node p, mode m) -> p*N + m.
//
// Rows, in order:
//   interior   sqrt(h^2 w)        (Lap_h V - S V)_m         rhs -sqrt(h^2 w) F_m(W)
//   boundary   lambda sqrt(q w)   (d_nu V)_m                rhs lambda sqrt(q w) h_m
//   regular.   sqrt(eps) h        V, forward differences of V, Lap_h V
// Boundary nodes whose one-sided stencil touches no interior unknown (the
// corners) contribute nothing and are skipped.
class AssembledOperator {
  public:
    using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    AssembledOperator(const Grid2D& grid, const Eigen::MatrixXd& S, const CarlemanConfig& cfg,
                      const WeightField& weight);
    ~AssembledOperator();
    AssembledOperator(AssembledOperator&&) noexcept;
    AssembledOperator& operator=(AssembledOperator&&) noexcept;

    const Grid2D& grid() const { return grid_; }
    int modes() const { return N_; }
    long unknowns() const { return static_cast<long>(grid_.interior().size()) * N_; }
    const Sparse& matrix() const { return *A_; }
    const WeightField& weight() const { return weight_; }
    Backend backend() const { return backend_; }
    int factorizations() const { return factorizations_; }
    double factor_ms() const { return factor_ms_; }
    double rcond() const;

    Eigen::VectorXd rhs(const ModeStack& F, const IndirectData& h) const;
    // Solves A^T A x = A^T b.
    Eigen::VectorXd minimize(const Eigen::VectorXd& b, SolveStats* stats = nullptr) const;
    // Solves A^T A x = g for a given g.
    Eigen::VectorXd solve_normal(const Eigen::VectorXd& g, SolveStats* stats = nullptr) const;

    double functional(const Eigen::VectorXd& x, const Eigen::VectorXd& b) const;

    Eigen::VectorXd pack(const ModeStack& U) const;
    ModeStack unpack(const Eigen::VectorXd& x) const;

  private:
    Grid2D grid_;
    int N_ = 0;
    WeightField weight_;
    std::vector<int> bd_rows_;  // boundary node index of each boundary row block
    Eigen::VectorXd row_scale_int_, row_scale_bd_;
    std::shared_ptr<const Sparse> A_;
    std::unique_ptr<NormalSolver> solver_;
    Backend backend_ = Backend::Direct;
    int factorizations_ = 0;
    double factor_ms_ = 0.0;
};

AssembledOperator assemble(const Grid2D& grid, const Eigen::MatrixXd& S, const CarlemanConfig& cfg,
                           const TimeBasis& basis);

ModeStack apply_phi(const ModeStack& Un, const AssembledOperator& op, const ReducedSystem& sys,
                    SolveStats* stats = nullptr, double* rhs_ms = nullptr);

struct IterationRecord {
    int iter = 0;
    double diff_l2 = 0.0;
    double diff_weighted = 0.0;
    double ratio = 0.0;  // NaN for the first step
    double rhs_ms = 0.0;
    double solve_ms = 0.0;
    int solver_iterations = 0;
    double solver_residual = 0.0;
};

struct IterationResult {
    ModeStack U;
    std::vector<IterationRecord> trace;
    bool converged = false;
    double kappa0 = 0.0;
    int factorizations = 0;
};

IterationResult iterate(const ModeStack& U0, const AssembledOperator& op, const ReducedSystem& sys,
                        const CarlemanConfig& cfg);

double l2_norm(const ModeStack& U);
// h^2 sum over modes of |V|^2 + |forward differences|^2 + |Lap_h V|^2.
double h_surrogate_sq(const ModeStack& U);
double weighted_norm(const ModeStack& U, const CarlemanConfig& cfg, const Grid2D& grid);

void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace);

} // namespace tdr
