#include "tdr/carleman.hpp"

#include "normal_solver.hpp"
#include "tdr/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

namespace tdr {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double min_distance(const Grid2D& g, double x0, double y0) {
    double r = std::numeric_limits<double>::infinity();
    for (int j = 0; j < g.count(); ++j)
        for (int i = 0; i < g.count(); ++i) r = std::min(r, std::hypot(g.x(i) - x0, g.y(j) - y0));
    return r;
}

// Geometric mean of the extremes: the preconditioned spectrum is then
// symmetric about 1 in the log sense.
double mid_weight(const Eigen::VectorXd& w) { return std::sqrt(w.minCoeff() * w.maxCoeff()); }

} // namespace

void CarlemanConfig::validate(const Grid2D& grid) const {
    if (!(lambda > 0.0)) throw ConfigError("carleman: lambda must be positive");
    if (!(beta > 0.0)) throw ConfigError("carleman: beta must be positive");
    if (!(eps >= 0.0)) throw ConfigError("carleman: eps must be nonnegative");
    if (kappa0 && !(*kappa0 > 0.0)) throw ConfigError("carleman: kappa0 must be positive");
    if (!(kappa0_rel > 0.0)) throw ConfigError("carleman: relative kappa0 must be positive");
    if (max_iter < 1) throw ConfigError("carleman: max_iter must be at least 1");
    if (!(solver_tol > 0.0)) throw ConfigError("carleman: solver_tol must be positive");
    const double r = min_distance(grid, x0, y0);
    if (!(r > 1.0))
        throw DomainViolation("carleman: |x - x0| = " + std::to_string(r) + " <= 1 at some grid node");
}

WeightField build_weight(const Grid2D& grid, const CarlemanConfig& cfg) {
    if (!(cfg.lambda >= 0.0) || !(cfg.beta > 0.0)) throw ConfigError("weight: need lambda >= 0, beta > 0");
    const double r = min_distance(grid, cfg.x0, cfg.y0);
    if (!(r > 1.0))
        throw DomainViolation("weight: |x - x0| = " + std::to_string(r) + " <= 1 at some grid node");
    WeightField W;
    W.w = ScalarField::sample(grid, [&](double x, double y) {
        return std::exp(2.0 * cfg.lambda * std::pow(std::hypot(x - cfg.x0, y - cfg.y0), -cfg.beta));
    });
    W.boundary.resize(grid.boundary().size());
    for (std::size_t k = 0; k < grid.boundary().size(); ++k)
        W.boundary[k] = W.w(grid.boundary()[k].i, grid.boundary()[k].j);
    W.min = W.w.values().minCoeff();
    W.max = W.w.values().maxCoeff();
    return W;
}

AssembledOperator::AssembledOperator(const Grid2D& grid, const Eigen::MatrixXd& S, const CarlemanConfig& cfg,
                                     const WeightField& weight)
    : grid_(grid), N_(static_cast<int>(S.rows())), weight_(weight) {
    if (S.rows() != S.cols()) throw ConfigError("assemble: S must be square");
    if (weight.w.grid() != grid) throw GridMismatch("assemble: weight lives on another grid");
    const int nx = grid.count();
    const int m = nx - 2;
    const int P = m * m;
    const int N = N_;
    const double h = grid.step();
    const double ih2 = 1.0 / (h * h);
    auto inner = [&](int i, int j) { return (j - 1) * m + (i - 1); };

    row_scale_int_.resize(P);
    for (int p = 0; p < P; ++p) {
        const int i = p % m + 1, j = p / m + 1;
        row_scale_int_[p] = std::sqrt(h * h * weight.w(i, j));
    }
    const auto& bd = grid.boundary();
    for (std::size_t k = 0; k < bd.size(); ++k)
        if (!bd[k].corner()) bd_rows_.push_back(static_cast<int>(k));
    row_scale_bd_.resize(bd_rows_.size());
    for (std::size_t r = 0; r < bd_rows_.size(); ++r) {
        const auto& b = bd[bd_rows_[r]];
        row_scale_bd_[r] = cfg.lambda * std::sqrt(b.weight * weight.boundary[bd_rows_[r]]);
    }

    const long nxedges = static_cast<long>(nx - 1) * m;
    const long rows = static_cast<long>(P) * N + static_cast<long>(bd_rows_.size()) * N +
                      (2L * P + 2L * nxedges) * N;
    auto A = std::make_shared<Sparse>(rows, static_cast<long>(P) * N);
    {
        Eigen::VectorXi nnz(rows);
        long r = 0;
        for (long k = 0; k < static_cast<long>(P) * N; ++k) nnz[r++] = 4 + N;
        for (long k = 0; k < static_cast<long>(bd_rows_.size()) * N; ++k) nnz[r++] = 2;
        for (long k = 0; k < static_cast<long>(P) * N; ++k) nnz[r++] = 1;
        for (long k = 0; k < 2 * nxedges * N; ++k) nnz[r++] = 2;
        for (long k = 0; k < static_cast<long>(P) * N; ++k) nnz[r++] = 5;
        A->reserve(nnz);
    }

    std::vector<std::pair<long, double>> entries;
    long row = 0;
    auto emit = [&]() {
        std::sort(entries.begin(), entries.end());
        for (const auto& [c, v] : entries) A->insert(row, c) = v;
        entries.clear();
        ++row;
    };
    // Adds the 5-point Laplacian of mode a at interior (i, j), scaled by s.
    auto add_laplacian = [&](int i, int j, int a, double s) {
        entries.emplace_back(static_cast<long>(inner(i, j)) * N + a, -4.0 * ih2 * s);
        const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
        for (int q = 0; q < 4; ++q) {
            const int ii = i + di[q], jj = j + dj[q];
            if (!grid.on_boundary(ii, jj)) entries.emplace_back(static_cast<long>(inner(ii, jj)) * N + a, ih2 * s);
        }
    };

    for (int p = 0; p < P; ++p) {
        const int i = p % m + 1, j = p / m + 1;
        const double s = row_scale_int_[p];
        for (int a = 0; a < N; ++a) {
            add_laplacian(i, j, a, s);
            for (int b = 0; b < N; ++b)
                if (S(a, b) != 0.0) entries.emplace_back(static_cast<long>(p) * N + b, -s * S(a, b));
            // merge the diagonal contributions
            std::sort(entries.begin(), entries.end());
            std::vector<std::pair<long, double>> merged;
            for (const auto& e : entries) {
                if (!merged.empty() && merged.back().first == e.first)
                    merged.back().second += e.second;
                else
                    merged.push_back(e);
            }
            entries.swap(merged);
            emit();
        }
    }
    for (std::size_t r = 0; r < bd_rows_.size(); ++r) {
        const auto& b = bd[bd_rows_[r]];
        const int ax = b.nx, ay = b.ny;
        const double s = row_scale_bd_[r] / (2.0 * h);
        const int i1 = b.i - ax, j1 = b.j - ay, i2 = b.i - 2 * ax, j2 = b.j - 2 * ay;
        for (int a = 0; a < N; ++a) {
            if (!grid.on_boundary(i1, j1)) entries.emplace_back(static_cast<long>(inner(i1, j1)) * N + a, -4.0 * s);
            if (!grid.on_boundary(i2, j2)) entries.emplace_back(static_cast<long>(inner(i2, j2)) * N + a, 1.0 * s);
            emit();
        }
    }
    const double se = std::sqrt(cfg.eps) * h;
    for (int p = 0; p < P; ++p)
        for (int a = 0; a < N; ++a) {
            entries.emplace_back(static_cast<long>(p) * N + a, se);
            emit();
        }
    for (int dir = 0; dir < 2; ++dir)
        for (int line = 1; line <= m; ++line)
            for (int k = 0; k < nx - 1; ++k) {
                const int i0 = dir == 0 ? k : line, j0 = dir == 0 ? line : k;
                const int i1 = dir == 0 ? k + 1 : line, j1 = dir == 0 ? line : k + 1;
                for (int a = 0; a < N; ++a) {
                    if (!grid.on_boundary(i0, j0))
                        entries.emplace_back(static_cast<long>(inner(i0, j0)) * N + a, -se / h);
                    if (!grid.on_boundary(i1, j1))
                        entries.emplace_back(static_cast<long>(inner(i1, j1)) * N + a, se / h);
                    emit();
                }
            }
    for (int p = 0; p < P; ++p) {
        const int i = p % m + 1, j = p / m + 1;
        for (int a = 0; a < N; ++a) {
            add_laplacian(i, j, a, se);
            emit();
        }
    }
    A->makeCompressed();
    A_ = A;

    const auto t0 = Clock::now();
    backend_ = cfg.backend;
    if (backend_ == Backend::Automatic)
        backend_ = unknowns() <= cfg.direct_limit ? Backend::Direct : Backend::Structured;
    if (backend_ == Backend::Direct) {
        solver_ = make_direct_solver(A_, cfg.solver_tol);
    } else {
        Eigen::VectorXd wi(P), wb(bd_rows_.size());
        for (int p = 0; p < P; ++p) wi[p] = row_scale_int_[p] * row_scale_int_[p] / (h * h);
        for (std::size_t r = 0; r < bd_rows_.size(); ++r) wb[r] = weight.boundary[bd_rows_[r]];
        StructuredModel model;
        model.n = m;
        model.N = N;
        model.h = h;
        model.S = S;
        model.c_int = h * h * mid_weight(wi);
        model.c_bd = cfg.lambda * cfg.lambda * h * mid_weight(wb);
        model.c_reg = cfg.eps * h * h;
        model.tol = cfg.solver_tol;
        model.max_iter = cfg.max_solver_iter;
        solver_ = make_structured_solver(A_, model);
    }
    factorizations_ = 1;
    factor_ms_ = ms_since(t0);
}

AssembledOperator::~AssembledOperator() = default;
AssembledOperator::AssembledOperator(AssembledOperator&&) noexcept = default;
AssembledOperator& AssembledOperator::operator=(AssembledOperator&&) noexcept = default;

double AssembledOperator::rcond() const { return solver_->rcond(); }

Eigen::VectorXd AssembledOperator::rhs(const ModeStack& F, const IndirectData& h) const {
    if (F.modes() != N_ || h.modes() != N_) throw GridMismatch("rhs: mode count differs from operator");
    if (F.grid() != grid_ || h.grid != grid_) throw GridMismatch("rhs: data lives on another grid");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(A_->rows());
    const auto& in = grid_.interior();
    const long P = static_cast<long>(in.size());
    for (long p = 0; p < P; ++p)
        for (int a = 0; a < N_; ++a) b[p * N_ + a] = -row_scale_int_[p] * F.data()(in[p], a);
    const long off = P * N_;
    for (std::size_t r = 0; r < bd_rows_.size(); ++r)
        for (int a = 0; a < N_; ++a) b[off + static_cast<long>(r) * N_ + a] = row_scale_bd_[r] * h.values(bd_rows_[r], a);
    return b;
}

Eigen::VectorXd AssembledOperator::solve_normal(const Eigen::VectorXd& g, SolveStats* stats) const {
    SolveStats st;
    const auto t0 = Clock::now();
    Eigen::VectorXd x = solver_->solve(g, st);
    st.ms = ms_since(t0);
    if (!x.allFinite()) throw SolveFailure("carleman: linear solve produced non-finite values");
    if (stats) *stats = st;
    return x;
}

Eigen::VectorXd AssembledOperator::minimize(const Eigen::VectorXd& b, SolveStats* stats) const {
    return solve_normal(A_->transpose() * b, stats);
}

double AssembledOperator::functional(const Eigen::VectorXd& x, const Eigen::VectorXd& b) const {
    return (*A_ * x - b).squaredNorm();
}

Eigen::VectorXd AssembledOperator::pack(const ModeStack& U) const {
    const auto& in = grid_.interior();
    Eigen::VectorXd x(unknowns());
    for (std::size_t p = 0; p < in.size(); ++p)
        for (int a = 0; a < N_; ++a) x[static_cast<long>(p) * N_ + a] = U.data()(in[p], a);
    return x;
}

ModeStack AssembledOperator::unpack(const Eigen::VectorXd& x) const {
    const auto& in = grid_.interior();
    ModeStack U(grid_, N_);
    for (std::size_t p = 0; p < in.size(); ++p)
        for (int a = 0; a < N_; ++a) U.data()(in[p], a) = x[static_cast<long>(p) * N_ + a];
    return U;
}

AssembledOperator assemble(const Grid2D& grid, const Eigen::MatrixXd& S, const CarlemanConfig& cfg,
                           const TimeBasis& basis) {
    cfg.validate(grid);
    if (S.rows() != basis.size()) throw GridMismatch("assemble: S and basis sizes differ");
    return AssembledOperator(grid, S, cfg, build_weight(grid, cfg));
}

ModeStack apply_phi(const ModeStack& Un, const AssembledOperator& op, const ReducedSystem& sys, SolveStats* stats,
                    double* rhs_ms) {
    const auto t0 = Clock::now();
    const ModeStack F = nonlinearity_projection(Un, sys.spec, sys.basis, sys.cumulatives);
    const Eigen::VectorXd b = op.rhs(F, sys.hvec);
    if (rhs_ms) *rhs_ms = ms_since(t0);
    return op.unpack(op.minimize(b, stats));
}

double l2_norm(const ModeStack& U) {
    const Eigen::VectorXd w = domain_weights(U.grid());
    return std::sqrt((w.asDiagonal() * U.data().cwiseAbs2()).sum());
}

double h_surrogate_sq(const ModeStack& U) {
    const Grid2D& g = U.grid();
    const int n = g.count();
    const double h = g.step(), h2 = h * h;
    double s = 0.0;
    for (int a = 0; a < U.modes(); ++a) {
        const ScalarField f = U.field(a);
        const ScalarField L = laplacian(f);
        for (int k : g.interior()) s += h2 * (f.values()[k] * f.values()[k] + L.values()[k] * L.values()[k]);
        for (int line = 1; line < n - 1; ++line)
            for (int k = 0; k < n - 1; ++k) {
                const double dx = (f(k + 1, line) - f(k, line)) / h;
                const double dy = (f(line, k + 1) - f(line, k)) / h;
                s += h2 * (dx * dx + dy * dy);
            }
    }
    return s;
}

double weighted_norm(const ModeStack& U, const CarlemanConfig& cfg, const Grid2D& grid) {
    if (U.grid() != grid) throw GridMismatch("weighted norm: stack lives on another grid");
    if (!(cfg.lambda > 0.0)) throw ConfigError("weighted norm: lambda must be positive");
    const WeightField W = build_weight(grid, cfg);
    const Eigen::VectorXd dw = domain_weights(grid);
    const auto& bd = grid.boundary();
    double vol = 0.0, edge = 0.0;
    for (int a = 0; a < U.modes(); ++a) {
        const ScalarField f = U.field(a);
        const auto [gx, gy] = gradient(f);
        const Eigen::ArrayXd g2 = gx.values().array().square() + gy.values().array().square();
        vol += (dw.array() * W.w.values().array() *
                (cfg.lambda * cfg.lambda * f.values().array().square() + g2))
                   .sum();
        for (std::size_t k = 0; k < bd.size(); ++k)
            edge += bd[k].weight * W.boundary[k] * g2[grid.index(bd[k].i, bd[k].j)];
    }
    return std::sqrt(vol + cfg.lambda * edge + cfg.eps / cfg.lambda * h_surrogate_sq(U));
}

IterationResult iterate(const ModeStack& U0, const AssembledOperator& op, const ReducedSystem& sys,
                        const CarlemanConfig& cfg) {
    if (U0.grid() != op.grid() || U0.modes() != op.modes())
        throw GridMismatch("iterate: initial stack does not match the operator");
    IterationResult res;
    res.U = U0;
    res.factorizations = op.factorizations();
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int it = 1; it <= cfg.max_iter; ++it) {
        IterationRecord rec;
        rec.iter = it;
        SolveStats st;
        ModeStack next = apply_phi(res.U, op, sys, &st, &rec.rhs_ms);
        rec.solve_ms = st.ms;
        rec.solver_iterations = st.iterations;
        rec.solver_residual = st.residual;
        ModeStack diff(op.grid(), op.modes());
        diff.data() = next.data() - res.U.data();
        rec.diff_l2 = l2_norm(diff);
        rec.diff_weighted = weighted_norm(diff, cfg, op.grid());
        rec.ratio = rec.diff_l2 / prev;
        if (it == 1) res.kappa0 = cfg.kappa0 ? *cfg.kappa0 : cfg.kappa0_rel * std::max(1.0, l2_norm(next));
        prev = rec.diff_l2;
        res.U = std::move(next);
        res.trace.push_back(rec);
        if (!std::isfinite(rec.diff_l2)) throw SolveFailure("iterate: non-finite iterate");
        if (rec.diff_l2 <= res.kappa0) {
            res.converged = true;
            break;
        }
    }
    res.factorizations = op.factorizations();
    if (!res.converged) {
        const double last = res.trace.back().ratio;
        if (!(last < 1.0))
            throw NonConvergence("iterate: no convergence after " + std::to_string(cfg.max_iter) +
                                     " steps, last contraction ratio " + std::to_string(last),
                                 last);
    }
    return res;
}

void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace) {
    os.precision(17);
    os << "iter,diff_L2,diff_weighted,contraction_ratio,rhs_build_ms,solve_ms\n";
    for (const auto& r : trace) {
        os << r.iter << ',' << r.diff_l2 << ',' << r.diff_weighted << ',';
        if (std::isfinite(r.ratio)) os << r.ratio;
        else os << "nan";
        os << ',' << r.rhs_ms << ',' << r.solve_ms << '\n';
    }
}

} // namespace tdr
