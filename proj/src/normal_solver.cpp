#include "normal_solver.hpp"

#include "tdr/errors.hpp"

#include <Eigen/Cholesky>
#include <cholmod.h>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace tdr {

namespace {

Eigen::VectorXd normal_apply(const RowSparse& A, const Eigen::VectorXd& x) {
    const Eigen::VectorXd y = A * x;
    return A.transpose() * y;
}

class DirectSolver final : public NormalSolver {
  public:
    DirectSolver(std::shared_ptr<const RowSparse> A, double tol) : A_(std::move(A)), tol_(tol) {
        const Eigen::SparseMatrix<double> Ac = *A_;
        H_ = Ac.transpose() * Ac;
        H_.makeCompressed();
        upper_ = H_.triangularView<Eigen::Upper>();
        upper_.makeCompressed();

        cholmod_start(&c_);
        c_.supernodal = CHOLMOD_SUPERNODAL;
        c_.print = 0;
        cholmod_sparse s = view(upper_);
        L_ = cholmod_analyze(&s, &c_);
        if (!L_) {
            cholmod_finish(&c_);
            throw FactorizationFailure("direct solver: symbolic analysis failed",
                                       std::numeric_limits<double>::infinity());
        }
        cholmod_factorize(&s, L_, &c_);
        rcond_ = cholmod_rcond(L_, &c_);
        if (c_.status != CHOLMOD_OK || L_->minor < L_->n) {
            const double est = rcond_ > 0 ? 1.0 / rcond_ : std::numeric_limits<double>::infinity();
            cholmod_free_factor(&L_, &c_);
            cholmod_finish(&c_);
            throw FactorizationFailure("direct solver: A^T A is not numerically positive definite "
                                       "(condition estimate " + std::to_string(est) + ")",
                                       est);
        }
    }

    ~DirectSolver() override {
        cholmod_free_factor(&L_, &c_);
        cholmod_finish(&c_);
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& g, SolveStats& st) const override {
        const double gn = g.norm();
        st.iterations = 0;
        if (gn == 0.0) {
            st.residual = 0.0;
            return Eigen::VectorXd::Zero(g.size());
        }
        Eigen::VectorXd x = chol_solve(g);
        double rel = (g - H_ * x).norm() / gn;
        // Iterative refinement against the assembled normal matrix.
        for (int k = 0; k < 3 && rel > tol_; ++k) {
            const Eigen::VectorXd x1 = x + chol_solve(g - H_ * x);
            const double rel1 = (g - H_ * x1).norm() / gn;
            if (!(rel1 < rel)) break;
            x = x1;
            rel = rel1;
            ++st.iterations;
        }
        st.residual = rel;
        return x;
    }

    double rcond() const override { return rcond_; }

  private:
    static cholmod_sparse view(Eigen::SparseMatrix<double>& m) {
        cholmod_sparse s{};
        s.nrow = m.rows();
        s.ncol = m.cols();
        s.nzmax = m.nonZeros();
        s.p = m.outerIndexPtr();
        s.i = m.innerIndexPtr();
        s.x = m.valuePtr();
        s.stype = 1;
        s.itype = CHOLMOD_INT;
        s.xtype = CHOLMOD_REAL;
        s.dtype = CHOLMOD_DOUBLE;
        s.sorted = 1;
        s.packed = 1;
        return s;
    }

    Eigen::VectorXd chol_solve(const Eigen::VectorXd& b) const {
        cholmod_dense d{};
        d.nrow = b.size();
        d.ncol = 1;
        d.nzmax = b.size();
        d.d = b.size();
        d.x = const_cast<double*>(b.data());
        d.xtype = CHOLMOD_REAL;
        d.dtype = CHOLMOD_DOUBLE;
        cholmod_dense* x = cholmod_solve(CHOLMOD_A, L_, &d, &c_);
        if (!x) throw SolveFailure("direct solver: back-substitution failed");
        Eigen::VectorXd out = Eigen::Map<Eigen::VectorXd>(static_cast<double*>(x->x), b.size());
        cholmod_free_dense(&x, &c_);
        return out;
    }

    std::shared_ptr<const RowSparse> A_;
    double tol_;
    Eigen::SparseMatrix<double> H_, upper_;
    mutable cholmod_common c_{};
    cholmod_factor* L_ = nullptr;
    double rcond_ = 0.0;
};

// Cholesky factor of a symmetric block-pentadiagonal matrix with square
// blocks, stored as the diagonal and the two sub-diagonal block bands.
struct BandedFactor {
    int blocks = 0, bs = 0;
    std::vector<Eigen::MatrixXd> L0, L1, L2;

    // D[j] = H(j,j), E1[j] = H(j,j-1), E2[j] = H(j,j-2).
    void factor(const std::vector<Eigen::MatrixXd>& D, const std::vector<Eigen::MatrixXd>& E1,
                const std::vector<Eigen::MatrixXd>& E2, double& dmin, double& dmax) {
        blocks = static_cast<int>(D.size());
        bs = static_cast<int>(D[0].rows());
        L0.assign(blocks, Eigen::MatrixXd());
        L1.assign(blocks, Eigen::MatrixXd());
        L2.assign(blocks, Eigen::MatrixXd());
        for (int j = 0; j < blocks; ++j) {
            Eigen::MatrixXd Dj = D[j];
            if (j >= 2) {
                L2[j] = E2[j];
                L0[j - 2].transpose().triangularView<Eigen::Upper>().solveInPlace<Eigen::OnTheRight>(L2[j]);
                Dj.noalias() -= L2[j] * L2[j].transpose();
            }
            if (j >= 1) {
                L1[j] = E1[j];
                if (j >= 2) L1[j].noalias() -= L2[j] * L1[j - 1].transpose();
                L0[j - 1].transpose().triangularView<Eigen::Upper>().solveInPlace<Eigen::OnTheRight>(L1[j]);
                Dj.noalias() -= L1[j] * L1[j].transpose();
            }
            Eigen::LLT<Eigen::MatrixXd> llt(Dj);
            if (llt.info() != Eigen::Success)
                throw FactorizationFailure("structured solver: block Cholesky lost definiteness at block " +
                                               std::to_string(j),
                                           dmin > 0 ? dmax / dmin : std::numeric_limits<double>::infinity());
            L0[j] = llt.matrixL();
            for (int k = 0; k < bs; ++k) {
                const double d = L0[j](k, k) * L0[j](k, k);
                dmin = std::min(dmin, d);
                dmax = std::max(dmax, d);
            }
        }
    }

    template <class M>
    void forward(M& X, bool identity_rhs = false) const {
        for (int j = 0; j < blocks; ++j) {
            const Eigen::Index cols = identity_rhs ? std::min<Eigen::Index>(X.cols(), (j + 1) * bs) : X.cols();
            auto Xj = X.middleRows(j * bs, bs).leftCols(cols);
            if (j >= 1) Xj.noalias() -= L1[j] * X.middleRows((j - 1) * bs, bs).leftCols(cols);
            if (j >= 2) Xj.noalias() -= L2[j] * X.middleRows((j - 2) * bs, bs).leftCols(cols);
            L0[j].triangularView<Eigen::Lower>().solveInPlace(Xj);
        }
    }

    template <class M>
    void backward(M& X) const {
        for (int j = blocks - 1; j >= 0; --j) {
            auto Xj = X.middleRows(j * bs, bs);
            if (j + 1 < blocks) Xj.noalias() -= L1[j + 1].transpose() * X.middleRows((j + 1) * bs, bs);
            if (j + 2 < blocks) Xj.noalias() -= L2[j + 2].transpose() * X.middleRows((j + 2) * bs, bs);
            L0[j].transpose().triangularView<Eigen::Upper>().solveInPlace(Xj);
        }
    }

    template <class M>
    void solve(M&& X) const {
        forward(X);
        backward(X);
    }
};

} // namespace

struct ConstantWeightInverse::Impl {
    int n = 0, N = 0, nb = 0;
    double sc = 0.0;  // sqrt(c_bd)
    Eigen::MatrixXd Q;
    Eigen::VectorXd el, er;
    std::vector<BandedFactor> F;
    Eigen::MatrixXd K;
    std::optional<Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>>> llt;
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
};

ConstantWeightInverse::ConstantWeightInverse(const StructuredModel& m) : impl_(std::make_unique<Impl>()) {
    Impl& I = *impl_;
    const int n = m.n, N = m.N;
    if (n < 3) throw ConfigError("structured solver: need at least 3 interior points per axis");
    I.n = n;
    I.N = N;
    I.nb = n * N;
    I.sc = std::sqrt(m.c_bd);
    const double h = m.h, ih2 = 1.0 / (h * h);
    const double pi = std::acos(-1.0);

    // Orthonormal DST-I; symmetric and its own inverse.
    I.Q.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < n; ++p) I.Q(i, p) = std::sqrt(2.0 / (n + 1)) * std::sin(pi * (i + 1) * (p + 1) / (n + 1));
    Eigen::VectorXd bl = Eigen::VectorXd::Zero(n), br = Eigen::VectorXd::Zero(n);
    bl[0] = br[n - 1] = -4.0 / (2.0 * h);
    bl[1] += 1.0 / (2.0 * h);
    br[n - 2] += 1.0 / (2.0 * h);
    I.el = I.Q * bl;
    I.er = I.Q * br;

    // y-edge Neumann rows restricted to one line: bl bl^T + br br^T.
    const Eigen::MatrixXd Ey = bl * bl.transpose() + br * br.transpose();
    const Eigen::MatrixXd Ssym = m.S + m.S.transpose();
    const Eigen::MatrixXd StS = m.S.transpose() * m.S;
    const Eigen::MatrixXd Id = Eigen::MatrixXd::Identity(N, N);

    I.F.resize(n);
    I.K = Eigen::MatrixXd::Zero(2 * I.nb, 2 * I.nb);
    std::vector<Eigen::MatrixXd> D(n), E1(n), E2(n);
    for (int p = 0; p < n; ++p) {
        const double mu = -4.0 * ih2 * std::pow(std::sin(pi * (p + 1) / (2.0 * (n + 1))), 2);
        const double alpha = mu - 2.0 * ih2, beta = ih2;
        auto P1 = [&](int j, int k) { return j == k ? alpha : (std::abs(j - k) == 1 ? beta : 0.0); };
        auto P2 = [&](int j, int k) {
            if (j == k) return alpha * alpha + beta * beta * ((j > 0) + (j < n - 1));
            if (std::abs(j - k) == 1) return 2.0 * alpha * beta;
            if (std::abs(j - k) == 2) return beta * beta;
            return 0.0;
        };
        auto block = [&](int j, int k) {
            const double p1 = P1(j, k), p2 = P2(j, k), d = j == k ? 1.0 : 0.0;
            Eigen::MatrixXd B = m.c_int * (p2 * Id - p1 * Ssym);
            if (j == k) B += m.c_int * StS;
            B += (m.c_bd * Ey(j, k) + m.c_reg * (d - p1 + p2)) * Id;
            return B;
        };
        for (int j = 0; j < n; ++j) {
            D[j] = block(j, j);
            if (j >= 1) E1[j] = block(j, j - 1);
            if (j >= 2) E2[j] = block(j, j - 2);
        }
        I.F[p].factor(D, E1, E2, I.dmin, I.dmax);

        if (m.c_bd > 0.0) {
            Eigen::MatrixXd X = Eigen::MatrixXd::Identity(I.nb, I.nb);
            I.F[p].forward(X, true);
            I.F[p].backward(X);
            const double a = I.el[p], b = I.er[p];
            I.K.topLeftCorner(I.nb, I.nb).noalias() += (m.c_bd * a * a) * X;
            I.K.bottomLeftCorner(I.nb, I.nb).noalias() += (m.c_bd * a * b) * X;
            I.K.bottomRightCorner(I.nb, I.nb).noalias() += (m.c_bd * b * b) * X;
        }
    }
    I.K.diagonal().array() += 1.0;
    I.llt.emplace(I.K);
    if (I.llt->info() != Eigen::Success)
        throw FactorizationFailure("structured solver: capacitance matrix is not positive definite",
                                   std::numeric_limits<double>::infinity());
}

ConstantWeightInverse::~ConstantWeightInverse() = default;

double ConstantWeightInverse::pivot_ratio() const { return impl_->dmin / impl_->dmax; }

Eigen::VectorXd ConstantWeightInverse::apply(const Eigen::VectorXd& r) const {
    const Impl& I = *impl_;
    const int n = I.n, N = I.N;
    Eigen::MatrixXd Z(I.nb, n);
    for (int j = 0; j < n; ++j)
        Z.middleRows(j * N, N).noalias() = Eigen::Map<const Eigen::MatrixXd>(r.data() + j * n * N, N, n) * I.Q;
    for (int p = 0; p < n; ++p) {
        auto col = Z.col(p);
        I.F[p].solve(col);
    }
    if (I.sc > 0.0) {
        Eigen::VectorXd t(2 * I.nb);
        t.head(I.nb).noalias() = I.sc * (Z * I.el);
        t.tail(I.nb).noalias() = I.sc * (Z * I.er);
        const Eigen::VectorXd s = I.llt->solve(t);
        Eigen::MatrixXd V = I.sc * (s.head(I.nb) * I.el.transpose() + s.tail(I.nb) * I.er.transpose());
        for (int p = 0; p < n; ++p) {
            auto col = V.col(p);
            I.F[p].solve(col);
        }
        Z -= V;
    }
    Eigen::VectorXd out(r.size());
    for (int j = 0; j < n; ++j)
        Eigen::Map<Eigen::MatrixXd>(out.data() + j * n * N, N, n).noalias() = Z.middleRows(j * N, N) * I.Q;
    return out;
}

namespace {

class StructuredSolver final : public NormalSolver {
  public:
    StructuredSolver(std::shared_ptr<const RowSparse> A, const StructuredModel& m)
        : A_(std::move(A)), P_(m), tol_(m.tol), max_iter_(m.max_iter) {}

    Eigen::VectorXd solve(const Eigen::VectorXd& g, SolveStats& st) const override {
        const double gn = g.norm();
        Eigen::VectorXd x = Eigen::VectorXd::Zero(g.size());
        st.iterations = 0;
        if (gn == 0.0) {
            st.residual = 0.0;
            return x;
        }
        Eigen::VectorXd r = g;
        double rel = 1.0;
        for (int restart = 0; restart < 3; ++restart) {
            Eigen::VectorXd z = P_.apply(r);
            Eigen::VectorXd p = z;
            double rz = r.dot(z);
            while (st.iterations < max_iter_) {
                const Eigen::VectorXd q = normal_apply(*A_, p);
                const double alpha = rz / p.dot(q);
                x += alpha * p;
                r -= alpha * q;
                ++st.iterations;
                if (r.norm() <= tol_ * gn) break;
                z = P_.apply(r);
                const double rz1 = r.dot(z);
                p = z + (rz1 / rz) * p;
                rz = rz1;
            }
            r = g - normal_apply(*A_, x);
            rel = r.norm() / gn;
            if (rel <= tol_ || st.iterations >= max_iter_) break;
        }
        st.residual = rel;
        return x;
    }

    double rcond() const override { return P_.pivot_ratio(); }

  private:
    std::shared_ptr<const RowSparse> A_;
    ConstantWeightInverse P_;
    double tol_;
    int max_iter_;
};

} // namespace

std::unique_ptr<NormalSolver> make_direct_solver(std::shared_ptr<const RowSparse> A, double tol) {
    return std::make_unique<DirectSolver>(std::move(A), tol);
}

std::unique_ptr<NormalSolver> make_structured_solver(std::shared_ptr<const RowSparse> A, const StructuredModel& m) {
    return std::make_unique<StructuredSolver>(std::move(A), m);
}

} // namespace tdr
