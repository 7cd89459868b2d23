#include "oracles.hpp"

#include "normal_solver.hpp"
#include "tdr/carleman.hpp"
#include "tdr/errors.hpp"
#include "tdr/forward.hpp"
#include "tdr/reduction.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace tdr;

namespace {

struct Small {
    Grid2D grid;
    TimeGrid time;
    TimeBasis basis;
    Eigen::MatrixXd S;
};

Small small_problem(int nx, int N) {
    Small s{Grid2D(1.0, nx), TimeGrid::uniform(2.0, 200), {}, {}};
    s.basis = TimeBasis::build(2.0, N, s.time);
    s.S = coupling_matrix(s.basis);
    return s;
}

ReducedSystem system_with(const Small& s, const NonlinearSpec& spec, const Eigen::MatrixXd& h) {
    ReducedSystem sys;
    sys.S = s.S;
    sys.spec = spec;
    sys.basis = s.basis;
    sys.cumulatives = kernel_cumulatives(s.basis, spec.kernel);
    sys.grid = s.grid;
    sys.hvec = IndirectData{s.grid, h};
    return sys;
}

// Interior residual of U for F = 0 with the system's S, i.e. Lap_h U - S U.
ModeStack linear_residual(const ModeStack& U, const Eigen::MatrixXd& S) {
    ModeStack r(U.grid(), U.modes());
    for (int m = 0; m < U.modes(); ++m) r.set_field(m, laplacian(U.field(m)));
    const ModeStack::Storage SU = U.data() * S.transpose();
    for (int k : U.grid().interior()) r.data().row(k) -= SU.row(k);
    return r;
}

Eigen::MatrixXd normal_derivatives(const ModeStack& U) {
    Eigen::MatrixXd h(U.grid().boundary().size(), U.modes());
    for (int m = 0; m < U.modes(); ++m) h.col(m) = normal_derivative(U.field(m));
    return h;
}

// Re-quadrature of the weighted norm with hand-written stencils and weights.
double weighted_norm_oracle(const ModeStack& U, const CarlemanConfig& c) {
    const Grid2D& g = U.grid();
    const int n = g.count();
    const double h = g.step();
    auto w = [&](int i, int j) {
        return std::exp(2 * c.lambda * std::pow(std::hypot(g.x(i) - c.x0, g.y(j) - c.y0), -c.beta));
    };
    auto q1 = [&](int i) { return (i == 0 || i == n - 1) ? h / 2 : h; };
    double vol = 0.0, edge = 0.0, hs = 0.0;
    for (int a = 0; a < U.modes(); ++a) {
        auto f = [&](int i, int j) { return U.data()(g.index(i, j), a); };
        auto d = [&](int i, int j, int dx, int dy) {
            const int k = dx ? i : j;
            auto at = [&](int s) { return dx ? f(s, j) : f(i, s); };
            if (k == 0) return (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h);
            if (k == n - 1) return (3 * at(n - 1) - 4 * at(n - 2) + at(n - 3)) / (2 * h);
            return (at(k + 1) - at(k - 1)) / (2 * h);
        };
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double gx = d(i, j, 1, 0), gy = d(i, j, 0, 1);
                const double g2 = gx * gx + gy * gy;
                vol += q1(i) * q1(j) * w(i, j) * (c.lambda * c.lambda * f(i, j) * f(i, j) + g2);
                if (g.on_boundary(i, j)) edge += h * w(i, j) * g2;
                if (!g.on_boundary(i, j)) {
                    const double L = (f(i + 1, j) + f(i - 1, j) + f(i, j + 1) + f(i, j - 1) - 4 * f(i, j)) / (h * h);
                    hs += h * h * (f(i, j) * f(i, j) + L * L);
                }
            }
        for (int line = 1; line < n - 1; ++line)
            for (int k = 0; k < n - 1; ++k) {
                const double dx = (f(k + 1, line) - f(k, line)) / h, dy = (f(line, k + 1) - f(line, k)) / h;
                hs += h * h * (dx * dx + dy * dy);
            }
    }
    return std::sqrt(vol + c.lambda * edge + c.eps / c.lambda * hs);
}

} // namespace

TEST_SUITE("carleman") {

TEST_CASE("weight function") {
    CHECK(std::exp(2 * 6.0 / std::pow(1.5, 10)) == doctest::Approx(1.23134).epsilon(1e-5));
    const Grid2D g(1.0, 5);
    CarlemanConfig c;
    c.x0 = 0.0;
    c.y0 = -0.5 - 1.0 - 1.0;  // node (0, -1) at r = 1.5
    const WeightField W = build_weight(g, c);
    CHECK(W.w(2, 0) == doctest::Approx(std::exp(12.0 / std::pow(1.5, 10))).epsilon(1e-12));
    CHECK(W.min > 1.0);
    CHECK(W.max <= std::exp(2 * c.lambda));
    // decreasing in r along a vertical line
    for (int j = 1; j < 5; ++j) CHECK(W.w(2, j) < W.w(2, j - 1));
    c.lambda = 0.0;
    const WeightField one = build_weight(g, c);
    CHECK((one.w.values().array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(one.boundary.size() == 16);
}

TEST_CASE("configuration checks") {
    const Grid2D g(1.0, 9);
    CarlemanConfig c;
    CHECK_NOTHROW(c.validate(g));
    c.y0 = -1.5;
    CHECK_THROWS_AS(c.validate(g), DomainViolation);
    CHECK_THROWS_AS(build_weight(g, c), DomainViolation);
    c = CarlemanConfig{};
    c.lambda = 0.0;
    CHECK_THROWS_AS(c.validate(g), ConfigError);
    c = CarlemanConfig{};
    c.eps = -1.0;
    CHECK_THROWS_AS(c.validate(g), ConfigError);
}

TEST_CASE("zero data yields the zero minimizer") {
    const Small s = small_problem(11, 4);
    CarlemanConfig c;
    c.eps = 1e-8;
    const AssembledOperator op = assemble(s.grid, s.S, c, s.basis);
    const Eigen::VectorXd b = op.rhs(ModeStack(s.grid, 4), IndirectData{s.grid, Eigen::MatrixXd::Zero(s.grid.boundary().size(), 4)});
    CHECK(op.minimize(b).cwiseAbs().maxCoeff() == 0.0);
    CHECK(op.unknowns() == 81 * 4);
    CHECK(op.factorizations() == 1);
}

TEST_CASE("minimizer property and normal equation residual") {
    const Small s = small_problem(13, 5);
    CarlemanConfig c;
    const AssembledOperator op = assemble(s.grid, s.S, c, s.basis);
    const ModeStack F = oracle::random_smooth_stack(s.grid, 5, 4, 3.0);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd h(s.grid.boundary().size(), 5);
    for (auto& v : h.reshaped()) v = nd(rng);
    const Eigen::VectorXd b = op.rhs(F, IndirectData{s.grid, h});
    SolveStats st;
    const Eigen::VectorXd x = op.minimize(b, &st);
    const Eigen::VectorXd g = op.matrix().transpose() * b;
    const Eigen::VectorXd r = op.matrix().transpose() * (op.matrix() * x) - g;
    CHECK(r.norm() <= c.solver_tol * g.norm());
    CHECK(st.residual <= c.solver_tol);
    const double J0 = op.functional(x, b);
    for (int trial = 0; trial < 4; ++trial) {
        Eigen::VectorXd phi(x.size());
        for (auto& v : phi) v = nd(rng);
        for (double t : {1e-3, -1e-3}) CHECK(op.functional(x + t * phi, b) >= J0);
    }
}

TEST_CASE("manufactured linear problem is recovered") {
    const Small s = small_problem(21, 4);
    CarlemanConfig c;
    const AssembledOperator op = assemble(s.grid, s.S, c, s.basis);
    const ModeStack Ustar = oracle::random_smooth_stack(s.grid, 4, 21, 1.0);
    // F chosen so that Lap_h U* - S U* + F = 0 exactly on the grid
    ModeStack F = linear_residual(Ustar, s.S);
    F.data() *= -1.0;
    const Eigen::MatrixXd h = normal_derivatives(Ustar);
    const ModeStack V = op.unpack(op.minimize(op.rhs(F, IndirectData{s.grid, h})));
    const double rel = (V.data() - Ustar.data()).cwiseAbs().maxCoeff() / Ustar.data().cwiseAbs().maxCoeff();
    MESSAGE("manufactured relative error " << rel);
    CHECK(rel < 1e-6);
}

TEST_CASE("constant map reaches its fixed point in two steps") {
    const Small s = small_problem(11, 4);
    NonlinearSpec spec;
    spec.name = "constant";
    spec.evaluator = [](const NonlinearArgs& a) { return 2.0 + a.x * a.y; };
    const ReducedSystem sys = system_with(s, spec, Eigen::MatrixXd::Constant(s.grid.boundary().size(), 4, 0.3));
    CarlemanConfig c;
    const AssembledOperator op = assemble(s.grid, s.S, c, s.basis);
    const ModeStack a = apply_phi(ModeStack(s.grid, 4), op, sys);
    const ModeStack b = apply_phi(oracle::random_smooth_stack(s.grid, 4, 3, 1.0), op, sys);
    CHECK((a.data() - b.data()).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, a.data().cwiseAbs().maxCoeff()));
    const IterationResult r = iterate(ModeStack(s.grid, 4), op, sys, c);
    CHECK(r.converged);
    CHECK(r.trace.size() == 2u);
    CHECK(r.trace[1].diff_l2 <= r.kappa0);
    CHECK(std::isnan(r.trace[0].ratio));
    CHECK(r.factorizations == 1);
}

TEST_CASE("noiseless linear manufactured problem is a fixed point after one step") {
    const Small s = small_problem(15, 4);
    const ModeStack Ustar = oracle::random_smooth_stack(s.grid, 4, 5, 1.0);
    NonlinearSpec spec;
    spec.name = "0";
    spec.evaluator = [](const NonlinearArgs&) { return 0.0; };
    // F = 0: Phi ignores its argument, so the first image is already the limit
    const ReducedSystem sys = system_with(s, spec, normal_derivatives(Ustar));
    CarlemanConfig c;
    const AssembledOperator op = assemble(s.grid, s.S, c, s.basis);
    const ModeStack U1 = apply_phi(ModeStack(s.grid, 4), op, sys);
    const ModeStack U2 = apply_phi(U1, op, sys);
    CHECK((U2.data() - U1.data()).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, U1.data().cwiseAbs().maxCoeff()));
}

TEST_CASE("direct and structured backends agree") {
    const Small s = small_problem(17, 5);
    CarlemanConfig c;
    c.backend = Backend::Direct;
    const AssembledOperator d = assemble(s.grid, s.S, c, s.basis);
    c.backend = Backend::Structured;
    const AssembledOperator p = assemble(s.grid, s.S, c, s.basis);
    CHECK(d.backend() == Backend::Direct);
    CHECK(p.backend() == Backend::Structured);
    const ModeStack F = oracle::random_smooth_stack(s.grid, 5, 8, 5.0);
    const Eigen::MatrixXd h = Eigen::MatrixXd::Constant(s.grid.boundary().size(), 5, -0.2);
    const Eigen::VectorXd b = d.rhs(F, IndirectData{s.grid, h});
    SolveStats sd, sp;
    const Eigen::VectorXd xd = d.minimize(b, &sd), xp = p.minimize(b, &sp);
    MESSAGE("structured backend took " << sp.iterations << " iterations");
    CHECK((xd - xp).norm() <= 1e-7 * xd.norm());
    CHECK(sp.residual <= c.solver_tol);

    c.backend = Backend::Automatic;
    c.direct_limit = 10;
    CHECK(assemble(s.grid, s.S, c, s.basis).backend() == Backend::Structured);
    c.direct_limit = 40000;
    CHECK(assemble(s.grid, s.S, c, s.basis).backend() == Backend::Direct);
}

TEST_CASE("constant-weight preconditioner is the exact inverse") {
    const Small s = small_problem(15, 4);
    CarlemanConfig c;
    c.eps = 1e-6;
    WeightField W = build_weight(s.grid, c);
    const double wc = 1.7;
    W.w.values().setConstant(wc);
    W.boundary.setConstant(wc);
    W.min = W.max = wc;
    c.backend = Backend::Direct;
    const AssembledOperator op(s.grid, s.S, c, W);
    const double h = s.grid.step();
    StructuredModel m;
    m.n = s.grid.count() - 2;
    m.N = 4;
    m.h = h;
    m.S = s.S;
    m.c_int = h * h * wc;
    m.c_bd = c.lambda * c.lambda * h * wc;
    m.c_reg = c.eps * h * h;
    const ConstantWeightInverse inv(m);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    Eigen::VectorXd r(op.unknowns());
    for (auto& v : r) v = nd(rng);
    const Eigen::VectorXd z = inv.apply(r);
    const Eigen::VectorXd back = op.matrix().transpose() * (op.matrix() * z);
    CHECK((back - r).norm() <= 1e-8 * r.norm());
    CHECK(inv.pivot_ratio() > 0.0);
}

TEST_CASE("uniform row rescaling leaves the minimizer unchanged") {
    const Small s = small_problem(11, 3);
    CarlemanConfig c;
    c.eps = 1e-8;
    const WeightField W = build_weight(s.grid, c);
    const double k = 3.0;
    WeightField W2 = W;
    W2.w.values() *= k * k;
    W2.boundary *= k * k;
    CarlemanConfig c2 = c;
    c2.eps *= k * k;
    const AssembledOperator a(s.grid, s.S, c, W), b(s.grid, s.S, c2, W2);
    const ModeStack F = oracle::random_smooth_stack(s.grid, 3, 6, 2.0);
    const IndirectData h{s.grid, Eigen::MatrixXd::Constant(s.grid.boundary().size(), 3, 0.1)};
    const Eigen::VectorXd xa = a.minimize(a.rhs(F, h)), xb = b.minimize(b.rhs(F, h));
    CHECK((xa - xb).norm() <= 1e-8 * xa.norm());
}

TEST_CASE("weighted norm") {
    const Grid2D g(1.0, 13);
    CarlemanConfig c;
    c.eps = 1e-3;
    CHECK(weighted_norm(ModeStack(g, 3), c, g) == 0.0);
    const ModeStack U = oracle::random_smooth_stack(g, 3, 17, 2.0);
    const double v = weighted_norm(U, c, g);
    CHECK(std::abs(v - weighted_norm_oracle(U, c)) <= 1e-10 * v);
    ModeStack V = U;
    V.data() *= -2.5;
    CHECK(weighted_norm(V, c, g) == doctest::Approx(2.5 * v).epsilon(1e-13));
    CHECK(l2_norm(V) == doctest::Approx(2.5 * l2_norm(U)).epsilon(1e-13));
}

TEST_CASE("trace csv") {
    std::vector<IterationRecord> t(2);
    t[0].iter = 1;
    t[0].ratio = std::nan("");
    t[1].iter = 2;
    t[1].ratio = 0.25;
    std::ostringstream os;
    write_trace_csv(os, t);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "iter,diff_L2,diff_weighted,contraction_ratio,rhs_build_ms,solve_ms");
    std::getline(is, line);
    CHECK(line.find(",nan,") != std::string::npos);
}

}
