#include "tdr/errors.hpp"
#include "tdr/forward.hpp"
#include "tdr/recon.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace tdr;

namespace {

const double kPi = std::acos(-1.0);

double eig(double x, double y) { return std::sin(kPi * (x + 1) / 2) * std::sin(kPi * (y + 1) / 2); }

NonlinearSpec zero_spec() {
    NonlinearSpec s;
    s.name = "0";
    s.evaluator = [](const NonlinearArgs&) { return 0.0; };
    return s;
}

double eigen_error(int nx, int nt) {
    const Grid2D g(1.0, nx);
    const TimeGrid t = TimeGrid::uniform(2.0, nt);
    const WaveField u = simulate(ScalarField::sample(g, eig), zero_spec(), g, t);
    double e = 0.0;
    for (int l = 0; l < nt; ++l) {
        const double c = std::cos(kPi * t.nodes[l] / std::sqrt(2.0));
        for (int k = 0; k < g.size(); ++k) {
            const int i = k % nx, j = k / nx;
            e = std::max(e, std::abs(u.slices[l].values()[k] - c * eig(g.x(i), g.y(j))));
        }
    }
    return e;
}

} // namespace

TEST_SUITE("forward") {

TEST_CASE("zero source stays zero") {
    const Grid2D g(1.0, 21);
    const TimeGrid t = TimeGrid::uniform(2.0, 40);
    for (const auto& tc : builtin_tests()) {
        if (tc.name == "test2") continue;  // F(0) != 0 there
        const WaveField u = simulate(ScalarField(g), tc.spec, g, t);
        for (const auto& s : u.slices) CHECK(s.values().cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("initialization and Dirichlet condition") {
    const Grid2D g(1.0, 21);
    const TimeGrid t = TimeGrid::uniform(2.0, 60);
    const TestCase tc = builtin_test("1");
    const ScalarField src = tc.g_true(g);
    const WaveField u = simulate(src, tc.spec, g, t);
    REQUIRE(u.slices.size() == 60u);
    CHECK((u.slices[0].values() - src.values()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((u.slices[1].values() - src.values()).cwiseAbs().maxCoeff() == 0.0);
    for (const auto& s : u.slices) {
        for (const auto& b : g.boundary()) CHECK(s(b.i, b.j) == 0.0);
        CHECK(s.finite());
    }
}

TEST_CASE("linear eigenfunction solution") {
    const double e = eigen_error(41, 200);
    // first order in time from the two-equal-slices start
    CHECK(e <= 0.05);
    const double e2 = eigen_error(41, 400);
    CHECK(e2 < e);
    CHECK(std::log2(e / e2) >= 0.9);
}

TEST_CASE("history evaluation") {
    const Grid2D g(1.0, 11);
    const TimeGrid t = TimeGrid::uniform(1.0, 30);

    NonlinearSpec id;
    id.evaluator = [](const NonlinearArgs& a) { return a.u; };
    NonlinearityHistory h(id, g, t);
    const ScalarField a = ScalarField::sample(g, [](double x, double y) { return x + 2 * y; });
    const ScalarField b = ScalarField::sample(g, [](double x, double y) { return x * y; });
    h.push(a);
    h.push(b);
    CHECK((h.evaluate().values() - b.values()).cwiseAbs().maxCoeff() == 0.0);

    NonlinearSpec mem;
    mem.evaluator = [](const NonlinearArgs& a) { return a.memory; };
    mem.kernel = [](double) { return 1.0; };
    NonlinearityHistory hm(mem, g, t);
    const ScalarField c(g, Eigen::VectorXd::Constant(g.size(), 3.0));
    for (int l = 0; l < 12; ++l) hm.push(c);
    CHECK(hm.evaluate()(4, 4) == doctest::Approx(3.0 * t.nodes[11]).epsilon(1e-12));
}

TEST_CASE("history matches a from-scratch quadrature") {
    const Grid2D g(1.0, 15);
    const TimeGrid t = TimeGrid::uniform(2.0, 50);
    const TestCase tc = builtin_test("1");
    const WaveField u = simulate(tc.g_true(g), tc.spec, g, t);
    for (int l : {2, 7, 30, 49}) {
        const ScalarField F = evaluate_nonlinearity_history(u, tc.spec, t, l);
        const ScalarField& cur = u.slices[l - 1];
        const auto [gx, gy] = gradient(cur);
        double err = 0.0;
        for (int k = 0; k < g.size(); ++k) {
            double m = 0.0;
            for (int s = 1; s <= l - 1; ++s)
                m += 0.5 * t.step * (u.slices[s - 1].values()[k] + u.slices[s].values()[k]);
            const double v = cur.values()[k];
            const double want = std::min(v * v + std::hypot(gx.values()[k], gy.values()[k]), 30.0) + m;
            err = std::max(err, std::abs(F.values()[k] - want));
        }
        CAPTURE(l);
        CHECK(err <= 1e-10);
    }
}

TEST_CASE("smooth cutoff") {
    CHECK(cutoff(0.5, 1.0) == 1.0);
    CHECK(cutoff(1.0, 1.0) == 1.0);
    CHECK(cutoff(2.0, 1.0) == 0.0);
    CHECK(cutoff(1.5, 1.0) == doctest::Approx(0.5));
    NonlinearSpec s;
    s.evaluator = [](const NonlinearArgs& a) { return a.u; };
    s.clamp = 4.0;
    NonlinearArgs a;
    a.u = 1.5;
    CHECK(s(a) == 1.5);
    a.u = 3.0;
    CHECK(s(a) == 0.0);
}

TEST_CASE("boundary trace") {
    const Grid2D g(1.0, 9);
    WaveField u;
    u.grid = g;
    u.time = TimeGrid::uniform(1.0, 3);
    u.slices = {ScalarField(g, Eigen::VectorXd::Constant(g.size(), 1.0)),
                ScalarField::sample(g, [](double x, double) { return x; }),
                ScalarField::sample(g, eig)};
    const BoundaryTimeData h = boundary_trace(u);
    CHECK(h.values.rows() == 32);
    CHECK(h.values.cols() == 3);
    CHECK(h.values.col(0).cwiseAbs().maxCoeff() < 1e-12);
    for (std::size_t k = 0; k < g.boundary().size(); ++k)
        if (g.boundary()[k].edge == "right") CHECK(h.values(k, 1) == doctest::Approx(1.0));
    CHECK((h.values.col(2) - normal_derivative(u.slices[2])).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("multiplicative noise") {
    const Grid2D g(1.0, 11);
    const TimeGrid t = TimeGrid::uniform(2.0, 50);
    const TestCase tc = builtin_test("1");
    const BoundaryTimeData h = boundary_trace(simulate(tc.g_true(g), tc.spec, g, t));

    const BoundaryTimeData z = add_noise(h, 0.0, 5);
    CHECK((z.values.array() == h.values.array()).all());

    const BoundaryTimeData n1 = add_noise(h, 0.1, 5);
    const BoundaryTimeData n2 = add_noise(h, 0.1, 5);
    const BoundaryTimeData n3 = add_noise(h, 0.1, 6);
    CHECK((n1.values.array() == n2.values.array()).all());
    CHECK_FALSE((n1.values.array() == n3.values.array()).all());
    double worst = 0.0, mean = 0.0;
    int count = 0;
    for (Eigen::Index b = 0; b < h.values.rows(); ++b)
        for (Eigen::Index l = 0; l < h.values.cols(); ++l)
            if (h.values(b, l) != 0.0) {
                const double r = n1.values(b, l) / h.values(b, l) - 1.0;
                worst = std::max(worst, std::abs(r));
                mean += r;
                ++count;
            }
    CHECK(worst <= 0.1 + 1e-15);
    CHECK(worst > 0.09);
    CHECK(std::abs(mean / count) < 0.01);
    CHECK_THROWS_AS(add_noise(h, -0.1, 1), ConfigError);
}

TEST_CASE("boundary data csv round trip") {
    const Grid2D g(1.0, 7);
    const TimeGrid t = TimeGrid::uniform(2.0, 8);
    const TestCase tc = builtin_test("3");
    const BoundaryTimeData h = add_noise(boundary_trace(simulate(tc.g_true(g), tc.spec, g, t)), 0.05, 11);
    std::stringstream ss;
    write_boundary_csv(ss, h);
    const BoundaryTimeData r = read_boundary_csv(ss);
    CHECK(r.grid == g);
    CHECK(r.time.same_axis(t));
    CHECK(r.delta == 0.05);
    CHECK(r.seed == 11u);
    CHECK((r.values - h.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("restriction to a coarser grid") {
    const Grid2D fine(1.0, 21), coarse(1.0, 11);
    const TimeGrid tf = TimeGrid::uniform(2.0, 41), tc = TimeGrid::uniform(2.0, 21);
    WaveField u;
    u.grid = fine;
    u.time = tf;
    for (int l = 0; l < tf.count; ++l) {
        const double s = tf.nodes[l];
        u.slices.push_back(ScalarField::sample(fine, [s](double x, double y) { return s * (1 - x * x) * (1 - y * y); }));
    }
    const BoundaryTimeData r = restrict_data(boundary_trace(u), coarse, tc);
    // the field is quadratic in space and linear in time, so every step is exact
    for (std::size_t k = 0; k < coarse.boundary().size(); ++k) {
        const auto& b = coarse.boundary()[k];
        const double x = coarse.x(b.i), y = coarse.y(b.j);
        const double ex = -2 * x * (1 - y * y) * b.nx, ey = -2 * y * (1 - x * x) * b.ny;
        const double dn = b.corner() ? 0.5 * (ex + ey) : ex + ey;
        for (int l = 0; l < tc.count; ++l)
            CHECK(r.values(k, l) == doctest::Approx(tc.nodes[l] * dn).scale(1.0).epsilon(1e-10));
    }
    CHECK_THROWS_AS(restrict_data(boundary_trace(u), Grid2D(1.0, 8), tc), GridMismatch);
}

}
