#include "tdr/errors.hpp"
#include "tdr/time_basis.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace tdr;

namespace {

double gram_error(const TimeBasis& b) {
    const auto& g = b.grid();
    const Eigen::MatrixXd G = b.values() * g.weights.asDiagonal() * b.values().transpose();
    return (G - Eigen::MatrixXd::Identity(b.size(), b.size())).cwiseAbs().maxCoeff();
}

// Same functions, quadrature on a grid refined `sub` times.
Eigen::MatrixXd refined_coupling(const TimeBasis& b, int sub) {
    const int N = b.size();
    const TimeGrid fine = TimeGrid::uniform(b.grid().T, (b.grid().count - 1) * sub + 1);
    Eigen::MatrixXd V(N, fine.count), D2(N, fine.count);
    for (int l = 0; l < fine.count; ++l) {
        const auto p = b.evaluate(fine.nodes[l]);
        V.col(l) = p.value;
        D2.col(l) = p.d2;
    }
    return V * fine.weights.asDiagonal() * D2.transpose();
}

} // namespace

TEST_SUITE("time_basis") {

TEST_CASE("time grid weights and nodes") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    CHECK(g.step == doctest::Approx(2.0 / 199).epsilon(1e-15));
    CHECK(std::abs(g.weights.sum() - 2.0) <= 1e-12 * 2.0);
    CHECK(g.nodes[0] == 0.0);
    CHECK(g.nodes[199] == doctest::Approx(2.0));
    CHECK(g.same_axis(TimeGrid::uniform(2.0, 200)));
    CHECK_FALSE(g.same_axis(TimeGrid::uniform(2.0, 201)));
}

TEST_CASE("first mode is the normalized exponential") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    const TimeBasis b = TimeBasis::build(2.0, 1, g);
    const double c = std::sqrt((std::exp(2.0) - std::exp(-2.0)) / 2.0);
    CHECK(c == doctest::Approx(1.90444).epsilon(1e-5));
    // discrete normalization differs from the continuous one by the trapezoid error
    for (int l = 0; l < g.count; l += 17)
        CHECK(b.values()(0, l) == doctest::Approx(std::exp(g.nodes[l] - 1.0) / c).epsilon(1e-4));
    CHECK((b.d1() - b.values()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((b.d2() - b.values()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("discrete orthonormality") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    CHECK(gram_error(TimeBasis::build(2.0, 5, g)) <= 1e-10);
    const TimeBasis b = TimeBasis::build(2.0, 40, g);
    CHECK(gram_error(b) <= 1e-8);
    CHECK(b.gram_deviation() == doctest::Approx(gram_error(b)).epsilon(1e-6));
}

TEST_CASE("derivatives do not vanish and agree with centered differences") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    const TimeBasis b = TimeBasis::build(2.0, 40, g);
    const double dt = g.step;
    for (int n = 0; n < 40; ++n) {
        CAPTURE(n);
        CHECK(b.d1().row(n).cwiseAbs().maxCoeff() > 1e-6);
        const double tol = 10 * dt * dt * b.d2().row(n).cwiseAbs().maxCoeff();
        double err = 0.0;
        for (int l = 1; l + 1 < g.count; ++l)
            err = std::max(err, std::abs((b.values()(n, l + 1) - b.values()(n, l - 1)) / (2 * dt) - b.d1()(n, l)));
        CHECK(err <= tol);
    }
}

TEST_CASE("pointwise evaluation matches the sampled rows") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    const TimeBasis b = TimeBasis::build(2.0, 12, g);
    for (int l : {0, 1, 57, 199}) {
        const auto p = b.evaluate(g.nodes[l]);
        CHECK((p.value - b.values().col(l)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((p.d1 - b.d1().col(l)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((p.d2 - b.d2().col(l)).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK((b.at_zero() - b.values().col(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("monomial coefficients are lower triangular with positive diagonal") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    const TimeBasis b = TimeBasis::build(2.0, 8, g);
    const Eigen::MatrixXd c = b.coeffs();
    for (int n = 0; n < 8; ++n) {
        CHECK(c(n, n) > 0.0);
        for (int k = n + 1; k < 8; ++k) CHECK(c(n, k) == 0.0);
    }
    // reconstruct Psi_n from the monomials at a few nodes
    for (int l : {0, 50, 120, 199}) {
        const double t = g.nodes[l];
        for (int n = 0; n < 8; ++n) {
            double s = 0.0;
            for (int k = 0; k <= n; ++k) s += c(n, k) * std::pow(t, k) * std::exp(t - 1.0);
            CHECK(s == doctest::Approx(b.values()(n, l)).epsilon(1e-8).scale(1.0));
        }
    }
}

TEST_CASE("projection round trip") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    const TimeBasis b = TimeBasis::build(2.0, 40, g);
    const Eigen::VectorXd e3 = project_time_series(b.values().row(2).transpose(), b);
    Eigen::VectorXd want = Eigen::VectorXd::Zero(40);
    want[2] = 1.0;
    CHECK((e3 - want).cwiseAbs().maxCoeff() <= 1e-8);

    CHECK(project_time_series(Eigen::VectorXd::Zero(200), b).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::VectorXd f = 2.0 * b.values().row(0).transpose() + 0.5 * b.values().row(3).transpose();
    want.setZero();
    want[0] = 2.0;
    want[3] = 0.5;
    CHECK((project_time_series(f, b) - want).cwiseAbs().maxCoeff() <= 1e-8);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd a(40);
        for (auto& v : a) v = U(rng);
        const Eigen::VectorXd s = b.values().transpose() * a;
        CHECK((project_time_series(s, b) - a).cwiseAbs().maxCoeff() <= 1e-7);
    }
}

TEST_CASE("insufficient sampling is rejected") {
    const TimeGrid g = TimeGrid::uniform(2.0, 100);
    CHECK_THROWS_AS(TimeBasis::build(2.0, 26, g), ConfigError);
    CHECK_THROWS_AS(TimeBasis::build(2.0, 0, g), ConfigError);
    CHECK_NOTHROW(TimeBasis::build(2.0, 25, g));
}

TEST_CASE("coupling matrix") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    const TimeBasis b1 = TimeBasis::build(2.0, 1, g);
    CHECK(std::abs(coupling_matrix(b1)(0, 0) - 1.0) <= 1e-8);

    const TimeBasis b = TimeBasis::build(2.0, 6, g);
    const Eigen::MatrixXd S = coupling_matrix(b);
    const Eigen::MatrixXd S2 = b.values() * g.weights.asDiagonal() * b.d2().transpose();
    CHECK((S - S2).cwiseAbs().maxCoeff() < 1e-12);

    // a refined quadrature of the same functions agrees to the trapezoid error of the coarse grid
    const Eigen::MatrixXd R = refined_coupling(b, 10);
    CHECK(std::abs(S(0, 0) - R(0, 0)) <= 1e-4);
}

TEST_CASE("coupling matrix quadrature converges at second order") {
    double err[2];
    int k = 0;
    for (int NT : {101, 201}) {
        const TimeGrid g = TimeGrid::uniform(2.0, NT);
        const TimeBasis b = TimeBasis::build(2.0, 3, g);
        const Eigen::MatrixXd S = coupling_matrix(b);
        err[k++] = (S - refined_coupling(b, 16)).cwiseAbs().maxCoeff();
    }
    const double ratio = err[0] / err[1];
    CAPTURE(ratio);
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
}

TEST_CASE("kernel cumulatives") {
    const TimeGrid g = TimeGrid::uniform(2.0, 200);
    const TimeBasis b = TimeBasis::build(2.0, 10, g);
    CHECK(kernel_cumulatives(b, [](double) { return 0.0; }).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd I1 = kernel_cumulatives(b, [](double) { return 1.0; });
    CHECK(I1.col(0).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::VectorXd full = b.values() * g.weights;
    CHECK((I1.col(g.count - 1) - full).cwiseAbs().maxCoeff() < 1e-13);

    // 1/(1+s^2): compare with a 10x refined cumulative trapezoid; the coarse
    // error is bounded by t h^2/12 max|(K Psi_n)''|.
    auto K = [](double s) { return 1.0 / (1.0 + s * s); };
    auto K1 = [](double s) { return -2.0 * s / std::pow(1.0 + s * s, 2); };
    auto K2 = [](double s) { return (6.0 * s * s - 2.0) / std::pow(1.0 + s * s, 3); };
    const Eigen::MatrixXd I = kernel_cumulatives(b, K);
    const int sub = 10;
    for (int n : {0, 1, 4, 9}) {
        CAPTURE(n);
        double bound = 0.0, acc = 0.0, err = 0.0;
        for (int l = 1; l < g.count; ++l) {
            const double a = g.nodes[l - 1], hs = g.step / sub;
            for (int k = 0; k < sub; ++k) {
                const double s0 = a + k * hs, s1 = s0 + hs;
                const auto p0 = b.evaluate(s0), p1 = b.evaluate(s1);
                acc += 0.5 * hs * (K(s0) * p0.value[n] + K(s1) * p1.value[n]);
                bound = std::max(bound, std::abs(K2(s0) * p0.value[n] + 2 * K1(s0) * p0.d1[n] + K(s0) * p0.d2[n]));
            }
            err = std::max(err, std::abs(acc - I(n, l)));
        }
        CHECK(err <= 2.0 * g.step * g.step / 12.0 * bound + 1e-12);
    }
}

TEST_CASE("basis csv export") {
    const TimeGrid g = TimeGrid::uniform(1.0, 20);
    const TimeBasis b = TimeBasis::build(1.0, 2, g);
    std::ostringstream os;
    write_basis_csv(os, b);
    std::istringstream is(os.str());
    std::string line;
    int rows = 0;
    std::getline(is, line);
    CHECK(line == "n,t,psi,dpsi,ddpsi");
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 40);
}

}
