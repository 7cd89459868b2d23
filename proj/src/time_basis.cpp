#include "tdr/time_basis.hpp"

#include "tdr/errors.hpp"

#include <cmath>
#include <ostream>
#include <string>

namespace tdr {

TimeGrid TimeGrid::uniform(double T, int count) {
    if (!(T > 0.0)) throw ConfigError("time grid: T must be positive");
    if (count < 2) throw ConfigError("time grid: need at least two nodes");
    TimeGrid g;
    g.T = T;
    g.count = count;
    g.step = T / (count - 1);
    g.nodes.resize(count);
    g.weights.setConstant(count, g.step);
    for (int l = 0; l < count; ++l) g.nodes[l] = l * g.step;
    g.nodes[count - 1] = T;
    g.weights[0] = g.weights[count - 1] = 0.5 * g.step;
    return g;
}

bool TimeGrid::same_axis(const TimeGrid& other) const {
    return count == other.count && std::abs(T - other.T) <= 1e-12 * std::max(1.0, std::abs(T));
}

namespace {

// Runs the recurrence at a single t, filling q_k, q_k', q_k'' for k < N.
void recur(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, double t,
           Eigen::VectorXd& q, Eigen::VectorXd& dq, Eigen::VectorXd& ddq) {
    const int N = static_cast<int>(alpha.size());
    q.resize(N);
    dq.resize(N);
    ddq.resize(N);
    double qm = 0.0, dqm = 0.0, ddqm = 0.0;
    double qc = 1.0 / beta[0], dqc = 0.0, ddqc = 0.0;
    for (int k = 0; k < N; ++k) {
        q[k] = qc;
        dq[k] = dqc;
        ddq[k] = ddqc;
        if (k + 1 == N) break;
        const double s = t - alpha[k];
        const double qn = (s * qc - beta[k] * qm) / beta[k + 1];
        const double dqn = (qc + s * dqc - beta[k] * dqm) / beta[k + 1];
        const double ddqn = (2.0 * dqc + s * ddqc - beta[k] * ddqm) / beta[k + 1];
        qm = qc;
        dqm = dqc;
        ddqm = ddqc;
        qc = qn;
        dqc = dqn;
        ddqc = ddqn;
    }
}

} // namespace

TimeBasis TimeBasis::build(double T, int N, const TimeGrid& grid) {
    if (N < 1) throw ConfigError("basis: N must be at least 1");
    if (!(T > 0.0)) throw ConfigError("basis: T must be positive");
    if (std::abs(grid.T - T) > 1e-12 * T) throw GridMismatch("basis: T differs from time grid");
    if (grid.count < 4 * N)
        throw ConfigError("basis: need N_T >= 4N (N_T=" + std::to_string(grid.count) +
                          ", N=" + std::to_string(N) + ")");

    const int L = grid.count;
    const Eigen::ArrayXd& t = grid.nodes.array();
    const Eigen::ArrayXd mu = grid.weights.array() * (2.0 * t - T).exp();
    auto dot = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return (mu * a.array() * b.array()).sum();
    };

    TimeBasis B;
    B.grid_ = grid;
    B.alpha_.resize(N);
    B.beta_.resize(N + 1);

    Eigen::MatrixXd Q(L, N + 1);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(L);
    B.beta_[0] = std::sqrt(dot(v, v));
    Q.col(0) = v / B.beta_[0];
    for (int k = 0; k < N; ++k) {
        v = (t * Q.col(k).array()).matrix();
        const double scale = std::sqrt(dot(v, v));
        B.alpha_[k] = dot(v, Q.col(k));
        v -= B.alpha_[k] * Q.col(k);
        if (k > 0) v -= B.beta_[k] * Q.col(k - 1);
        for (int pass = 0; pass < 2; ++pass)
            for (int j = 0; j <= k; ++j) v -= dot(v, Q.col(j)) * Q.col(j);
        const double nb = std::sqrt(dot(v, v));
        if (!(nb > 1e-12 * scale)) {
            if (k + 1 < N)
                throw ConditioningFailure("basis: discrete measure exhausted at N=" + std::to_string(k + 1),
                                          k + 1);
        }
        B.beta_[k + 1] = nb;
        Q.col(k + 1) = v / nb;
    }

    B.values_.resize(N, L);
    B.d1_.resize(N, L);
    B.d2_.resize(N, L);
    Eigen::VectorXd q, dq, ddq;
    for (int l = 0; l < L; ++l) {
        recur(B.alpha_, B.beta_, t[l], q, dq, ddq);
        const double e = std::exp(t[l] - 0.5 * T);
        B.values_.col(l) = e * q;
        B.d1_.col(l) = e * (q + dq);
        B.d2_.col(l) = e * (q + 2.0 * dq + ddq);
    }
    B.at_zero_ = B.evaluate(0.0).value;

    // Gram check, block by block, so a failure can name the largest usable N.
    const Eigen::MatrixXd Wv = B.values_ * grid.weights.asDiagonal();
    const Eigen::MatrixXd G = Wv * B.values_.transpose();
    for (int n = 1; n <= N; ++n) {
        const double dev =
            (G.topLeftCorner(n, n) - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
        if (!(dev <= 1e-8))
            throw ConditioningFailure("basis: Gram deviation " + std::to_string(dev) + " at N=" +
                                          std::to_string(n),
                                      n - 1);
    }
    return B;
}

TimeBasis::Point TimeBasis::evaluate(double t) const {
    Eigen::VectorXd q, dq, ddq;
    recur(alpha_, beta_, t, q, dq, ddq);
    const double e = std::exp(t - 0.5 * grid_.T);
    return {e * q, e * (q + dq), e * (q + 2.0 * dq + ddq)};
}

Eigen::MatrixXd TimeBasis::coeffs() const {
    const int N = size();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(N);
    Eigen::VectorXd cur = Eigen::VectorXd::Zero(N);
    cur[0] = 1.0 / beta_[0];
    for (int k = 0; k < N; ++k) {
        c.row(k) = cur.transpose();
        if (k + 1 == N) break;
        Eigen::VectorXd next = Eigen::VectorXd::Zero(N);
        for (int j = 0; j <= k; ++j) {
            next[j + 1] += cur[j];
            next[j] -= alpha_[k] * cur[j];
            next[j] -= beta_[k] * prev[j];
        }
        next /= beta_[k + 1];
        prev = cur;
        cur = next;
    }
    return c;
}

double TimeBasis::gram_deviation() const {
    const Eigen::MatrixXd G = values_ * grid_.weights.asDiagonal() * values_.transpose();
    return (G - Eigen::MatrixXd::Identity(size(), size())).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd coupling_matrix(const TimeBasis& basis) {
    return basis.values() * basis.grid().weights.asDiagonal() * basis.d2().transpose();
}

Eigen::MatrixXd coupling_matrix(const TimeBasis& basis, const TimeGrid& grid) {
    if (!basis.grid().same_axis(grid)) throw GridMismatch("coupling matrix: basis built on another grid");
    return coupling_matrix(basis);
}

Eigen::MatrixXd kernel_cumulatives(const TimeBasis& basis, const std::function<double(double)>& K) {
    const TimeGrid& g = basis.grid();
    const int N = basis.size();
    Eigen::VectorXd k = Eigen::VectorXd::Zero(g.count);
    for (int l = 0; K && l < g.count; ++l) k[l] = K(g.nodes[l]);
    Eigen::MatrixXd I = Eigen::MatrixXd::Zero(N, g.count);
    if (!K) return I;
    for (int l = 1; l < g.count; ++l)
        I.col(l) = I.col(l - 1) +
                   0.5 * g.step * (k[l - 1] * basis.values().col(l - 1) + k[l] * basis.values().col(l));
    return I;
}

Eigen::VectorXd project_time_series(const Eigen::Ref<const Eigen::VectorXd>& f, const TimeBasis& basis) {
    if (f.size() != basis.grid().count) throw GridMismatch("projection: sample count differs from grid");
    return basis.values() * basis.grid().weights.cwiseProduct(f);
}

void write_basis_csv(std::ostream& os, const TimeBasis& basis) {
    os << "n,t,psi,dpsi,ddpsi\n";
    os.precision(17);
    for (int n = 0; n < basis.size(); ++n)
        for (int l = 0; l < basis.grid().count; ++l)
            os << n + 1 << ',' << basis.grid().nodes[l] << ',' << basis.values()(n, l) << ','
               << basis.d1()(n, l) << ',' << basis.d2()(n, l) << '\n';
}

} // namespace tdr
