#include "tdr/forward.hpp"

#include "tdr/errors.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace tdr {

double cutoff(double s, double M) {
    if (s <= M) return 1.0;
    if (s >= 2.0 * M) return 0.0;
    const double q = (s - M) / M;
    return 1.0 - q * q * (3.0 - 2.0 * q);
}

double NonlinearSpec::operator()(const NonlinearArgs& a) const {
    const double f = evaluator(a);
    if (!clamp) return f;
    return cutoff(a.u * a.u + a.ux * a.ux + a.uy * a.uy, *clamp) * f;
}

NonlinearityHistory::NonlinearityHistory(const NonlinearSpec& spec, const Grid2D& grid, const TimeGrid& time)
    : spec_(spec), grid_(grid), time_(time), prev_(grid), last_(grid), memory_(grid) {}

void NonlinearityHistory::push(const ScalarField& slice) {
    if (count_ >= time_.count) throw ConfigError("nonlinearity history: more slices than time nodes");
    if (count_ > 0) {
        const double a = spec_.K(time_.nodes[count_ - 1]);
        const double b = spec_.K(time_.nodes[count_]);
        memory_.values() += 0.5 * time_.step * (a * last_.values() + b * slice.values());
    }
    prev_ = last_;
    last_ = slice;
    ++count_;
}

ScalarField NonlinearityHistory::evaluate() const {
    if (count_ < 2) throw ConfigError("nonlinearity history: need two slices");
    const double t = time_.nodes[count_ - 1];
    const auto [gx, gy] = gradient(last_);
    ScalarField out(grid_);
    NonlinearArgs a;
    a.t = t;
    for (int j = 0; j < grid_.count(); ++j)
        for (int i = 0; i < grid_.count(); ++i) {
            a.x = grid_.x(i);
            a.y = grid_.y(j);
            a.u = last_(i, j);
            a.ux = gx(i, j);
            a.uy = gy(i, j);
            a.ut = (last_(i, j) - prev_(i, j)) / time_.step;
            a.memory = memory_(i, j);
            out(i, j) = spec_(a);
        }
    return out;
}

WaveField simulate(const ScalarField& g, const NonlinearSpec& spec, const Grid2D& grid, const TimeGrid& time) {
    if (g.grid() != grid) throw GridMismatch("simulate: source lives on another grid");
    const int n = grid.count();
    const int m = n - 2;
    const double h2 = grid.step() * grid.step();
    const double idt2 = 1.0 / (time.step * time.step);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * m * m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
            const int k = j * m + i;
            trip.emplace_back(k, k, idt2 + 4.0 / h2);
            if (i > 0) trip.emplace_back(k, k - 1, -1.0 / h2);
            if (i < m - 1) trip.emplace_back(k, k + 1, -1.0 / h2);
            if (j > 0) trip.emplace_back(k, k - m, -1.0 / h2);
            if (j < m - 1) trip.emplace_back(k, k + m, -1.0 / h2);
        }
    Eigen::SparseMatrix<double> A(m * m, m * m);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(A);
    if (llt.info() != Eigen::Success) throw SolveFailure("simulate: factorization of the implicit operator failed");

    ScalarField g0 = g;
    g0.zero_boundary();

    WaveField u{grid, time, {}};
    u.slices.reserve(time.count);
    u.slices.push_back(g0);
    u.slices.push_back(g0);

    NonlinearityHistory hist(spec, grid, time);
    hist.push(g0);
    hist.push(g0);

    Eigen::VectorXd rhs(m * m);
    for (int l = 2; l < time.count; ++l) {
        const ScalarField F = hist.evaluate();
        const ScalarField& u1 = u.slices[l - 1];
        const ScalarField& u2 = u.slices[l - 2];
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i)
                rhs[j * m + i] = (2.0 * u1(i + 1, j + 1) - u2(i + 1, j + 1)) * idt2 + F(i + 1, j + 1);
        const Eigen::VectorXd w = llt.solve(rhs);
        if (llt.info() != Eigen::Success) throw SolveFailure("simulate: back-substitution failed");
        ScalarField next(grid);
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i) next(i + 1, j + 1) = w[j * m + i];
        if (!next.finite()) throw SolveFailure("simulate: non-finite state at step " + std::to_string(l));
        hist.push(next);
        u.slices.push_back(std::move(next));
    }
    return u;
}

ScalarField evaluate_nonlinearity_history(const WaveField& u, const NonlinearSpec& spec, const TimeGrid& time,
                                          int l) {
    if (l < 2 || l > static_cast<int>(u.slices.size()))
        throw ConfigError("nonlinearity history: step index out of range");
    NonlinearityHistory hist(spec, u.grid, time);
    for (int k = 0; k < l; ++k) hist.push(u.slices[k]);
    return hist.evaluate();
}

BoundaryTimeData boundary_trace(const WaveField& u) {
    BoundaryTimeData h;
    h.grid = u.grid;
    h.time = u.time;
    h.values.resize(u.grid.boundary().size(), u.slices.size());
    for (std::size_t l = 0; l < u.slices.size(); ++l) h.values.col(l) = normal_derivative(u.slices[l]);
    return h;
}

BoundaryTimeData add_noise(const BoundaryTimeData& h, double delta, std::uint64_t seed) {
    if (!(delta >= 0.0)) throw ConfigError("noise: delta must be nonnegative");
    BoundaryTimeData out = h;
    out.delta = delta;
    out.seed = seed;
    if (delta == 0.0) return out;
    // Mantissa-exact uniform from raw 64-bit draws, identical on every platform.
    std::mt19937_64 rng(seed);
    for (Eigen::Index b = 0; b < h.values.rows(); ++b)
        for (Eigen::Index l = 0; l < h.values.cols(); ++l) {
            const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            const double rho = 2.0 * unit - 1.0;
            out.values(b, l) = h.values(b, l) * (1.0 + delta * rho);
        }
    return out;
}

BoundaryTimeData restrict_data(const BoundaryTimeData& fine, const Grid2D& coarse, const TimeGrid& time) {
    const int nf = fine.grid.count() - 1, nc = coarse.count() - 1;
    if (fine.grid.R() != coarse.R() || nf % nc != 0)
        throw GridMismatch("restrict: coarse grid nodes are not a subset of the fine grid");
    if (std::abs(fine.time.T - time.T) > 1e-12) throw GridMismatch("restrict: final times differ");
    const int r = nf / nc;

    std::vector<int> map;
    const auto& fb = fine.grid.boundary();
    for (const auto& b : coarse.boundary()) {
        int found = -1;
        for (std::size_t k = 0; k < fb.size(); ++k)
            if (fb[k].i == b.i * r && fb[k].j == b.j * r) found = static_cast<int>(k);
        map.push_back(found);
    }

    BoundaryTimeData out;
    out.grid = coarse;
    out.time = time;
    out.delta = fine.delta;
    out.seed = fine.seed;
    out.values.resize(coarse.boundary().size(), time.count);
    for (int l = 0; l < time.count; ++l) {
        const double s = time.nodes[l] / fine.time.step;
        int a = std::min(static_cast<int>(std::floor(s)), fine.time.count - 2);
        const double f = s - a;
        for (std::size_t b = 0; b < map.size(); ++b)
            out.values(b, l) = (1.0 - f) * fine.values(map[b], a) + f * fine.values(map[b], a + 1);
    }
    return out;
}

void write_boundary_csv(std::ostream& os, const BoundaryTimeData& h) {
    os.precision(17);
    os << "# R=" << h.grid.R() << " Nx=" << h.grid.count() << " NT=" << h.time.count << " T=" << h.time.T
       << " delta=" << h.delta << " seed=" << h.seed << '\n';
    os << "edge,i,j,t_index,value\n";
    const auto& bd = h.grid.boundary();
    for (std::size_t b = 0; b < bd.size(); ++b)
        for (int l = 0; l < h.time.count; ++l)
            os << bd[b].edge << ',' << bd[b].i << ',' << bd[b].j << ',' << l << ',' << h.values(b, l) << '\n';
}

BoundaryTimeData read_boundary_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("boundary csv: empty input");
    double R = 0, T = 0, delta = 0;
    int nx = 0, nt = 0;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "# R=%lf Nx=%d NT=%d T=%lf delta=%lf seed=%llu", &R, &nx, &nt, &T, &delta,
                    &seed) != 6)
        throw ConfigError("boundary csv: malformed header '" + line + "'");
    BoundaryTimeData h;
    h.grid = Grid2D(R, nx);
    h.time = TimeGrid::uniform(T, nt);
    h.delta = delta;
    h.seed = seed;
    h.values.setZero(h.grid.boundary().size(), nt);
    std::getline(is, line);

    const auto& bd = h.grid.boundary();
    std::vector<int> lookup(h.grid.size(), -1);
    for (std::size_t k = 0; k < bd.size(); ++k) lookup[h.grid.index(bd[k].i, bd[k].j)] = static_cast<int>(k);
    Eigen::Index rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string edge, si, sj, sl, sv;
        std::getline(ss, edge, ',');
        std::getline(ss, si, ',');
        std::getline(ss, sj, ',');
        std::getline(ss, sl, ',');
        std::getline(ss, sv, ',');
        const int i = std::stoi(si), j = std::stoi(sj), l = std::stoi(sl);
        if (i < 0 || j < 0 || i >= nx || j >= nx || l < 0 || l >= nt || lookup[h.grid.index(i, j)] < 0)
            throw ConfigError("boundary csv: sample outside the boundary/time grid: " + line);
        h.values(lookup[h.grid.index(i, j)], l) = std::stod(sv);
        ++rows;
    }
    if (rows != h.values.size()) throw ConfigError("boundary csv: expected one row per boundary node and time");
    return h;
}

} // namespace tdr
