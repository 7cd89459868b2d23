#include "tdr/grid.hpp"

#include "tdr/errors.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace tdr {

Grid2D::Grid2D(double R, int count) : R_(R), n_(count) {
    if (!(R > 0.0)) throw ConfigError("grid: R must be positive");
    if (count < 3) throw ConfigError("grid: need at least 3 points per axis");
    h_ = 2.0 * R / (count - 1);

    const int m = n_ - 1;
    auto add = [&](int i, int j, int nx, int ny, const char* edge) {
        BoundaryNode b;
        b.i = i;
        b.j = j;
        b.nx = nx;
        b.ny = ny;
        b.weight = h_;
        b.edge = edge;
        boundary_.push_back(b);
    };
    add(0, 0, -1, -1, "bottom-left");
    for (int i = 1; i < m; ++i) add(i, 0, 0, -1, "bottom");
    add(m, 0, 1, -1, "bottom-right");
    for (int j = 1; j < m; ++j) add(m, j, 1, 0, "right");
    add(m, m, 1, 1, "top-right");
    for (int i = m - 1; i > 0; --i) add(i, m, 0, 1, "top");
    add(0, m, -1, 1, "top-left");
    for (int j = m - 1; j > 0; --j) add(0, j, -1, 0, "left");

    for (int j = 1; j < m; ++j)
        for (int i = 1; i < m; ++i) interior_.push_back(index(i, j));
}

ScalarField::ScalarField(const Grid2D& g, Eigen::VectorXd v) : grid_(g), v_(std::move(v)) {
    if (v_.size() != g.size()) throw GridMismatch("scalar field: value count differs from grid");
}

void ScalarField::zero_boundary() {
    for (const auto& b : grid_.boundary()) (*this)(b.i, b.j) = 0.0;
}

ModeStack::ModeStack(const Grid2D& g, Storage d) : grid_(g), d_(std::move(d)) {
    if (d_.rows() != g.size()) throw GridMismatch("mode stack: node count differs from grid");
}

ScalarField laplacian(const ScalarField& f) {
    const Grid2D& g = f.grid();
    const int n = g.count();
    const double ih2 = 1.0 / (g.step() * g.step());
    ScalarField out(g);
    for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i)
            out(i, j) = (f(i + 1, j) + f(i - 1, j) + f(i, j + 1) + f(i, j - 1) - 4.0 * f(i, j)) * ih2;
    return out;
}

namespace {

// d/dx along axis 0 (x) or 1 (y) at node (i, j).
double axis_derivative(const ScalarField& f, int i, int j, int axis) {
    const Grid2D& g = f.grid();
    const int n = g.count();
    const double h = g.step();
    auto at = [&](int k) { return axis == 0 ? f(k, j) : f(i, k); };
    const int k = axis == 0 ? i : j;
    if (k == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
    if (k == n - 1) return (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
    return (at(k + 1) - at(k - 1)) / (2.0 * h);
}

} // namespace

std::pair<ScalarField, ScalarField> gradient(const ScalarField& f) {
    const Grid2D& g = f.grid();
    ScalarField gx(g), gy(g);
    for (int j = 0; j < g.count(); ++j)
        for (int i = 0; i < g.count(); ++i) {
            gx(i, j) = axis_derivative(f, i, j, 0);
            gy(i, j) = axis_derivative(f, i, j, 1);
        }
    return {gx, gy};
}

Eigen::VectorXd normal_derivative(const ScalarField& f) {
    const Grid2D& g = f.grid();
    const auto& bd = g.boundary();
    Eigen::VectorXd out(bd.size());
    for (std::size_t k = 0; k < bd.size(); ++k) {
        const auto& b = bd[k];
        double s = 0.0;
        int terms = 0;
        if (b.nx != 0) {
            s += b.nx * axis_derivative(f, b.i, b.j, 0);
            ++terms;
        }
        if (b.ny != 0) {
            s += b.ny * axis_derivative(f, b.i, b.j, 1);
            ++terms;
        }
        out[k] = s / terms;
    }
    return out;
}

Eigen::VectorXd domain_weights(const Grid2D& g) {
    const int n = g.count();
    Eigen::VectorXd w1 = Eigen::VectorXd::Constant(n, g.step());
    w1[0] = w1[n - 1] = 0.5 * g.step();
    Eigen::VectorXd w(g.size());
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) w[g.index(i, j)] = w1[i] * w1[j];
    return w;
}

double integrate_domain(const ScalarField& f) { return domain_weights(f.grid()).dot(f.values()); }

double integrate_boundary(const Grid2D& g, const Eigen::Ref<const Eigen::VectorXd>& values) {
    const auto& bd = g.boundary();
    if (values.size() != static_cast<Eigen::Index>(bd.size()))
        throw GridMismatch("boundary integral: value count differs from boundary");
    double s = 0.0;
    for (std::size_t k = 0; k < bd.size(); ++k) s += bd[k].weight * values[k];
    return s;
}

void write_field_csv(std::ostream& os, const ScalarField& f) {
    const Grid2D& g = f.grid();
    os.precision(17);
    os << "# R=" << g.R() << " Nx=" << g.count() << '\n';
    for (int j = 0; j < g.count(); ++j) {
        for (int i = 0; i < g.count(); ++i) {
            if (i) os << ',';
            os << f(i, j);
        }
        os << '\n';
    }
}

ScalarField read_field_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# R=", 0) != 0)
        throw ConfigError("field csv: missing '# R=<R> Nx=<N>' header");
    double R = 0.0;
    int n = 0;
    if (std::sscanf(line.c_str(), "# R=%lf Nx=%d", &R, &n) != 2)
        throw ConfigError("field csv: malformed header '" + line + "'");
    Grid2D g(R, n);
    ScalarField f(g);
    for (int j = 0; j < n; ++j) {
        if (!std::getline(is, line)) throw ConfigError("field csv: too few rows");
        std::stringstream ss(line);
        std::string cell;
        for (int i = 0; i < n; ++i) {
            if (!std::getline(ss, cell, ',')) throw ConfigError("field csv: too few columns");
            f(i, j) = std::stod(cell);
        }
    }
    return f;
}

} // namespace tdr
