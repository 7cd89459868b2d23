#include "tdr/reduction.hpp"

#include "tdr/errors.hpp"

#include <ostream>

namespace tdr {

IndirectData project_boundary_data(const BoundaryTimeData& h, const TimeBasis& basis) {
    if (!h.time.same_axis(basis.grid())) throw GridMismatch("indirect data: time axis differs from the basis grid");
    IndirectData out;
    out.grid = h.grid;
    out.values = h.values * basis.grid().weights.asDiagonal() * basis.values().transpose();
    return out;
}

ReducedSystem make_reduced_system(const BoundaryTimeData& h, const NonlinearSpec& spec, const TimeBasis& basis) {
    ReducedSystem sys{coupling_matrix(basis),
                      spec,
                      basis,
                      kernel_cumulatives(basis, [&](double t) { return spec.K(t); }),
                      h.grid,
                      project_boundary_data(h, basis)};
    return sys;
}

ModeStack nonlinearity_projection(const ModeStack& U, const NonlinearSpec& spec, const TimeBasis& basis,
                                  const Eigen::MatrixXd& cumulatives) {
    const Grid2D& g = U.grid();
    const int N = basis.size();
    if (U.modes() != N) throw GridMismatch("nonlinearity projection: mode count differs from basis");
    const std::vector<int>& in = g.interior();
    const int P = static_cast<int>(in.size());
    const int L = basis.grid().count;

    Eigen::MatrixXd Uc(P, N), Gx(P, N), Gy(P, N);
    for (int m = 0; m < N; ++m) {
        const ScalarField f = U.field(m);
        const auto [gx, gy] = gradient(f);
        for (int p = 0; p < P; ++p) {
            Uc(p, m) = f.values()[in[p]];
            Gx(p, m) = gx.values()[in[p]];
            Gy(p, m) = gy.values()[in[p]];
        }
    }
    const Eigen::MatrixXd u = Uc * basis.values();
    const Eigen::MatrixXd ut = Uc * basis.d1();
    const Eigen::MatrixXd ux = Gx * basis.values();
    const Eigen::MatrixXd uy = Gy * basis.values();
    const Eigen::MatrixXd mem = Uc * cumulatives;

    Eigen::MatrixXd F(P, L);
    NonlinearArgs a;
    for (int l = 0; l < L; ++l) {
        a.t = basis.grid().nodes[l];
        for (int p = 0; p < P; ++p) {
            const int k = in[p];
            a.x = g.x(k % g.count());
            a.y = g.y(k / g.count());
            a.u = u(p, l);
            a.ux = ux(p, l);
            a.uy = uy(p, l);
            a.ut = ut(p, l);
            a.memory = mem(p, l);
            F(p, l) = spec(a);
        }
    }
    if (!F.allFinite())
        throw NonFiniteNonlinearity("nonlinearity '" + spec.name + "' returned a non-finite value");

    const Eigen::MatrixXd f = F * basis.grid().weights.asDiagonal() * basis.values().transpose();
    ModeStack out(g, N);
    for (int p = 0; p < P; ++p) out.data().row(in[p]) = f.row(p);
    return out;
}

ReducedResidual reduced_residual(const ModeStack& U, const ReducedSystem& sys) {
    const int N = U.modes();
    const ModeStack F = nonlinearity_projection(U, sys.spec, sys.basis, sys.cumulatives);
    ReducedResidual r{ModeStack(U.grid(), N), Eigen::MatrixXd(U.grid().boundary().size(), N)};
    for (int m = 0; m < N; ++m) {
        const ScalarField f = U.field(m);
        r.interior.set_field(m, laplacian(f));
        r.boundary.col(m) = normal_derivative(f);
    }
    ModeStack::Storage SU = U.data() * sys.S.transpose();
    for (int k : U.grid().interior()) r.interior.data().row(k) += F.data().row(k) - SU.row(k);
    r.boundary -= sys.hvec.values;
    return r;
}

void write_indirect_csv(std::ostream& os, const IndirectData& h) {
    os.precision(17);
    os << "# R=" << h.grid.R() << " Nx=" << h.grid.count() << " N=" << h.modes() << '\n';
    os << "edge,i,j,m,value\n";
    const auto& bd = h.grid.boundary();
    for (std::size_t b = 0; b < bd.size(); ++b)
        for (int m = 0; m < h.modes(); ++m)
            os << bd[b].edge << ',' << bd[b].i << ',' << bd[b].j << ',' << m + 1 << ',' << h.values(b, m) << '\n';
}

} // namespace tdr
