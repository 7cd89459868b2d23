#pragma once

#include "tdr/forward.hpp"
#include "tdr/grid.hpp"
#include "tdr/time_basis.hpp"

#include <iosfwd>

namespace tdr {

// h_m on boundary nodes: values(b, m-1).
struct IndirectData {
    Grid2D grid;
    Eigen::MatrixXd values;
    int modes() const { return static_cast<int>(values.cols()); }
};

// Lap U - S U + F(U) = 0 in the domain, U = 0 and d_nu U = h on the boundary.
struct ReducedSystem {
    Eigen::MatrixXd S;
    NonlinearSpec spec;
    TimeBasis basis;
    Eigen::MatrixXd cumulatives;
    Grid2D grid;
    IndirectData hvec;
};

ReducedSystem make_reduced_system(const BoundaryTimeData& h, const NonlinearSpec& spec, const TimeBasis& basis);

IndirectData project_boundary_data(const BoundaryTimeData& h, const TimeBasis& basis);

// Field m is sum_l w_l F(x, t_l, u, grad u, u_t, memory) Psi_m(t_l) with u
// rebuilt from the modes; zero on boundary nodes.
ModeStack nonlinearity_projection(const ModeStack& U, const NonlinearSpec& spec, const TimeBasis& basis,
                                  const Eigen::MatrixXd& cumulatives);

struct ReducedResidual {
    ModeStack interior;        // Lap U - S U + F(U), zero on the boundary
    Eigen::MatrixXd boundary;  // d_nu U - h, boundary node x mode
};

ReducedResidual reduced_residual(const ModeStack& U, const ReducedSystem& sys);

void write_indirect_csv(std::ostream& os, const IndirectData& h);

} // namespace tdr
