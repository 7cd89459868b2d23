#pragma once

#include "tdr/grid.hpp"
#include "tdr/time_basis.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tdr {

struct NonlinearArgs {
    double x = 0, y = 0, t = 0;
    double u = 0, ux = 0, uy = 0, ut = 0;
    double memory = 0;  // int_0^t K(s) u(x, s) ds
};

struct NonlinearSpec {
    std::string name;
    std::function<double(const NonlinearArgs&)> evaluator;
    std::function<double(double)> kernel;  // empty means K = 0
    std::optional<double> clamp;           // M of the smooth cutoff on u^2 + |grad u|^2

    // evaluator(a), multiplied by the cutoff when clamp is set.
    double operator()(const NonlinearArgs& a) const;
    double K(double t) const { return kernel ? kernel(t) : 0.0; }
};

// 1 for s <= M, 0 for s >= 2M, C^1 smoothstep between.
double cutoff(double s, double M);

struct WaveField {
    Grid2D grid;
    TimeGrid time;
    std::vector<ScalarField> slices;
};

struct BoundaryTimeData {
    Grid2D grid;
    TimeGrid time;
    Eigen::MatrixXd values;  // boundary node x time node
    double delta = 0.0;
    std::uint64_t seed = 0;
};

// Running state of the explicit nonlinearity: keeps the cumulative trapezoid
// of K(s) u(x, s) as slices are appended.
class NonlinearityHistory {
  public:
    NonlinearityHistory(const NonlinearSpec& spec, const Grid2D& grid, const TimeGrid& time);

    void push(const ScalarField& slice);
    int size() const { return count_; }

    // F at the last pushed slice t_{l-1}, with u_t by backward difference.
    // Needs at least two slices.
    ScalarField evaluate() const;

  private:
    const NonlinearSpec& spec_;
    Grid2D grid_;
    TimeGrid time_;
    ScalarField prev_, last_, memory_;
    int count_ = 0;
};

// Semi-implicit scheme: u^0 = u^1 = g, then
// (1/dt^2 - Lap) u^l = (2u^{l-1} - u^{l-2})/dt^2 + F(u^{l-1}), u^l = 0 on the boundary.
WaveField simulate(const ScalarField& g, const NonlinearSpec& spec, const Grid2D& grid, const TimeGrid& time);

// F at t_{l-1} computed from slices 0..l-1 of u (0-based l >= 2).
ScalarField evaluate_nonlinearity_history(const WaveField& u, const NonlinearSpec& spec, const TimeGrid& time,
                                          int l);

BoundaryTimeData boundary_trace(const WaveField& u);

// Each sample is multiplied by (1 + delta*rho), rho uniform on [-1, 1]. Draws
// run over boundary nodes in grid order, then over time nodes.
BoundaryTimeData add_noise(const BoundaryTimeData& h, double delta, std::uint64_t seed);

// Samples fine-grid data on a coarser grid whose nodes are a subset of the
// fine nodes; time is linearly interpolated.
BoundaryTimeData restrict_data(const BoundaryTimeData& fine, const Grid2D& coarse, const TimeGrid& time);

void write_boundary_csv(std::ostream& os, const BoundaryTimeData& h);
BoundaryTimeData read_boundary_csv(std::istream& is);

} // namespace tdr
