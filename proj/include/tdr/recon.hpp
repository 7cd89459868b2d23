#pragma once

#include "tdr/forward.hpp"
#include "tdr/grid.hpp"
#include "tdr/time_basis.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace tdr {

struct Inclusion {
    std::string name;
    double value = 0.0;
    std::function<bool(double, double)> inside;
};

struct TestCase {
    std::string name;
    NonlinearSpec spec;
    std::vector<Inclusion> inclusions;

    ScalarField g_true(const Grid2D& grid) const;
};

// Singular-value floor for the 1/sqrt(u^2 + |grad u|^2) nonlinearity.
inline constexpr double kSingularFloor = 1e-6;

std::vector<TestCase> builtin_tests();
// "1", "2", "3" or "test1" ... ; throws ConfigError otherwise.
TestCase builtin_test(const std::string& id);

// sum_n u_n(x) Psi_n(0).
ScalarField reconstruct_g(const ModeStack& U, const TimeBasis& basis);

struct CutoffCurve {
    int N = 0;
    Eigen::VectorXd e;  // |h(x*, t_l) - sum_n h_n Psi_n(t_l)|
    double sup = 0.0;
};

// Index into grid.boundary() of the node closest to (x, y); throws if the
// closest node is farther than half a step.
int find_boundary_node(const Grid2D& grid, double x, double y);

// Smallest candidate N with sup_t e_N < threshold. Curves for every
// candidate are written to *curves when given, also on failure.
int select_cutoff(const BoundaryTimeData& h, int x_star, const std::vector<int>& candidates, double threshold,
                  std::vector<CutoffCurve>* curves = nullptr);

struct InclusionMetric {
    std::string name;
    double true_value = 0.0;
    double max_comp = 0.0;
    double rel_error = 0.0;
};

struct ReconReport {
    ScalarField g_comp;
    std::vector<InclusionMetric> inclusions;
    double rel_l2 = 0.0;
    double rel_linf = 0.0;
    std::map<std::string, double> timings_ms;
};

ReconReport metrics(const ScalarField& g_comp, const ScalarField& g_true, const std::vector<Inclusion>& masks);

} // namespace tdr
