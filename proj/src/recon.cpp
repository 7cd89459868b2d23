#include "tdr/recon.hpp"

#include "tdr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tdr {

ScalarField TestCase::g_true(const Grid2D& grid) const {
    ScalarField g = ScalarField::sample(grid, [&](double x, double y) {
        for (const auto& inc : inclusions)
            if (inc.inside(x, y)) return inc.value;
        return 0.0;
    });
    g.zero_boundary();
    return g;
}

namespace {

double box(double x, double y, double cx, double cy, double ax, double ay) {
    return std::max(std::abs(x - cx) / ax, std::abs(y - cy) / ay);
}

} // namespace

std::vector<TestCase> builtin_tests() {
    std::vector<TestCase> out;

    TestCase t1;
    t1.name = "test1";
    t1.spec.name = "min(u^2+|grad u|,30)+int u";
    t1.spec.evaluator = [](const NonlinearArgs& a) {
        return std::min(a.u * a.u + std::hypot(a.ux, a.uy), 30.0) + a.memory;
    };
    t1.spec.kernel = [](double) { return 1.0; };
    t1.inclusions.push_back({"ellipse", 10.0, [](double x, double y) { return x * x + 3.0 * y * y < 0.64; }});
    out.push_back(t1);

    TestCase t2;
    t2.name = "test2";
    t2.spec.name = "1/sqrt(u^2+|grad u|^2)+int u/(1+s^2)";
    t2.spec.evaluator = [](const NonlinearArgs& a) {
        const double s = a.u * a.u + a.ux * a.ux + a.uy * a.uy;
        return 1.0 / std::sqrt(std::max(s, kSingularFloor * kSingularFloor)) + a.memory;
    };
    t2.spec.kernel = [](double s) { return 1.0 / (1.0 + s * s); };
    t2.inclusions.push_back({"rectangle", 5.0, [](double x, double y) { return box(x, y, 0.5, 0.0, 0.35, 0.8) < 1.0; }});
    t2.inclusions.push_back(
        {"disk", 4.0, [](double x, double y) { return (x + 0.5) * (x + 0.5) + y * y < 0.35 * 0.35; }});
    out.push_back(t2);

    TestCase t3;
    t3.name = "test3";
    t3.spec.name = "u ln(u^2+1)+u_x+u_y+int u";
    t3.spec.evaluator = [](const NonlinearArgs& a) {
        return a.u * std::log(a.u * a.u + 1.0) + a.ux + a.uy + a.memory;
    };
    t3.spec.kernel = [](double) { return 1.0; };
    t3.inclusions.push_back({"l-shape", 7.0, [](double x, double y) {
                                 return box(x, y, -0.6, 0.2, 0.25, 0.7) < 1.0 || box(x, y, -0.5, 0.0, 0.25, 0.7) < 1.0;
                             }});
    out.push_back(t3);
    return out;
}

TestCase builtin_test(const std::string& id) {
    std::string k = id;
    if (k.rfind("test", 0) == 0) k = k.substr(4);
    for (auto& t : builtin_tests())
        if (t.name == "test" + k) return t;
    throw ConfigError("unknown test '" + id + "' (expected 1, 2 or 3)");
}

ScalarField reconstruct_g(const ModeStack& U, const TimeBasis& basis) {
    if (U.modes() != basis.size()) throw GridMismatch("reconstruct: mode count differs from basis");
    return ScalarField(U.grid(), U.data() * basis.at_zero());
}

int find_boundary_node(const Grid2D& grid, double x, double y) {
    const auto& bd = grid.boundary();
    int best = -1;
    double bestd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < bd.size(); ++k) {
        const double d = std::hypot(grid.x(bd[k].i) - x, grid.y(bd[k].j) - y);
        if (d < bestd) {
            bestd = d;
            best = static_cast<int>(k);
        }
    }
    if (bestd > 0.5 * grid.step()) throw ConfigError("x* is not a boundary node of the grid");
    return best;
}

int select_cutoff(const BoundaryTimeData& h, int x_star, const std::vector<int>& candidates, double threshold,
                  std::vector<CutoffCurve>* curves) {
    if (x_star < 0 || x_star >= h.values.rows()) throw ConfigError("select_cutoff: x* is not a boundary node");
    if (candidates.empty()) throw ConfigError("select_cutoff: empty candidate list");
    std::vector<int> cand = candidates;
    std::sort(cand.begin(), cand.end());
    const Eigen::VectorXd trace = h.values.row(x_star).transpose();
    std::vector<CutoffCurve> out;
    int chosen = -1, best = -1;
    double best_sup = std::numeric_limits<double>::infinity();
    for (int N : cand) {
        const TimeBasis B = TimeBasis::build(h.time.T, N, h.time);
        const Eigen::VectorXd c = project_time_series(trace, B);
        CutoffCurve cv;
        cv.N = N;
        cv.e = (trace - B.values().transpose() * c).cwiseAbs();
        cv.sup = cv.e.maxCoeff();
        if (cv.sup < threshold && chosen < 0) chosen = N;
        if (cv.sup < best_sup) {
            best_sup = cv.sup;
            best = N;
        }
        out.push_back(std::move(cv));
    }
    if (curves) *curves = out;
    if (chosen < 0)
        throw NoAdmissibleN("select_cutoff: no candidate reaches the threshold; best N=" + std::to_string(best) +
                                " with sup error " + std::to_string(best_sup),
                            best, best_sup);
    return chosen;
}

ReconReport metrics(const ScalarField& g_comp, const ScalarField& g_true, const std::vector<Inclusion>& masks) {
    const Grid2D& g = g_comp.grid();
    if (g_true.grid() != g) throw GridMismatch("metrics: fields live on different grids");
    ReconReport r;
    r.g_comp = g_comp;
    for (const auto& inc : masks) {
        InclusionMetric m;
        m.name = inc.name;
        m.true_value = inc.value;
        m.max_comp = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < g.count(); ++j)
            for (int i = 0; i < g.count(); ++i)
                if (inc.inside(g.x(i), g.y(j))) m.max_comp = std::max(m.max_comp, g_comp(i, j));
        m.rel_error = std::abs(m.max_comp - inc.value) / std::abs(inc.value);
        r.inclusions.push_back(m);
    }
    const Eigen::VectorXd d = g_comp.values() - g_true.values();
    const double tmax = g_true.values().cwiseAbs().maxCoeff();
    const Eigen::VectorXd w = domain_weights(g);
    const double tl2 = std::sqrt(w.dot(g_true.values().cwiseAbs2()));
    r.rel_linf = tmax > 0 ? d.cwiseAbs().maxCoeff() / tmax : d.cwiseAbs().maxCoeff();
    const double dl2 = std::sqrt(w.dot(d.cwiseAbs2()));
    r.rel_l2 = tl2 > 0 ? dl2 / tl2 : dl2;
    return r;
}

} // namespace tdr
