#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace tdr {

// One node of the boundary trace. Corners carry both adjacent normals; their
// normal derivative is the mean of the two edge formulas and their quadrature
// weight is the sum of the two half weights.
struct BoundaryNode {
    int i = 0, j = 0;
    int nx = 0, ny = 0;  // outward normal components in {-1, 0, 1}
    double weight = 0.0;
    std::string edge;
    bool corner() const { return nx != 0 && ny != 0; }
};

// Uniform grid on (-R, R)^2 with count points per axis. Node (i, j) sits at
// (-R + i*step, -R + j*step), 0-based, and is stored at flat index j*count + i.
class Grid2D {
  public:
    Grid2D() = default;
    Grid2D(double R, int count);

    double R() const { return R_; }
    int count() const { return n_; }
    double step() const { return h_; }
    int size() const { return n_ * n_; }
    double x(int i) const { return -R_ + i * h_; }
    double y(int j) const { return -R_ + j * h_; }
    int index(int i, int j) const { return j * n_ + i; }
    bool on_boundary(int i, int j) const { return i == 0 || j == 0 || i == n_ - 1 || j == n_ - 1; }

    // Counterclockwise from the bottom-left corner; 4(count-1) nodes.
    const std::vector<BoundaryNode>& boundary() const { return boundary_; }
    // Flat indices of interior nodes in storage order.
    const std::vector<int>& interior() const { return interior_; }

    bool operator==(const Grid2D& o) const { return n_ == o.n_ && R_ == o.R_; }
    bool operator!=(const Grid2D& o) const { return !(*this == o); }

  private:
    double R_ = 1.0;
    int n_ = 0;
    double h_ = 0.0;
    std::vector<BoundaryNode> boundary_;
    std::vector<int> interior_;
};

// Values on every node of a grid, row-major (rows are fixed y).
class ScalarField {
  public:
    ScalarField() = default;
    explicit ScalarField(const Grid2D& g) : grid_(g), v_(Eigen::VectorXd::Zero(g.size())) {}
    ScalarField(const Grid2D& g, Eigen::VectorXd v);

    template <class F>
    static ScalarField sample(const Grid2D& g, F&& f) {
        ScalarField s(g);
        for (int j = 0; j < g.count(); ++j)
            for (int i = 0; i < g.count(); ++i) s.v_[g.index(i, j)] = f(g.x(i), g.y(j));
        return s;
    }

    const Grid2D& grid() const { return grid_; }
    double& operator()(int i, int j) { return v_[grid_.index(i, j)]; }
    double operator()(int i, int j) const { return v_[grid_.index(i, j)]; }
    Eigen::VectorXd& values() { return v_; }
    const Eigen::VectorXd& values() const { return v_; }

    void zero_boundary();
    bool finite() const { return v_.allFinite(); }

  private:
    Grid2D grid_;
    Eigen::VectorXd v_;
};

// N mode fields on a shared grid, stored node-major: data(node, m).
class ModeStack {
  public:
    using Storage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    ModeStack() = default;
    ModeStack(const Grid2D& g, int modes) : grid_(g), d_(Storage::Zero(g.size(), modes)) {}
    ModeStack(const Grid2D& g, Storage d);

    const Grid2D& grid() const { return grid_; }
    int modes() const { return static_cast<int>(d_.cols()); }
    Storage& data() { return d_; }
    const Storage& data() const { return d_; }

    ScalarField field(int m) const { return ScalarField(grid_, d_.col(m)); }
    void set_field(int m, const ScalarField& f) { d_.col(m) = f.values(); }

  private:
    Grid2D grid_;
    Storage d_;
};

// 5-point stencil on interior nodes; boundary entries are zero.
ScalarField laplacian(const ScalarField& f);
// Central differences inside, second-order one-sided on the boundary.
std::pair<ScalarField, ScalarField> gradient(const ScalarField& f);
// Outward normal derivative on grid.boundary() order.
Eigen::VectorXd normal_derivative(const ScalarField& f);

double integrate_domain(const ScalarField& f);
double integrate_boundary(const Grid2D& g, const Eigen::Ref<const Eigen::VectorXd>& values);

// Tensor trapezoid weights per node.
Eigen::VectorXd domain_weights(const Grid2D& g);

void write_field_csv(std::ostream& os, const ScalarField& f);
ScalarField read_field_csv(std::istream& is);

} // namespace tdr
