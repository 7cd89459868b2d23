#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <vector>

namespace tdr {

// Uniform nodes on [0, T] with composite trapezoid weights.
struct TimeGrid {
    double T = 0.0;
    int count = 0;
    double step = 0.0;
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;

    static TimeGrid uniform(double T, int count);
    bool same_axis(const TimeGrid& other) const;
};

// Orthonormal system Psi_n(t) = e^{t-T/2} q_{n-1}(t), where q_k are the
// orthonormal polynomials of the discrete measure weights_l * e^{2 t_l - T}.
//
// The polynomials are generated by a three-term recurrence whose coefficients
// come from a Stieltjes process with full reorthogonalization. This spans the
// same nested spaces as Gram-Schmidt on t^{k-1} e^{t-T/2} and yields the same
// functions (positive leading coefficients), but never forms the monomial Gram
// matrix, which is numerically singular well before N = 40.
class TimeBasis {
  public:
    struct Point {
        Eigen::VectorXd value, d1, d2;
    };

    static TimeBasis build(double T, int N, const TimeGrid& grid);

    int size() const { return static_cast<int>(alpha_.size()); }
    const TimeGrid& grid() const { return grid_; }

    // N x N_T samples on the grid (row n-1 holds Psi_n).
    const Eigen::MatrixXd& values() const { return values_; }
    const Eigen::MatrixXd& d1() const { return d1_; }
    const Eigen::MatrixXd& d2() const { return d2_; }

    // Psi_n(0), computed from the recurrence at t = 0 rather than read off a grid.
    const Eigen::VectorXd& at_zero() const { return at_zero_; }

    Point evaluate(double t) const;

    // Lower-triangular c with Psi_n = sum_k c_{nk} t^{k-1} e^{t-T/2}.
    // Exact in exact arithmetic; the entries grow quickly with N, so the
    // recurrence, not this matrix, is used for every evaluation.
    Eigen::MatrixXd coeffs() const;

    const Eigen::VectorXd& alpha() const { return alpha_; }
    const Eigen::VectorXd& beta() const { return beta_; }

    double gram_deviation() const;

  private:
    TimeGrid grid_;
    Eigen::VectorXd alpha_;  // alpha_k, k = 0..N-1
    Eigen::VectorXd beta_;   // beta_k,  k = 0..N
    Eigen::MatrixXd values_, d1_, d2_;
    Eigen::VectorXd at_zero_;
};

// s_mn = sum_l w_l Psi_n''(t_l) Psi_m(t_l); entry (m-1, n-1).
Eigen::MatrixXd coupling_matrix(const TimeBasis& basis);
Eigen::MatrixXd coupling_matrix(const TimeBasis& basis, const TimeGrid& grid);

// I_n(t_l) = int_0^{t_l} K(s) Psi_n(s) ds by cumulative trapezoid; N x N_T.
// An empty K is the zero kernel.
Eigen::MatrixXd kernel_cumulatives(const TimeBasis& basis, const std::function<double(double)>& K);

// Coefficient m = sum_l w_l f_l Psi_m(t_l).
Eigen::VectorXd project_time_series(const Eigen::Ref<const Eigen::VectorXd>& f, const TimeBasis& basis);

// Rows (n, t, Psi, Psi', Psi'') for every mode and grid node.
void write_basis_csv(std::ostream& os, const TimeBasis& basis);

} // namespace tdr
