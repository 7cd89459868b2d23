#pragma once

#include "tdr/carleman.hpp"
#include "tdr/forward.hpp"
#include "tdr/recon.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tdr {

inline constexpr const char* kVersion = "1.0.0";

struct RunConfig {
    std::string test = "1";
    std::string spec_path;  // custom test definition, overrides `test`
    double R = 1.0;
    int nx = 81;
    int nt = 200;
    double T = 2.0;
    int sim_nx = 0;  // 0: simulate on the reconstruction grid
    int sim_nt = 0;
    double delta = 0.1;
    std::uint64_t seed = 1;
    CarlemanConfig carleman;
    int N = 40;
    bool auto_n = false;
    double eps_sel = 5e-3;
    double xs = -1.0, ys = 0.0;
    std::vector<int> candidates = {10, 15, 20, 25, 30, 35, 40, 45, 50};
    std::string init = "zero";  // or "random"
    std::uint64_t init_seed = 7;
    int threads = 1;
    std::string output = "out";

    // Checks every module precondition that can be checked before compute.
    void validate() const;
};

// Sections problem, data, carleman, cutoff, run.
RunConfig load_config(const std::string& path);
void apply_config_file(RunConfig& cfg, const std::string& path);

// Test definition file: nonlinearity family plus a list of inclusions.
TestCase load_test_spec(const std::string& path);
TestCase resolve_test(const RunConfig& cfg);

using Timings = std::map<std::string, double>;

// Forward run, trace, optional restriction from a finer grid, noise.
BoundaryTimeData simulate_data(const RunConfig& cfg, const TestCase& tc, Timings* timings = nullptr);

// Caches assembled operators by (grid, N, lambda, beta, eps, x0, backend).
class Session {
  public:
    const AssembledOperator& op(const Grid2D& grid, const Eigen::MatrixXd& S, const CarlemanConfig& cfg,
                                const TimeBasis& basis, Timings* timings = nullptr);
    int factorizations() const { return factorizations_; }

  private:
    std::map<std::string, std::unique_ptr<AssembledOperator>> ops_;
    int factorizations_ = 0;
};

struct Reconstruction {
    int N = 0;
    std::vector<CutoffCurve> curves;
    IterationResult iter;
    ReconReport report;
    ScalarField g_true;
    int factorizations = 0;
    Backend backend = Backend::Direct;
    double steady_ratio = 0.0;
    Timings timings;
};

ModeStack initial_guess(const RunConfig& cfg, const Grid2D& grid, int N);

// Cutoff selection (when auto_n), reduction, fixed-point iteration, source.
Reconstruction reconstruct(const RunConfig& cfg, const TestCase& tc, const BoundaryTimeData& h, Session& session);

// Median contraction ratio from the third step on (second when shorter).
double steady_ratio(const std::vector<IterationRecord>& trace);

void write_cutoff_curves(const std::string& path, const std::vector<CutoffCurve>& curves, const TimeGrid& time);

// report.json, g_comp.csv, g_true.csv, trace.csv, heatmaps and, after
// automatic cutoff selection, e_N.csv. Returns the file names written.
std::vector<std::string> write_reconstruction(const std::string& dir, const RunConfig& cfg, const TestCase& tc,
                                              const Reconstruction& r);

// manifest.json with every RunConfig field, version, thread count, stage
// wall-clock and the list of files.
void write_manifest(const std::string& dir, const RunConfig& cfg, const std::string& command, const Timings& stages,
                    const std::vector<std::string>& files);


} // namespace tdr
