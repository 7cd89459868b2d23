// Command-line driver: simulate, select-n, reconstruct, sweep, evaluate.
#include "tdr/errors.hpp"
#include "tdr/pipeline.hpp"
#include "tdr/reduction.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

using namespace tdr;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Overrides {
    std::string config;
    std::optional<std::string> test, spec, backend, N, init, output, x0, xstar;
    std::optional<double> R, T, delta, lambda, beta, eps, kappa0, solver_tol, eps_sel;
    std::optional<int> nx, nt, sim_nx, sim_nt, max_iter, threads;
    std::optional<std::uint64_t> seed, init_seed;
    std::vector<int> candidates;

    void add(CLI::App* app) {
        app->add_option("-c,--config", config, "YAML config file (sections problem, data, carleman, cutoff, run)");
        app->add_option("--test", test, "Builtin test 1, 2 or 3");
        app->add_option("--spec", spec, "Custom test definition file");
        app->add_option("--R", R, "Half-width of the square domain");
        app->add_option("--nx", nx, "Grid points per axis");
        app->add_option("--nt", nt, "Time nodes");
        app->add_option("--T", T, "Final time");
        app->add_option("--sim-nx", sim_nx, "Simulate on a finer grid and restrict");
        app->add_option("--sim-nt", sim_nt, "Simulate with more time nodes and interpolate");
        app->add_option("--delta", delta, "Multiplicative noise level");
        app->add_option("--seed", seed, "Noise seed");
        app->add_option("--lambda", lambda, "Carleman parameter lambda");
        app->add_option("--beta", beta, "Carleman parameter beta");
        app->add_option("--eps", eps, "Regularization parameter");
        app->add_option("--x0", x0, "Weight centre as x,y");
        app->add_option("--kappa0", kappa0, "Absolute stopping threshold");
        app->add_option("--max-iter", max_iter, "Iteration cap");
        app->add_option("--solver-tol", solver_tol, "Relative normal-equation residual target");
        app->add_option("--backend", backend, "auto, direct or structured");
        app->add_option("--N", N, "Cutoff, or 'auto'");
        app->add_option("--eps-sel", eps_sel, "Cutoff selection threshold");
        app->add_option("--x-star", xstar, "Boundary point for cutoff selection as x,y");
        app->add_option("--candidates", candidates, "Candidate cutoffs")->delimiter(',');
        app->add_option("--init", init, "Initial guess: zero or random");
        app->add_option("--init-seed", init_seed, "Seed of the random initial guess");
        app->add_option("--threads", threads, "Thread count recorded in the manifest");
        app->add_option("-o,--output", output, "Output directory");
    }

    static std::pair<double, double> pair(const std::string& s) {
        std::stringstream ss(s);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) throw ConfigError("expected x,y but got '" + s + "'");
        return {std::stod(a), std::stod(b)};
    }

    RunConfig resolve() const {
        RunConfig c;
        if (!config.empty()) apply_config_file(c, config);
        if (test) c.test = *test;
        if (spec) c.spec_path = *spec;
        if (R) c.R = *R;
        if (nx) c.nx = *nx;
        if (nt) c.nt = *nt;
        if (T) c.T = *T;
        if (sim_nx) c.sim_nx = *sim_nx;
        if (sim_nt) c.sim_nt = *sim_nt;
        if (delta) c.delta = *delta;
        if (seed) c.seed = *seed;
        if (lambda) c.carleman.lambda = *lambda;
        if (beta) c.carleman.beta = *beta;
        if (eps) c.carleman.eps = *eps;
        if (x0) std::tie(c.carleman.x0, c.carleman.y0) = pair(*x0);
        if (kappa0) c.carleman.kappa0 = *kappa0;
        if (max_iter) c.carleman.max_iter = *max_iter;
        if (solver_tol) c.carleman.solver_tol = *solver_tol;
        if (backend) {
            if (*backend == "auto") c.carleman.backend = Backend::Automatic;
            else if (*backend == "direct") c.carleman.backend = Backend::Direct;
            else if (*backend == "structured") c.carleman.backend = Backend::Structured;
            else throw ConfigError("unknown backend '" + *backend + "'");
        }
        if (N) {
            if (*N == "auto") c.auto_n = true;
            else {
                c.auto_n = false;
                try {
                    c.N = std::stoi(*N);
                } catch (const std::exception&) {
                    throw ConfigError("--N expects an integer or 'auto'");
                }
            }
        }
        if (eps_sel) c.eps_sel = *eps_sel;
        if (xstar) std::tie(c.xs, c.ys) = pair(*xstar);
        if (!candidates.empty()) c.candidates = candidates;
        if (init) c.init = *init;
        if (init_seed) c.init_seed = *init_seed;
        if (threads) c.threads = *threads;
        if (output) c.output = *output;
        return c;
    }
};

BoundaryTimeData load_or_simulate(const RunConfig& cfg, const TestCase& tc, const std::string& data, Timings& t) {
    if (data.empty()) return simulate_data(cfg, tc, &t);
    std::ifstream is(data);
    if (!is) throw ConfigError("cannot open data file " + data);
    const auto t0 = Clock::now();
    BoundaryTimeData h = read_boundary_csv(is);
    t["load_data"] = ms_since(t0);
    return h;
}

int cmd_simulate(const RunConfig& cfg) {
    const TestCase tc = resolve_test(cfg);
    Timings t;
    const BoundaryTimeData h = simulate_data(cfg, tc, &t);
    fs::create_directories(cfg.output);
    {
        std::ofstream os(fs::path(cfg.output) / "data.csv");
        write_boundary_csv(os, h);
    }
    {
        std::ofstream os(fs::path(cfg.output) / "g_true.csv");
        write_field_csv(os, tc.g_true(h.grid));
    }
    write_manifest(cfg.output, cfg, "simulate", t, {"data.csv", "g_true.csv"});
    std::cout << "wrote " << h.values.rows() << " boundary nodes x " << h.values.cols() << " time nodes to "
              << (fs::path(cfg.output) / "data.csv").string() << '\n';
    return 0;
}

int cmd_select_n(const RunConfig& cfg, const std::string& data) {
    const TestCase tc = resolve_test(cfg);
    Timings t;
    const BoundaryTimeData h = load_or_simulate(cfg, tc, data, t);
    fs::create_directories(cfg.output);
    std::vector<CutoffCurve> curves;
    const int xs = find_boundary_node(h.grid, cfg.xs, cfg.ys);
    const auto t0 = Clock::now();
    int N = -1;
    try {
        N = select_cutoff(h, xs, cfg.candidates, cfg.eps_sel, &curves);
    } catch (const NoAdmissibleN&) {
        write_cutoff_curves((fs::path(cfg.output) / "e_N.csv").string(), curves, h.time);
        json j = {{"N", nullptr}, {"threshold", cfg.eps_sel}};
        for (const auto& c : curves) j["sup_error"][std::to_string(c.N)] = c.sup;
        std::ofstream(fs::path(cfg.output) / "cutoff.json") << j.dump(2) << '\n';
        t["select_n"] = ms_since(t0);
        write_manifest(cfg.output, cfg, "select-n", t, {"e_N.csv", "cutoff.json"});
        throw;
    }
    t["select_n"] = ms_since(t0);
    write_cutoff_curves((fs::path(cfg.output) / "e_N.csv").string(), curves, h.time);
    json j = {{"N", N}, {"threshold", cfg.eps_sel}};
    for (const auto& c : curves) j["sup_error"][std::to_string(c.N)] = c.sup;
    std::ofstream(fs::path(cfg.output) / "cutoff.json") << j.dump(2) << '\n';
    write_manifest(cfg.output, cfg, "select-n", t, {"e_N.csv", "cutoff.json"});
    std::cout << "N = " << N << '\n';
    return 0;
}

int cmd_reconstruct(const RunConfig& cfg, const std::string& data) {
    const TestCase tc = resolve_test(cfg);
    Timings t;
    const auto t0 = Clock::now();
    const BoundaryTimeData h = load_or_simulate(cfg, tc, data, t);
    Session session;
    const Reconstruction r = reconstruct(cfg, tc, h, session);
    for (const auto& [k, v] : r.timings) t[k] = v;
    auto te = Clock::now();
    auto files = write_reconstruction(cfg.output, cfg, tc, r);
    t["emit"] = ms_since(te);
    t["total"] = ms_since(t0);
    write_manifest(cfg.output, cfg, "reconstruct", t, files);
    std::cout << tc.name << ": N=" << r.N << ", " << r.iter.trace.size() << " iterations, steady ratio "
              << r.steady_ratio << '\n';
    for (const auto& m : r.report.inclusions)
        std::cout << "  " << m.name << ": max " << m.max_comp << " (true " << m.true_value << "), relative error "
                  << m.rel_error << '\n';
    std::cout << "  relative L-inf " << r.report.rel_linf << ", relative L2 " << r.report.rel_l2 << '\n';
    return 0;
}

int cmd_sweep(RunConfig cfg, const std::string& axis, const std::vector<double>& values) {
    if (axis != "lambda" && axis != "delta" && axis != "N") throw ConfigError("sweep axis must be lambda, delta or N");
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const TestCase tc = resolve_test(cfg);
    Timings t;
    const auto t0 = Clock::now();
    Session session;
    fs::create_directories(cfg.output);

    // Noiseless reference for the error-versus-noise column.
    std::optional<Reconstruction> ref;
    if (axis == "delta") {
        RunConfig c0 = cfg;
        c0.delta = 0.0;
        ref = reconstruct(c0, tc, simulate_data(c0, tc, &t), session);
    }
    std::optional<BoundaryTimeData> shared;
    if (axis != "delta") shared = simulate_data(cfg, tc, &t);

    std::ofstream os(fs::path(cfg.output) / "sweep.csv");
    os.precision(17);
    os << "axis,value,N,iterations,converged,steady_ratio,max_ratio_after_2,relative_linf,relative_l2,"
          "max_inclusion_error,weighted_error_vs_noiseless\n";
    for (double v : values) {
        RunConfig c = cfg;
        if (axis == "lambda") c.carleman.lambda = v;
        if (axis == "delta") c.delta = v;
        if (axis == "N") {
            c.N = static_cast<int>(std::lround(v));
            c.auto_n = false;
        }
        c.validate();
        const BoundaryTimeData h = shared ? *shared : simulate_data(c, tc, &t);
        const Reconstruction r = reconstruct(c, tc, h, session);
        double rmax = 0.0, emax = 0.0;
        for (const auto& rec : r.iter.trace)
            if (rec.iter >= 2 && std::isfinite(rec.ratio)) rmax = std::max(rmax, rec.ratio);
        for (const auto& m : r.report.inclusions) emax = std::max(emax, m.rel_error);
        os << axis << ',' << v << ',' << r.N << ',' << r.iter.trace.size() << ',' << r.iter.converged << ','
           << r.steady_ratio << ',' << rmax << ',' << r.report.rel_linf << ',' << r.report.rel_l2 << ',' << emax << ',';
        if (ref) {
            ModeStack d(r.iter.U.grid(), r.N);
            d.data() = r.iter.U.data() - ref->iter.U.data();
            os << weighted_norm(d, c.carleman, d.grid());
        }
        os << '\n';
        std::cout << axis << " = " << v << ": steady ratio " << r.steady_ratio << ", relative L-inf "
                  << r.report.rel_linf << '\n';
    }
    t["total"] = ms_since(t0);
    write_manifest(cfg.output, cfg, "sweep " + axis, t, {"sweep.csv"});
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& gcomp) {
    const TestCase tc = resolve_test(cfg);
    std::ifstream is(gcomp);
    if (!is) throw ConfigError("cannot open " + gcomp);
    const ScalarField g = read_field_csv(is);
    const ReconReport rep = metrics(g, tc.g_true(g.grid()), tc.inclusions);
    json j;
    j["name"] = tc.name;
    json inc = json::array();
    for (const auto& m : rep.inclusions) {
        inc.push_back({{"name", m.name}, {"true_value", m.true_value}, {"max_value", m.max_comp},
                       {"relative_error", m.rel_error}});
        std::cout << m.name << ": max " << m.max_comp << ", relative error " << m.rel_error << '\n';
    }
    j["inclusions"] = inc;
    j["relative_l2"] = rep.rel_l2;
    j["relative_linf"] = rep.rel_linf;
    fs::create_directories(cfg.output);
    std::ofstream(fs::path(cfg.output) / "evaluation.json") << j.dump(2) << '\n';
    write_manifest(cfg.output, cfg, "evaluate", {}, {"evaluation.json"});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Source reconstruction for a nonlocal quasi-linear wave equation from lateral Neumann data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Overrides o;
    std::string data, gcomp, axis;
    std::vector<double> values;

    auto* sim = app.add_subcommand("simulate", "Generate boundary data for a test");
    o.add(sim);
    auto* sel = app.add_subcommand("select-n", "Choose the cutoff N from boundary data");
    o.add(sel);
    sel->add_option("--data", data, "Boundary data CSV (simulated when absent)");
    auto* rec = app.add_subcommand("reconstruct", "Reconstruct the source and write report, fields and images");
    o.add(rec);
    rec->add_option("--data", data, "Boundary data CSV (simulated when absent)");
    auto* swp = app.add_subcommand("sweep", "Repeat the reconstruction over one parameter");
    o.add(swp);
    swp->add_option("--axis", axis, "lambda, delta or N")->required();
    swp->add_option("--values", values, "Comma-separated values")->delimiter(',')->required();
    auto* ev = app.add_subcommand("evaluate", "Score a reconstructed source against a test");
    o.add(ev);
    ev->add_option("--gcomp", gcomp, "Reconstructed source CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = o.resolve();
        if (sel->parsed()) cfg.auto_n = true;
        if (!ev->parsed()) cfg.validate();
        if (sim->parsed()) return cmd_simulate(cfg);
        if (sel->parsed()) return cmd_select_n(cfg, data);
        if (rec->parsed()) return cmd_reconstruct(cfg, data);
        if (swp->parsed()) return cmd_sweep(cfg, axis, values);
        if (ev->parsed()) return cmd_evaluate(cfg, gcomp);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
