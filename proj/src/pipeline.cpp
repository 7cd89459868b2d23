#include "tdr/pipeline.hpp"

#include "tdr/errors.hpp"
#include "tdr/image.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <yaml-cpp/yaml.h>

namespace tdr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string backend_name(Backend b) {
    switch (b) {
    case Backend::Automatic: return "auto";
    case Backend::Direct: return "direct";
    case Backend::Structured: return "structured";
    }
    return "auto";
}

Backend parse_backend(const std::string& s) {
    if (s == "auto") return Backend::Automatic;
    if (s == "direct") return Backend::Direct;
    if (s == "structured") return Backend::Structured;
    throw ConfigError("unknown backend '" + s + "' (auto, direct, structured)");
}

// Reads known keys of one section, rejecting anything else.
class Section {
  public:
    Section(const YAML::Node& root, const std::string& name) : name_(name) {
        if (root[name]) {
            node_ = root[name];
            if (!node_.IsMap()) throw ConfigError("config: section '" + name + "' must be a map");
        }
    }
    template <class T>
    bool get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!node_ || !node_[key]) return false;
        try {
            out = node_[key].as<T>();
        } catch (const YAML::Exception& e) {
            throw ConfigError("config: bad value for " + name_ + "." + key + ": " + e.what());
        }
        return true;
    }
    YAML::Node raw(const std::string& key) {
        seen_.insert(key);
        return node_ ? node_[key] : YAML::Node();
    }
    void finish() const {
        if (!node_) return;
        for (const auto& kv : node_) {
            const auto k = kv.first.as<std::string>();
            if (!seen_.count(k)) throw ConfigError("config: unknown key " + name_ + "." + k);
        }
    }

  private:
    std::string name_;
    YAML::Node node_;
    std::set<std::string> seen_;
};

void read_point(Section& s, const std::string& key, double& x, double& y) {
    std::vector<double> v;
    if (!s.get(key, v)) return;
    if (v.size() != 2) throw ConfigError("config: " + key + " must be a pair [x, y]");
    x = v[0];
    y = v[1];
}

json config_json(const RunConfig& c) {
    json j;
    j["problem"] = {{"test", c.test}, {"spec", c.spec_path}, {"R", c.R},          {"Nx", c.nx},
                    {"NT", c.nt},     {"T", c.T},           {"sim_Nx", c.sim_nx}, {"sim_NT", c.sim_nt}};
    j["data"] = {{"delta", c.delta}, {"seed", c.seed}};
    const auto& k = c.carleman;
    j["carleman"] = {{"lambda", k.lambda},
                     {"beta", k.beta},
                     {"eps", k.eps},
                     {"x0", {k.x0, k.y0}},
                     {"kappa0", k.kappa0 ? json(*k.kappa0) : json("relative")},
                     {"kappa0_rel", k.kappa0_rel},
                     {"max_iter", k.max_iter},
                     {"solver_tol", k.solver_tol},
                     {"max_solver_iter", k.max_solver_iter},
                     {"backend", backend_name(k.backend)},
                     {"direct_limit", k.direct_limit}};
    j["cutoff"] = {{"N", c.auto_n ? json("auto") : json(c.N)},
                   {"eps_sel", c.eps_sel},
                   {"x_star", {c.xs, c.ys}},
                   {"candidates", c.candidates}};
    j["run"] = {{"output", c.output}, {"threads", c.threads}, {"init", c.init}, {"init_seed", c.init_seed}};
    return j;
}

std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

} // namespace

void apply_config_file(RunConfig& c, const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("config: cannot read " + path + ": " + e.what());
    }
    if (root.IsNull()) return;
    if (!root.IsMap()) throw ConfigError("config: top level must be a map of sections");
    const std::set<std::string> sections = {"problem", "data", "carleman", "cutoff", "run"};
    for (const auto& kv : root)
        if (!sections.count(kv.first.as<std::string>()))
            throw ConfigError("config: unknown section '" + kv.first.as<std::string>() + "'");

    Section p(root, "problem");
    p.get("test", c.test);
    p.get("spec", c.spec_path);
    p.get("R", c.R);
    p.get("Nx", c.nx);
    p.get("NT", c.nt);
    p.get("T", c.T);
    p.get("sim_Nx", c.sim_nx);
    p.get("sim_NT", c.sim_nt);
    p.finish();

    Section d(root, "data");
    d.get("delta", c.delta);
    d.get("seed", c.seed);
    d.finish();

    Section k(root, "carleman");
    auto& cc = c.carleman;
    k.get("lambda", cc.lambda);
    k.get("beta", cc.beta);
    k.get("eps", cc.eps);
    read_point(k, "x0", cc.x0, cc.y0);
    std::string kap;
    if (k.raw("kappa0")) {
        const YAML::Node n = k.raw("kappa0");
        if (n.as<std::string>() == "relative") cc.kappa0.reset();
        else {
            double v = 0;
            k.get("kappa0", v);
            cc.kappa0 = v;
        }
    }
    k.get("kappa0_rel", cc.kappa0_rel);
    k.get("max_iter", cc.max_iter);
    k.get("solver_tol", cc.solver_tol);
    k.get("max_solver_iter", cc.max_solver_iter);
    std::string be;
    if (k.get("backend", be)) cc.backend = parse_backend(be);
    k.get("direct_limit", cc.direct_limit);
    k.finish();

    Section u(root, "cutoff");
    if (u.raw("N")) {
        std::string n = u.raw("N").as<std::string>();
        if (n == "auto") c.auto_n = true;
        else {
            c.auto_n = false;
            u.get("N", c.N);
        }
    }
    u.get("eps_sel", c.eps_sel);
    read_point(u, "x_star", c.xs, c.ys);
    u.get("candidates", c.candidates);
    u.finish();

    Section r(root, "run");
    r.get("output", c.output);
    r.get("threads", c.threads);
    r.get("init", c.init);
    r.get("init_seed", c.init_seed);
    r.finish();
}

RunConfig load_config(const std::string& path) {
    RunConfig c;
    apply_config_file(c, path);
    return c;
}

void RunConfig::validate() const {
    const Grid2D grid(R, nx);
    if (!(T > 0.0)) throw ConfigError("T must be positive");
    if (nt < 2) throw ConfigError("NT must be at least 2");
    if (!(delta >= 0.0)) throw ConfigError("delta must be nonnegative");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (init != "zero" && init != "random") throw ConfigError("init must be 'zero' or 'random'");
    if (auto_n) {
        if (candidates.empty()) throw ConfigError("cutoff.candidates is empty");
        for (int n : candidates)
            if (n < 1 || nt < 4 * n) throw ConfigError("cutoff candidate " + std::to_string(n) + " needs NT >= 4N");
        if (!(eps_sel >= 0.0)) throw ConfigError("eps_sel must be nonnegative");
    } else if (N < 1 || nt < 4 * N) {
        throw ConfigError("N must satisfy 1 <= N and NT >= 4N");
    }
    find_boundary_node(grid, xs, ys);
    if (sim_nx != 0 && (sim_nx < nx || (sim_nx - 1) % (nx - 1) != 0))
        throw ConfigError("sim_Nx - 1 must be a multiple of Nx - 1");
    if (sim_nt != 0 && sim_nt < 2) throw ConfigError("sim_NT must be at least 2");
    carleman.validate(grid);
    resolve_test(*this);
}

TestCase load_test_spec(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("test spec: cannot read " + path + ": " + e.what());
    }
    TestCase tc;
    try {
        tc.name = root["name"] ? root["name"].as<std::string>() : fs::path(path).stem().string();
        const YAML::Node nl = root["nonlinearity"];
        const std::string form = nl && nl["form"] ? nl["form"].as<std::string>() : "zero";
        if (form == "test1" || form == "test2" || form == "test3") {
            tc.spec = builtin_test(form).spec;
        } else if (form == "zero") {
            tc.spec.name = "0";
            tc.spec.evaluator = [](const NonlinearArgs&) { return 0.0; };
        } else if (form == "constant") {
            const double v = nl["value"] ? nl["value"].as<double>() : 1.0;
            tc.spec.name = "constant " + fmt_num(v);
            tc.spec.evaluator = [v](const NonlinearArgs&) { return v; };
        } else if (form == "linear") {
            const double v = nl["value"] ? nl["value"].as<double>() : 1.0;
            tc.spec.name = fmt_num(v) + " u";
            tc.spec.evaluator = [v](const NonlinearArgs& a) { return v * a.u; };
        } else {
            throw ConfigError("test spec: unknown nonlinearity form '" + form + "'");
        }
        if (nl && nl["clamp"]) tc.spec.clamp = nl["clamp"].as<double>();
        for (const auto& inc : root["inclusions"]) {
            const std::string shape = inc["shape"].as<std::string>();
            const double v = inc["value"].as<double>();
            const auto c = inc["center"].as<std::vector<double>>();
            if (c.size() != 2) throw ConfigError("test spec: center must be [x, y]");
            const std::string name = inc["name"] ? inc["name"].as<std::string>() : shape;
            if (shape == "disk") {
                const double r = inc["radius"].as<double>();
                tc.inclusions.push_back({name, v, [c, r](double x, double y) {
                                             return (x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]) < r * r;
                                         }});
            } else if (shape == "box" || shape == "ellipse") {
                const auto ax = inc["axes"].as<std::vector<double>>();
                if (ax.size() != 2) throw ConfigError("test spec: axes must be [ax, ay]");
                if (shape == "box")
                    tc.inclusions.push_back({name, v, [c, ax](double x, double y) {
                                                 return std::max(std::abs(x - c[0]) / ax[0], std::abs(y - c[1]) / ax[1]) < 1.0;
                                             }});
                else
                    tc.inclusions.push_back({name, v, [c, ax](double x, double y) {
                                                 const double a = (x - c[0]) / ax[0], b = (y - c[1]) / ax[1];
                                                 return a * a + b * b < 1.0;
                                             }});
            } else {
                throw ConfigError("test spec: unknown shape '" + shape + "'");
            }
        }
    } catch (const YAML::Exception& e) {
        throw ConfigError("test spec: " + std::string(e.what()));
    }
    return tc;
}

TestCase resolve_test(const RunConfig& cfg) {
    return cfg.spec_path.empty() ? builtin_test(cfg.test) : load_test_spec(cfg.spec_path);
}

BoundaryTimeData simulate_data(const RunConfig& cfg, const TestCase& tc, Timings* timings) {
    const auto t0 = Clock::now();
    const Grid2D grid(cfg.R, cfg.nx);
    const TimeGrid time = TimeGrid::uniform(cfg.T, cfg.nt);
    const Grid2D sgrid(cfg.R, cfg.sim_nx ? cfg.sim_nx : cfg.nx);
    const TimeGrid stime = TimeGrid::uniform(cfg.T, cfg.sim_nt ? cfg.sim_nt : cfg.nt);
    const WaveField u = simulate(tc.g_true(sgrid), tc.spec, sgrid, stime);
    BoundaryTimeData h = boundary_trace(u);
    if (sgrid != grid || !stime.same_axis(time)) h = restrict_data(h, grid, time);
    h = add_noise(h, cfg.delta, cfg.seed);
    if (timings) (*timings)["simulate"] += ms_since(t0);
    return h;
}

const AssembledOperator& Session::op(const Grid2D& grid, const Eigen::MatrixXd& S, const CarlemanConfig& cfg,
                                     const TimeBasis& basis, Timings* timings) {
    std::ostringstream key;
    key.precision(17);
    key << grid.R() << ':' << grid.count() << ':' << basis.size() << ':' << basis.grid().T << ':'
        << basis.grid().count << ':' << cfg.lambda << ':' << cfg.beta << ':' << cfg.eps << ':' << cfg.x0 << ':'
        << cfg.y0 << ':' << static_cast<int>(cfg.backend) << ':' << cfg.solver_tol << ':' << cfg.max_solver_iter;
    auto it = ops_.find(key.str());
    if (it == ops_.end()) {
        const auto t0 = Clock::now();
        auto op = std::make_unique<AssembledOperator>(assemble(grid, S, cfg, basis));
        ++factorizations_;
        if (timings) (*timings)["assemble"] += ms_since(t0);
        it = ops_.emplace(key.str(), std::move(op)).first;
    }
    return *it->second;
}

ModeStack initial_guess(const RunConfig& cfg, const Grid2D& grid, int N) {
    ModeStack U(grid, N);
    if (cfg.init == "random") {
        std::mt19937_64 rng(cfg.init_seed);
        for (int k : grid.interior())
            for (int m = 0; m < N; ++m) U.data()(k, m) = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
    }
    return U;
}

double steady_ratio(const std::vector<IterationRecord>& trace) {
    std::vector<double> r;
    for (const auto& t : trace)
        if (t.iter >= 3 && std::isfinite(t.ratio)) r.push_back(t.ratio);
    if (r.empty())
        for (const auto& t : trace)
            if (std::isfinite(t.ratio)) r.push_back(t.ratio);
    if (r.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(r.begin(), r.end());
    const std::size_t n = r.size();
    return n % 2 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);
}

Reconstruction reconstruct(const RunConfig& cfg, const TestCase& tc, const BoundaryTimeData& h, Session& session) {
    const auto t0 = Clock::now();
    Reconstruction out;
    const Grid2D grid(cfg.R, cfg.nx);
    const TimeGrid time = TimeGrid::uniform(cfg.T, cfg.nt);
    if (h.grid != grid) throw GridMismatch("reconstruct: data grid differs from the configured grid");
    if (!h.time.same_axis(time)) throw GridMismatch("reconstruct: data time axis differs from the configuration");

    out.N = cfg.N;
    if (cfg.auto_n) {
        const auto t1 = Clock::now();
        out.N = select_cutoff(h, find_boundary_node(grid, cfg.xs, cfg.ys), cfg.candidates, cfg.eps_sel, &out.curves);
        out.timings["select_n"] = ms_since(t1);
    }

    auto t1 = Clock::now();
    const TimeBasis basis = TimeBasis::build(cfg.T, out.N, time);
    const ReducedSystem sys = make_reduced_system(h, tc.spec, basis);
    out.timings["reduce"] = ms_since(t1);

    const AssembledOperator& op = session.op(grid, sys.S, cfg.carleman, basis, &out.timings);
    out.backend = op.backend();

    t1 = Clock::now();
    out.iter = iterate(initial_guess(cfg, grid, out.N), op, sys, cfg.carleman);
    out.timings["iterate"] = ms_since(t1);
    out.factorizations = out.iter.factorizations;
    out.steady_ratio = steady_ratio(out.iter.trace);

    out.g_true = tc.g_true(grid);
    out.report = metrics(reconstruct_g(out.iter.U, basis), out.g_true, tc.inclusions);
    out.timings["reconstruct_total"] = ms_since(t0);
    out.report.timings_ms = out.timings;
    return out;
}

void write_cutoff_curves(const std::string& path, const std::vector<CutoffCurve>& curves, const TimeGrid& time) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os.precision(17);
    os << "N,t_index,t,e\n";
    for (const auto& c : curves)
        for (int l = 0; l < c.e.size(); ++l) os << c.N << ',' << l << ',' << time.nodes[l] << ',' << c.e[l] << '\n';
}

std::vector<std::string> write_reconstruction(const std::string& dir, const RunConfig& cfg, const TestCase& tc,
                                              const Reconstruction& r) {
    fs::create_directories(dir);
    std::vector<std::string> files;
    auto path = [&](const std::string& f) {
        files.push_back(f);
        return (fs::path(dir) / f).string();
    };

    json rep;
    rep["name"] = tc.name;
    rep["nonlinearity"] = tc.spec.name;
    rep["N"] = r.N;
    json inc = json::array();
    for (const auto& m : r.report.inclusions)
        inc.push_back({{"name", m.name}, {"true_value", m.true_value}, {"max_value", m.max_comp},
                       {"relative_error", m.rel_error}});
    rep["inclusions"] = inc;
    rep["relative_l2"] = r.report.rel_l2;
    rep["relative_linf"] = r.report.rel_linf;
    rep["iterations"] = r.iter.trace.size();
    rep["converged"] = r.iter.converged;
    rep["kappa0"] = r.iter.kappa0;
    rep["steady_contraction_ratio"] = std::isfinite(r.steady_ratio) ? json(r.steady_ratio) : json(nullptr);
    rep["factorizations"] = r.factorizations;
    rep["backend"] = backend_name(r.backend);
    rep["parameters"] = config_json(cfg);
    rep["seed"] = cfg.seed;
    rep["timings_ms"] = r.timings;
    {
        std::ofstream os(path("report.json"));
        os << rep.dump(2) << '\n';
    }
    {
        std::ofstream os(path("g_comp.csv"));
        write_field_csv(os, r.report.g_comp);
    }
    {
        std::ofstream os(path("g_true.csv"));
        write_field_csv(os, r.g_true);
    }
    {
        std::ofstream os(path("trace.csv"));
        write_trace_csv(os, r.iter.trace);
    }
    if (!r.curves.empty()) write_cutoff_curves(path("e_N.csv"), r.curves, TimeGrid::uniform(cfg.T, cfg.nt));

    const double lo = std::min(0.0, r.g_true.values().minCoeff());
    double hi = r.g_true.values().maxCoeff();
    if (!(hi > lo)) hi = lo + 1.0;
    const std::string scale = "_scale_" + fmt_num(lo) + "_" + fmt_num(hi) + ".png";
    write_heatmap_png(path("g_true" + scale), r.g_true, lo, hi);
    write_heatmap_png(path("g_comp" + scale), r.report.g_comp, lo, hi);
    const double gmax = std::max(std::abs(lo), std::abs(hi));
    ScalarField diff(r.g_true.grid(), (r.report.g_comp.values() - r.g_true.values()) / gmax);
    write_heatmap_png(path("difference_scale_-1_1.png"), diff, -1.0, 1.0);
    return files;
}

void write_manifest(const std::string& dir, const RunConfig& cfg, const std::string& command, const Timings& stages,
                    const std::vector<std::string>& files) {
    fs::create_directories(dir);
    json m;
    m["software"] = "tdr";
    m["version"] = kVersion;
    m["command"] = command;
    m["threads"] = cfg.threads;
    m["config"] = config_json(cfg);
    m["stages_ms"] = stages;
    m["files"] = files;
    std::ofstream os(fs::path(dir) / "manifest.json");
    os << m.dump(2) << '\n';
}

} // namespace tdr
