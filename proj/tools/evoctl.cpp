#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "evoctl/io.hpp"

using namespace evoctl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, usage = 1, violation = 2, numerical = 3 };

struct Globals {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
};

/// Writes files as <out>/<scenario>/<command>-<hash><suffix>.
class Output {
public:
    Output(const Globals& g, const ScenarioConfig& c, const std::string& command, const json& extra)
        : dir_(fs::path(g.out) / c.name) {
        json key = {{"command", command}, {"config", c.source}, {"seed", c.seed}, {"extra", extra}};
        if (c.tol) key["tol"] = *c.tol;
        stem_ = command + "-" + params_hash(key);
        fs::create_directories(dir_);
    }

    fs::path path(const std::string& suffix) const { return dir_ / (stem_ + suffix); }

    template <class F>
    void write(const std::string& suffix, F&& body) const {
        std::ofstream os(path(suffix), std::ios::binary | std::ios::trunc);
        body(os);
        if (!os) throw std::runtime_error("cannot write " + path(suffix).string());
        std::cout << path(suffix).string() << '\n';
    }

    void write_json(const std::string& suffix, const json& j) const {
        write(suffix, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    }

private:
    fs::path dir_;
    std::string stem_;
};

ScenarioConfig load(const Globals& g) {
    ScenarioConfig c = load_config(g.config);
    if (g.seed) c.seed = *g.seed;
    if (g.tol) {
        if (!(*g.tol > 0.0)) throw ConfigError("--tol must be positive");
        c.tol = g.tol;
    }
    return c;
}

GridSpec u_grid(const ScenarioConfig& c) { return {c.window.u, c.grid_points}; }

OmegaOptions omega_options(const ScenarioConfig& c) {
    OmegaOptions o;
    o.window = c.window;
    o.branch.grid = u_grid(c);
    if (c.tol) o.closure_tol = *c.tol;
    return o;
}

int cmd_check(const Globals& g) {
    const ScenarioConfig c = load(g);
    HypothesisOptions ho;
    if (c.tol) ho.derivative_tol = *c.tol;
    const double a_hi = std::max(c.landscape.max_dose, c.range.hi);
    const GridSpec a_grid{{std::min(0.0, c.range.lo), a_hi}, 101};
    const HypothesisReport r = check_hypotheses(c.landscape, u_grid(c), a_grid, ho);
    Output(g, c, "check", {}).write_json(".json", {{"scenario", c.name},
                                                   {"landscape", to_json(c.landscape)},
                                                   {"report", to_json(r)}});
    return r.all_pass() ? ok : violation;
}

int cmd_equilibria(const Globals& g) {
    const ScenarioConfig c = load(g);
    const Output out(g, c, "equilibria", {});
    BranchOptions bo;
    bo.grid = u_grid(c);
    out.write("-branch.csv", [&](std::ostream& os) { write_branch_csv(os, build_branch(c.landscape, bo.grid)); });
    const HyperbolicityReport hr = is_hyperbolic(c.range, c.landscape, bo);
    json j = {{"scenario", c.name},
              {"range", {c.range.lo, c.range.hi}},
              {"hyperbolic", hr.hyperbolic},
              {"witnesses", hr.witnesses},
              {"folds", fold_points(c.landscape, bo)}};
    if (!hr.hyperbolic) {
        j["components"] = json::array();
        j["error"] = "non-hyperbolic range";
        out.write_json("-components.json", j);
        return numerical;
    }
    json comps = json::array();
    for (const auto& k : components(c.range, c.landscape, bo)) comps.push_back(to_json(k));
    j["components"] = comps;
    out.write_json("-components.json", j);
    return ok;
}

void write_curves(const Output& out, const std::string& tag, const std::vector<OmegaCurve>& curves) {
    for (std::size_t k = 0; k < curves.size(); ++k)
        out.write(tag + "-" + std::to_string(k) + ".csv", [&](std::ostream& os) { write_omega_csv(os, curves[k]); });
}

int cmd_omega(const Globals& g) {
    const ScenarioConfig c = load(g);
    const Output out(g, c, "omega", {});
    const OmegaSet s = build_all(c.range, c.landscape, omega_options(c));
    write_curves(out, "", s.curves);
    json curves = json::array();
    for (const auto& o : s.curves) curves.push_back(to_json(o));
    out.write_json(".json", {{"scenario", c.name}, {"range", {c.range.lo, c.range.hi}}, {"curves", curves}});
    return ok;
}

int cmd_simulate(const Globals& g, std::optional<std::vector<double>> x0, std::optional<double> horizon) {
    ScenarioConfig c = load(g);
    if (x0) {
        if (x0->size() != 2) throw ConfigError("--x0 needs two values");
        c.simulate.x0 = {(*x0)[0], (*x0)[1]};
    }
    if (horizon) c.simulate.horizon = *horizon;
    if (!c.simulate.has_schedule) c.simulate.schedule = Schedule::constant(c.range.lo);
    const SimulateSpec& s = c.simulate;
    try {
        s.schedule.validate(c.range);
    } catch (const DynamicsError& e) {
        throw ConfigError(std::string("simulate: ") + e.what());
    }
    double T = s.horizon;
    if (!(T > 0.0)) T = s.has_schedule && s.schedule.total_duration() > 0.0 ? s.schedule.total_duration() : 100.0;
    FlowOptions fo;
    if (c.tol) fo.step.rtol = *c.tol;
    const Trajectory tr = flow(s.x0, s.schedule, s.system, c.landscape, T, fo);
    const Output out(g, c, "simulate", {{"x0", {s.x0.u, s.x0.n}}, {"horizon", T}});
    out.write(".csv", [&](std::ostream& os) { write_csv(os, tr); });
    out.write_json(".json", {{"scenario", c.name},
                             {"x0", {s.x0.u, s.x0.n}},
                             {"horizon", T},
                             {"schedule", to_json(s.schedule)},
                             {"status", to_string(tr.status)},
                             {"end", {{"t", tr.t.back()}, {"state", {tr.back().u, tr.back().n}}}}});
    return tr.status == FlowStatus::nonfinite || tr.status == FlowStatus::underflow ? numerical : ok;
}

const OmegaCurve& pick(const std::vector<OmegaCurve>& curves, int index, const std::vector<int>& types) {
    if (index >= 0) {
        if (static_cast<std::size_t>(index) >= curves.size()) throw ConfigError("verify: component index out of range");
        return curves[static_cast<std::size_t>(index)];
    }
    for (const auto& o : curves)
        for (int t : types)
            if (o.type == t) return o;
    throw ConfigError("verify: no curve of a suitable type for this property");
}

int cmd_verify(const Globals& g, std::string property) {
    const ScenarioConfig c = load(g);
    const VerifySpec& v = c.verify;
    if (property.empty()) property = v.property;
    if (property.empty()) throw ConfigError("verify: no property given (--property or verify.property)");
    const Output out(g, c, "verify-" + property, {});
    const Landscape& L = c.landscape;
    VerificationReport r;
    auto curves = [&] { return build_all(c.range, L, omega_options(c)).curves; };

    if (property == "angle") {
        AngleOptions o;
        o.window = c.window;
        o.seed = c.seed;
        if (v.samples) o.samples = *v.samples;
        if (c.tol) o.band = *c.tol;
        r = verify_angle_condition(L, o);
    } else if (property == "invariance") {
        const auto cs = curves();
        InvarianceOptions o;
        o.seed = c.seed;
        o.threads = v.threads;
        if (v.points) o.points = *v.points;
        if (v.schedules) o.schedules = *v.schedules;
        if (v.horizon) o.horizon = *v.horizon;
        if (c.tol) o.dilation = *c.tol;
        r = verify_forward_invariance(pick(cs, v.component, {1}), L, o);
    } else if (property == "controllability") {
        const auto cs = curves();
        ControllabilityOptions o;
        o.seed = c.seed;
        o.threads = v.threads;
        o.steering.orbit = omega_options(c);
        if (v.pairs) o.pairs = *v.pairs;
        if (c.tol) o.steering.tol_target = *c.tol;
        r = verify_controllability(pick(cs, v.component, {1, 2, 3}), L, o);
    } else if (property == "no_return") {
        const auto cs = curves();
        NoReturnOptions o;
        o.seed = c.seed;
        o.threads = v.threads;
        if (v.exits) o.exits = *v.exits;
        if (v.horizon) o.horizon = *v.horizon;
        if (c.tol) o.reentry_tol = *c.tol;
        r = verify_no_return(pick(cs, v.component, {2, 3}), L, o);
    } else if (property == "curative") {
        CurativeOptions o;
        o.seed = c.seed;
        o.threads = v.threads;
        o.u.range = c.window.u;
        o.n.range = c.window.n;
        if (v.schedules) o.schedule_budget = *v.schedules;
        if (v.horizon) o.horizon = *v.horizon;
        if (c.tol) o.eta = *c.tol;
        const CurativeField f = estimate_curative_set(L, c.range, o);
        out.write(".csv", [&](std::ostream& os) { write_curative_csv(os, f); });
        std::size_t marked = 0;
        for (auto m : f.curative) marked += m;
        out.write_json(".json", {{"property", "curative"},
                                 {"fraction", f.fraction()},
                                 {"marked", marked},
                                 {"points", f.curative.size()},
                                 {"seed", c.seed},
                                 {"note", "lower bound: unmarked points are unknown, not certified"}});
        return ok;
    } else if (property == "limit_sets") {
        LimitOptions o;
        o.seed = c.seed;
        o.threads = v.threads;
        o.window = c.window;
        if (v.points) o.points = *v.points;
        if (v.schedules) o.schedules = *v.schedules;
        if (v.horizon) o.horizon = *v.horizon;
        if (c.tol) o.tolerance = *c.tol;
        r = verify_limit_sets(L, c.range, curves(), o);
    } else if (property == "b_delta") {
        BDeltaOptions o;
        o.seed = c.seed;
        o.threads = v.threads;
        o.window = c.window;
        if (v.points) o.points = *v.points;
        if (v.horizon) o.horizon = *v.horizon;
        if (v.delta) o.delta = *v.delta;
        r = verify_b_delta_invariance(L, c.range, o);
    } else {
        throw ConfigError("verify: unknown property '" + property +
                          "' (angle, invariance, controllability, no_return, curative, limit_sets, b_delta)");
    }
    out.write_json(".json", to_json(r));
    return r.pass ? ok : violation;
}

int cmd_sweep(const Globals& g, std::optional<std::vector<double>> deltas) {
    ScenarioConfig c = load(g);
    if (deltas) c.sweep.deltas = *deltas;
    const OmegaOptions oo = omega_options(c);
    SweepResult s;
    if (!c.sweep.ranges.empty()) {
        s = sweep_ranges(c.landscape, c.sweep.ranges, oo);
    } else {
        if (c.sweep.deltas.empty()) throw ConfigError("sweep: give sweep.deltas, sweep.ranges or --delta");
        s = bifurcation_sweep(c.landscape, c.range, c.sweep.deltas, oo);
    }
    const Output out(g, c, "sweep", {{"deltas", c.sweep.deltas}});
    for (std::size_t i = 0; i < s.entries.size(); ++i) write_curves(out, "-e" + std::to_string(i), s.entries[i].curves);
    json j = to_json(s);
    const std::size_t bad = nesting_violations(s);
    j["nesting_violations"] = bad;
    out.write_json(".json", j);
    return bad == 0 ? ok : violation;
}

const OmegaCurve* enclosing(const std::vector<OmegaCurve>& curves, const State& x) {
    for (const auto& o : curves)
        if (o.encloses(x)) return &o;
    return nullptr;
}

int cmd_control(const Globals& g, std::optional<std::vector<double>> x0, std::optional<double> T) {
    ScenarioConfig c = load(g);
    ControlSpec& s = c.control;
    if (x0) {
        if (x0->size() != 2) throw ConfigError("--x0 needs two values");
        s.x0 = {(*x0)[0], (*x0)[1]};
    }
    if (T) {
        if (!(*T > 0.0)) throw ConfigError("--T must be positive");
        s.experiment.control.T = *T;
    }
    if (c.tol) s.experiment.control.tol_residual = *c.tol;
    const Landscape& L = c.landscape;
    const OmegaSet set = build_all(c.range, L, omega_options(c));
    const OmegaCurve* omega = enclosing(set.curves, s.x0);
    if (!omega) throw OmegaError(OmegaError::Kind::no_intersection, "control: x0 lies in no controllable set");

    const PeriodicExperiment e = run_experiment(s.x0, c.range, L, *omega, s.experiment);
    const Output out(g, c, "control", {{"x0", {s.x0.u, s.x0.n}}, {"T", s.experiment.control.T}});
    json j = to_json(e);
    j["scenario"] = c.name;
    j["x0"] = {s.x0.u, s.x0.n};
    j["set_type"] = omega->type;
    if (!e.periods.empty()) {
        j["first_run"] = to_json(e.periods.front());
        out.write("-run.csv", [&](std::ostream& os) { write_run_csv(os, e.periods.front()); });
        out.write("-periods.csv", [&](std::ostream& os) {
            os.precision(17);
            os << "period,t,u,n,alpha,lambda1,lambda2\n";
            for (std::size_t k = 0; k < e.periods.size(); ++k) {
                const OptimalRun& r = e.periods[k];
                if (r.x.size() != r.t.size()) continue;
                const double off = static_cast<double>(k) * r.T;
                for (std::size_t i = 0; i < r.t.size(); ++i)
                    os << k << ',' << off + r.t[i] << ',' << r.x[i].u << ',' << r.x[i].n << ',' << r.dose[i] << ','
                       << r.lambda[i].u << ',' << r.lambda[i].n << '\n';
            }
        });
    }
    // repeat the last converged period
    for (auto it = e.periods.rbegin(); it != e.periods.rend(); ++it) {
        if (!it->converged) continue;
        const CycleReport cr = run_cycles(*it, s.cycles, L);
        out.write("-cycles.csv", [&](std::ostream& os) { write_cycles_csv(os, cr); });
        j["cycles"] = {{"count", s.cycles},
                       {"return_error", cr.return_error},
                       {"max_return_error", cr.max_return_error}};
        break;
    }
    if (e.failed) out.write("-fallback.csv", [&](std::ostream& os) { write_csv(os, e.continuation); });
    if (s.split.enabled) {
        SplitOptions so = s.split.options;
        so.experiment = s.experiment;
        json sp = json::array();
        for (const auto& p : split_search(L, c.range, so)) sp.push_back(to_json(p));
        j["split_search"] = sp;
    }
    out.write_json(".json", j);
    if (!e.periods.empty() && e.failed && e.failed_period == 0 && e.failure == "no_convergence") return numerical;
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Controllable sets and dosing experiments for the planar eco-evolutionary therapy model"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "scenario file (JSON)")->required();
    app.add_option("--out", g.out, "output root; files go to <out>/<scenario>/")->capture_default_str();
    app.add_option("--seed", g.seed, "random seed (overrides the config)");
    app.add_option("--tol", g.tol, "command tolerance (overrides the config)");

    auto* check = app.add_subcommand("check", "hypothesis report");
    auto* equi = app.add_subcommand("equilibria", "equilibrium branch and components");
    auto* omega = app.add_subcommand("omega", "controllable-set boundaries");
    auto* sim = app.add_subcommand("simulate", "trajectory under a dosing schedule");
    auto* ver = app.add_subcommand("verify", "Monte-Carlo property check");
    auto* sweep = app.add_subcommand("sweep", "inflate the dose range and rebuild the sets");
    auto* ctrl = app.add_subcommand("control", "L1-minimal periodic dosing experiment");

    std::optional<std::vector<double>> x0_sim, x0_ctrl, deltas;
    std::optional<double> horizon, T;
    std::string property;
    sim->add_option("--x0", x0_sim, "start state u n")->expected(2);
    sim->add_option("--horizon", horizon, "integration time");
    ver->add_option("--property", property,
                    "angle | invariance | controllability | no_return | curative | limit_sets | b_delta");
    sweep->add_option("--delta", deltas, "range inflations")->expected(1, -1);
    ctrl->add_option("--x0", x0_ctrl, "start state u n")->expected(2);
    ctrl->add_option("--T", T, "period length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*check) return cmd_check(g);
        if (*equi) return cmd_equilibria(g);
        if (*omega) return cmd_omega(g);
        if (*sim) return cmd_simulate(g, x0_sim, horizon);
        if (*ver) return cmd_verify(g, property);
        if (*sweep) return cmd_sweep(g, deltas);
        if (*ctrl) return cmd_control(g, x0_ctrl, T);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return usage;
    } catch (const EquilibriumError& e) {
        std::cerr << "equilibria: " << e.what() << '\n';
        return numerical;
    } catch (const OmegaError& e) {
        std::cerr << "omega: " << e.what() << '\n';
        return numerical;
    } catch (const DynamicsError& e) {
        std::cerr << "dynamics: " << e.what() << '\n';
        return numerical;
    } catch (const LandscapeError& e) {
        std::cerr << "landscape: " << e.what() << '\n';
        return numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return numerical;
    }
    return usage;
}
