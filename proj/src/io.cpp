#include "evoctl/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace evoctl {

using nlohmann::json;

namespace {

/// Object reader that remembers which keys were consumed.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    bool has(const std::string& k) const { return j_.contains(k); }

    const json& raw(const std::string& k) {
        if (!has(k)) throw ConfigError(where_ + ": missing key '" + k + "'");
        seen_.insert(k);
        return j_.at(k);
    }

    template <class T>
    T get(const std::string& k, T fallback) {
        if (!has(k)) return fallback;
        return as<T>(raw(k), k);
    }

    template <class T>
    T need(const std::string& k) {
        if (!has(k)) throw ConfigError(where_ + ": missing key '" + k + "'");
        return as<T>(raw(k), k);
    }

    template <class T>
    std::optional<T> maybe(const std::string& k) {
        if (!has(k)) return std::nullopt;
        return as<T>(raw(k), k);
    }

    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }

    std::string path(const std::string& k) const { return where_ + "." + k; }

private:
    template <class T>
    T as(const json& v, const std::string& k) const {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number_integer()) throw ConfigError("");
                if constexpr (std::is_unsigned_v<T>)
                    if (v.get<long long>() < 0) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
            }
            return v.get<T>();
        } catch (const std::exception&) {
            throw ConfigError(where_ + ": bad value for '" + k + "'");
        }
    }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::vector<double> numbers(const json& v, const std::string& where, std::size_t n = 0) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError(where + ": expected an array of numbers");
        out.push_back(e.get<double>());
    }
    if (n && out.size() != n) throw ConfigError(where + ": expected " + std::to_string(n) + " numbers");
    return out;
}

Interval interval(const json& v, const std::string& where) {
    const auto x = numbers(v, where, 2);
    if (!(x[0] <= x[1])) throw ConfigError(where + ": interval must satisfy lo <= hi");
    return {x[0], x[1]};
}

State state(const json& v, const std::string& where) {
    const auto x = numbers(v, where, 2);
    return {x[0], x[1]};
}

System system_of(const std::string& s, const std::string& where) {
    if (s == "full") return System::full;
    if (s == "reduced") return System::reduced;
    throw ConfigError(where + ": system must be 'full' or 'reduced'");
}

InteractionSpec parse_interaction(const json& j, const std::string& where) {
    Reader r(j, where);
    const auto kind = r.need<std::string>("kind");
    InteractionSpec out;
    if (kind == "constant")
        out = ConstantInteraction{r.get("value", 1.0)};
    else if (kind == "exponential")
        out = ExponentialInteraction{r.get("scale", 1.0), r.get("rate", 0.0)};
    else if (kind == "quadratic")
        out = QuadraticInteraction{r.get("base", 1.0), r.get("curvature", 0.0), r.get("center", 0.0)};
    else
        throw ConfigError(where + ": unknown interaction kind '" + kind + "'");
    r.done();
    return out;
}

RateSpec parse_rate(const json& j, const std::string& where) {
    Reader r(j, where);
    const auto kind = r.need<std::string>("kind");
    RateSpec out;
    if (kind == "identity")
        out = IdentityRate{};
    else if (kind == "linear")
        out = LinearRate{r.get("slope", 1.0)};
    else if (kind == "saturating")
        out = SaturatingRate{r.get("half_saturation", 1.0)};
    else
        throw ConfigError(where + ": unknown rate kind '" + kind + "'");
    r.done();
    return out;
}

}  // namespace

Landscape parse_landscape(const json& j) {
    Landscape L;
    if (j.is_string()) {
        try {
            L = preset(j.get<std::string>());
        } catch (const LandscapeError& e) {
            throw ConfigError(std::string("landscape: ") + e.what());
        }
        return L;
    }
    Reader r(j, "landscape");
    const bool from_preset = r.has("preset");
    if (from_preset) {
        try {
            L = preset(r.need<std::string>("preset"));
        } catch (const LandscapeError& e) {
            throw ConfigError(std::string("landscape: ") + e.what());
        }
    } else {
        L.name = "inline";
        for (const char* k : {"r", "g", "u_bar", "p", "sigmoids"})
            if (!r.has(k)) throw ConfigError(std::string("landscape: missing key '") + k + "'");
    }
    L.name = r.get("name", L.name);
    if (r.has("r") || r.has("g") || r.has("u_bar")) {
        const auto rr = numbers(r.raw("r"), r.path("r"));
        const auto gg = numbers(r.raw("g"), r.path("g"), rr.size());
        const auto uu = numbers(r.raw("u_bar"), r.path("u_bar"), rr.size());
        L.bumps.clear();
        for (std::size_t i = 0; i < rr.size(); ++i) L.bumps.push_back({rr[i], gg[i], uu[i]});
    }
    if (r.has("p")) {
        const auto p = numbers(r.raw("p"), r.path("p"), 3);
        if (p[2] != std::floor(p[2])) throw ConfigError("landscape.p: exponent p3 must be an integer");
        L.decay = {p[0], p[1], static_cast<int>(p[2])};
    }
    if (r.has("sigmoids")) {
        const json& s = r.raw("sigmoids");
        if (!s.is_array()) throw ConfigError("landscape.sigmoids: expected an array of 7-tuples");
        L.efficacy.clear();
        for (const auto& t : s) {
            const auto c = numbers(t, "landscape.sigmoids", 7);
            Sigmoid sg;
            std::copy(c.begin(), c.end(), sg.c.begin());
            L.efficacy.push_back(sg);
        }
    }
    if (r.has("c")) L.interaction = parse_interaction(r.raw("c"), "landscape.c");
    if (r.has("k")) L.rate = parse_rate(r.raw("k"), "landscape.k");
    L.epsilon = r.get("epsilon", L.epsilon);
    L.max_dose = r.get("max_dose", L.max_dose);
    r.done();
    try {
        L.validate();
    } catch (const LandscapeError& e) {
        throw ConfigError(std::string("landscape: ") + e.what());
    }
    return L;
}

Schedule parse_schedule(const json& pieces) {
    if (!pieces.is_array() || pieces.empty()) throw ConfigError("schedule: expected a non-empty array of [duration, dose]");
    Schedule s;
    for (const auto& p : pieces) {
        const auto v = numbers(p, "schedule", 2);
        if (!(v[0] >= 0.0)) throw ConfigError("schedule: durations must be non-negative");
        s.pieces.push_back({v[0], v[1]});
    }
    return s;
}

ScenarioConfig parse_config(const json& j) {
    ScenarioConfig c;
    c.source = j;
    Reader r(j, "config");
    c.name = r.get<std::string>("name", c.name);
    if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos || c.name == "." || c.name == "..")
        throw ConfigError("config: name must be a plain folder name");
    if (!r.has("landscape")) throw ConfigError("config: missing key 'landscape'");
    c.landscape = parse_landscape(r.raw("landscape"));
    if (r.has("dose_range")) {
        const Interval a = interval(r.raw("dose_range"), "config.dose_range");
        c.range = {a.lo, a.hi};
    } else {
        c.range = {0.0, c.landscape.max_dose};
    }
    if (r.has("window")) {
        Reader w(r.raw("window"), "window");
        if (w.has("u")) c.window.u = interval(w.raw("u"), "window.u");
        if (w.has("n")) c.window.n = interval(w.raw("n"), "window.n");
        w.done();
    }
    c.grid_points = r.get("grid_points", c.grid_points);
    if (c.grid_points < 3) throw ConfigError("config: grid_points must be at least 3");
    c.seed = r.get<std::uint64_t>("seed", c.seed);
    c.tol = r.maybe<double>("tol");
    if (c.tol && !(*c.tol > 0.0)) throw ConfigError("config: tol must be positive");

    if (r.has("simulate")) {
        Reader s(r.raw("simulate"), "simulate");
        if (s.has("x0")) c.simulate.x0 = state(s.raw("x0"), "simulate.x0");
        if (s.has("schedule")) {
            c.simulate.schedule = parse_schedule(s.raw("schedule"));
            c.simulate.has_schedule = true;
        }
        c.simulate.schedule.periodic = s.get("periodic", false);
        c.simulate.horizon = s.get("horizon", 0.0);
        if (c.simulate.horizon < 0.0) throw ConfigError("simulate: horizon must be non-negative");
        c.simulate.system = system_of(s.get<std::string>("system", "full"), "simulate");
        s.done();
    }
    if (r.has("verify")) {
        Reader v(r.raw("verify"), "verify");
        c.verify.property = v.get<std::string>("property", "");
        c.verify.component = v.get("component", -1);
        c.verify.samples = v.maybe<std::size_t>("samples");
        c.verify.points = v.maybe<std::size_t>("points");
        c.verify.schedules = v.maybe<std::size_t>("schedules");
        c.verify.pairs = v.maybe<std::size_t>("pairs");
        c.verify.exits = v.maybe<std::size_t>("exits");
        c.verify.horizon = v.maybe<double>("horizon");
        c.verify.delta = v.maybe<double>("delta");
        c.verify.threads = v.get<unsigned>("threads", 0);
        v.done();
    }
    if (r.has("sweep")) {
        Reader s(r.raw("sweep"), "sweep");
        if (s.has("deltas")) c.sweep.deltas = numbers(s.raw("deltas"), "sweep.deltas");
        if (s.has("ranges")) {
            const json& rs = s.raw("ranges");
            if (!rs.is_array()) throw ConfigError("sweep.ranges: expected an array of [lo, hi]");
            for (const auto& e : rs) {
                const Interval a = interval(e, "sweep.ranges");
                c.sweep.ranges.push_back({a.lo, a.hi});
            }
        }
        s.done();
        for (double d : c.sweep.deltas)
            if (d < 0.0) throw ConfigError("sweep.deltas: values must be non-negative");
    }
    if (r.has("control")) {
        Reader s(r.raw("control"), "control");
        auto& e = c.control.experiment;
        if (s.has("x0")) c.control.x0 = state(s.raw("x0"), "control.x0");
        e.control.T = s.get("T", e.control.T);
        e.control.dt = s.get("dt", e.control.dt);
        e.control.relax = s.get("relax", e.control.relax);
        e.control.tol_ctrl = s.get("tol_ctrl", e.control.tol_ctrl);
        e.control.tol_residual = s.get("tol_residual", e.control.tol_residual);
        e.control.max_iter = s.get("max_iter", e.control.max_iter);
        e.control.system = system_of(s.get<std::string>("system", "full"), "control");
        e.max_periods = s.get("periods", e.max_periods);
        e.periods_after_exit = s.get("periods_after_exit", e.periods_after_exit);
        e.fallback_time = s.get("fallback_time", e.fallback_time);
        c.control.cycles = s.get("cycles", c.control.cycles);
        if (s.has("split")) {
            Reader p(s.raw("split"), "control.split");
            auto& o = c.control.split.options;
            c.control.split.enabled = true;
            if (p.has("T")) o.T_values = numbers(p.raw("T"), "control.split.T");
            if (p.has("epsilon")) o.epsilon_values = numbers(p.raw("epsilon"), "control.split.epsilon");
            if (p.has("bracket")) o.u_bracket = interval(p.raw("bracket"), "control.split.bracket");
            o.n0 = p.get("n0", c.control.x0.n);
            o.u_tol = p.get("u_tol", o.u_tol);
            p.done();
        }
        s.done();
        if (!(e.control.T > 0.0) || !(e.control.dt > 0.0)) throw ConfigError("control: T and dt must be positive");
        if (!(e.control.relax >= 0.0 && e.control.relax < 1.0)) throw ConfigError("control: relax must be in [0, 1)");
    }
    r.done();
    return c;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

std::string params_hash(const json& j) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json to_json(const Landscape& L) {
    json bumps = json::array(), sig = json::array();
    for (const auto& b : L.bumps) bumps.push_back({{"r", b.rate}, {"g", b.width}, {"u_bar", b.center}});
    for (const auto& s : L.efficacy) sig.push_back(s.c);
    json c = std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ConstantInteraction>) return {{"kind", "constant"}, {"value", v.value}};
            if constexpr (std::is_same_v<T, ExponentialInteraction>)
                return {{"kind", "exponential"}, {"scale", v.scale}, {"rate", v.rate}};
            if constexpr (std::is_same_v<T, QuadraticInteraction>)
                return {{"kind", "quadratic"}, {"base", v.base}, {"curvature", v.curvature}, {"center", v.center}};
        },
        L.interaction);
    json k = std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, IdentityRate>) return {{"kind", "identity"}};
            if constexpr (std::is_same_v<T, LinearRate>) return {{"kind", "linear"}, {"slope", v.slope}};
            if constexpr (std::is_same_v<T, SaturatingRate>)
                return {{"kind", "saturating"}, {"half_saturation", v.half_saturation}};
        },
        L.rate);
    return {{"name", L.name},
            {"bumps", bumps},
            {"p", {L.decay.scale, L.decay.center, L.decay.half_power}},
            {"sigmoids", sig},
            {"c", c},
            {"k", k},
            {"epsilon", L.epsilon},
            {"max_dose", L.max_dose}};
}

json to_json(const HypothesisReport& r) {
    json vs = json::array();
    for (const auto& v : r.verdicts) {
        json w = json::array();
        for (const auto& p : v.witnesses) w.push_back({p[0], std::isnan(p[1]) ? json(nullptr) : json(p[1])});
        vs.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}, {"witnesses", w}});
    }
    return {{"pass", r.all_pass()},
            {"verdicts", vs},
            {"u_grid", {{"range", {r.u_grid.range.lo, r.u_grid.range.hi}}, {"points", r.u_grid.points}}},
            {"a_grid", {{"range", {r.a_grid.range.lo, r.a_grid.range.hi}}, {"points", r.a_grid.points}}},
            {"nonpositive_interaction", r.nonpositive_interaction}};
}

json to_json(const Component& c) {
    return {{"type", c.type},
            {"u", {c.u.lo, c.u.hi}},
            {"left", {{"state", {c.left.u, c.left.n}}, {"dose", c.a_left}, {"label", to_string(c.left_label)}}},
            {"right", {{"state", {c.right.u, c.right.n}}, {"dose", c.a_right}, {"label", to_string(c.right_label)}}}};
}

json to_json(const OmegaCurve& o) {
    json pieces = json::array();
    for (const auto& p : o.pieces)
        pieces.push_back({{"kind", to_string(p.kind)},
                          {"anchor", {p.anchor.u, p.anchor.n}},
                          {"dose", p.dose},
                          {"first", p.first},
                          {"last", p.last}});
    return {{"type", o.type},
            {"component", to_json(o.source)},
            {"range", {o.range.lo, o.range.hi}},
            {"vertices", o.points.size()},
            {"area", o.area()},
            {"intersects_E", o.intersects_E},
            {"min_n", o.min_n},
            {"closure_gap", o.closure_gap},
            {"pieces", pieces}};
}

}  // namespace evoctl
