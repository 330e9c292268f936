#include "evoctl/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace evoctl {

namespace {

using json = nlohmann::json;

json state_json(const State& x) { return json::array({x.u, x.n}); }

std::string describe(const State& x) {
    std::ostringstream os;
    os.precision(10);
    os << '(' << x.u << ", " << x.n << ')';
    return os.str();
}

double default_horizon(double h, const Landscape& L) { return h > 0.0 ? h : 500.0 / L.epsilon; }

}  // namespace

void VerificationReport::add_violation(Counterexample c, std::size_t keep) {
    ++violations;
    if (counterexamples.size() < keep) counterexamples.push_back(std::move(c));
}

json to_json(const Schedule& s) {
    json pieces = json::array();
    for (const auto& p : s.pieces) pieces.push_back(json::array({p.duration, p.dose}));
    return {{"pieces", pieces}, {"periodic", s.periodic}};
}

json to_json(const VerificationReport& r) {
    json ce = json::array();
    for (const auto& c : r.counterexamples) {
        ce.push_back({{"start", state_json(c.start)},
                      {"schedule", to_json(c.schedule)},
                      {"time", c.time},
                      {"at", state_json(c.at)},
                      {"detail", c.detail}});
    }
    return {{"property", r.property},
            {"samples", r.samples},
            {"violations", r.violations},
            {"skipped", r.skipped},
            {"pass", r.pass},
            {"informative", r.informative},
            {"seed", r.seed},
            {"tolerances", r.tolerances},
            {"stats", r.stats},
            {"counterexamples", ce}};
}

std::mt19937_64 task_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, unsigned threads) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(m);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

Schedule random_schedule(std::mt19937_64& rng, const DoseRange& A, const ScheduleSampler& s) {
    std::uniform_int_distribution<int> count(s.min_switches, s.max_switches);
    std::uniform_real_distribution<double> logd(std::log(s.min_duration), std::log(s.max_duration));
    std::uniform_real_distribution<double> dose(A.lo, A.hi);
    Schedule out;
    const int k = count(rng);
    for (int i = 0; i <= k; ++i) {
        const double d = std::exp(logd(rng));
        out.pieces.push_back({d, dose(rng)});
    }
    return out;
}

State sample_inside(std::mt19937_64& rng, const OmegaCurve& omega) {
    const BoundingBox& b = omega.index.box();
    std::uniform_real_distribution<double> U(b.u_lo, b.u_hi), N(b.n_lo, b.n_hi);
    for (int it = 0; it < 1000000; ++it) {
        const State x{U(rng), N(rng)};
        if (omega.index.locate(x) == Inclusion::inside) return x;
    }
    throw OmegaError(OmegaError::Kind::not_closed, "could not sample inside the curve");
}

VerificationReport verify_angle_condition(const Landscape& L, const AngleOptions& opts) {
    VerificationReport r;
    r.property = "angle_condition";
    r.seed = opts.seed;
    r.tolerances = {{"band", opts.band}};
    const double a_hi = opts.dose_hi > 0.0 ? opts.dose_hi : L.max_dose;
    std::mt19937_64 rng = task_rng(opts.seed, 0, 0);
    std::uniform_real_distribution<double> U(opts.window.u.lo, opts.window.u.hi), N(opts.window.n.lo, opts.window.n.hi),
        D(0.0, a_hi);
    std::size_t drawn = 0, equal_doses = 0;
    while (r.samples < opts.samples && drawn < 100 * opts.samples + 1000) {
        ++drawn;
        const State x{U(rng), N(rng)};
        double a1 = D(rng), a2 = D(rng);
        if (a1 == a2) {
            ++equal_doses;
            continue;
        }
        if (a1 > a2) std::swap(a1, a2);
        if (!(x.n > 0.0)) continue;
        const double hs = h_star(x.u, L);
        if (!std::isfinite(hs) || std::abs(x.n - hs) <= opts.band) continue;
        ++r.samples;
        const Vec2 f1v = f_reduced(x, a1, L), f2v = f_reduced(x, a2, L);
        const double s12 = cross(f1v, f2v), s21 = cross(f2v, f1v);
        const int expect = x.n > hs ? 1 : -1;
        const int g12 = (s12 > 0) - (s12 < 0), g21 = (s21 > 0) - (s21 < 0);
        if (g12 != -g21 || g12 != expect) {
            Counterexample c;
            c.start = x;
            c.at = x;
            c.schedule = {{{0.0, a1}, {0.0, a2}}, false};
            std::ostringstream os;
            os.precision(10);
            os << "a1=" << a1 << " a2=" << a2 << " cross=" << s12 << " expected sign " << expect;
            c.detail = os.str();
            r.add_violation(std::move(c));
        }
    }
    r.stats = {{"drawn", static_cast<double>(drawn)}, {"equal_doses", static_cast<double>(equal_doses)}};
    r.skipped = drawn - r.samples;
    r.pass = r.violations == 0;
    return r;
}

StepControl long_run_step() {
    StepControl s;
    s.method = Method::rosenbrock4;
    s.rtol = 1e-9;
    s.atol = 1e-12;
    return s;
}

std::optional<Counterexample> first_escape(const OmegaCurve& omega, const Landscape& L, const State& x0,
                                           const Schedule& sched, double horizon, double dilation,
                                           const StepControl& step) {
    std::optional<Counterexample> out;
    FlowOptions fo;
    fo.step = step;
    fo.record_steps = false;
    fo.observer = [&](double t, const State& y, double) {
        if (omega.index.within(y, dilation)) return true;
        out = Counterexample{x0, sched, t, y, "left the curve by " + std::to_string(omega.index.boundary_distance(y))};
        return false;
    };
    const Trajectory tr = flow(x0, sched, System::reduced, L, horizon, fo);
    if (!out && (tr.status == FlowStatus::nonfinite || tr.status == FlowStatus::underflow))
        out = Counterexample{x0, sched, tr.t.back(), tr.back(), "integration failed: " + to_string(tr.status)};
    return out;
}

VerificationReport verify_forward_invariance(const OmegaCurve& omega, const Landscape& L,
                                             const InvarianceOptions& opts) {
    VerificationReport r;
    r.property = "forward_invariance";
    r.seed = opts.seed;
    r.informative = omega.type != 1;
    const double horizon = default_horizon(opts.horizon, L);
    r.tolerances = {{"dilation", opts.dilation}, {"horizon", horizon}, {"rtol", opts.step.rtol}};
    std::vector<State> points(opts.points);
    for (std::size_t i = 0; i < opts.points; ++i) {
        auto rng = task_rng(opts.seed, 0, i);
        points[i] = sample_inside(rng, omega);
    }
    std::vector<Schedule> schedules(opts.schedules);
    for (std::size_t j = 0; j < opts.schedules; ++j) {
        auto rng = task_rng(opts.seed, 1, j);
        schedules[j] = random_schedule(rng, omega.range, opts.sampler);
    }
    std::vector<std::optional<Counterexample>> res(opts.points * opts.schedules);
    parallel_for(
        res.size(),
        [&](std::size_t k) {
            const std::size_t i = k / opts.schedules, j = k % opts.schedules;
            res[k] = first_escape(omega, L, points[i], schedules[j], horizon, opts.dilation, opts.step);
        },
        opts.threads);
    r.samples = res.size();
    for (auto& c : res)
        if (c) r.add_violation(std::move(*c));
    r.stats["escape_fraction"] = r.samples ? static_cast<double>(r.violations) / r.samples : 0.0;
    r.pass = r.informative || r.violations == 0;
    return r;
}

namespace {

struct SteeringPlan {
    double a_main = 0.0;
    double a_alt = 0.0;
    State pivot;
    bool node = true;
    /// Stable branches of the pivot saddle under a_alt.
    std::vector<OrbitPolyline> stable;
};

SteeringPlan plan_for(const OmegaCurve& omega, const Landscape& L, const SteeringOptions& opts) {
    const Component& c = omega.source;
    const DoseRange& A = omega.range;
    SteeringPlan p;
    if (omega.type == 1) {
        p.a_main = A.hi;
        p.a_alt = A.lo;
        p.pivot = c.a_left <= c.a_right ? c.right : c.left;
    } else if (omega.type == 3) {
        const bool left_node = c.left_label == EqLabel::stable_node;
        p.pivot = left_node ? c.left : c.right;
        p.a_main = left_node ? c.a_left : c.a_right;
        p.a_alt = p.a_main == A.hi ? A.lo : A.hi;
    } else {
        // Main dose carries the orbit toward the a- saddle, whose stable manifold is the exit to intercept.
        p.node = false;
        p.a_main = A.hi;
        p.a_alt = A.lo;
        p.pivot = c.a_left >= c.a_right ? c.right : c.left;
        const SaddleManifolds m = saddle_manifolds(p.pivot, p.a_alt, L, opts.orbit);
        p.stable = {m.stable_down, m.stable_up};
    }
    return p;
}

double time_at(const OrbitPolyline& o, std::size_t i, double s) { return o.t[i] + s * (o.t[i + 1] - o.t[i]); }

struct SwitchCandidate {
    double t = 0.0;
    State x;
};

std::vector<SwitchCandidate> phase_one(const SteeringPlan& p, const Landscape& L, const State& x0,
                                       const SteeringOptions& opts, std::string& why) {
    std::vector<SwitchCandidate> out;
    if (p.node) {
        const double r_min = *std::min_element(opts.node_radii.begin(), opts.node_radii.end());
        const OrbitPolyline o = trace_orbit(x0, p.a_main, L, opts.max_time, {}, opts.orbit,
                                            [&](const State& y) { return distance(y, p.pivot) < r_min; });
        for (double r : opts.node_radii) {
            for (std::size_t k = 0; k < o.x.size(); ++k) {
                if (distance(o.x[k], p.pivot) < r) {
                    out.push_back({o.t[k], o.x[k]});
                    break;
                }
            }
        }
        if (out.empty()) why = "main-dose orbit did not approach the pivot node";
        return out;
    }
    const OrbitPolyline o = trace_orbit(x0, p.a_main, L, opts.max_time, attractors(p.a_main, L, opts.orbit.branch), opts.orbit);
    std::optional<PolylineCrossing> best;
    for (const auto& ws : p.stable) {
        const auto c = first_crossing(o.x, ws.x);
        if (c && (!best || c->i < best->i || (c->i == best->i && c->s < best->s))) best = c;
    }
    if (!best) {
        why = "main-dose orbit never meets the pivot's stable manifold";
        return out;
    }
    for (double delta : opts.saddle_offsets) {
        // Walk back along the orbit by arc length delta from the crossing.
        double left = delta;
        std::size_t i = best->i;
        State from = best->point;
        double t_from = time_at(o, best->i, best->s);
        bool found = false;
        while (true) {
            const double seg = distance(from, o.x[i]);
            if (seg >= left) {
                const double f = seg > 0.0 ? left / seg : 0.0;
                out.push_back({t_from + f * (o.t[i] - t_from), from + f * (o.x[i] - from)});
                found = true;
                break;
            }
            left -= seg;
            from = o.x[i];
            t_from = o.t[i];
            if (i == 0) break;
            --i;
        }
        if (!found) out.push_back({0.0, x0});
    }
    return out;
}

}  // namespace

SteeringResult steer(const OmegaCurve& omega, const Landscape& L, const State& x0, const State& x1,
                     const SteeringOptions& opts) {
    SteeringResult res;
    res.end = x0;
    res.error = distance(x0, x1);
    if (res.error <= opts.tol_target) {
        res.reached = true;
        res.detail = "start is within tolerance of the target";
        return res;
    }
    const SteeringPlan p = plan_for(omega, L, opts);
    // Backward main-dose orbit of the target, followed until it is clearly outside the curve.
    const double margin = 0.02;
    const OrbitPolyline gamma = trace_orbit(x1, p.a_main, L, -opts.backward_time, {}, opts.orbit,
                                            [&](const State& y) { return !omega.index.within(y, margin); });
    if (gamma.left_window && omega.index.within(gamma.x.back(), margin)) {
        res.qualifying = false;
        res.detail = "backward orbit of the target left the window inside the curve";
        return res;
    }
    std::string why;
    const auto candidates = phase_one(p, L, x0, opts, why);
    if (candidates.empty()) {
        res.detail = why;
        return res;
    }
    res.detail = "alternate-dose orbit never crossed the target's backward orbit";
    const auto alt_targets = attractors(p.a_alt, L, opts.orbit.branch);
    for (const auto& cand : candidates) {
        const OrbitPolyline alt = trace_orbit(cand.x, p.a_alt, L, opts.max_time, alt_targets, opts.orbit);
        const auto z = first_crossing(alt.x, gamma.x);
        if (!z) continue;
        const double t_alt = time_at(alt, z->i, z->s);
        const double t_back = -time_at(gamma, z->j, z->t);
        Schedule s;
        if (cand.t > 0.0) s.pieces.push_back({cand.t, p.a_main});
        s.pieces.push_back({t_alt, p.a_alt});
        if (t_back > 0.0) s.pieces.push_back({t_back, p.a_main});
        FlowOptions fo;
        fo.step.rtol = 1e-11;
        fo.step.atol = 1e-14;
        fo.record_steps = false;
        const Trajectory tr = flow(x0, s, System::reduced, L, s.total_duration(), fo);
        const double e = distance(tr.back(), x1);
        if (!res.reached && (res.schedule.pieces.empty() || e < res.error)) {
            res.schedule = s;
            res.end = tr.back();
            res.error = e;
        }
        if (e <= opts.tol_target) {
            res.reached = true;
            res.detail = "reached";
            break;
        }
        res.detail = "re-integrated schedule misses the target";
    }
    return res;
}

VerificationReport verify_controllability(const OmegaCurve& omega, const Landscape& L,
                                          const ControllabilityOptions& opts) {
    VerificationReport r;
    r.property = "controllability";
    r.seed = opts.seed;
    r.tolerances = {{"tol_target", opts.steering.tol_target}};
    std::vector<std::pair<State, State>> pairs(opts.pairs);
    for (std::size_t k = 0; k < opts.pairs; ++k) {
        auto rng = task_rng(opts.seed, 0, k);
        pairs[k].first = sample_inside(rng, omega);
        pairs[k].second = sample_inside(rng, omega);
    }
    std::vector<SteeringResult> res(opts.pairs);
    parallel_for(
        opts.pairs, [&](std::size_t k) { res[k] = steer(omega, L, pairs[k].first, pairs[k].second, opts.steering); },
        opts.threads);
    double worst = 0.0;
    for (std::size_t k = 0; k < opts.pairs; ++k) {
        if (!res[k].qualifying) {
            ++r.skipped;
            continue;
        }
        ++r.samples;
        if (res[k].reached) {
            worst = std::max(worst, res[k].error);
        } else {
            r.add_violation({pairs[k].first, res[k].schedule, res[k].schedule.total_duration(), res[k].end,
                             "target " + describe(pairs[k].second) + ": " + res[k].detail});
        }
    }
    r.stats = {{"worst_error_reached", worst}, {"non_qualifying", static_cast<double>(r.skipped)}};
    r.pass = r.violations == 0;
    return r;
}

VerificationReport verify_no_return(const OmegaCurve& omega, const Landscape& L, const NoReturnOptions& opts) {
    VerificationReport r;
    r.property = "no_return";
    r.seed = opts.seed;
    r.tolerances = {{"exit_tol", opts.exit_tol}, {"reentry_tol", opts.reentry_tol}, {"horizon", opts.horizon}};
    struct Attempt {
        bool exited = false;
        State exit_state;
        double exit_time = 0.0;
        std::optional<Counterexample> reentry;
    };
    auto run = [&](std::size_t k) {
        Attempt a;
        auto rng = task_rng(opts.seed, 0, k);
        const State x0 = sample_inside(rng, omega);
        const Schedule s1 = random_schedule(rng, omega.range, opts.sampler);
        FlowOptions fo;
        fo.step = opts.step;
        fo.record_steps = false;
        fo.observer = [&](double t, const State& y, double) {
            if (omega.index.within(y, opts.exit_tol)) return true;
            a.exited = true;
            a.exit_state = y;
            a.exit_time = t;
            return false;
        };
        flow(x0, s1, System::reduced, L, opts.exit_horizon, fo);
        if (!a.exited) return a;
        const Schedule s2 = random_schedule(rng, omega.range, opts.sampler);
        fo.observer = [&](double t, const State& y, double) {
            if (omega.index.locate(y, 0.0) != Inclusion::inside || omega.index.boundary_distance(y) <= opts.reentry_tol)
                return true;
            a.reentry = Counterexample{a.exit_state, s2, t, y, "re-entered after exiting from " + describe(x0)};
            return false;
        };
        flow(a.exit_state, s2, System::reduced, L, opts.horizon, fo);
        return a;
    };
    const std::size_t batch = 64;
    std::size_t attempts = 0, exits = 0;
    while (exits < opts.exits && attempts < opts.max_attempts) {
        const std::size_t n = std::min(batch, opts.max_attempts - attempts);
        std::vector<Attempt> res(n);
        parallel_for(n, [&](std::size_t k) { res[k] = run(attempts + k); }, opts.threads);
        for (std::size_t k = 0; k < n && exits < opts.exits; ++k) {
            ++r.samples;
            if (!res[k].exited) continue;
            ++exits;
            if (res[k].reentry) r.add_violation(std::move(*res[k].reentry));
        }
        attempts += n;
    }
    r.stats = {{"exited", static_cast<double>(exits)}, {"attempts", static_cast<double>(r.samples)}};
    r.pass = r.violations == 0;
    return r;
}

double CurativeField::fraction() const {
    if (curative.empty()) return 0.0;
    return static_cast<double>(std::count(curative.begin(), curative.end(), 1)) / curative.size();
}

CurativeField estimate_curative_set(const Landscape& L, const DoseRange& A, const CurativeOptions& opts) {
    CurativeField f;
    f.u = opts.u;
    f.n = opts.n;
    const auto us = opts.u.nodes(), ns = opts.n.nodes();
    f.curative.assign(us.size() * ns.size(), 0);
    parallel_for(
        f.curative.size(),
        [&](std::size_t k) {
            const State x{us[k % us.size()], ns[k / us.size()]};
            if (x.n <= opts.eta) {
                f.curative[k] = 1;
                return;
            }
            FlowOptions fo;
            fo.step = opts.step;
            fo.record_steps = false;
            fo.stop_below_n = opts.eta;
            auto kills = [&](const Schedule& s) {
                return flow(x, s, System::reduced, L, opts.horizon, fo).status == FlowStatus::hit_E;
            };
            if (kills(Schedule::constant(A.hi)) || kills(Schedule::constant(A.lo))) {
                f.curative[k] = 1;
                return;
            }
            auto rng = task_rng(opts.seed, 0, k);
            for (std::size_t b = 0; b < opts.schedule_budget; ++b) {
                if (kills(random_schedule(rng, A, opts.sampler))) {
                    f.curative[k] = 1;
                    return;
                }
            }
        },
        opts.threads);
    return f;
}

void write_curative_csv(std::ostream& os, const CurativeField& f) {
    const auto old = os.precision(17);
    os << "u,n,curative\n";
    const auto us = f.u.nodes(), ns = f.n.nodes();
    for (std::size_t j = 0; j < ns.size(); ++j)
        for (std::size_t i = 0; i < us.size(); ++i) os << us[i] << ',' << ns[j] << ',' << int(f.at(i, j)) << '\n';
    os.precision(old);
}

double distance_to_omegas(const State& x, const std::vector<OmegaCurve>& omegas) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& o : omegas) d = std::min(d, o.index.distance(x));
    return d;
}

VerificationReport verify_limit_sets(const Landscape& L, const DoseRange& A, const std::vector<OmegaCurve>& omegas,
                                     const LimitOptions& opts) {
    VerificationReport r;
    r.property = "limit_sets";
    r.seed = opts.seed;
    const double horizon = default_horizon(opts.horizon, L);
    const double t_tail = (1.0 - opts.tail) * horizon;
    r.tolerances = {{"distance", opts.tolerance}, {"horizon", horizon}, {"tail_start", t_tail}};
    struct Run {
        bool curative = false;
        double final_distance = 0.0;
        std::optional<Counterexample> fail;
    };
    auto run = [&](std::size_t k, std::size_t j) {
        Run out;
        auto prng = task_rng(opts.seed, 0, k);
        std::uniform_real_distribution<double> U(opts.window.u.lo, opts.window.u.hi),
            N(std::max(opts.window.n.lo, opts.eta), opts.window.n.hi);
        const State x0{U(prng), N(prng)};
        auto srng = task_rng(opts.seed, 1 + j, k);
        const Schedule s = random_schedule(srng, A, opts.sampler);
        FlowOptions fo;
        fo.step = opts.step;
        fo.record_steps = false;
        fo.stop_below_n = opts.eta;
        fo.observer = [&](double t, const State& y, double) {
            if (t < t_tail) return true;
            for (const auto& o : omegas)
                if (o.index.within(y, opts.tolerance)) return true;
            out.fail = Counterexample{x0, s, t, y, "distance " + std::to_string(distance_to_omegas(y, omegas)) + " in the tail"};
            return false;
        };
        const Trajectory tr = flow(x0, s, System::reduced, L, horizon, fo);
        if (tr.status == FlowStatus::hit_E) {
            out.curative = true;
            out.fail.reset();
        } else if (!out.fail && tr.status != FlowStatus::horizon) {
            out.fail = Counterexample{x0, s, tr.t.back(), tr.back(), "integration ended early: " + to_string(tr.status)};
        }
        if (!out.curative) out.final_distance = distance_to_omegas(tr.back(), omegas);
        return out;
    };
    const std::size_t batch = 64;
    std::size_t attempts = 0, starts = 0;
    double worst = 0.0;
    const std::size_t max_attempts = 50 * opts.points + 100;
    while (starts < opts.points && attempts < max_attempts) {
        const std::size_t n = std::min(batch, max_attempts - attempts);
        std::vector<std::vector<Run>> res(n, std::vector<Run>(opts.schedules));
        parallel_for(
            n * opts.schedules,
            [&](std::size_t q) { res[q / opts.schedules][q % opts.schedules] = run(attempts + q / opts.schedules, q % opts.schedules); },
            opts.threads);
        for (std::size_t k = 0; k < n && starts < opts.points; ++k) {
            // A start reaching E under any tried schedule is curative and not covered by the property.
            const bool curative = std::any_of(res[k].begin(), res[k].end(), [](const Run& x) { return x.curative; });
            if (curative) {
                ++r.skipped;
                continue;
            }
            ++starts;
            for (auto& x : res[k]) {
                ++r.samples;
                worst = std::max(worst, x.final_distance);
                if (x.fail) r.add_violation(std::move(*x.fail));
            }
        }
        attempts += n;
    }
    r.stats = {{"starts", static_cast<double>(starts)}, {"worst_final_distance", worst},
               {"curative_skipped", static_cast<double>(r.skipped)}};
    r.pass = r.violations == 0 && starts == opts.points;
    return r;
}

bool b_delta_contains(const State& x, double delta, const Landscape& L, const DoseRange& A, double collar) {
    const double pad = collar * L.epsilon;
    const double lower = eval_h(x.u, A.hi + delta, L);
    const double upper = eval_h(x.u, A.lo - delta, L);
    return x.n >= lower - pad && x.n <= upper + pad;
}

VerificationReport verify_b_delta_invariance(const Landscape& L, const DoseRange& A, const BDeltaOptions& opts) {
    VerificationReport r;
    r.property = "b_delta_invariance";
    r.seed = opts.seed;
    r.tolerances = {{"delta", opts.delta}, {"collar", opts.collar}, {"horizon", opts.horizon}};
    const DoseRange R = A.inflated(opts.delta);
    std::vector<std::optional<Counterexample>> res(opts.points);
    parallel_for(
        opts.points,
        [&](std::size_t k) {
            auto g = task_rng(opts.seed, 0, k);
            std::uniform_real_distribution<double> U(opts.window.u.lo, opts.window.u.hi), N(opts.window.n.lo,
                                                                                          opts.window.n.hi);
            State x;
            std::size_t tries = 0;
            do x = {U(g), N(g)};
            while (!b_delta_contains(x, opts.delta, L, A, 0.0) && ++tries < 100000);
            if (tries >= 100000) return;
            const Schedule sched = random_schedule(g, R, opts.sampler);
            FlowOptions fo;
            fo.step = opts.step;
            fo.record_steps = false;
            fo.observer = [&](double t, const State& y, double) {
                if (b_delta_contains(y, opts.delta, L, A, opts.collar)) return true;
                res[k] = Counterexample{x, sched, t, y, "left B_delta"};
                return false;
            };
            flow(x, sched, System::reduced, L, opts.horizon, fo);
        },
        opts.threads);
    r.samples = opts.points;
    for (auto& c : res)
        if (c) r.add_violation(std::move(*c));
    r.pass = r.violations == 0;
    return r;
}

namespace {

SweepEntry sweep_entry(const Landscape& L, double parameter, const DoseRange& A, const OmegaOptions& opts) {
    SweepEntry e;
    e.parameter = parameter;
    e.range = A;
    try {
        const HyperbolicityReport h = is_hyperbolic(A, L, opts.branch);
        if (!h.hyperbolic) {
            e.hyperbolic = false;
            e.skipped = "range is not hyperbolic";
            return e;
        }
        OmegaSet s = build_all(A, L, opts);
        e.components = std::move(s.components);
        e.curves = std::move(s.curves);
    } catch (const std::exception& ex) {
        e.skipped = ex.what();
        e.components.clear();
        e.curves.clear();
    }
    return e;
}

void find_merges(SweepResult& s) {
    const SweepEntry* prev = nullptr;
    for (const auto& e : s.entries) {
        if (!e.skipped.empty()) continue;
        if (prev && e.components.size() < prev->components.size()) {
            for (std::size_t into = 0; into < e.components.size(); ++into) {
                MergeEvent m{prev->parameter, e.parameter, {}, into};
                for (std::size_t k = 0; k < prev->components.size(); ++k) {
                    const Interval& u = prev->components[k].u;
                    if (e.components[into].u.contains(0.5 * (u.lo + u.hi))) m.colliding.push_back(k);
                }
                if (m.colliding.size() > 1) s.merges.push_back(std::move(m));
            }
        }
        prev = &e;
    }
}

}  // namespace

SweepResult bifurcation_sweep(const Landscape& L, const DoseRange& base, std::vector<double> deltas,
                              const OmegaOptions& opts) {
    std::sort(deltas.begin(), deltas.end());
    SweepResult s;
    for (double d : deltas) s.entries.push_back(sweep_entry(L, d, base.inflated(d), opts));
    find_merges(s);
    return s;
}

SweepResult sweep_ranges(const Landscape& L, const std::vector<DoseRange>& ranges, const OmegaOptions& opts) {
    SweepResult s;
    for (std::size_t k = 0; k < ranges.size(); ++k) s.entries.push_back(sweep_entry(L, static_cast<double>(k), ranges[k], opts));
    find_merges(s);
    return s;
}

std::size_t nesting_violations(const SweepResult& s, double tol) {
    std::size_t bad = 0;
    for (std::size_t k = 0; k < s.entries.size(); ++k) {
        if (!s.entries[k].skipped.empty()) continue;
        for (std::size_t l = k + 1; l < s.entries.size(); ++l) {
            if (!s.entries[l].skipped.empty()) continue;
            for (const auto& c : s.entries[k].curves)
                for (const auto& v : c.points) {
                    const bool in = std::any_of(s.entries[l].curves.begin(), s.entries[l].curves.end(),
                                                [&](const OmegaCurve& o) { return o.encloses(v, tol); });
                    bad += !in;
                }
        }
    }
    return bad;
}

json to_json(const SweepResult& s) {
    json entries = json::array();
    for (const auto& e : s.entries) {
        json comps = json::array();
        for (const auto& c : e.components) {
            comps.push_back({{"u", json::array({c.u.lo, c.u.hi})},
                             {"type", c.type},
                             {"left", state_json(c.left)},
                             {"right", state_json(c.right)},
                             {"a_left", c.a_left},
                             {"a_right", c.a_right}});
        }
        json curves = json::array();
        for (std::size_t k = 0; k < e.curves.size(); ++k) {
            const auto& o = e.curves[k];
            curves.push_back({{"component", k},
                              {"type", o.type},
                              {"area", o.area()},
                              {"intersects_E", o.intersects_E},
                              {"vertices", o.points.size()}});
        }
        entries.push_back({{"parameter", e.parameter},
                           {"range", json::array({e.range.lo, e.range.hi})},
                           {"hyperbolic", e.hyperbolic},
                           {"skipped", e.skipped},
                           {"components", comps},
                           {"curves", curves}});
    }
    json merges = json::array();
    for (const auto& m : s.merges)
        merges.push_back({{"before", m.before}, {"after", m.after}, {"colliding", m.colliding}, {"into", m.into}});
    return {{"entries", entries}, {"merges", merges}};
}

}  // namespace evoctl
