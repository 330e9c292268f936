#include "evoctl/control.hpp"

#include "evoctl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evoctl {

std::string to_string(ExitSide s) {
    switch (s) {
        case ExitSide::left: return "left";
        case ExitSide::right: return "right";
        default: return "none";
    }
}

Schedule OptimalRun::schedule() const {
    Schedule s;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        const double d = t[i + 1] - t[i];
        if (!s.pieces.empty() && s.pieces.back().dose == dose[i])
            s.pieces.back().duration += d;
        else
            s.pieces.push_back({d, dose[i]});
    }
    return s;
}

std::vector<State> integrate_nodes(const State& x0, const std::vector<double>& t, const std::vector<double>& dose,
                                   System system, const Landscape& L) {
    std::vector<State> x(t.size());
    x[0] = x0;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        const double h = t[i + 1] - t[i], a = dose[i];
        const State& y = x[i];
        const Vec2 k1 = vector_field(system, y, a, L);
        const Vec2 k2 = vector_field(system, y + 0.5 * h * k1, a, L);
        const Vec2 k3 = vector_field(system, y + 0.5 * h * k2, a, L);
        const Vec2 k4 = vector_field(system, y + h * k3, a, L);
        x[i + 1] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

namespace {

Vec2 adjoint_rhs(System s, const State& x, double a, const Vec2& lam, const Landscape& L) {
    const Matrix2 J = jacobian(s, x, a, L);
    return {-(J.a11 * lam.u + J.a21 * lam.n), -(J.a12 * lam.u + J.a22 * lam.n)};
}

}  // namespace

std::vector<Vec2> integrate_adjoint(const std::vector<double>& t, const std::vector<State>& x,
                                    const std::vector<double>& dose, const Vec2& terminal, System system,
                                    const Landscape& L) {
    const std::size_t N = t.size();
    std::vector<Vec2> lam(N);
    lam[N - 1] = terminal;
    for (std::size_t i = N - 1; i-- > 0;) {
        const double h = t[i + 1] - t[i], a = dose[i];
        // cubic Hermite midpoint of the state on this interval
        const Vec2 fa = vector_field(system, x[i], a, L), fb = vector_field(system, x[i + 1], a, L);
        const State xm = 0.5 * (x[i] + x[i + 1]) + (h / 8.0) * (fa - fb);
        const Vec2& l = lam[i + 1];
        const Vec2 k1 = adjoint_rhs(system, x[i + 1], a, l, L);
        const Vec2 k2 = adjoint_rhs(system, xm, a, l - 0.5 * h * k1, L);
        const Vec2 k3 = adjoint_rhs(system, xm, a, l - 0.5 * h * k2, L);
        const Vec2 k4 = adjoint_rhs(system, x[i], a, l - h * k3, L);
        lam[i] = l - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return lam;
}

namespace {

struct Problem {
    const State& x0;
    const DoseRange& A;
    const Landscape& L;
    const ControlOptions& opts;
    std::vector<double> t;

    double integral(const std::vector<double>& a) const {
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < t.size(); ++i) s += a[i] * (t[i + 1] - t[i]);
        return s;
    }
    std::vector<State> forward(const std::vector<double>& a) const {
        return integrate_nodes(x0, t, a, opts.system, L);
    }
    /// Switching function on each interval (mean of the node values).
    std::vector<double> switching(const std::vector<State>& x, const std::vector<Vec2>& lam) const {
        std::vector<double> s(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            const Vec2 g = vector_field(opts.system, x[i], 1.0, L) - vector_field(opts.system, x[i], 0.0, L);
            s[i] = 1.0 + dot(lam[i], g);
        }
        return s;
    }
    double interval_switching(const std::vector<double>& s, std::size_t i) const {
        return i + 1 < s.size() ? 0.5 * (s[i] + s[i + 1]) : s[i];
    }
};

/// Result of the inner sweep at a fixed multiplier.
struct Sweep {
    std::vector<double> dose;
    std::vector<State> x;
    double nT = 0.0;
    bool converged = false;
};

Sweep sweep(const Problem& P, double nu, std::vector<double> a, std::size_t shot, std::vector<IterationRecord>& hist) {
    const std::size_t N = P.t.size();
    Sweep out;
    std::vector<State> x = P.forward(a);
    double J = P.integral(a) + nu * x.back().n;
    for (std::size_t it = 0; it < P.opts.max_iter; ++it) {
        const auto lam = integrate_adjoint(P.t, x, a, {0.0, nu}, P.opts.system, P.L);
        const auto sw = P.switching(x, lam);
        std::vector<double> bb(N);
        for (std::size_t i = 0; i < N; ++i) bb[i] = P.interval_switching(sw, i) > 0.0 ? P.A.lo : P.A.hi;

        double w = 1.0 - P.opts.relax;
        std::vector<double> cand(N);
        std::vector<State> xc;
        double Jc = 0.0;
        for (;;) {
            for (std::size_t i = 0; i < N; ++i) cand[i] = (1.0 - w) * a[i] + w * bb[i];
            xc = P.forward(cand);
            Jc = P.integral(cand) + nu * xc.back().n;
            if (Jc <= J + 1e-13 * (1.0 + std::abs(J)) || w < 1e-6) break;
            w *= 0.5;
        }
        double change = 0.0;
        for (std::size_t i = 0; i < N; ++i) change += std::abs(cand[i] - a[i]);
        change /= static_cast<double>(N);
        const bool stalled = Jc > J + 1e-13 * (1.0 + std::abs(J));
        if (!stalled) {
            a = std::move(cand);
            x = std::move(xc);
            J = Jc;
        }
        hist.push_back({shot, it, nu, P.integral(a), J, change, x.back().n - P.x0.n, stalled ? 0.0 : w});
        // no descent left at any step size counts as stationary
        if (change < P.opts.tol_ctrl || stalled) {
            out.converged = true;
            // drop the relaxation residue when the pure bang-bang control is no worse
            auto xb = P.forward(bb);
            const double Jb = P.integral(bb) + nu * xb.back().n;
            if (Jb <= J) {
                a = std::move(bb);
                x = std::move(xb);
                J = Jb;
                hist.push_back({shot, it + 1, nu, P.integral(a), J, 0.0, x.back().n - P.x0.n, 1.0});
            }
            break;
        }
    }
    out.dose = std::move(a);
    out.x = std::move(x);
    out.nT = out.x.back().n;
    return out;
}

void finish(OptimalRun& run, const Problem& P, const Sweep& s, double nu) {
    run.dose = s.dose;
    run.dose.back() = run.dose[run.dose.size() - 2];
    run.x = s.x;
    run.multiplier = nu;
    run.lambda = integrate_adjoint(P.t, run.x, run.dose, {0.0, nu}, P.opts.system, P.L);
    run.switching = P.switching(run.x, run.lambda);
    run.objective = P.integral(run.dose);
    run.residual = run.x.back().n - P.x0.n;
    std::size_t singular = 0;
    for (std::size_t i = 0; i + 1 < P.t.size(); ++i)
        if (std::abs(P.interval_switching(run.switching, i)) < P.opts.singular_tol) ++singular;
    run.singular_fraction = static_cast<double>(singular) / static_cast<double>(P.t.size() - 1);
}

}  // namespace

OptimalRun fbsm_solve(const State& x0, const DoseRange& A, const Landscape& L, const ControlOptions& opts) {
    if (!(opts.T > 0.0) || !(opts.dt > 0.0)) throw DynamicsError("fbsm_solve: need T > 0 and dt > 0");
    if (!(A.hi >= A.lo)) throw DynamicsError("fbsm_solve: empty dose range");
    const std::size_t nodes = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(opts.T / opts.dt - 1e-9)) + 1);
    Problem P{x0, A, L, opts, {}};
    P.t.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) P.t[i] = opts.T * static_cast<double>(i) / static_cast<double>(nodes - 1);

    OptimalRun run;
    run.T = opts.T;
    run.range = A;
    run.system = opts.system;
    run.t = P.t;

    std::size_t shot = 0;
    auto solve_at = [&](double nu, const std::vector<double>& warm) { return sweep(P, nu, warm, shot++, run.history); };

    if (opts.fixed_multiplier) {
        const double nu = *opts.fixed_multiplier;
        const Sweep s = solve_at(nu, std::vector<double>(nodes, A.lo));
        finish(run, P, s, nu);
        run.converged = s.converged;
        if (!s.converged) run.failure = "no_convergence";
        return run;
    }

    // nu = 0 gives lambda = 0, switching function 1 and the lowest dose throughout
    Sweep lo = solve_at(0.0, std::vector<double>(nodes, A.lo));
    double nu_lo = 0.0, r_lo = lo.nT - x0.n;
    if (std::abs(r_lo) < opts.tol_residual) {
        finish(run, P, lo, 0.0);
        run.converged = lo.converged;
        return run;
    }
    if (r_lo < 0.0) {
        finish(run, P, lo, 0.0);
        run.failure = "infeasible";
        return run;
    }

    // bracket: raise nu until the endpoint drops below n(0)
    Sweep hi;
    double nu_hi = 1.0, r_hi = 0.0;
    for (;;) {
        hi = solve_at(nu_hi, lo.dose);
        r_hi = hi.nT - x0.n;
        if (r_hi <= 0.0) break;
        const bool saturated = std::all_of(hi.dose.begin(), hi.dose.end() - 1, [&](double a) { return a == A.hi; });
        if (saturated || nu_hi > 1e8 || shot >= opts.max_shoot) {
            finish(run, P, hi, nu_hi);
            run.failure = "infeasible";
            return run;
        }
        lo = std::move(hi);
        nu_lo = nu_hi;
        r_lo = r_hi;
        nu_hi *= 4.0;
    }
    if (std::abs(r_hi) < opts.tol_residual) {
        finish(run, P, hi, nu_hi);
        run.converged = hi.converged;
        return run;
    }

    // Illinois regula falsi on nu; the endpoint map is a step function at the node scale,
    // so a collapsed bracket is finished by blending the two controls
    int side = 0;
    double flo = r_lo, fhi = r_hi;
    while (shot < opts.max_shoot && nu_hi - nu_lo > 1e-12 * nu_hi) {
        double nu = (nu_lo * fhi - nu_hi * flo) / (fhi - flo);
        if (!(nu > nu_lo && nu < nu_hi)) nu = 0.5 * (nu_lo + nu_hi);
        Sweep s = solve_at(nu, lo.dose);
        const double r = s.nT - x0.n;
        if (std::abs(r) < opts.tol_residual) {
            finish(run, P, s, nu);
            run.converged = s.converged;
            return run;
        }
        if (r > 0.0) {
            lo = std::move(s);
            nu_lo = nu;
            flo = r;
            r_lo = r;
            if (side == 1) fhi *= 0.5;
            side = 1;
        } else {
            hi = std::move(s);
            nu_hi = nu;
            fhi = r;
            r_hi = r;
            if (side == -1) flo *= 0.5;
            side = -1;
        }
    }

    // blend: alpha(theta) = (1 - theta) alpha_lo + theta alpha_hi; n(T) is continuous in theta
    double th_lo = 0.0, th_hi = 1.0, g_lo = r_lo, g_hi = r_hi;
    Sweep best = std::abs(r_lo) < std::abs(r_hi) ? lo : hi;
    for (int k = 0; k < 200; ++k) {
        double th = (th_lo * g_hi - th_hi * g_lo) / (g_hi - g_lo);
        if (!(th > th_lo && th < th_hi)) th = 0.5 * (th_lo + th_hi);
        Sweep s;
        s.dose.resize(nodes);
        for (std::size_t i = 0; i < nodes; ++i) s.dose[i] = (1.0 - th) * lo.dose[i] + th * hi.dose[i];
        s.x = P.forward(s.dose);
        s.nT = s.x.back().n;
        s.converged = lo.converged && hi.converged;
        const double r = s.nT - x0.n;
        if (std::abs(r) < std::abs(best.nT - x0.n)) best = s;
        if (std::abs(r) < opts.tol_residual) break;
        if (r > 0.0) {
            th_lo = th;
            g_lo = r;
            g_hi *= 0.5;
        } else {
            th_hi = th;
            g_hi = r;
            g_lo *= 0.5;
        }
    }
    finish(run, P, best, 0.5 * (nu_lo + nu_hi));
    run.converged = best.converged && std::abs(run.residual) < opts.tol_residual;
    if (!run.converged) run.failure = "no_convergence";
    return run;
}

ExitEvent classify_exit(const std::vector<double>& t, const std::vector<State>& x, const OmegaCurve& omega,
                        double tol) {
    ExitEvent e;
    std::size_t k = 0;
    while (k < x.size() && omega.index.within(x[k], tol)) ++k;
    if (k == x.size()) return e;
    e.time = t[k];
    e.at = x[k];
    const double mid = 0.5 * (omega.source.u.lo + omega.source.u.hi);
    double best = std::numeric_limits<double>::infinity();
    State anchor = x[k];
    for (const auto& p : omega.pieces) {
        if (p.kind != SegmentKind::stable_manifold) continue;
        const Polyline piece(omega.points.begin() + static_cast<std::ptrdiff_t>(p.first),
                             omega.points.begin() + static_cast<std::ptrdiff_t>(p.last) + 1);
        const double d = distance_to_polyline(x[k], piece);
        if (d < best) {
            best = d;
            anchor = p.anchor;
        }
    }
    e.side = anchor.u < mid ? ExitSide::left : ExitSide::right;
    return e;
}

CycleReport run_cycles(const OptimalRun& run, std::size_t n_cycles, const Landscape& L) {
    CycleReport c;
    if (run.t.empty() || n_cycles == 0) return c;
    State x0 = run.start();
    for (std::size_t k = 0; k < n_cycles; ++k) {
        const auto x = integrate_nodes(x0, run.t, run.dose, run.system, L);
        const double off = static_cast<double>(k) * run.T;
        for (std::size_t i = (k == 0 ? 0 : 1); i < x.size(); ++i) {
            c.t.push_back(off + run.t[i]);
            c.x.push_back(x[i]);
            c.dose.push_back(run.dose[i]);
        }
        c.return_error.push_back(std::abs(x.back().n - x0.n));
        x0 = x.back();
    }
    c.max_return_error = *std::max_element(c.return_error.begin(), c.return_error.end());
    return c;
}

PeriodicExperiment run_experiment(const State& x0, const DoseRange& A, const Landscape& L, const OmegaCurve& omega,
                                  const ExperimentOptions& opts) {
    PeriodicExperiment e;
    State x = x0;
    std::size_t after = 0;
    for (std::size_t k = 0; k < opts.max_periods; ++k) {
        OptimalRun run = fbsm_solve(x, A, L, opts.control);
        const double off = static_cast<double>(k) * opts.control.T;
        if (!run.converged) {
            e.failed = true;
            e.failed_period = k;
            e.failure = run.failure;
            e.periods.push_back(std::move(run));
            FlowOptions fo;
            fo.step = long_run_step();
            const double dose = opts.fallback_dose > 0.0 ? opts.fallback_dose : L.max_dose;
            e.continuation = flow(x, Schedule::constant(dose), opts.control.system, L, opts.fallback_time, fo);
            for (double& t : e.continuation.t) t += off;
            if (e.exit == ExitSide::none) {
                const ExitEvent ev = classify_exit(e.continuation.t, e.continuation.x, omega, opts.exit_tol);
                e.exit = ev.side;
                e.exit_time = ev.time;
                e.exit_state = ev.at;
            }
            return e;
        }
        const ExitEvent ev = classify_exit(run.t, run.x, omega, opts.exit_tol);
        if (ev.side != ExitSide::none) {
            run.exit = ev.side;
            run.exit_time = ev.time;
            if (e.exit == ExitSide::none) {
                e.exit = ev.side;
                e.exit_time = off + ev.time;
                e.exit_state = ev.at;
            }
        }
        x = run.end();
        e.periods.push_back(std::move(run));
        if (e.exit != ExitSide::none && ++after > opts.periods_after_exit) break;
    }
    return e;
}

ExitSide exit_side(const State& x0, const DoseRange& A, const Landscape& L, const OmegaCurve& omega,
                   const ExperimentOptions& opts) {
    ExperimentOptions o = opts;
    o.periods_after_exit = 0;
    o.fallback_time = std::min(o.fallback_time, 50.0);
    return run_experiment(x0, A, L, omega, o).exit;
}

OmegaCurve curve_containing(double u, const DoseRange& A, const Landscape& L, const OmegaOptions& opts) {
    for (const auto& c : components(A, L, opts.branch))
        if (c.u.contains(u)) return build_omega(c, A, L, opts);
    throw OmegaError(OmegaError::Kind::no_intersection, "no component of A contains u = " + std::to_string(u));
}

std::vector<SplitPoint> split_search(const Landscape& L, const DoseRange& A, const SplitOptions& opts) {
    std::vector<SplitPoint> out;
    for (double eps : opts.epsilon_values)
        for (double T : opts.T_values) out.push_back({T, eps, false, 0.0, 0.0, ExitSide::none, ExitSide::none, {}});
    const double mid = 0.5 * (opts.u_bracket.lo + opts.u_bracket.hi);
    parallel_for(
        out.size(),
        [&](std::size_t k) {
            SplitPoint& sp = out[k];
            Landscape Lk = L;
            Lk.epsilon = sp.epsilon;
            ExperimentOptions eo = opts.experiment;
            eo.control.T = sp.T;
            try {
                const OmegaCurve omega = curve_containing(mid, A, Lk);
                double a = opts.u_bracket.lo, b = opts.u_bracket.hi;
                ExitSide sa = exit_side({a, opts.n0}, A, Lk, omega, eo);
                ExitSide sb = exit_side({b, opts.n0}, A, Lk, omega, eo);
                if (sa == sb) {
                    sp.detail = "both ends exit " + to_string(sa);
                } else {
                    while (b - a > opts.u_tol) {
                        const double m = 0.5 * (a + b);
                        const ExitSide sm = exit_side({m, opts.n0}, A, Lk, omega, eo);
                        if (sm == sa)
                            a = m;
                        else if (sm == sb)
                            b = m;
                        else {
                            // a third outcome: keep the half that still brackets a change from sa
                            b = m;
                            sb = sm;
                        }
                    }
                    sp.bracketed = true;
                }
                sp.u_a = a;
                sp.u_b = b;
                sp.side_a = sa;
                sp.side_b = sb;
            } catch (const std::exception& e) {
                sp.detail = e.what();
            }
        },
        opts.threads);
    return out;
}

nlohmann::json to_json(const SplitPoint& s) {
    return {{"T", s.T},
            {"epsilon", s.epsilon},
            {"bracketed", s.bracketed},
            {"u_a", s.u_a},
            {"u_b", s.u_b},
            {"side_a", to_string(s.side_a)},
            {"side_b", to_string(s.side_b)},
            {"split", s.split()},
            {"detail", s.detail}};
}

void write_run_csv(std::ostream& os, const OptimalRun& run) {
    const auto old = os.precision(17);
    os << "t,u,n,alpha,lambda1,lambda2\n";
    for (std::size_t i = 0; i < run.t.size(); ++i)
        os << run.t[i] << ',' << run.x[i].u << ',' << run.x[i].n << ',' << run.dose[i] << ',' << run.lambda[i].u << ','
           << run.lambda[i].n << '\n';
    os.precision(old);
}

void write_cycles_csv(std::ostream& os, const CycleReport& c) {
    const auto old = os.precision(17);
    os << "t,u,n,alpha\n";
    for (std::size_t i = 0; i < c.t.size(); ++i)
        os << c.t[i] << ',' << c.x[i].u << ',' << c.x[i].n << ',' << c.dose[i] << '\n';
    os.precision(old);
}

nlohmann::json to_json(const OptimalRun& run) {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& h : run.history)
        hist.push_back({{"shot", h.shot},
                        {"iteration", h.iteration},
                        {"multiplier", h.multiplier},
                        {"objective", h.objective},
                        {"augmented", h.augmented},
                        {"change", h.change},
                        {"residual", h.residual},
                        {"step", h.step}});
    return {{"T", run.T},
            {"range", {run.range.lo, run.range.hi}},
            {"system", run.system == System::full ? "full" : "reduced"},
            {"start", {run.start().u, run.start().n}},
            {"end", {run.end().u, run.end().n}},
            {"objective", run.objective},
            {"multiplier", run.multiplier},
            {"residual", run.residual},
            {"converged", run.converged},
            {"failure", run.failure},
            {"singular_fraction", run.singular_fraction},
            {"exit", to_string(run.exit)},
            {"exit_time", run.exit_time},
            {"hamiltonian", "H = alpha + lambda . f(x, alpha); lambda' = -dH/dx; lambda(T) = (0, multiplier); "
                            "alpha minimises H pointwise via the switching function 1 + lambda . f1(x)"},
            {"history", hist}};
}

nlohmann::json to_json(const PeriodicExperiment& e) {
    nlohmann::json periods = nlohmann::json::array();
    for (const auto& r : e.periods) {
        auto j = to_json(r);
        j.erase("history");
        j["iterations"] = r.history.size();
        periods.push_back(j);
    }
    return {{"exit", to_string(e.exit)},
            {"exit_time", e.exit_time},
            {"exit_state", {e.exit_state.u, e.exit_state.n}},
            {"failed", e.failed},
            {"failed_period", e.failed_period},
            {"failure", e.failure},
            {"periods", periods}};
}

}  // namespace evoctl
