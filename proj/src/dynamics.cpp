#include "evoctl/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace evoctl {

double Window::signed_margin(const State& x) const {
    return std::min({x.u - u.lo, u.hi - x.u, x.n - n.lo, n.hi - x.n});
}

double Schedule::total_duration() const {
    double s = 0.0;
    for (const auto& p : pieces) s += p.duration;
    return s;
}

double Schedule::dose_at(double t) const {
    if (pieces.empty()) throw DynamicsError("empty schedule");
    const double total = total_duration();
    if (periodic && total > 0.0) t = std::fmod(std::max(t, 0.0), total);
    double acc = 0.0;
    for (const auto& p : pieces) {
        acc += p.duration;
        if (t < acc) return p.dose;
    }
    return pieces.back().dose;
}

void Schedule::validate(const DoseRange& A, double tol) const {
    if (pieces.empty()) throw DynamicsError("schedule has no pieces");
    for (const auto& p : pieces) {
        if (!(p.duration >= 0.0) || !std::isfinite(p.duration)) throw DynamicsError("schedule duration must be >= 0");
        if (!A.contains(p.dose, tol)) throw DynamicsError("schedule dose outside the dose range");
    }
    if (periodic && !(total_duration() > 0.0)) throw DynamicsError("periodic schedule needs positive total duration");
}

std::string to_string(FlowStatus s) {
    switch (s) {
        case FlowStatus::horizon: return "horizon";
        case FlowStatus::hit_E: return "hit_E";
        case FlowStatus::left_window: return "left_window";
        case FlowStatus::underflow: return "underflow";
        case FlowStatus::nonfinite: return "nonfinite";
        case FlowStatus::stopped: return "stopped";
    }
    return "unknown";
}

Vec2 f0(const State& x, const Landscape& L) {
    const Jet b0 = L.b0(x.u), c = L.c(x.u);
    return {L.epsilon * L.k(x.n) * (b0.d1 - c.d1 * x.n), x.n * (b0.v - c.v * x.n)};
}

Vec2 f1(const State& x, const Landscape& L) {
    const Jet b1 = L.b1(x.u);
    return {-L.epsilon * L.k(x.n) * b1.d1, -x.n * b1.v};
}

Vec2 f_full(const State& x, double a, const Landscape& L) {
    const Jet b0 = L.b0(x.u), b1 = L.b1(x.u), c = L.c(x.u);
    const double db = b0.d1 - a * b1.d1;
    const double b = b0.v - a * b1.v;
    return {L.epsilon * L.k(x.n) * (db - c.d1 * x.n), x.n * (b - c.v * x.n)};
}

Vec2 f_reduced(const State& x, double a, const Landscape& L) {
    const Jet b0 = L.b0(x.u), b1 = L.b1(x.u), c = L.c(x.u);
    const double db = b0.d1 - a * b1.d1;
    const double b = b0.v - a * b1.v;
    return {L.epsilon * (db - c.d1 * x.n), (b - c.v * x.n) / L.k_tilde(x.n)};
}

Vec2 vector_field(System s, const State& x, double a, const Landscape& L) {
    return s == System::full ? f_full(x, a, L) : f_reduced(x, a, L);
}

Matrix2 jacobian(System s, const State& x, double a, const Landscape& L) {
    const Jet b0 = L.b0(x.u), b1 = L.b1(x.u), c = L.c(x.u);
    const double b = b0.v - a * b1.v, db = b0.d1 - a * b1.d1, d2b = b0.d2 - a * b1.d2;
    const double g = db - c.d1 * x.n;  // u-drift before scaling
    const double r = b - c.v * x.n;    // per-capita growth
    if (s == System::full) {
        const double k = L.k(x.n);
        return {L.epsilon * k * (d2b - c.d2 * x.n), L.epsilon * (L.dk(x.n) * g - k * c.d1), x.n * (db - c.d1 * x.n),
                r - c.v * x.n};
    }
    const double kt = L.k_tilde(x.n);
    return {L.epsilon * (d2b - c.d2 * x.n), -L.epsilon * c.d1, (db - c.d1 * x.n) / kt,
            -c.v / kt - r * L.dk_tilde(x.n) / (kt * kt)};
}

namespace {

template <class Rhs, class Observer>
SegmentResult run_segment(System system, const Landscape& L, double a, Rhs& rhs, double t0, const State& y0, double t1,
                          const StepControl& step, std::span<const EventFn> events, Observer& obs, double h = 0.0) {
    if (step.method == Method::rosenbrock4) {
        auto jac = [&](const Vec2& y) { return jacobian(system, y, a, L); };
        return integrate_stiff(rhs, jac, t0, y0, t1, step, events, obs, h);
    }
    return integrate(rhs, t0, y0, t1, step, events, obs, h);
}

struct SwitchPoint {
    double t_end;
    double dose;
};

// Expands the schedule into switch times covering [0, horizon].
std::vector<SwitchPoint> expand(const Schedule& sched, double horizon) {
    std::vector<SwitchPoint> out;
    double t = 0.0;
    const double total = sched.total_duration();
    const bool cycle = sched.periodic && total > 0.0;
    while (t < horizon) {
        for (const auto& p : sched.pieces) {
            if (p.duration <= 0.0) continue;
            t += p.duration;
            out.push_back({std::min(t, horizon), p.dose});
            if (t >= horizon) break;
        }
        if (!cycle) break;
    }
    if (out.empty() || out.back().t_end < horizon) out.push_back({horizon, sched.pieces.back().dose});
    return out;
}

}  // namespace

Trajectory flow(const State& x0, const Schedule& sched, System system, const Landscape& L, double horizon,
                const FlowOptions& opts) {
    if (!finite(x0)) throw DynamicsError("initial state is not finite");
    if (system == System::full && x0.n < 0.0) throw DynamicsError("full system needs n0 >= 0");
    if (sched.pieces.empty()) throw DynamicsError("empty schedule");
    Trajectory traj;
    std::vector<EventFn> events;
    int e_index = -1;
    if (opts.stop_below_n) {
        const double eta = *opts.stop_below_n;
        e_index = static_cast<int>(events.size());
        events.emplace_back([eta](double, const Vec2& y) { return y.n - eta; });
    }
    if (opts.stop_outside) {
        const Window w = *opts.stop_outside;
        events.emplace_back([w](double, const Vec2& y) { return w.signed_margin(y); });
    }

    auto finish = [&](const SegmentResult& r) {
        switch (r.end) {
            case SegmentEnd::event:
                traj.status = r.event == e_index ? FlowStatus::hit_E : FlowStatus::left_window;
                break;
            case SegmentEnd::underflow:
            case SegmentEnd::step_limit: traj.status = FlowStatus::underflow; break;
            case SegmentEnd::nonfinite: traj.status = FlowStatus::nonfinite; break;
            case SegmentEnd::stopped: traj.status = FlowStatus::stopped; break;
            case SegmentEnd::reached_end: traj.status = FlowStatus::horizon; break;
        }
    };

    if (horizon < 0.0) {
        // Backward flow under the first dose.
        const double a = sched.pieces.front().dose;
        auto rhs = [&](double, const Vec2& y) { return vector_field(system, y, a, L); };
        auto obs = [&](double t, const Vec2& y) {
            if (opts.observer && !opts.observer(t, y, a)) return false;
            if (opts.record_steps || traj.t.empty()) {
                traj.t.push_back(t);
                traj.x.push_back(y);
                traj.dose.push_back(a);
            }
            return true;
        };
        const SegmentResult r = run_segment(system, L, a, rhs, 0.0, x0, horizon, opts.step, events, obs);
        if (traj.t.back() != r.t) {
            traj.t.push_back(r.t);
            traj.x.push_back(r.y);
            traj.dose.push_back(a);
        }
        finish(r);
        return traj;
    }

    const auto switches = expand(sched, horizon);
    traj.t.push_back(0.0);
    traj.x.push_back(x0);
    traj.dose.push_back(switches.front().dose);
    double t = 0.0;
    State y = x0;
    double h = opts.step.h_init;
    for (std::size_t k = 0; k < switches.size(); ++k) {
        const double a = switches[k].dose;
        const double t_end = switches[k].t_end;
        if (t_end <= t) continue;
        traj.dose.back() = a;
        auto rhs = [&](double, const Vec2& v) { return vector_field(system, v, a, L); };
        bool first = true;
        auto obs = [&](double tt, const Vec2& v) {
            // The start of each piece is already stored.
            if (first) {
                first = false;
                return opts.observer ? opts.observer(tt, v, a) : true;
            }
            if (opts.observer && !opts.observer(tt, v, a)) return false;
            if (opts.record_steps) {
                traj.t.push_back(tt);
                traj.x.push_back(v);
                traj.dose.push_back(a);
            }
            return true;
        };
        const SegmentResult r = run_segment(system, L, a, rhs, t, y, t_end, opts.step, events, obs, h);
        if (traj.t.back() != r.t) {
            traj.t.push_back(r.t);
            traj.x.push_back(r.y);
            traj.dose.push_back(a);
        }
        finish(r);
        if (r.end != SegmentEnd::reached_end) return traj;
        t = r.t;
        y = r.y;
        h = r.h_next;
    }
    traj.status = FlowStatus::horizon;
    return traj;
}

std::optional<double> killing_time(const State& x0, double a, const Landscape& L, double t_max, double eta,
                                   const StepControl& step) {
    if (x0.n <= eta) return 0.0;
    FlowOptions opts;
    opts.step = step;
    opts.stop_below_n = eta;
    opts.record_steps = false;
    const Trajectory tr = flow(x0, Schedule::constant(a), System::reduced, L, t_max, opts);
    if (tr.status == FlowStatus::hit_E) return tr.t.back();
    return std::nullopt;
}

std::vector<double> rescale_time(const Trajectory& traj, const Landscape& L, double min_population) {
    std::vector<double> s;
    if (traj.t.empty()) return s;
    s.reserve(traj.t.size());
    s.push_back(0.0);
    auto integrand = [&](const State& x) {
        if (!(x.n > min_population)) throw DynamicsError("time rescaling diverges: trajectory approaches E");
        return 1.0 / L.k(x.n);
    };
    double prev = integrand(traj.x.front());
    for (std::size_t i = 1; i < traj.t.size(); ++i) {
        const double cur = integrand(traj.x[i]);
        s.push_back(s.back() + 0.5 * (prev + cur) * (traj.t[i] - traj.t[i - 1]));
        prev = cur;
    }
    return s;
}

void write_csv(std::ostream& os, const Trajectory& traj) {
    const auto old = os.precision(17);
    os << "t,u,n,a\n";
    for (std::size_t i = 0; i < traj.t.size(); ++i)
        os << traj.t[i] << ',' << traj.x[i].u << ',' << traj.x[i].n << ',' << traj.dose[i] << '\n';
    os.precision(old);
}

}  // namespace evoctl
