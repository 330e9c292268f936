#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evoctl/integrator.hpp"
#include "evoctl/landscape.hpp"
#include "evoctl/vec2.hpp"

namespace evoctl {

class DynamicsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class System { full, reduced };

/// Rectangular region of state space.
struct Window {
    Interval u{-0.5, 1.5};
    Interval n{0.0, 1.2};

    bool contains(const State& x) const { return u.contains(x.u) && n.contains(x.n); }
    /// Positive inside, zero on the boundary, negative outside.
    double signed_margin(const State& x) const;
    Window inflated(double du, double dn) const { return {{u.lo - du, u.hi + du}, {n.lo - dn, n.hi + dn}}; }
};

/// Dose range A = [lo, hi].
struct DoseRange {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double a, double tol = 0.0) const { return a >= lo - tol && a <= hi + tol; }
    DoseRange inflated(double delta) const { return {lo - delta, hi + delta}; }
};

/// Piecewise-constant dosing; each dose holds on [t_k, t_k + duration).
struct Schedule {
    struct Piece {
        double duration = 0.0;
        double dose = 0.0;
    };
    std::vector<Piece> pieces;
    /// Repeat the pieces indefinitely; otherwise the last dose is held after the final switch.
    bool periodic = false;

    static Schedule constant(double dose) { return {{{0.0, dose}}, false}; }
    double total_duration() const;
    double dose_at(double t) const;
    /// Throws DynamicsError when durations are negative or doses leave the range.
    void validate(const DoseRange& A, double tol = 1e-12) const;
};

enum class FlowStatus { horizon, hit_E, left_window, underflow, nonfinite, stopped };
std::string to_string(FlowStatus s);

struct Trajectory {
    std::vector<double> t;
    std::vector<State> x;
    std::vector<double> dose;
    FlowStatus status = FlowStatus::horizon;

    const State& back() const { return x.back(); }
    std::size_t size() const { return t.size(); }
};

struct FlowOptions {
    StepControl step;
    /// Stop when the population crosses below this threshold.
    std::optional<double> stop_below_n;
    /// Stop when the state leaves this region.
    std::optional<Window> stop_outside;
    /// Store every accepted step (otherwise only the start, switch points and the end).
    bool record_steps = true;
    /// Called with (t, x, dose) at every accepted step; returning false stops the flow.
    std::function<bool(double, const State&, double)> observer;
};

Vec2 f0(const State& x, const Landscape& L);
Vec2 f1(const State& x, const Landscape& L);
Vec2 f_full(const State& x, double a, const Landscape& L);
Vec2 f_reduced(const State& x, double a, const Landscape& L);
Vec2 vector_field(System s, const State& x, double a, const Landscape& L);
/// Analytic df/dx of the chosen system at fixed dose.
Matrix2 jacobian(System s, const State& x, double a, const Landscape& L);

/// Integrates under `sched` up to `horizon` (negative horizons integrate backwards under a constant schedule).
Trajectory flow(const State& x0, const Schedule& sched, System system, const Landscape& L, double horizon,
                const FlowOptions& opts = {});

inline constexpr double kEta = 1e-8;

/// First time the reduced trajectory under constant dose `a` drops below `eta`; nullopt if not before t_max.
std::optional<double> killing_time(const State& x0, double a, const Landscape& L, double t_max, double eta = kEta,
                                   const StepControl& step = {});

/// Cumulative s(t) = int_0^t dtau / k(n(tau)) along a reduced-system trajectory (trapezoid rule).
std::vector<double> rescale_time(const Trajectory& traj, const Landscape& L, double min_population = kEta);

/// CSV with columns t,u,n,a at 17 significant digits.
void write_csv(std::ostream& os, const Trajectory& traj);

}  // namespace evoctl
