#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include "evoctl/vec2.hpp"

namespace evoctl {

enum class Method { dopri45, rosenbrock4 };

struct StepControl {
    /// rosenbrock4 needs a Jacobian; use it for long runs that settle onto stable equilibria.
    Method method = Method::dopri45;
    double rtol = 1e-9;
    double atol = 1e-12;
    double h_init = 1e-2;
    double h_min = 1e-13;
    double h_max = 50.0;
    long max_steps = 5'000'000;
};

/// Signed event function; an event fires when it goes from > 0 to <= 0 within an accepted step.
using EventFn = std::function<double(double t, const Vec2& y)>;

enum class SegmentEnd { reached_end, event, stopped, underflow, nonfinite, step_limit };

struct SegmentResult {
    SegmentEnd end = SegmentEnd::reached_end;
    double t = 0.0;
    Vec2 y;
    /// Index into the event list when end == event.
    int event = -1;
    /// Step size to try next (carried across schedule switches).
    double h_next = 0.0;
    long steps = 0;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace detail

/// One Dormand-Prince step; returns the 5th-order solution and writes the embedded error estimate.
template <class Rhs>
Vec2 dopri_step(Rhs& f, double t, const Vec2& y, double h, Vec2& err) {
    using namespace detail;
    const Vec2 k1 = f(t, y);
    const Vec2 k2 = f(t + c2 * h, y + h * (a21 * k1));
    const Vec2 k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    const Vec2 k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vec2 k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vec2 k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vec2 y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec2 k7 = f(t + h, y5);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    return y5;
}

template <class Rhs>
struct DopriStepper {
    Rhs& f;
    static constexpr double grow_exp = -0.2;
    static constexpr double shrink_exp = -0.2;
    Vec2 operator()(double t, const Vec2& y, double h, Vec2& err) { return dopri_step(f, t, y, h, err); }
};

namespace detail {

// Kaps-Rentrop 4(3) with Shampine's coefficients.
inline constexpr double kr_gam = 1.0 / 2, kr_a21 = 2.0, kr_a31 = 48.0 / 25, kr_a32 = 6.0 / 25;
inline constexpr double kr_c21 = -8.0, kr_c31 = 372.0 / 25, kr_c32 = 12.0 / 5;
inline constexpr double kr_c41 = -112.0 / 125, kr_c42 = -54.0 / 125, kr_c43 = -2.0 / 5;
inline constexpr double kr_b1 = 19.0 / 9, kr_b2 = 1.0 / 2, kr_b3 = 25.0 / 108, kr_b4 = 125.0 / 108;
inline constexpr double kr_e1 = 17.0 / 54, kr_e2 = 7.0 / 36, kr_e3 = 0.0, kr_e4 = 125.0 / 108;

}  // namespace detail

/// Linearly implicit stepper for autonomous stiff systems; `jac(y)` returns df/dy.
template <class Rhs, class Jac>
struct RosenbrockStepper {
    Rhs& f;
    Jac& jac;
    static constexpr double grow_exp = -0.25;
    static constexpr double shrink_exp = -1.0 / 3;
    Vec2 operator()(double t, const Vec2& y, double h, Vec2& err) {
        using namespace detail;
        const Matrix2 J = jac(y);
        // W = I/(gam h) - J, solved by Cramer's rule.
        const double d = 1.0 / (kr_gam * h);
        const double w11 = d - J.a11, w12 = -J.a12, w21 = -J.a21, w22 = d - J.a22;
        const double det = w11 * w22 - w12 * w21;
        auto solve = [&](const Vec2& r) { return Vec2{(w22 * r.u - w12 * r.n) / det, (w11 * r.n - w21 * r.u) / det}; };
        const Vec2 g1 = solve(f(t, y));
        const Vec2 fa = f(t + h, y + kr_a21 * g1);
        const Vec2 g2 = solve(fa + (kr_c21 / h) * g1);
        const Vec2 fb = f(t + h, y + kr_a31 * g1 + kr_a32 * g2);
        const Vec2 g3 = solve(fb + (1.0 / h) * (kr_c31 * g1 + kr_c32 * g2));
        const Vec2 g4 = solve(fb + (1.0 / h) * (kr_c41 * g1 + kr_c42 * g2 + kr_c43 * g3));
        err = kr_e1 * g1 + kr_e2 * g2 + kr_e3 * g3 + kr_e4 * g4;
        return y + kr_b1 * g1 + kr_b2 * g2 + kr_b3 * g3 + kr_b4 * g4;
    }
};

inline double scaled_error(const Vec2& err, const Vec2& y0, const Vec2& y1, const StepControl& ctl) {
    const double su = ctl.atol + ctl.rtol * std::max(std::abs(y0.u), std::abs(y1.u));
    const double sn = ctl.atol + ctl.rtol * std::max(std::abs(y0.n), std::abs(y1.n));
    return std::max(std::abs(err.u) / su, std::abs(err.n) / sn);
}

/// Adaptive integration of y' = f(t, y) from t0 to t1 (either direction).
///
/// `observe(t, y)` is called after every accepted step (and once at the start); returning false stops
/// the integration. Events are located by bisection on the step fraction, re-stepping from the last
/// accepted point, and the returned state is the first bracket point with g <= 0.
template <class Stepper, class Observer>
SegmentResult integrate_with(Stepper&& stepper, double t0, Vec2 y0, double t1, const StepControl& ctl, std::span<const EventFn> events,
                        Observer&& observe, double h_guess = 0.0) {
    SegmentResult res;
    res.t = t0;
    res.y = y0;
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    double h = h_guess > 0.0 ? h_guess : ctl.h_init;
    h = std::min(h, ctl.h_max);
    res.h_next = h;
    if (!finite(y0)) {
        res.end = SegmentEnd::nonfinite;
        return res;
    }
    if (!observe(t0, y0)) {
        res.end = SegmentEnd::stopped;
        return res;
    }
    std::vector<double> g_prev(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        g_prev[i] = events[i](t0, y0);
        if (g_prev[i] <= 0.0) {
            res.end = SegmentEnd::event;
            res.event = static_cast<int>(i);
            return res;
        }
    }
    double t = t0;
    Vec2 y = y0;
    while (dir * (t1 - t) > 0.0) {
        if (res.steps >= ctl.max_steps) {
            res.end = SegmentEnd::step_limit;
            break;
        }
        const double remaining = std::abs(t1 - t);
        bool last = false;
        double step = h;
        if (step >= remaining) {
            step = remaining;
            last = true;
        }
        Vec2 err;
        const Vec2 y_new = stepper(t, y, dir * step, err);
        const double e = finite(y_new) ? scaled_error(err, y, y_new, ctl) : std::numeric_limits<double>::infinity();
        if (!(e <= 1.0)) {
            const double factor = std::isfinite(e) ? std::max(0.2, 0.9 * std::pow(e, std::remove_reference_t<Stepper>::shrink_exp)) : 0.1;
            h = step * factor;
            if (h < ctl.h_min) {
                res.end = finite(y_new) ? SegmentEnd::underflow : SegmentEnd::nonfinite;
                break;
            }
            continue;
        }
        ++res.steps;
        const double t_new = last ? t1 : t + dir * step;
        // Event detection on the accepted step.
        int fired = -1;
        double frac_fired = 2.0;
        Vec2 y_fired;
        for (std::size_t i = 0; i < events.size(); ++i) {
            const double g_new = events[i](t_new, y_new);
            if (g_new > 0.0) {
                g_prev[i] = g_new;
                continue;
            }
            double lo = 0.0, hi = 1.0;
            Vec2 y_hi = y_new;
            for (int it = 0; it < 80 && (hi - lo) * step > 1e-13 * std::max(1.0, std::abs(t)); ++it) {
                const double mid = 0.5 * (lo + hi);
                Vec2 scratch;
                const Vec2 y_mid = stepper(t, y, dir * step * mid, scratch);
                if (events[i](t + dir * step * mid, y_mid) > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                    y_hi = y_mid;
                }
            }
            if (hi < frac_fired) {
                frac_fired = hi;
                fired = static_cast<int>(i);
                y_fired = y_hi;
            }
        }
        if (fired >= 0) {
            res.end = SegmentEnd::event;
            res.event = fired;
            res.t = frac_fired >= 1.0 ? t_new : t + dir * step * frac_fired;
            res.y = y_fired;
            observe(res.t, res.y);
            res.h_next = h;
            return res;
        }
        t = t_new;
        y = y_new;
        const double grow = e > 0.0 ? std::min(5.0, 0.9 * std::pow(e, std::remove_reference_t<Stepper>::grow_exp)) : 5.0;
        if (!last || step == h) h = std::min(ctl.h_max, step * grow);
        res.t = t;
        res.y = y;
        if (!observe(t, y)) {
            res.end = SegmentEnd::stopped;
            res.h_next = h;
            return res;
        }
    }
    res.t = t;
    res.y = y;
    res.h_next = h;
    return res;
}

template <class Rhs, class Observer>
SegmentResult integrate(Rhs&& f, double t0, Vec2 y0, double t1, const StepControl& ctl, std::span<const EventFn> events,
                        Observer&& observe, double h_guess = 0.0) {
    DopriStepper<std::remove_reference_t<Rhs>> s{f};
    return integrate_with(s, t0, y0, t1, ctl, events, observe, h_guess);
}

template <class Rhs, class Jac, class Observer>
SegmentResult integrate_stiff(Rhs&& f, Jac&& jac, double t0, Vec2 y0, double t1, const StepControl& ctl,
                              std::span<const EventFn> events, Observer&& observe, double h_guess = 0.0) {
    RosenbrockStepper<std::remove_reference_t<Rhs>, std::remove_reference_t<Jac>> s{f, jac};
    return integrate_with(s, t0, y0, t1, ctl, events, observe, h_guess);
}

}  // namespace evoctl
