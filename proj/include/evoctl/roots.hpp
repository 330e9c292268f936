#pragma once

#include <cmath>

namespace evoctl {

/// Bisection for a sign change of f on [lo, hi]; f(lo) and f(hi) must differ in sign (or one be zero).
template <class F>
double bisect(F&& f, double lo, double hi, double tol = 1e-12, int max_iter = 200) {
    double flo = f(lo);
    if (flo == 0.0) return lo;
    if (f(hi) == 0.0) return hi;
    for (int i = 0; i < max_iter && std::abs(hi - lo) > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

inline bool sign_change(double a, double b) { return (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) || a == 0.0; }

}  // namespace evoctl
