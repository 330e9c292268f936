#include "evoctl/equilibria.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evoctl/roots.hpp"

namespace evoctl {

namespace {

// Numerator and denominator of a*(u) together with their first two derivatives.
struct Quotient {
    double n0, n1, n2;
    double d0, d1, d2;
};

Quotient quotient(double u, const Landscape& L) {
    const Jet b0 = L.b0(u), b1 = L.b1(u), c = L.c(u);
    Quotient q;
    q.n0 = b0.d1 * c.v - c.d1 * b0.v;
    q.n1 = b0.d2 * c.v - c.d2 * b0.v;
    q.n2 = b0.d3 * c.v + b0.d2 * c.d1 - c.d3 * b0.v - c.d2 * b0.d1;
    q.d0 = b1.d1 * c.v - c.d1 * b1.v;
    q.d1 = b1.d2 * c.v - c.d2 * b1.v;
    q.d2 = b1.d3 * c.v + b1.d2 * c.d1 - c.d3 * b1.v - c.d2 * b1.d1;
    if (std::abs(q.d0) < 1e-14) {
        std::ostringstream os;
        os << "b1'c - c'b1 vanishes at u=" << u << " (H3 violated)";
        throw EquilibriumError(EquilibriumError::Kind::h3_violation, os.str());
    }
    return q;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

}  // namespace

std::string to_string(EqLabel l) {
    switch (l) {
        case EqLabel::stable_node: return "stable-node";
        case EqLabel::saddle: return "saddle";
        case EqLabel::fold_candidate: return "fold-candidate";
    }
    return "unknown";
}

double a_star(double u, const Landscape& L) {
    const Quotient q = quotient(u, L);
    return q.n0 / q.d0;
}

double a_star_prime(double u, const Landscape& L) {
    const Quotient q = quotient(u, L);
    return (q.n1 * q.d0 - q.n0 * q.d1) / (q.d0 * q.d0);
}

double a_star_second(double u, const Landscape& L) {
    const Quotient q = quotient(u, L);
    const double first = q.n1 * q.d0 - q.n0 * q.d1;
    return ((q.n2 * q.d0 - q.n0 * q.d2) * q.d0 - 2.0 * q.d1 * first) / (q.d0 * q.d0 * q.d0);
}

double a_star_prime_via_curvature(double u, const Landscape& L) {
    const double a = a_star(u, L);
    const Jet b0 = L.b0(u), b1 = L.b1(u), c = L.c(u);
    const double hs = (b0.v - a * b1.v) / c.v;
    const double b2 = b0.d2 - a * b1.d2;
    return c.v * (b2 - c.d2 * hs) / (b1.d1 * c.v - b1.v * c.d1);
}

double h_star(double u, const Landscape& L) { return eval_h(u, a_star(u, L), L); }

EqLabel classify(double u, const Landscape& L, double deriv_tol) {
    const double ap = a_star_prime(u, L);
    if (ap > deriv_tol) return EqLabel::stable_node;
    if (ap < -deriv_tol) return EqLabel::saddle;
    return EqLabel::fold_candidate;
}

EquilibriumSpectrum jacobian_eigs(double u, const Landscape& L) {
    const Jet b1 = L.b1(u), c = L.c(u);
    const double hs = h_star(u, L);
    const double lambda1 = c.v / L.k_tilde(hs);
    const double lambda2 = (b1.d1 * c.v - b1.v * c.d1) / c.v;
    return {-lambda1, L.epsilon * lambda2 * a_star_prime(u, L)};
}

Matrix2 equilibrium_jacobian(double u, const Landscape& L) {
    const EquilibriumSpectrum s = jacobian_eigs(u, L);
    const Jet c = L.c(u);
    return {s.slow, -L.epsilon * c.d1, 0.0, s.fast};
}

Matrix2 jacobian_fd(const State& x, double a, const Landscape& L, double step) {
    const Vec2 fu_p = f_reduced({x.u + step, x.n}, a, L), fu_m = f_reduced({x.u - step, x.n}, a, L);
    const Vec2 fn_p = f_reduced({x.u, x.n + step}, a, L), fn_m = f_reduced({x.u, x.n - step}, a, L);
    const double s = 0.5 / step;
    return {(fu_p.u - fu_m.u) * s, (fn_p.u - fn_m.u) * s, (fu_p.n - fu_m.n) * s, (fn_p.n - fn_m.n) * s};
}

std::pair<double, double> eigenvalues(const Matrix2& m) {
    const double tr = m.a11 + m.a22;
    const double det = m.a11 * m.a22 - m.a12 * m.a21;
    const double half = 0.5 * (m.a11 - m.a22);
    const double disc = half * half + m.a12 * m.a21;
    if (disc < 0.0) return {0.5 * tr, 0.5 * tr};
    const double root = std::sqrt(disc);
    // Stable pair: the larger-magnitude root from the sum, the other from det / root1.
    const double big = 0.5 * tr + (tr >= 0.0 ? root : -root);
    const double small = big != 0.0 ? det / big : 0.5 * tr - (tr >= 0.0 ? root : -root);
    return {std::min(big, small), std::max(big, small)};
}

Vec2 eigenvector(const Matrix2& m, double lambda) {
    // Rows of (M - lambda I) are orthogonal to the eigenvector; use the better conditioned one.
    const Vec2 r1{m.a11 - lambda, m.a12};
    const Vec2 r2{m.a21, m.a22 - lambda};
    const Vec2 row = norm(r1) >= norm(r2) ? r1 : r2;
    Vec2 v = norm(row) > 0.0 ? Vec2{-row.n, row.u} : Vec2{1.0, 0.0};
    v *= 1.0 / norm(v);
    return v;
}

EquilibriumBranch build_branch(const Landscape& L, const GridSpec& grid, double deriv_tol) {
    EquilibriumBranch br;
    for (double u : grid.nodes()) {
        br.u.push_back(u);
        br.a.push_back(a_star(u, L));
        br.h.push_back(h_star(u, L));
        br.a_prime.push_back(a_star_prime(u, L));
        br.label.push_back(classify(u, L, deriv_tol));
        br.eigs.push_back(jacobian_eigs(u, L));
    }
    return br;
}

std::vector<double> fold_points(const Landscape& L, const BranchOptions& opts) {
    std::vector<double> out;
    const auto us = opts.grid.nodes();
    auto ap = [&](double u) { return a_star_prime(u, L); };
    double prev = ap(us.front());
    for (std::size_t i = 1; i < us.size(); ++i) {
        const double cur = ap(us[i]);
        if ((prev < 0.0 && cur > 0.0) || (prev > 0.0 && cur < 0.0)) out.push_back(bisect(ap, us[i - 1], us[i], opts.refine_tol));
        else if (cur == 0.0) out.push_back(us[i]);
        prev = cur;
    }
    return out;
}

HyperbolicityReport is_hyperbolic(const DoseRange& A, const Landscape& L, const BranchOptions& opts) {
    HyperbolicityReport rep;
    const auto us = opts.grid.nodes();
    for (double bound : {A.lo, A.hi}) {
        auto g = [&](double u) { return a_star(u, L) - bound; };
        double prev = g(us.front());
        for (std::size_t i = 1; i < us.size(); ++i) {
            const double cur = g(us[i]);
            if ((prev < 0.0 && cur > 0.0) || (prev > 0.0 && cur < 0.0) || cur == 0.0) {
                const double root = bisect(g, us[i - 1], us[i], opts.refine_tol);
                if (std::abs(a_star_prime(root, L)) <= opts.deriv_tol) rep.witnesses.push_back(root);
            }
            prev = cur;
        }
    }
    for (double uf : fold_points(L, opts)) {
        const double af = a_star(uf, L);
        if (std::abs(af - A.lo) <= opts.dose_tol || std::abs(af - A.hi) <= opts.dose_tol) rep.witnesses.push_back(uf);
    }
    std::sort(rep.witnesses.begin(), rep.witnesses.end());
    rep.witnesses.erase(std::unique(rep.witnesses.begin(), rep.witnesses.end(),
                                    [&](double x, double y) { return std::abs(x - y) < 1e-9; }),
                        rep.witnesses.end());
    rep.hyperbolic = rep.witnesses.empty();
    return rep;
}

std::vector<Component> components(const DoseRange& A, const Landscape& L, const BranchOptions& opts) {
    if (A.lo > A.hi) throw EquilibriumError(EquilibriumError::Kind::non_hyperbolic, "empty dose range");
    const HyperbolicityReport hyp = is_hyperbolic(A, L, opts);
    if (!hyp.hyperbolic) {
        throw EquilibriumError(EquilibriumError::Kind::non_hyperbolic,
                               "dose range [" + fmt(A.lo) + ", " + fmt(A.hi) + "] is not hyperbolic (fold at u=" +
                                   fmt(hyp.witnesses.front()) + ")");
    }
    const auto us = opts.grid.nodes();
    const std::size_t m = us.size();
    std::vector<double> as(m), aps(m);
    std::vector<char> inside(m);
    for (std::size_t i = 0; i < m; ++i) {
        as[i] = a_star(us[i], L);
        aps[i] = a_star_prime(us[i], L);
        inside[i] = A.contains(as[i]);
    }
    // An extremum of a* inside a cell can hide a pair of boundary crossings.
    auto ap = [&](double u) { return a_star_prime(u, L); };
    for (std::size_t i = 1; i < m; ++i) {
        // Neighbours on opposite sides of A: the feasible stretch between them is thinner than a cell.
        if ((as[i - 1] > A.hi && as[i] < A.lo) || (as[i - 1] < A.lo && as[i] > A.hi)) {
            throw EquilibriumError(EquilibriumError::Kind::grid_too_coarse,
                                   "grid too coarse: a* jumps across the whole range within the cell at u=" +
                                       fmt(us[i - 1]));
        }
        if (!((aps[i - 1] < 0.0 && aps[i] > 0.0) || (aps[i - 1] > 0.0 && aps[i] < 0.0))) continue;
        const double ue = bisect(ap, us[i - 1], us[i], opts.refine_tol);
        const bool mid_in = A.contains(a_star(ue, L));
        if (mid_in != static_cast<bool>(inside[i - 1]) && mid_in != static_cast<bool>(inside[i])) {
            throw EquilibriumError(EquilibriumError::Kind::grid_too_coarse,
                                   "grid too coarse: a* oscillates across the range boundary within the cell at u=" +
                                       fmt(us[i - 1]));
        }
    }

    auto endpoint = [&](std::size_t in_idx, std::size_t out_idx) {
        // The crossed bound is the one on the outside neighbour's side.
        const double bound = as[out_idx] > A.hi ? A.hi : A.lo;
        auto g = [&](double u) { return a_star(u, L) - bound; };
        const double lo = std::min(us[in_idx], us[out_idx]), hi = std::max(us[in_idx], us[out_idx]);
        return std::pair{bisect(g, lo, hi, opts.refine_tol), bound};
    };
    auto label_of = [&](double u) {
        const EqLabel l = classify(u, L, opts.deriv_tol);
        return l;
    };

    std::vector<Component> out;
    std::size_t i = 0;
    while (i < m) {
        if (!inside[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < m && inside[j + 1]) ++j;
        if (i == 0 || j + 1 == m) {
            throw EquilibriumError(EquilibriumError::Kind::window_too_small,
                                   "feasible equilibria reach the edge of the trait window at u=" +
                                       fmt(i == 0 ? us.front() : us.back()));
        }
        Component comp;
        const auto [ul, al] = endpoint(i, i - 1);
        const auto [ur, ar] = endpoint(j, j + 1);
        comp.u = {ul, ur};
        comp.a_left = al;
        comp.a_right = ar;
        comp.left = {ul, eval_h(ul, al, L)};
        comp.right = {ur, eval_h(ur, ar, L)};
        comp.left_label = label_of(ul);
        comp.right_label = label_of(ur);
        const bool ln = comp.left_label == EqLabel::stable_node;
        const bool rn = comp.right_label == EqLabel::stable_node;
        comp.type = ln && rn ? 1 : (!ln && !rn ? 2 : 3);
        out.push_back(comp);
        i = j + 1;
    }
    return out;
}

void write_branch_csv(std::ostream& os, const EquilibriumBranch& br) {
    const auto old = os.precision(17);
    os << "u,a_star,h_star,a_star_prime,label\n";
    for (std::size_t i = 0; i < br.u.size(); ++i)
        os << br.u[i] << ',' << br.a[i] << ',' << br.h[i] << ',' << br.a_prime[i] << ',' << to_string(br.label[i])
           << '\n';
    os.precision(old);
}

}  // namespace evoctl
