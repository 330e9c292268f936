#include "evoctl/controllable_sets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evoctl/roots.hpp"

namespace evoctl {

namespace {

std::string fmt(const State& x) {
    std::ostringstream os;
    os.precision(10);
    os << '(' << x.u << ", " << x.n << ')';
    return os.str();
}

State hermite(const State& y0, const Vec2& f0v, const State& y1, const Vec2& f1v, double h, double s) {
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y0 + ((s3 - 2 * s2 + s) * h) * f0v + (-2 * s3 + 3 * s2) * y1 +
           ((s3 - s2) * h) * f1v;
}

// Appends interior points of one accepted step so that chords stay within sag_tol of the cubic.
void densify(OrbitPolyline& out, double t0, const State& y0, const Vec2& f0v, double t1, const State& y1,
             const Vec2& f1v, const OmegaOptions& opts) {
    const double h = t1 - t0;
    struct Span {
        double a, b;
        State pa, pb;
        int depth;
    };
    std::vector<Span> stack{{0.0, 1.0, y0, y1, 0}};
    std::vector<std::pair<double, State>> pts;
    while (!stack.empty()) {
        Span s = stack.back();
        stack.pop_back();
        const double mid = 0.5 * (s.a + s.b);
        const State pm = hermite(y0, f0v, y1, f1v, h, mid);
        const double sag = distance(pm, 0.5 * (s.pa + s.pb));
        if (s.depth < 24 && (sag > opts.sag_tol || distance(s.pa, s.pb) > opts.max_segment)) {
            // Right half pushed first so the left half is processed first.
            stack.push_back({mid, s.b, pm, s.pb, s.depth + 1});
            stack.push_back({s.a, mid, s.pa, pm, s.depth + 1});
        } else {
            pts.emplace_back(s.b, s.pb);
        }
    }
    for (const auto& [s, p] : pts) {
        out.t.push_back(t0 + s * h);
        out.x.push_back(p);
    }
}

const State* nearest_within(const State& x, const std::vector<State>& targets, double r) {
    for (const auto& p : targets)
        if (distance(x, p) <= r) return &p;
    return nullptr;
}

std::vector<State> node_roots(double a, const Landscape& L, const BranchOptions& opts, bool want_node) {
    std::vector<State> out;
    const auto us = opts.grid.nodes();
    auto g = [&](double u) { return a_star(u, L) - a; };
    double prev = g(us.front());
    for (std::size_t i = 1; i < us.size(); ++i) {
        const double cur = g(us[i]);
        if (sign_change(prev, cur)) {
            const double u = bisect(g, us[i - 1], us[i], opts.refine_tol);
            const bool node = a_star_prime(u, L) > 0.0;
            if (node == want_node) out.push_back({u, eval_h(u, a, L)});
        }
        prev = cur;
    }
    return out;
}

}  // namespace

std::string to_string(SegmentKind k) {
    switch (k) {
        case SegmentKind::forward_orbit: return "forward_orbit";
        case SegmentKind::stable_manifold: return "stable_manifold";
        case SegmentKind::unstable_manifold: return "unstable_manifold";
    }
    return "unknown";
}

std::vector<State> attractors(double a, const Landscape& L, const BranchOptions& opts) {
    return node_roots(a, L, opts, true);
}

OrbitPolyline trace_orbit(const State& x0, double a, const Landscape& L, double horizon, const std::vector<State>& targets,
                          const OmegaOptions& opts, const std::function<bool(const State&)>& stop) {
    OrbitPolyline out;
    out.x.push_back(x0);
    out.t.push_back(0.0);
    if (const State* p = nearest_within(x0, targets, opts.stop_radius)) {
        out.attractor = *p;
        out.approach_gap = distance(x0, *p);
        return out;
    }
    auto rhs = [&](double, const Vec2& y) { return f_reduced(y, a, L); };
    const Window w = opts.window;
    std::vector<EventFn> events{[w](double, const Vec2& y) { return w.signed_margin(y); }};
    double t_prev = 0.0;
    State y_prev = x0;
    Vec2 f_prev = rhs(0.0, x0);
    bool first = true;
    auto obs = [&](double t, const Vec2& y) {
        if (first) {
            first = false;
            return true;
        }
        const Vec2 fy = rhs(t, y);
        densify(out, t_prev, y_prev, f_prev, t, y, fy, opts);
        t_prev = t;
        y_prev = y;
        f_prev = fy;
        if (const State* p = nearest_within(y, targets, opts.stop_radius)) {
            out.x.push_back(*p);
            out.t.push_back(t);
            out.attractor = *p;
            out.approach_gap = distance(y, *p);
            return false;
        }
        return !(stop && stop(y));
    };
    const SegmentResult r = integrate(rhs, 0.0, x0, horizon, opts.step, events, obs);
    out.left_window = r.end == SegmentEnd::event;
    if (r.end == SegmentEnd::nonfinite || r.end == SegmentEnd::underflow)
        throw OmegaError(OmegaError::Kind::no_convergence, "integration failed from " + fmt(x0));
    return out;
}

OrbitPolyline forward_orbit_to_attractor(const State& p, double a, const Landscape& L, const OmegaOptions& opts) {
    const auto targets = attractors(a, L, opts.branch);
    if (targets.empty())
        throw OmegaError(OmegaError::Kind::no_convergence, "no stable node for the dose in the trait window");
    OrbitPolyline o = trace_orbit(p, a, L, opts.max_time, targets, opts);
    if (o.left_window)
        throw OmegaError(OmegaError::Kind::left_window, "orbit from " + fmt(p) + " left the working window");
    if (!o.attractor)
        throw OmegaError(OmegaError::Kind::no_convergence, "orbit from " + fmt(p) + " did not reach an attractor");
    return o;
}

SaddleManifolds saddle_manifolds(const State& q, double a, const Landscape& L, const OmegaOptions& opts) {
    const Matrix2 J = jacobian_fd(q, a, L);
    const auto [l1, l2] = eigenvalues(J);
    if (!(l1 < 0.0 && l2 > 0.0)) throw OmegaError(OmegaError::Kind::not_saddle, "equilibrium " + fmt(q) + " is not a saddle");
    SaddleManifolds m;
    m.saddle = q;
    m.dose = a;
    m.stable_dir = eigenvector(J, l1);
    m.unstable_dir = eigenvector(J, l2);
    if (std::abs(m.unstable_dir.u) < 1e-12 || std::abs(m.stable_dir.n) < 1e-12)
        throw OmegaError(OmegaError::Kind::not_saddle, "degenerate eigenvectors at " + fmt(q));
    if (m.stable_dir.n < 0.0) m.stable_dir = -m.stable_dir;
    if (m.unstable_dir.u < 0.0) m.unstable_dir = -m.unstable_dir;

    const auto targets = attractors(a, L, opts.branch);
    auto half = [&](const Vec2& dir, double horizon, const std::vector<State>& tg) {
        const State seed = q + opts.seed_offset * dir;
        OrbitPolyline o = trace_orbit(seed, a, L, horizon, tg, opts);
        o.x.insert(o.x.begin(), q);
        o.t.insert(o.t.begin(), 0.0);
        return o;
    };
    m.stable_up = half(m.stable_dir, -opts.max_time, {});
    m.stable_down = half(-m.stable_dir, -opts.max_time, {});
    m.unstable_right = half(m.unstable_dir, opts.max_time, targets);
    m.unstable_left = half(-m.unstable_dir, opts.max_time, targets);
    return m;
}

const Provenance& OmegaCurve::piece_of_segment(std::size_t i) const {
    for (const auto& p : pieces)
        if (i >= p.first && i < p.last) return p;
    return pieces.back();
}

bool encloses(const OmegaCurve& omega, const State& x, double tol) { return omega.encloses(x, tol); }

namespace {

class Assembler {
public:
    void add(const Polyline& pts, SegmentKind kind, const State& anchor, double dose) {
        Provenance p{kind, anchor, dose, 0, 0};
        std::size_t start = 0;
        if (!loop_.empty()) {
            gap_ = std::max(gap_, distance(loop_.back(), pts.front()));
            loop_.back() = pts.front();
            start = 1;
        }
        p.first = loop_.empty() ? 0 : loop_.size() - 1;
        for (std::size_t i = start; i < pts.size(); ++i)
            if (loop_.empty() || !(pts[i] == loop_.back())) loop_.push_back(pts[i]);
        p.last = loop_.size() - 1;
        pieces_.push_back(p);
    }
    void close(OmegaCurve& out) {
        gap_ = std::max(gap_, distance(loop_.back(), loop_.front()));
        loop_.back() = loop_.front();
        out.points = std::move(loop_);
        out.pieces = std::move(pieces_);
        out.closure_gap = std::max(out.closure_gap, gap_);
    }

private:
    Polyline loop_;
    std::vector<Provenance> pieces_;
    double gap_ = 0.0;
};

// Prefix of `o` up to the crossing inside segment i, ending at the crossing point.
Polyline head(const OrbitPolyline& o, std::size_t i, const State& z) {
    Polyline p(o.x.begin(), o.x.begin() + static_cast<long>(i) + 1);
    p.push_back(z);
    return p;
}

// From the crossing point back to the start of `o`.
Polyline head_reversed(const OrbitPolyline& o, std::size_t j, const State& z) {
    Polyline p{z};
    for (std::size_t k = j + 1; k-- > 0;) p.push_back(o.x[k]);
    return p;
}

std::optional<PolylineCrossing> crossing(const OrbitPolyline& a, const OrbitPolyline& b) {
    return first_crossing(a.x, b.x, kSnap);
}

void require_attractor(const OrbitPolyline& o, const State& expect, const char* what, const OmegaOptions& opts) {
    if (!o.attractor || distance(*o.attractor, expect) > opts.closure_tol) {
        throw OmegaError(OmegaError::Kind::not_closed,
                         std::string(what) + " does not converge to " + fmt(expect) +
                             " (epsilon too large or window too small)");
    }
}

}  // namespace

OmegaCurve build_omega(const Component& comp, const DoseRange& A, const Landscape& L, const OmegaOptions& opts) {
    OmegaCurve out;
    out.type = comp.type;
    out.source = comp;
    out.range = A;
    Assembler asm_;

    if (comp.type == 1) {
        // Nodes: a* increases through the component, so the left end belongs to a- and the right to a+.
        const State pm = comp.a_left <= comp.a_right ? comp.left : comp.right;
        const State pp = comp.a_left <= comp.a_right ? comp.right : comp.left;
        auto with = [&](const State& p, double a) {
            std::vector<State> t{p};
            for (const auto& x : attractors(a, L, opts.branch))
                if (distance(x, p) > 1e-9) t.push_back(x);
            return t;
        };
        const OrbitPolyline lower = trace_orbit(pm, A.hi, L, opts.max_time, with(pp, A.hi), opts);
        const OrbitPolyline upper = trace_orbit(pp, A.lo, L, opts.max_time, with(pm, A.lo), opts);
        require_attractor(lower, pp, "orbit from p- under a+", opts);
        require_attractor(upper, pm, "orbit from p+ under a-", opts);
        out.closure_gap = std::max(lower.approach_gap, upper.approach_gap);
        asm_.add(lower.x, SegmentKind::forward_orbit, pm, A.hi);
        asm_.add(upper.x, SegmentKind::forward_orbit, pp, A.lo);
    } else if (comp.type == 2) {
        // Saddles: the left end belongs to a+ and the right to a-.
        const bool left_plus = comp.a_left >= comp.a_right;
        const State pp = left_plus ? comp.left : comp.right;
        const State pm = left_plus ? comp.right : comp.left;
        const SaddleManifolds mp = saddle_manifolds(pp, A.hi, L, opts);
        const SaddleManifolds mm = saddle_manifolds(pm, A.lo, L, opts);
        const bool pm_right = pm.u > pp.u;
        const OrbitPolyline& bottom = pm_right ? mp.unstable_right : mp.unstable_left;
        const OrbitPolyline& top = pm_right ? mm.unstable_left : mm.unstable_right;
        const auto zp = crossing(bottom, mm.stable_down);
        const auto zm = crossing(top, mp.stable_up);
        if (!zp || !zm) {
            throw OmegaError(OmegaError::Kind::no_intersection,
                             "saddle manifolds do not intersect (epsilon too large or window too small)");
        }
        asm_.add(head(bottom, zp->i, zp->point), SegmentKind::unstable_manifold, pp, A.hi);
        asm_.add(head_reversed(mm.stable_down, zp->j, zp->point), SegmentKind::stable_manifold, pm, A.lo);
        asm_.add(head(top, zm->i, zm->point), SegmentKind::unstable_manifold, pm, A.lo);
        asm_.add(head_reversed(mp.stable_up, zm->j, zm->point), SegmentKind::stable_manifold, pp, A.hi);
    } else {
        const bool left_node = comp.left_label == EqLabel::stable_node;
        const State p = left_node ? comp.left : comp.right;
        const State q = left_node ? comp.right : comp.left;
        const double a_s = left_node ? comp.a_left : comp.a_right;
        const double a_o = a_s == A.hi ? A.lo : A.hi;
        const SaddleManifolds mq = saddle_manifolds(q, a_s, L, opts);
        const OrbitPolyline& wu = p.u > q.u ? mq.unstable_right : mq.unstable_left;
        require_attractor(wu, p, "unstable manifold of the saddle", opts);
        // gamma(p, a_o) runs on the far side of H* and meets the stable branch on that side.
        const OrbitPolyline& ws = a_o < a_s ? mq.stable_up : mq.stable_down;
        const OrbitPolyline gamma = trace_orbit(p, a_o, L, opts.max_time, attractors(a_o, L, opts.branch), opts);
        const auto z = crossing(gamma, ws);
        if (!z) {
            throw OmegaError(OmegaError::Kind::no_intersection,
                             "orbit from the node misses the saddle's stable manifold (epsilon too large or window too small)");
        }
        out.closure_gap = wu.approach_gap;
        asm_.add(wu.x, SegmentKind::unstable_manifold, q, a_s);
        asm_.add(head(gamma, z->i, z->point), SegmentKind::forward_orbit, p, a_o);
        asm_.add(head_reversed(ws, z->j, z->point), SegmentKind::stable_manifold, q, a_s);
    }
    asm_.close(out);
    if (out.closure_gap > opts.closure_tol) {
        throw OmegaError(OmegaError::Kind::not_closed, "curve does not close: gap " + std::to_string(out.closure_gap));
    }
    const auto bad = self_intersections(out.points);
    if (!bad.empty()) {
        throw OmegaError(OmegaError::Kind::not_simple, "curve self-intersects near " + fmt(out.points[bad[0].first]) +
                                                           " (epsilon too large)");
    }
    out.min_n = out.points.front().n;
    for (const auto& x : out.points) out.min_n = std::min(out.min_n, x.n);
    out.intersects_E = out.min_n < opts.eta;
    out.index = PolygonIndex(out.points);
    return out;
}

OmegaSet build_all(const DoseRange& A, const Landscape& L, const OmegaOptions& opts) {
    OmegaSet s;
    s.components = components(A, L, opts.branch);
    for (const auto& c : s.components) s.curves.push_back(build_omega(c, A, L, opts));
    return s;
}

void write_omega_csv(std::ostream& os, const OmegaCurve& omega) {
    const auto old = os.precision(17);
    os << "u,n,kind,anchor_u,anchor_n,dose\n";
    for (std::size_t i = 0; i < omega.points.size(); ++i) {
        const Provenance& p = omega.piece_of_segment(std::min(i, omega.points.size() - 2));
        os << omega.points[i].u << ',' << omega.points[i].n << ',' << to_string(p.kind) << ',' << p.anchor.u << ','
           << p.anchor.n << ',' << p.dose << '\n';
    }
    os.precision(old);
}

}  // namespace evoctl
