#include "evoctl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace evoctl {

std::optional<SegmentCrossing> segment_intersection(const State& a0, const State& a1, const State& b0, const State& b1,
                                                    double snap) {
    const Vec2 r = a1 - a0, q = b1 - b0, w = b0 - a0;
    const double den = cross(r, q);
    const double lr = norm(r), lq = norm(q);
    if (lr == 0.0 || lq == 0.0) return std::nullopt;
    if (std::abs(den) <= 1e-300 || std::abs(den) < 1e-15 * lr * lq) return std::nullopt;
    double s = cross(w, q) / den;
    double t = cross(w, r) / den;
    // Snap parameters that miss an endpoint by less than `snap` in state units.
    const double ss = snap / lr, st = snap / lq;
    if (s < -ss || s > 1.0 + ss || t < -st || t > 1.0 + st) return std::nullopt;
    s = std::clamp(s, 0.0, 1.0);
    t = std::clamp(t, 0.0, 1.0);
    return SegmentCrossing{s, t, a0 + s * r};
}

BoundingBox bounding_box(const Polyline& poly) {
    BoundingBox b;
    if (poly.empty()) return b;
    b.u_lo = b.u_hi = poly[0].u;
    b.n_lo = b.n_hi = poly[0].n;
    for (const auto& p : poly) {
        b.u_lo = std::min(b.u_lo, p.u);
        b.u_hi = std::max(b.u_hi, p.u);
        b.n_lo = std::min(b.n_lo, p.n);
        b.n_hi = std::max(b.n_hi, p.n);
    }
    return b;
}

namespace {

struct Grid {
    BoundingBox box;
    double cu = 1.0, cn = 1.0;
    int nu = 1, nn = 1;

    Grid(const BoundingBox& b, std::size_t segments) : box(b) {
        const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(segments))));
        nu = nn = std::min(side, 2048);
        cu = std::max((b.u_hi - b.u_lo) / nu, 1e-300);
        cn = std::max((b.n_hi - b.n_lo) / nn, 1e-300);
    }
    int iu(double u) const { return std::clamp(static_cast<int>((u - box.u_lo) / cu), 0, nu - 1); }
    int in(double n) const { return std::clamp(static_cast<int>((n - box.n_lo) / cn), 0, nn - 1); }
    long key(int a, int b) const { return static_cast<long>(a) * nn + b; }

    template <class F>
    void cells(const State& a, const State& b, double pad, F&& f) const {
        const int u0 = iu(std::min(a.u, b.u) - pad), u1 = iu(std::max(a.u, b.u) + pad);
        const int n0 = in(std::min(a.n, b.n) - pad), n1 = in(std::max(a.n, b.n) + pad);
        for (int i = u0; i <= u1; ++i)
            for (int j = n0; j <= n1; ++j) f(key(i, j));
    }
};

BoundingBox merge(const BoundingBox& a, const BoundingBox& b) {
    return {std::min(a.u_lo, b.u_lo), std::max(a.u_hi, b.u_hi), std::min(a.n_lo, b.n_lo), std::max(a.n_hi, b.n_hi)};
}

}  // namespace

std::optional<PolylineCrossing> first_crossing(const Polyline& a, const Polyline& b, double snap) {
    if (a.size() < 2 || b.size() < 2) return std::nullopt;
    const BoundingBox bb = bounding_box(b);
    Grid g(merge(bb, bb), b.size());
    std::unordered_map<long, std::vector<std::size_t>> cells;
    for (std::size_t j = 0; j + 1 < b.size(); ++j) g.cells(b[j], b[j + 1], snap, [&](long k) { cells[k].push_back(j); });
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
        const State &p0 = a[i], &p1 = a[i + 1];
        const BoundingBox sb{std::min(p0.u, p1.u), std::max(p0.u, p1.u), std::min(p0.n, p1.n), std::max(p0.n, p1.n)};
        if (sb.u_hi < bb.u_lo - snap || sb.u_lo > bb.u_hi + snap || sb.n_hi < bb.n_lo - snap || sb.n_lo > bb.n_hi + snap)
            continue;
        std::optional<PolylineCrossing> best;
        g.cells(p0, p1, snap, [&](long k) {
            const auto it = cells.find(k);
            if (it == cells.end()) return;
            for (std::size_t j : it->second) {
                const auto x = segment_intersection(p0, p1, b[j], b[j + 1], snap);
                if (x && (!best || x->s < best->s)) best = PolylineCrossing{i, j, x->s, x->t, x->point};
            }
        });
        if (best) return best;
    }
    return std::nullopt;
}

double point_segment_distance(const State& p, const State& a, const State& b) {
    const Vec2 d = b - a;
    const double len2 = dot(d, d);
    if (len2 == 0.0) return distance(p, a);
    const double s = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
    return distance(p, a + s * d);
}

double distance_to_polyline(const State& p, const Polyline& poly) {
    if (poly.empty()) return std::numeric_limits<double>::infinity();
    if (poly.size() == 1) return distance(p, poly[0]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < poly.size(); ++i) best = std::min(best, point_segment_distance(p, poly[i], poly[i + 1]));
    return best;
}

double signed_area(const Polyline& loop) {
    if (loop.size() < 3) return 0.0;
    double s = 0.0;
    const std::size_t m = loop.size();
    for (std::size_t i = 0; i < m; ++i) {
        const State& a = loop[i];
        const State& b = loop[(i + 1) % m];
        s += (a.u - loop[0].u) * (b.n - loop[0].n) - (b.u - loop[0].u) * (a.n - loop[0].n);
    }
    return 0.5 * s;
}

std::vector<std::pair<std::size_t, std::size_t>> self_intersections(const Polyline& loop, double snap,
                                                                     std::size_t max_report) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (loop.size() < 4) return out;
    const std::size_t m = loop.size() - 1;  // segment count
    Grid g(bounding_box(loop), m);
    std::unordered_map<long, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < m; ++i) g.cells(loop[i], loop[i + 1], snap, [&](long k) { cells[k].push_back(i); });
    auto adjacent = [&](std::size_t i, std::size_t j) {
        return i == j || i + 1 == j || j + 1 == i || (i == 0 && j == m - 1) || (j == 0 && i == m - 1);
    };
    for (const auto& [key, segs] : cells) {
        for (std::size_t x = 0; x < segs.size(); ++x)
            for (std::size_t y = x + 1; y < segs.size(); ++y) {
                const std::size_t i = std::min(segs[x], segs[y]), j = std::max(segs[x], segs[y]);
                if (adjacent(i, j)) continue;
                if (segment_intersection(loop[i], loop[i + 1], loop[j], loop[j + 1], snap)) {
                    if (std::find(out.begin(), out.end(), std::pair{i, j}) == out.end()) out.emplace_back(i, j);
                    if (out.size() >= max_report) return out;
                }
            }
    }
    std::sort(out.begin(), out.end());
    return out;
}

PolygonIndex::PolygonIndex(Polyline loop, std::size_t slabs) : loop_(std::move(loop)) {
    if (loop_.size() >= 2 && !(loop_.front() == loop_.back())) loop_.push_back(loop_.front());
    box_ = bounding_box(loop_);
    if (loop_.size() < 2) return;
    const std::size_t m = loop_.size() - 1;
    if (slabs == 0) slabs = std::clamp<std::size_t>(m / 4, 1, 8192);
    width_ = std::max((box_.u_hi - box_.u_lo) / static_cast<double>(slabs), 1e-300);
    slabs_.assign(slabs, {});
    for (std::size_t i = 0; i < m; ++i) {
        const auto [a, b] = slab_range(std::min(loop_[i].u, loop_[i + 1].u), std::max(loop_[i].u, loop_[i + 1].u));
        for (std::size_t k = a; k <= b; ++k) slabs_[k].push_back(i);
    }
}

std::pair<std::size_t, std::size_t> PolygonIndex::slab_range(double lo, double hi) const {
    const double last = static_cast<double>(slabs_.size() - 1);
    const double a = std::clamp(std::floor((lo - box_.u_lo) / width_), 0.0, last);
    const double b = std::clamp(std::floor((hi - box_.u_lo) / width_), 0.0, last);
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
}

double PolygonIndex::near_distance(const State& p, double d) const {
    double best = std::numeric_limits<double>::infinity();
    if (slabs_.empty()) return best;
    const auto [a, b] = slab_range(p.u - d, p.u + d);
    for (std::size_t k = a; k <= b; ++k)
        for (std::size_t i : slabs_[k]) best = std::min(best, point_segment_distance(p, loop_[i], loop_[i + 1]));
    return best;
}

Inclusion PolygonIndex::locate(const State& p, double tol) const {
    if (empty() || !box_.contains(p, tol)) return Inclusion::outside;
    if (near_distance(p, tol) <= tol) return Inclusion::boundary;
    if (p.u < box_.u_lo || p.u > box_.u_hi) return Inclusion::outside;
    // Even-odd count of edges crossed by the upward vertical ray.
    bool inside = false;
    const auto [k, k2] = slab_range(p.u, p.u);
    (void)k2;
    for (std::size_t i : slabs_[k]) {
        const State& a = loop_[i];
        const State& b = loop_[i + 1];
        if ((a.u <= p.u) == (b.u <= p.u)) continue;
        const double n_at = a.n + (p.u - a.u) * (b.n - a.n) / (b.u - a.u);
        if (n_at > p.n) inside = !inside;
    }
    return inside ? Inclusion::inside : Inclusion::outside;
}

bool PolygonIndex::within(const State& p, double d) const {
    if (empty() || !box_.contains(p, d)) return false;
    if (near_distance(p, d) <= d) return true;
    return locate(p, 0.0) == Inclusion::inside;
}

double PolygonIndex::boundary_distance(const State& p) const { return distance_to_polyline(p, loop_); }

double PolygonIndex::distance(const State& p) const {
    if (locate(p, 0.0) != Inclusion::outside) return 0.0;
    return boundary_distance(p);
}

}  // namespace evoctl
