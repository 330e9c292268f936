#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "evoctl/vec2.hpp"

namespace evoctl {

using Polyline = std::vector<State>;

inline constexpr double kSnap = 1e-10;

struct SegmentCrossing {
    /// Parameters along each segment in [0, 1].
    double s = 0.0;
    double t = 0.0;
    State point;
};

/// Intersection of segments [a0, a1] and [b0, b1]; parallel overlaps are not reported.
std::optional<SegmentCrossing> segment_intersection(const State& a0, const State& a1, const State& b0, const State& b1,
                                                    double snap = kSnap);

struct PolylineCrossing {
    /// Segment indices in each polyline and the crossing parameters within them.
    std::size_t i = 0;
    std::size_t j = 0;
    double s = 0.0;
    double t = 0.0;
    State point;
};

/// First crossing of `a` with `b`, ordered along `a`.
std::optional<PolylineCrossing> first_crossing(const Polyline& a, const Polyline& b, double snap = kSnap);

double point_segment_distance(const State& p, const State& a, const State& b);
double distance_to_polyline(const State& p, const Polyline& poly);

/// Shoelace area; positive for counter-clockwise loops. The closing edge is implied.
double signed_area(const Polyline& loop);

struct BoundingBox {
    double u_lo = 0, u_hi = 0, n_lo = 0, n_hi = 0;
    bool contains(const State& p, double pad = 0.0) const {
        return p.u >= u_lo - pad && p.u <= u_hi + pad && p.n >= n_lo - pad && p.n <= n_hi + pad;
    }
};
BoundingBox bounding_box(const Polyline& poly);

/// Pairs of non-adjacent crossing segments of a closed loop (first point repeated at the end). Empty means simple.
std::vector<std::pair<std::size_t, std::size_t>> self_intersections(const Polyline& loop, double snap = kSnap,
                                                                     std::size_t max_report = 16);

enum class Inclusion { outside, boundary, inside };

/// Slab-indexed even-odd point location for a closed loop.
class PolygonIndex {
public:
    PolygonIndex() = default;
    explicit PolygonIndex(Polyline loop, std::size_t slabs = 0);

    Inclusion locate(const State& p, double tol = kSnap) const;
    bool encloses(const State& p, double tol = kSnap) const { return locate(p, tol) == Inclusion::inside; }
    /// Inside, or within `d` of the boundary.
    bool within(const State& p, double d) const;
    /// Distance to the boundary, zero for enclosed points.
    double distance(const State& p) const;
    double boundary_distance(const State& p) const;
    const Polyline& loop() const { return loop_; }
    const BoundingBox& box() const { return box_; }
    bool empty() const { return loop_.size() < 4; }

private:
    std::pair<std::size_t, std::size_t> slab_range(double lo, double hi) const;
    double near_distance(const State& p, double d) const;

    Polyline loop_;
    BoundingBox box_;
    double width_ = 1.0;
    std::vector<std::vector<std::size_t>> slabs_;
};

}  // namespace evoctl
