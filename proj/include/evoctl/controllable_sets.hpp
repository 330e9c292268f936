#pragma once

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evoctl/dynamics.hpp"
#include "evoctl/equilibria.hpp"
#include "evoctl/geometry.hpp"

namespace evoctl {

class OmegaError : public std::runtime_error {
public:
    enum class Kind { left_window, no_convergence, not_saddle, no_intersection, not_closed, not_simple };
    OmegaError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct OmegaOptions {
    StepControl step;
    /// Region the constituent orbits may explore.
    Window window{{-0.5, 1.5}, {0.0, 1.2}};
    double seed_offset = 1e-6;
    double stop_radius = 1e-7;
    double closure_tol = 1e-6;
    /// Chord-to-arc deviation allowed when densifying accepted steps.
    double sag_tol = 1e-8;
    double max_segment = 5e-3;
    double max_time = 1e6;
    double eta = kEta;
    BranchOptions branch;
};

/// Orbit sampled as a polyline, with the time of each vertex.
struct OrbitPolyline {
    Polyline x;
    std::vector<double> t;
    /// Set when the orbit ended at an attractor (its exact location is the last vertex).
    std::optional<State> attractor;
    /// Distance from the last integrated point to the attractor it was snapped to.
    double approach_gap = 0.0;
    bool left_window = false;
};

/// Stable nodes of f_reduced(., a) on the branch grid.
std::vector<State> attractors(double a, const Landscape& L, const BranchOptions& opts = {});

/// Integrates the reduced system under constant `a`, densified by cubic Hermite interpolation.
/// Stops near any of `targets`, on leaving the window, after |horizon|, or when `stop` returns true.
OrbitPolyline trace_orbit(const State& x0, double a, const Landscape& L, double horizon, const std::vector<State>& targets,
                          const OmegaOptions& opts, const std::function<bool(const State&)>& stop = {});

/// Forward orbit from p under dose a up to the stable node it converges to; throws OmegaError otherwise.
OrbitPolyline forward_orbit_to_attractor(const State& p, double a, const Landscape& L, const OmegaOptions& opts = {});

/// Half-manifolds of a saddle; each polyline starts at the saddle and runs outward (stable ones in backward time).
struct SaddleManifolds {
    State saddle;
    double dose = 0.0;
    Vec2 stable_dir;
    Vec2 unstable_dir;
    OrbitPolyline stable_up;
    OrbitPolyline stable_down;
    OrbitPolyline unstable_left;
    OrbitPolyline unstable_right;
};

SaddleManifolds saddle_manifolds(const State& q, double a, const Landscape& L, const OmegaOptions& opts = {});

enum class SegmentKind { forward_orbit, stable_manifold, unstable_manifold };
std::string to_string(SegmentKind k);

/// A run of consecutive vertices [first, last] taken from one orbit or manifold.
struct Provenance {
    SegmentKind kind = SegmentKind::forward_orbit;
    /// Start point of the orbit or the saddle owning the manifold.
    State anchor;
    double dose = 0.0;
    std::size_t first = 0;
    std::size_t last = 0;
};

struct OmegaCurve {
    int type = 1;
    Component source;
    DoseRange range;
    /// Closed loop: the last vertex repeats the first.
    Polyline points;
    std::vector<Provenance> pieces;
    bool intersects_E = false;
    double min_n = 0.0;
    /// Largest gap bridged when joining the constituent orbits.
    double closure_gap = 0.0;
    PolygonIndex index;

    const Provenance& piece_of_segment(std::size_t i) const;
    double area() const { return signed_area(points); }
    bool counter_clockwise() const { return area() > 0.0; }
    bool encloses(const State& x, double tol = kSnap) const { return index.encloses(x, tol); }
};

OmegaCurve build_omega(const Component& comp, const DoseRange& A, const Landscape& L, const OmegaOptions& opts = {});

/// All components of A and their curves.
struct OmegaSet {
    std::vector<Component> components;
    std::vector<OmegaCurve> curves;
};
OmegaSet build_all(const DoseRange& A, const Landscape& L, const OmegaOptions& opts = {});

bool encloses(const OmegaCurve& omega, const State& x, double tol = kSnap);

/// CSV with columns u,n,kind,anchor_u,anchor_n,dose (provenance of the segment starting at each vertex).
void write_omega_csv(std::ostream& os, const OmegaCurve& omega);

}  // namespace evoctl
