#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <sstream>

#include "evoctl/controllable_sets.hpp"

using namespace evoctl;

namespace {

std::multiset<int> types(const OmegaSet& s) {
    std::multiset<int> t;
    for (const auto& c : s.curves) t.insert(c.type);
    return t;
}

void check_well_formed(const OmegaCurve& o) {
    CHECK(o.points.front() == o.points.back());
    CHECK(o.closure_gap <= 1e-6);
    CHECK(self_intersections(o.points).empty());
    CHECK(o.counter_clockwise());
}

}  // namespace

TEST_CASE("orbit from the a- node under a+ ends at the a+ node") {
    const Landscape L = preset("a");
    const auto comps = components({0.3, 1.75}, L);
    REQUIRE(comps.size() == 1);
    const auto o = forward_orbit_to_attractor(comps[0].left, 1.75, L);
    REQUIRE(o.attractor);
    CHECK(distance(*o.attractor, comps[0].right) < 1e-9);
    CHECK(o.approach_gap <= 1e-7);
    // Trapped below the equilibrium graph apart from the two equilibria at its ends.
    for (std::size_t i = 1; i + 1 < o.x.size(); ++i) CHECK(o.x[i].n < h_star(o.x[i].u, L));
}

TEST_CASE("orbit from an attractor is a single point") {
    const Landscape L = preset("a");
    const auto nodes = attractors(1.0, L);
    REQUIRE(nodes.size() == 1);
    const auto o = forward_orbit_to_attractor(nodes[0], 1.0, L);
    CHECK(o.x.size() == 1);
    REQUIRE(o.attractor);
}

TEST_CASE("saddle eigenvectors follow the triangular Jacobian") {
    const Landscape L = preset("c");
    const auto comps = components({0.5, 0.95}, L);
    REQUIRE(comps.size() == 3);
    const Component& s = comps[1];
    REQUIRE(s.type == 2);
    const auto m = saddle_manifolds(s.left, s.a_left, L);
    CHECK(std::abs(m.unstable_dir.u) > 0.99);
    CHECK(std::abs(m.stable_dir.u) < 10 * L.epsilon);
    // Near the saddle the inward unstable branch sits below H* and the upper stable branch above it.
    int seen = 0;
    for (const auto& x : m.unstable_right.x) {
        if (x.u - s.left.u < 1e-4 || x.u - s.left.u > 2e-2) continue;
        CHECK(x.n < h_star(x.u, L));
        ++seen;
    }
    CHECK(seen > 10);
    for (std::size_t i = 2; i < m.stable_up.x.size(); ++i) CHECK(m.stable_up.x[i].n > h_star(m.stable_up.x[i].u, L));
    CHECK_THROWS_AS(saddle_manifolds(comps[0].left, comps[0].a_left, L), OmegaError);
}

TEST_CASE("type-3 saddle connects to the adjacent node") {
    const Landscape L = preset("c");
    const auto comps = components({0.15, 0.8}, L);
    REQUIRE(comps.size() == 2);
    const Component& c = comps[1];
    REQUIRE(c.type == 3);
    const bool left_node = c.left_label == EqLabel::stable_node;
    const State p = left_node ? c.left : c.right, q = left_node ? c.right : c.left;
    const auto m = saddle_manifolds(q, left_node ? c.a_right : c.a_left, L);
    const auto& toward = p.u > q.u ? m.unstable_right : m.unstable_left;
    REQUIRE(toward.attractor);
    CHECK(distance(*toward.attractor, p) < 1e-9);
}

TEST_CASE("example (a): one closed, simple, counter-clockwise type-1 curve") {
    const Landscape L = preset("a");
    const auto s = build_all({0.3, 1.75}, L);
    REQUIRE(s.curves.size() == 1);
    const OmegaCurve& o = s.curves[0];
    CHECK(o.type == 1);
    check_well_formed(o);
    CHECK_FALSE(o.intersects_E);
    REQUIRE(o.pieces.size() == 2);
    // Legs lie on opposite sides of H*.
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& p = o.pieces[k];
        for (std::size_t i = p.first + 1; i < p.last; ++i) {
            const double side = o.points[i].n - h_star(o.points[i].u, L);
            if (k == 0) CHECK(side < 0.0);
            else CHECK(side > 0.0);
        }
    }
    for (double f : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const double u = o.source.u.lo + f * o.source.u.width();
        CHECK(o.encloses(equilibrium_state(u, L)));
    }
    CHECK_FALSE(o.encloses({1.4, 1.1}));
}

TEST_CASE("type-1 boundary is subtangential for every dose in the range") {
    const Landscape L = preset("a");
    const DoseRange A{0.3, 1.75};
    const auto o = build_all(A, L).curves.at(0);
    int checked = 0;
    for (const auto& p : o.pieces) {
        for (std::size_t i = p.first + 1; i < p.last; i += 7) {
            const State& x = o.points[i];
            const Vec2 fe = f_reduced(x, p.dose, L);
            for (int k = 0; k <= 10; ++k) {
                const double a = A.lo + (A.hi - A.lo) * k / 10;
                CHECK(cross(fe, f_reduced(x, a, L)) >= -1e-12);
                ++checked;
            }
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("type-2 boundary: inflow on unstable pieces, outflow on stable pieces") {
    const Landscape L = preset("c");
    const DoseRange A{0.5, 0.95};
    const auto s = build_all(A, L);
    const OmegaCurve* o2 = nullptr;
    for (const auto& c : s.curves)
        if (c.type == 2) o2 = &c;
    REQUIRE(o2);
    REQUIRE(o2->pieces.size() == 4);
    for (const auto& p : o2->pieces) {
        for (std::size_t i = p.first + 2; i + 2 < p.last; i += 5) {
            const State& x = o2->points[i];
            const Vec2 fe = f_reduced(x, p.dose, L);
            // Stable pieces are traversed against their own flow along the loop.
            const double orient = p.kind == SegmentKind::stable_manifold ? -1.0 : 1.0;
            for (int k = 0; k <= 10; ++k) {
                const double a = A.lo + (A.hi - A.lo) * k / 10;
                CHECK(orient * cross(fe, f_reduced(x, a, L)) >= -1e-12);
            }
        }
    }
}

TEST_CASE("example (c) range sweep reproduces the omega types") {
    const Landscape L = preset("c");
    const auto s1 = build_all({0.5, 0.95}, L);
    CHECK(types(s1) == std::multiset<int>{1, 1, 2});
    const auto s2 = build_all({0.4, 1.05}, L);
    CHECK(types(s2).count(3) == 1);
    const auto s3 = build_all({0.35, 1.23}, L);
    CHECK(types(s3) == std::multiset<int>{1});
    for (const auto* s : {&s1, &s2, &s3})
        for (const auto& c : s->curves) check_well_formed(c);
}

TEST_CASE("example (d): saddle-type curve between two node-type curves") {
    const Landscape L = preset("d");
    const auto s = build_all({0.1, 0.45}, L);
    REQUIRE(s.curves.size() == 3);
    CHECK(s.curves[0].type == 1);
    CHECK(s.curves[1].type == 2);
    CHECK(s.curves[2].type == 1);
    for (const auto& c : s.curves) check_well_formed(c);
}

TEST_CASE("inflating the dose range strictly enlarges the curve") {
    const Landscape L = preset("a");
    const DoseRange A{0.3, 1.75};
    const auto small = build_all(A, L).curves.at(0);
    const auto big = build_all(A.inflated(0.05), L).curves.at(0);
    for (const auto& x : small.points) CHECK(big.encloses(x, 1e-9));
    CHECK(big.area() > small.area());
}

TEST_CASE("E-intersection flag") {
    // Raising eta above the lowest vertex flips the flag.
    const Landscape L = preset("a");
    const auto s = build_all({0.3, 1.75}, L);
    const auto& o = s.curves.at(0);
    OmegaOptions opts;
    opts.eta = o.min_n + 1e-3;
    const auto flagged = build_omega(o.source, {0.3, 1.75}, L, opts);
    CHECK(flagged.intersects_E);
    CHECK_FALSE(o.intersects_E);
}

TEST_CASE("omega csv") {
    const Landscape L = preset("a");
    const auto o = build_all({0.3, 1.75}, L).curves.at(0);
    std::ostringstream os;
    write_omega_csv(os, o);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "u,n,kind,anchor_u,anchor_n,dose");
    std::getline(is, line);
    CHECK(line.find("forward_orbit") != std::string::npos);
    std::size_t rows = 1;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == o.points.size());
}
