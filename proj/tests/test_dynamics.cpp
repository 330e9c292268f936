#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "evoctl/dynamics.hpp"
#include "evoctl/equilibria.hpp"
#include "evoctl/roots.hpp"

using namespace evoctl;

namespace {

// Fixed-step RK4 on the reduced system, independent of the adaptive integrator.
State rk4(State x, double a, const Landscape& L, double T, int steps) {
    const double h = T / steps;
    for (int i = 0; i < steps; ++i) {
        const Vec2 k1 = f_reduced(x, a, L);
        const Vec2 k2 = f_reduced(x + (h / 2) * k1, a, L);
        const Vec2 k3 = f_reduced(x + (h / 2) * k2, a, L);
        const Vec2 k4 = f_reduced(x + h * k3, a, L);
        x = x + (h / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

double fd_db0(double u, const Landscape& L) {
    const double d = 1e-5;
    return (eval_b0(u + d, L) - eval_b0(u - d, L)) / (2 * d);
}

}  // namespace

TEST_CASE("drift vanishes on the extinction line") {
    const Landscape L = preset("a");
    for (double u : {-0.4, 0.1, 0.9}) {
        CHECK(f0({u, 0.0}, L) == Vec2{0.0, 0.0});
        CHECK(f1({u, 0.0}, L) == Vec2{0.0, 0.0});
    }
}

TEST_CASE("drift at the untreated equilibrium is zero") {
    // Example (a) with c = 1: the untreated equilibrium sits where b0' = 0 with n = b0(u).
    const Landscape L = preset("a");
    const double u = bisect([&](double x) { return fd_db0(x, L); }, 0.0, 0.2, 1e-12);
    const State x{u, eval_b0(u, L)};
    const Vec2 v = f0(x, L);
    CHECK(std::abs(v.u) < 1e-9);
    CHECK(std::abs(v.n) < 1e-12);
    CHECK(a_star(u, L) == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
}

TEST_CASE("f0 matches a finite-difference evaluation") {
    const Landscape L = preset("a");
    const State x{0.3, 0.5};
    const Vec2 v = f0(x, L);
    CHECK(v.u == doctest::Approx(L.epsilon * L.k(0.5) * (fd_db0(0.3, L) - 0.0)).epsilon(1e-8));
    CHECK(v.n == doctest::Approx(0.5 * (eval_b0(0.3, L) - 0.5)).epsilon(1e-14));
}

TEST_CASE("treatment pushes the trait up and the population down") {
    for (const auto& name : preset_names()) {
        const Landscape L = preset(name);
        for (double u = -0.5; u <= 1.5; u += 0.05)
            for (double n : {0.1, 0.5, 1.0}) {
                const Vec2 g = f1({u, n}, L);
                CHECK(g.u > 0.0);
                CHECK(g.n < 0.0);
            }
    }
}

TEST_CASE("the vector field is affine in the dose") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> du(-0.5, 1.5), dn(0.0, 1.2), da(0.0, 1.75);
    for (const auto& name : preset_names()) {
        const Landscape L = preset(name);
        for (int i = 0; i < 200; ++i) {
            const State x{du(rng), dn(rng)};
            const double a = da(rng);
            const Vec2 lhs = f_full(x, a, L);
            const Vec2 rhs = f0(x, L) + a * f1(x, L);
            CHECK(lhs.u == doctest::Approx(rhs.u).epsilon(1e-12).scale(1e-15));
            CHECK(lhs.n == doctest::Approx(rhs.n).epsilon(1e-12).scale(1e-15));
        }
    }
}

TEST_CASE("full and reduced fields differ by the scalar k(n)") {
    Landscape L = preset("c");
    L.rate = SaturatingRate{0.4};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> du(-0.5, 1.5), dn(0.01, 1.2), da(0.0, 0.7);
    for (int i = 0; i < 300; ++i) {
        const State x{du(rng), dn(rng)};
        const double a = da(rng);
        const Vec2 full = f_full(x, a, L);
        const Vec2 red = f_reduced(x, a, L);
        CHECK(full.u == doctest::Approx(L.k(x.n) * red.u).epsilon(1e-12).scale(1e-15));
        CHECK(full.n == doctest::Approx(L.k(x.n) * red.n).epsilon(1e-12).scale(1e-15));
        const State on{x.u, eval_h(x.u, a, L)};
        CHECK(std::abs(f_reduced(on, a, L).n) < 1e-14);
    }
}

TEST_CASE("angle condition: cross product of two fields has the sign of n - h*") {
    const Landscape L = preset("a");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> du(-0.5, 1.5), dn(0.0, 1.2), da(0.0, 1.75);
    int checked = 0;
    for (int i = 0; i < 2000; ++i) {
        const State x{du(rng), dn(rng)};
        double a1 = da(rng), a2 = da(rng);
        if (a1 > a2) std::swap(a1, a2);
        const double cr = cross(f_full(x, a1, L), f_full(x, a2, L));
        const double lin = (a2 - a1) * cross(f0(x, L), f1(x, L));
        CHECK(cr == doctest::Approx(lin).epsilon(1e-9).scale(1e-14));
        if (a2 - a1 < 1e-3 || x.n < 1e-3 || std::abs(x.n - h_star(x.u, L)) < 1e-3) continue;
        ++checked;
        CHECK((cr > 0.0) == (x.n > h_star(x.u, L)));
    }
    CHECK(checked > 1000);
}

TEST_CASE("schedule bookkeeping") {
    Schedule s{{{2.0, 0.1}, {3.0, 0.5}}, false};
    CHECK(s.total_duration() == 5.0);
    CHECK(s.dose_at(0.0) == 0.1);
    CHECK(s.dose_at(2.0) == 0.5);
    CHECK(s.dose_at(100.0) == 0.5);
    s.periodic = true;
    CHECK(s.dose_at(6.0) == 0.1);
    CHECK(s.dose_at(8.5) == 0.5);
    CHECK_NOTHROW(s.validate({0.0, 1.0}));
    CHECK_THROWS_AS(s.validate({0.2, 1.0}), DynamicsError);
    Schedule neg{{{-1.0, 0.1}}, false};
    CHECK_THROWS_AS(neg.validate({0.0, 1.0}), DynamicsError);
    CHECK_THROWS_AS(Schedule{}.validate({0.0, 1.0}), DynamicsError);
}

TEST_CASE("an equilibrium stays put and the extinction line is invariant") {
    const Landscape L = preset("a");
    const double u = 0.15;
    const double a = a_star(u, L);
    const State x = equilibrium_state(u, L);
    const auto tr = flow(x, Schedule::constant(a), System::reduced, L, 200.0);
    CHECK(distance(tr.back(), x) < 1e-9);

    const auto z = flow({0.4, 0.0}, Schedule::constant(1.0), System::full, L, 100.0);
    CHECK(z.back().n == 0.0);
    CHECK(z.back().u == 0.4);
}

TEST_CASE("switch points are recorded with the incoming dose") {
    const Landscape L = preset("a");
    FlowOptions o;
    o.record_steps = false;
    const auto tr = flow({0.2, 0.8}, Schedule{{{1.0, 0.3}, {2.0, 0.9}}, false}, System::reduced, L, 4.0, o);
    REQUIRE(tr.size() == 4);
    CHECK(tr.t[0] == 0.0);
    CHECK(tr.dose[0] == 0.3);
    CHECK(tr.t[1] == doctest::Approx(1.0));
    CHECK(tr.dose[1] == 0.9);
    CHECK(tr.t[3] == doctest::Approx(4.0));
    CHECK(tr.status == FlowStatus::horizon);
}

TEST_CASE("trajectories from the untreated node converge to the node at the maximal dose") {
    const Landscape L = preset("a");
    const auto comps = components({0.3, 1.75}, L);
    REQUIRE(comps.size() == 1);
    const State from = comps[0].left, to = comps[0].right;
    const auto tr = flow(from, Schedule::constant(1.75), System::reduced, L, 30.0 / L.epsilon);
    CHECK(distance(tr.back(), to) < 1e-4);
}

TEST_CASE("adaptive flow agrees with fixed-step RK4") {
    const Landscape L = preset("c");
    const State x0{0.3, 0.6};
    FlowOptions o;
    o.step.rtol = 1e-12;
    o.step.atol = 1e-14;
    const auto tr = flow(x0, Schedule::constant(0.5), System::reduced, L, 40.0, o);
    const State ref = rk4(x0, 0.5, L, 40.0, 40000);
    CHECK(distance(tr.back(), ref) < 1e-10);
}

TEST_CASE("analytic Jacobian matches central differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-0.3, 1.3), N(0.05, 1.1), D(0.0, 1.0);
    for (const char* name : {"a", "c", "d"}) {
        Landscape L = preset(name);
        for (int rep = 0; rep < 2; ++rep) {
            if (rep == 1) L.rate = SaturatingRate{0.7};
            for (System sys : {System::reduced, System::full}) {
                for (int i = 0; i < 50; ++i) {
                    const State x{U(rng), N(rng)};
                    const double a = D(rng), h = 1e-6;
                    const Matrix2 J = jacobian(sys, x, a, L);
                    const Vec2 du = (1 / (2 * h)) * (vector_field(sys, x + Vec2{h, 0}, a, L) - vector_field(sys, x - Vec2{h, 0}, a, L));
                    const Vec2 dn = (1 / (2 * h)) * (vector_field(sys, x + Vec2{0, h}, a, L) - vector_field(sys, x - Vec2{0, h}, a, L));
                    CHECK(J.a11 == doctest::Approx(du.u).epsilon(1e-6).scale(1e-6));
                    CHECK(J.a21 == doctest::Approx(du.n).epsilon(1e-6).scale(1e-6));
                    CHECK(J.a12 == doctest::Approx(dn.u).epsilon(1e-6).scale(1e-6));
                    CHECK(J.a22 == doctest::Approx(dn.n).epsilon(1e-6).scale(1e-6));
                }
            }
        }
    }
}

TEST_CASE("stiff method agrees with fixed-step RK4") {
    const Landscape L = preset("c");
    const State x0{0.3, 0.6};
    FlowOptions o;
    o.step.method = Method::rosenbrock4;
    o.step.rtol = 1e-11;
    o.step.atol = 1e-14;
    const auto tr = flow(x0, Schedule::constant(0.5), System::reduced, L, 40.0, o);
    CHECK(distance(tr.back(), rk4(x0, 0.5, L, 40.0, 40000)) < 1e-8);
}

TEST_CASE("stiff method takes far fewer steps while settling") {
    const Landscape L = preset("a");
    const State x0{0.2, 0.9};
    const Schedule s{{{20, 0.3}, {30, 1.75}, {50, 0.8}}, false};
    FlowOptions o;
    const auto ex = flow(x0, s, System::reduced, L, 20000.0, o);
    o.step.method = Method::rosenbrock4;
    const auto st = flow(x0, s, System::reduced, L, 20000.0, o);
    CHECK(distance(ex.back(), st.back()) < 1e-7);
    // Past t = 1000 the state sits at the node; only the explicit method stays stability-limited.
    auto tail = [](const Trajectory& tr) { return std::count_if(tr.t.begin(), tr.t.end(), [](double t) { return t > 1000; }); };
    CHECK(tail(st) * 10 < tail(ex));
}

TEST_CASE("error shrinks with the tolerance") {
    const Landscape L = preset("a");
    const State x0{0.2, 0.9};
    const Schedule s{{{20, 0.3}, {30, 1.75}, {50, 0.8}}, false};
    auto run = [&](double tol) {
        FlowOptions o;
        o.step.rtol = tol;
        o.step.atol = tol * 1e-3;
        return flow(x0, s, System::reduced, L, 300.0, o).back();
    };
    const State ref = run(1e-13);
    double prev = 1.0;
    for (double tol : {1e-5, 1e-7, 1e-9, 1e-11}) {
        const double e = distance(run(tol), ref);
        INFO(tol << " " << e);
        CHECK(e < 100 * tol);
        CHECK(e < prev);
        prev = e;
    }
}

TEST_CASE("full and reduced systems trace the same orbit") {
    const Landscape L = preset("a");
    const State x0{0.25, 0.7};
    const double a = 0.9;
    FlowOptions o;
    o.step.rtol = 1e-12;
    o.step.atol = 1e-14;
    const auto red = flow(x0, Schedule::constant(a), System::reduced, L, 300.0, o);
    const auto full = flow(x0, Schedule::constant(a), System::full, L, 200.0, o);
    // Every full-system point lies close to the reduced orbit.
    for (std::size_t i = 0; i < full.size(); i += 5) {
        double best = 1e9;
        for (std::size_t j = 0; j + 1 < red.size(); ++j) {
            const Vec2 p = red.x[j], q = red.x[j + 1], d = q - p;
            const double s = std::clamp(dot(full.x[i] - p, d) / std::max(dot(d, d), 1e-300), 0.0, 1.0);
            best = std::min(best, distance(full.x[i], p + s * d));
        }
        CHECK(best < 1e-4);
    }
}

TEST_CASE("killing time") {
    const Landscape L = preset("a");
    CHECK(killing_time({0.3, 1e-9}, 1.0, L, 10.0) == 0.0);
    // High dose near u = 0 drives the population into E.
    const auto tk = killing_time({0.0, 0.5}, 1.75, L, 1e4);
    REQUIRE(tk.has_value());
    CHECK(*tk > 0.0);
    const State at = rk4({0.0, 0.5}, 1.75, L, *tk, 200000);
    CHECK(at.n == doctest::Approx(kEta).epsilon(1e-3));
    // Untreated population never dies.
    CHECK_FALSE(killing_time({0.1, 0.5}, 0.0, L, 1e3).has_value());
}

TEST_CASE("time rescaling") {
    Landscape L = preset("a");
    // Identity rate: k(n) = n, so with n constant at 1 the clock s equals t.
    Trajectory tr;
    for (int i = 0; i <= 10; ++i) {
        tr.t.push_back(i * 0.5);
        tr.x.push_back({0.0, 1.0});
        tr.dose.push_back(0.0);
    }
    auto s = rescale_time(tr, L);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(tr.t[i]));
    for (auto& x : tr.x) x.n = 0.5;
    s = rescale_time(tr, L);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(2 * tr.t[i]));
    tr.x[3].n = 0.0;
    CHECK_THROWS_AS(rescale_time(tr, L), DynamicsError);

    const auto real = flow({0.2, 0.7}, Schedule::constant(0.8), System::reduced, L, 30.0);
    const auto sr = rescale_time(real, L);
    for (std::size_t i = 1; i < sr.size(); ++i) CHECK(sr[i] > sr[i - 1]);
}

TEST_CASE("leaving the window is reported") {
    const Landscape L = preset("a");
    FlowOptions o;
    o.stop_outside = Window{{-0.5, 1.5}, {0.0, 1.2}};
    const auto tr = flow({0.1, 1.19}, Schedule::constant(0.0), System::reduced, L, -1e4, o);
    CHECK(tr.status == FlowStatus::left_window);
    CHECK(std::abs(o.stop_outside->signed_margin(tr.back())) < 1e-8);
}

TEST_CASE("csv output") {
    const Landscape L = preset("a");
    FlowOptions o;
    o.record_steps = false;
    const auto tr = flow({0.2, 0.8}, Schedule::constant(0.3), System::reduced, L, 1.0, o);
    std::ostringstream os;
    write_csv(os, tr);
    std::string first;
    std::getline(std::istringstream(os.str()) >> std::ws, first);
    CHECK(first == "t,u,n,a");
    CHECK(os.str().find("0.29999999999999999") != std::string::npos);
}
