#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "evoctl/equilibria.hpp"
#include "evoctl/roots.hpp"

using namespace evoctl;

namespace {

double dh_fd(double u, double a, const Landscape& L) {
    const double d = 1e-6;
    return (eval_h(u + d, a, L) - eval_h(u - d, a, L)) / (2 * d);
}

// Scan a for sign changes of dh/du at fixed u; returns every root found.
std::vector<double> scan_a(double u, const Landscape& L, double lo, double hi, int n = 4000) {
    std::vector<double> roots;
    double prev = dh_fd(u, lo, L);
    for (int i = 1; i <= n; ++i) {
        const double a = lo + (hi - lo) * i / n;
        const double cur = dh_fd(u, a, L);
        if (sign_change(prev, cur))
            roots.push_back(bisect([&](double x) { return dh_fd(u, x, L); }, a - (hi - lo) / n, a, 1e-13));
        prev = cur;
    }
    return roots;
}

}  // namespace

TEST_CASE("a* matches a dose scan of dh/du") {
    const Landscape L = preset("a");
    for (double u : {0.125, 0.14, 0.16, 0.18}) {
        const auto r = scan_a(u, L, 0.0, L.max_dose);
        REQUIRE(r.size() == 1);
        CHECK(a_star(u, L) == doctest::Approx(r[0]).epsilon(1e-7));
    }
}

TEST_CASE("graph property: exactly one equilibrium dose per trait") {
    for (const auto& name : preset_names()) {
        const Landscape L = preset(name);
        for (double u = -0.4; u < 1.4; u += 0.1) {
            const double a = a_star(u, L);
            const auto r = scan_a(u, L, a - 2.0, a + 2.0, 400);
            INFO(name << " u=" << u);
            CHECK(r.size() == 1);
        }
    }
}

TEST_CASE("constant interaction simplifications") {
    const Landscape L = preset("a");
    for (double u : {-0.3, 0.0, 0.2, 0.7, 1.2}) {
        CHECK(a_star(u, L) == doctest::Approx(L.b0(u).d1 / L.b1(u).d1).epsilon(1e-13));
        CHECK(h_star(u, L) == doctest::Approx(eval_b0(u, L) - a_star(u, L) * eval_b1(u, L)).epsilon(1e-12));
    }
    const double uc = bisect([&](double u) { return L.b0(u).d1; }, 0.0, 0.2, 1e-15);
    CHECK(std::abs(a_star(uc, L)) < 1e-12);
}

TEST_CASE("equilibria are zeros of the reduced field") {
    for (const auto& name : preset_names()) {
        const Landscape L = preset(name);
        for (double u = -0.45; u < 1.45; u += 0.05) {
            const double a = a_star(u, L);
            const Vec2 v = f_reduced(equilibrium_state(u, L), a, L);
            CHECK(std::abs(v.u) < 1e-10);
            CHECK(std::abs(v.n) < 1e-10);
            CHECK(h_star(u, L) == doctest::Approx(eval_h(u, a, L)).epsilon(1e-10));
        }
    }
}

TEST_CASE("analytic a*' agrees with the curvature form and with finite differences") {
    for (const auto& name : preset_names()) {
        Landscape L = preset(name);
        if (name == "b") L.interaction = ExponentialInteraction{1.0, 0.3};
        for (double u = -0.45; u < 1.45; u += 0.07) {
            const double d = 1e-5;
            const double fd = (a_star(u + d, L) - a_star(u - d, L)) / (2 * d);
            const double ap = a_star_prime(u, L);
            CHECK(ap == doctest::Approx(a_star_prime_via_curvature(u, L)).epsilon(1e-9).scale(1e-9));
            CHECK(ap == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
            // Fourth-order stencil for a*''.
            auto ap_at = [&](double x) { return a_star_prime(x, L); };
            const double e = 1e-3;
            const double fd2 = (-ap_at(u + 2 * e) + 8 * ap_at(u + e) - 8 * ap_at(u - e) + ap_at(u - 2 * e)) / (12 * e);
            CHECK(a_star_second(u, L) == doctest::Approx(fd2).epsilon(1e-5).scale(1e-5));
        }
    }
}

TEST_CASE("closed-form eigenvalues match the finite-difference Jacobian") {
    std::mt19937_64 rng(17);
    int n = 0;
    for (const auto& name : preset_names()) {
        Landscape L = preset(name);
        L.rate = SaturatingRate{0.7};
        std::uniform_real_distribution<double> du(-0.5, 1.5);
        for (int i = 0; i < 4000 && n < 400; ++i) {
            const double u = du(rng);
            const double hs = h_star(u, L);
            const double a = a_star(u, L);
            if (!(hs > 0.02) || a < 0.0 || a > L.max_dose || std::abs(a_star_prime(u, L)) < 1e-3) continue;
            ++n;
            const auto sp = jacobian_eigs(u, L);
            auto [l1, l2] = eigenvalues(jacobian_fd(equilibrium_state(u, L), a_star(u, L), L));
            const double lo = std::min(sp.fast, sp.slow), hi = std::max(sp.fast, sp.slow);
            CHECK(l1 == doctest::Approx(lo).epsilon(1e-6));
            CHECK(l2 == doctest::Approx(hi).epsilon(1e-6));
            CHECK(sp.fast < 0.0);
            if (classify(u, L) == EqLabel::stable_node) CHECK(sp.slow < 0.0);
            else CHECK(sp.slow > 0.0);
            auto [m1, m2] = eigenvalues(equilibrium_jacobian(u, L));
            CHECK(m1 == doctest::Approx(lo).epsilon(1e-12));
            CHECK(m2 == doctest::Approx(hi).epsilon(1e-12));
        }
    }
    CHECK(n >= 100);
}

TEST_CASE("eigenvectors") {
    const Matrix2 m{-2.0, 1.0, 0.0, 0.5};
    const auto [l1, l2] = eigenvalues(m);
    CHECK(l1 == -2.0);
    CHECK(l2 == 0.5);
    for (double l : {l1, l2}) {
        const Vec2 v = eigenvector(m, l);
        CHECK(norm(v) == doctest::Approx(1.0));
        CHECK(m.a11 * v.u + m.a12 * v.n == doctest::Approx(l * v.u).scale(1e-14));
        CHECK(m.a21 * v.u + m.a22 * v.n == doctest::Approx(l * v.n).scale(1e-14));
    }
}

TEST_CASE("example (a) over [0.3, 1.75]: one component of stable nodes") {
    const Landscape L = preset("a");
    const DoseRange A{0.3, 1.75};
    const auto comps = components(A, L);
    REQUIRE(comps.size() == 1);
    CHECK(comps[0].type == 1);
    CHECK(comps[0].a_left == 0.3);
    CHECK(comps[0].a_right == 1.75);
    CHECK(a_star(comps[0].u.lo, L) == doctest::Approx(0.3).epsilon(1e-10));
    CHECK(a_star(comps[0].u.hi, L) == doctest::Approx(1.75).epsilon(1e-10));
    for (double u = comps[0].u.lo; u <= comps[0].u.hi; u += 1e-3) CHECK(classify(u, L) == EqLabel::stable_node);
}

TEST_CASE("example (c) over [0.15, 0.8]: two arcs of type 1 and 3") {
    const Landscape L = preset("c");
    const DoseRange A{0.15, 0.8};
    CHECK(is_hyperbolic(A, L).hyperbolic);
    const auto comps = components(A, L);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].type == 1);
    CHECK(comps[1].type == 3);
    CHECK(comps[0].u.hi < comps[1].u.lo);
    // The arcs are separated by a stretch with a* above the range.
    const double gap = 0.5 * (comps[0].u.hi + comps[1].u.lo);
    CHECK(a_star(gap, L) > A.hi);
    for (const auto& c : comps) {
        CHECK(A.contains(a_star(0.5 * (c.u.lo + c.u.hi), L)));
        CHECK(c.left.n > 0.0);
        CHECK(c.right.n > 0.0);
        CHECK(c.left.n == doctest::Approx(h_star(c.u.lo, L)).epsilon(1e-8));
    }
}

TEST_CASE("example (d) over [0.1, 0.45]: three homogeneous components") {
    const Landscape L = preset("d");
    const auto comps = components({0.1, 0.45}, L);
    REQUIRE(comps.size() == 3);
    for (const auto& c : comps) {
        CHECK(c.type != 3);
        const EqLabel want = c.type == 1 ? EqLabel::stable_node : EqLabel::saddle;
        for (int i = 1; i < 20; ++i) CHECK(classify(c.u.lo + (c.u.hi - c.u.lo) * i / 20, L) == want);
    }
    for (std::size_t i = 1; i < comps.size(); ++i) CHECK(comps[i - 1].u.hi < comps[i].u.lo);
}

TEST_CASE("component union matches the feasible set on a fine grid") {
    const Landscape L = preset("c");
    const DoseRange A{0.15, 0.8};
    const auto comps = components(A, L);
    for (double u = -0.5; u <= 1.5; u += 1.3e-4) {
        bool in = false;
        for (const auto& c : comps) in = in || (u >= c.u.lo && u <= c.u.hi);
        const double a = a_star(u, L);
        if (std::abs(a - A.lo) < 1e-6 || std::abs(a - A.hi) < 1e-6) continue;
        CHECK(in == A.contains(a));
    }
}

TEST_CASE("folds of example (c)") {
    const Landscape L = preset("c");
    const auto folds = fold_points(L);
    REQUIRE(folds.size() == 2);
    int fold_labels = 0;
    for (double uf : folds) {
        CHECK(std::abs(a_star_prime(uf, L)) < 1e-9);
        CHECK(classify(uf, L) == EqLabel::fold_candidate);
        CHECK(std::abs(jacobian_eigs(uf, L).slow) < 1e-8);
        ++fold_labels;
    }
    const auto br = build_branch(L, {{-0.5, 1.5}, 2000});
    CHECK(br.u.size() == 2000);
    for (std::size_t i = 0; i < br.u.size(); ++i) {
        if (br.label[i] == EqLabel::stable_node) CHECK(br.a_prime[i] > 0.0);
        if (br.label[i] == EqLabel::saddle) CHECK(br.a_prime[i] < 0.0);
    }
    CHECK(fold_labels == 2);

    // Fold at the interior minimum of a*: a range touching it is not hyperbolic.
    const double uf = folds[1];
    const auto rep = is_hyperbolic({a_star(uf, L), 0.8}, L);
    CHECK_FALSE(rep.hyperbolic);
    REQUIRE(rep.witnesses.size() == 1);
    CHECK(rep.witnesses[0] == doctest::Approx(uf).epsilon(1e-6));
    CHECK_THROWS_AS(components({a_star(uf, L), 0.8}, L), EquilibriumError);
}

TEST_CASE("two components merge when the range crosses a generic fold value") {
    const Landscape L = preset("c");
    const double uf = fold_points(L)[1];
    const double af = a_star(uf, L);
    CHECK(a_star_second(uf, L) > 0.0);
    const auto above = components({af + 0.02, 0.8}, L);
    const auto below = components({af - 0.02, 0.8}, L);
    CHECK(above.size() == below.size() + 1);
}

TEST_CASE("degenerate single-dose range") {
    const Landscape L = preset("a");
    const double a0 = 1.0;
    CHECK(is_hyperbolic({a0, a0}, L).hyperbolic);
}

TEST_CASE("monotone a* has no folds") {
    Landscape L = preset("a");
    // b0 with a single peak and b1 sigmoid: restrict to a window where a* is monotone.
    BranchOptions o;
    o.grid = {{0.0, 0.4}, 400};
    CHECK(fold_points(L, o).empty());
}

TEST_CASE("empty intersection with the range gives no components") {
    const Landscape L = preset("a");
    CHECK(components({10.0, 11.0}, L).empty());
}

TEST_CASE("window too small and coarse grid are reported") {
    const Landscape L = preset("c");
    BranchOptions o;
    o.grid = {{0.2, 1.0}, 500};
    try {
        components({0.15, 0.8}, L, o);
        FAIL("expected an error");
    } catch (const EquilibriumError& e) {
        CHECK(e.kind() == EquilibriumError::Kind::window_too_small);
    }
    // A two-cell grid hides the thin feasible stretch between a* > 0.8 and a* < 0.5.
    o.grid = {{0.4, 0.7}, 3};
    try {
        components({0.5, 0.8}, L, o);
        FAIL("expected an error");
    } catch (const EquilibriumError& e) {
        CHECK(e.kind() == EquilibriumError::Kind::grid_too_coarse);
    }
}

TEST_CASE("H3 violation is an error") {
    const Landscape L = preset("flat-efficacy");
    CHECK_THROWS_AS(a_star(0.3, L), EquilibriumError);
}

TEST_CASE("branch csv") {
    const Landscape L = preset("a");
    std::ostringstream os;
    write_branch_csv(os, build_branch(L, {{0.0, 0.2}, 3}));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "u,a_star,h_star,a_star_prime,label");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 3);
}
