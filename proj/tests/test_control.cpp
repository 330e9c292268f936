#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "evoctl/control.hpp"

using namespace evoctl;

namespace {

const DoseRange kA{0.0, 0.38};

const Landscape& land() {
    static const Landscape L = preset("d");
    return L;
}

const OmegaCurve& middle() {
    static const OmegaCurve o = curve_containing(0.26, kA, land());
    return o;
}

const OptimalRun& base_run() {
    static const OptimalRun r = fbsm_solve({0.28586, 0.32}, kA, land());
    return r;
}

}  // namespace

TEST_CASE("zero multiplier gives zero dose") {
    const Landscape& L = land();
    ControlOptions o;
    o.T = 10.0;
    o.fixed_multiplier = 0.0;
    const DoseRange A{0.0, L.max_dose};
    const OptimalRun r = fbsm_solve({0.28586, 0.32}, A, L, o);
    REQUIRE(r.converged);
    for (std::size_t i = 0; i < r.t.size(); ++i) {
        CHECK(r.dose[i] == 0.0);
        CHECK(r.lambda[i].u == 0.0);
        CHECK(r.lambda[i].n == 0.0);
        CHECK(r.switching[i] == 1.0);
    }
    CHECK(r.objective == 0.0);
}

TEST_CASE("curve containing the start is the type-2 set") {
    CHECK(middle().type == 2);
    CHECK(middle().encloses({0.28586, 0.32}));
    CHECK_THROWS_AS(curve_containing(0.5, kA, land()), OmegaError);
}

TEST_CASE("adjoint matches finite-difference sensitivities") {
    const Landscape& L = land();
    const OptimalRun& r = base_run();
    REQUIRE(r.converged);
    const double nu = r.multiplier;
    REQUIRE(nu > 0.0);
    const std::size_t N = r.t.size();
    const double h = 1e-6;
    for (std::size_t i : {std::size_t{0}, N / 5, N / 2, 3 * N / 4, N - 50}) {
        const std::vector<double> t(r.t.begin() + static_cast<std::ptrdiff_t>(i), r.t.end());
        const std::vector<double> d(r.dose.begin() + static_cast<std::ptrdiff_t>(i), r.dose.end());
        auto endpoint = [&](State x) { return nu * integrate_nodes(x, t, d, r.system, L).back().n; };
        const State x = r.x[i];
        const double gu = (endpoint({x.u + h, x.n}) - endpoint({x.u - h, x.n})) / (2 * h);
        const double gn = (endpoint({x.u, x.n + h}) - endpoint({x.u, x.n - h})) / (2 * h);
        const double scale = std::hypot(gu, gn);
        CAPTURE(i);
        CHECK(std::abs(r.lambda[i].u - gu) < 1e-4 * scale);
        CHECK(std::abs(r.lambda[i].n - gn) < 1e-4 * scale);
    }
}

TEST_CASE("converged run: periodic, bang-bang, admissible") {
    const OptimalRun& r = base_run();
    REQUIRE(r.converged);
    CHECK(r.failure.empty());
    CHECK(std::abs(r.residual) < 1e-4);
    CHECK(std::abs(r.end().n - r.start().n) < 1e-4);
    CHECK(r.singular_fraction < 0.1);
    CHECK(r.objective >= 0.0);
    std::size_t interior = 0;
    for (double a : r.dose) {
        CHECK(kA.contains(a, 1e-15));
        if (a != kA.lo && a != kA.hi) ++interior;
    }
    CHECK(interior < r.dose.size() / 10);
    CHECK(r.T == 30.0);
    CHECK(r.t.back() == doctest::Approx(30.0));
}

TEST_CASE("penalised objective never increases within a sweep") {
    const OptimalRun& r = base_run();
    std::size_t steps = 0;
    for (std::size_t i = 1; i < r.history.size(); ++i) {
        if (r.history[i].shot != r.history[i - 1].shot) continue;
        ++steps;
        CHECK(r.history[i].augmented <= r.history[i - 1].augmented);
    }
    CHECK(steps > 10);
}

TEST_CASE("one cycle reproduces the run") {
    const OptimalRun& r = base_run();
    const CycleReport c = run_cycles(r, 1, land());
    REQUIRE(c.x.size() == r.x.size());
    for (std::size_t i = 0; i < c.x.size(); ++i) {
        CHECK(c.x[i] == r.x[i]);
        CHECK(c.t[i] == r.t[i]);
    }
    REQUIRE(c.return_error.size() == 1);
    CHECK(c.return_error[0] == doctest::Approx(std::abs(r.residual)).epsilon(1e-12));
    CHECK(run_cycles(r, 0, land()).t.empty());
}

TEST_CASE("schedule export merges equal doses") {
    const OptimalRun& r = base_run();
    const Schedule s = r.schedule();
    CHECK(s.total_duration() == doctest::Approx(r.T));
    for (std::size_t k = 1; k < s.pieces.size(); ++k) CHECK(s.pieces[k].dose != s.pieces[k - 1].dose);
    CHECK(s.pieces.size() < r.t.size() / 10);
}

TEST_CASE("exit classification of synthetic paths") {
    const OmegaCurve& o = middle();
    const double n = 0.38;
    std::vector<double> t;
    std::vector<State> left, right, stay;
    for (int k = 0; k <= 100; ++k) {
        t.push_back(k);
        left.push_back({0.26 - 0.001 * k, n});
        right.push_back({0.26 + 0.001 * k, n});
        stay.push_back({0.26, n + 0.0001 * k});
    }
    const ExitEvent l = classify_exit(t, left, o), r = classify_exit(t, right, o), s = classify_exit(t, stay, o);
    CHECK(l.side == ExitSide::left);
    CHECK(r.side == ExitSide::right);
    CHECK(s.side == ExitSide::none);
    CHECK(l.at.u < o.source.u.lo + 1e-3);
    CHECK(r.at.u > o.source.u.hi - 1e-3);
    CHECK(to_string(ExitSide::left) == "left");
}

TEST_CASE("left transition settles into a dose/rest cycle") {
    const Landscape& L = land();
    ExperimentOptions eo;
    eo.periods_after_exit = 8;
    const PeriodicExperiment e = run_experiment({0.27, 0.32}, kA, L, middle(), eo);
    CHECK(e.exit == ExitSide::left);
    CHECK_FALSE(e.failed);
    const OptimalRun& last = e.periods.back();
    REQUIRE(last.converged);
    // settled in the left node-type set
    const OmegaCurve left = curve_containing(0.04, kA, L);
    CHECK(left.type == 1);
    CHECK(left.index.within(last.start(), 1e-6));
    CHECK(left.index.within(last.end(), 1e-6));
    bool dosing = false, resting = false;
    for (double a : last.dose) {
        dosing = dosing || a == kA.hi;
        resting = resting || a == kA.lo;
    }
    CHECK(dosing);
    CHECK(resting);
    const CycleReport c = run_cycles(last, 10, L);
    CHECK(c.return_error.size() == 10);
    CHECK(c.max_return_error < 1e-3);
    for (std::size_t k = 0; k + 1 < e.periods.size(); ++k)
        CHECK(e.periods[k + 1].start() == e.periods[k].end());
}

TEST_CASE("right transition fails and falls back to the maximal dose") {
    const Landscape& L = land();
    const PeriodicExperiment e = run_experiment({0.295, 0.32}, kA, L, middle());
    CHECK(e.exit == ExitSide::right);
    REQUIRE(e.failed);
    CHECK(e.failure == "infeasible");
    REQUIRE(!e.continuation.x.empty());
    for (double a : e.continuation.dose) CHECK(a == L.max_dose);
    CHECK(e.continuation.back().u > middle().source.u.hi);
    CHECK(exit_side({0.295, 0.32}, kA, L, middle()) == ExitSide::right);
}

TEST_CASE("split point near 0.28586 for a searched horizon") {
    SplitOptions so;
    so.T_values = {21.0};
    so.epsilon_values = {0.01};
    so.u_bracket = {0.2855, 0.2865};
    const auto r = split_search(land(), kA, so);
    REQUIRE(r.size() == 1);
    REQUIRE(r[0].bracketed);
    CHECK(r[0].u_b - r[0].u_a <= so.u_tol);
    CHECK(std::abs(r[0].split() - 0.28586) < 1e-3);
    CHECK(r[0].side_a == ExitSide::left);
    CHECK(r[0].side_b == ExitSide::right);
}

TEST_CASE("run export") {
    const OptimalRun& r = base_run();
    std::ostringstream os;
    write_run_csv(os, r);
    const std::string s = os.str();
    CHECK(s.rfind("t,u,n,alpha,lambda1,lambda2\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')) == r.t.size() + 1);
    const auto j = to_json(r);
    CHECK(j["converged"] == true);
    CHECK(j["history"].size() == r.history.size());
    CHECK(j.contains("hamiltonian"));
    CHECK(j["exit"] == "none");
}

TEST_CASE("bad inputs") {
    ControlOptions o;
    o.T = 0.0;
    CHECK_THROWS_AS(fbsm_solve({0.28, 0.32}, kA, land(), o), DynamicsError);
    CHECK_THROWS_AS(fbsm_solve({0.28, 0.32}, {0.5, 0.1}, land()), DynamicsError);
}
