#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "evoctl/controllable_sets.hpp"

namespace evoctl {

/// Replayable failure: start state, schedule and the time/place things went wrong.
struct Counterexample {
    State start;
    Schedule schedule;
    double time = 0.0;
    State at;
    std::string detail;
};

struct VerificationReport {
    std::string property;
    std::size_t samples = 0;
    std::size_t violations = 0;
    /// Samples not counted (e.g. curative starts, pairs whose backward orbit left the window).
    std::size_t skipped = 0;
    bool pass = true;
    /// Violations are expected here and do not fail the report.
    bool informative = false;
    std::vector<Counterexample> counterexamples;
    std::map<std::string, double> tolerances;
    std::map<std::string, double> stats;
    std::uint64_t seed = 0;

    void add_violation(Counterexample c, std::size_t keep = 20);
};

nlohmann::json to_json(const Schedule& s);
nlohmann::json to_json(const VerificationReport& r);

/// Generator for one task; tasks seeded from (seed, stream, index) are independent of evaluation order.
std::mt19937_64 task_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware concurrency).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, unsigned threads = 0);

struct ScheduleSampler {
    int min_switches = 1;
    int max_switches = 20;
    double min_duration = 0.1;
    double max_duration = 50.0;
};

/// Piecewise-constant schedule with uniform switch count, log-uniform durations and uniform doses in A.
/// The last dose is held after the final piece.
Schedule random_schedule(std::mt19937_64& rng, const DoseRange& A, const ScheduleSampler& s = {});

/// Uniform point strictly inside the curve (rejection sampling in its bounding box).
State sample_inside(std::mt19937_64& rng, const OmegaCurve& omega);

struct AngleOptions {
    Window window;
    std::size_t samples = 10000;
    /// Points with |n - h*(u)| <= band are excluded.
    double band = 1e-3;
    /// Doses are drawn from [0, dose_hi]; 0 means L.max_dose.
    double dose_hi = 0.0;
    std::uint64_t seed = 1;
};
VerificationReport verify_angle_condition(const Landscape& L, const AngleOptions& opts = {});

/// Integration settings used by the long-horizon checks.
StepControl long_run_step();

struct InvarianceOptions {
    std::size_t points = 100;
    std::size_t schedules = 50;
    double horizon = 0.0;  // 0 means 500 / epsilon
    double dilation = 1e-6;
    ScheduleSampler sampler;
    StepControl step = long_run_step();
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

/// First accepted step (from x0 under sched) that lies farther than `dilation` outside omega.
std::optional<Counterexample> first_escape(const OmegaCurve& omega, const Landscape& L, const State& x0,
                                           const Schedule& sched, double horizon, double dilation,
                                           const StepControl& step = long_run_step());

VerificationReport verify_forward_invariance(const OmegaCurve& omega, const Landscape& L,
                                             const InvarianceOptions& opts = {});

struct SteeringOptions {
    OmegaOptions orbit;
    /// Distances to the pivot node at which the switch is tried, largest first.
    std::vector<double> node_radii{1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    /// Arc lengths before the stable-manifold crossing at which the switch is tried.
    std::vector<double> saddle_offsets{1e-3, 1e-4, 1e-5, 1e-6};
    /// Backward integration time for the target's orbit.
    double backward_time = 1e4;
    double max_time = 1e5;
    double tol_target = 1e-3;
};

struct SteeringResult {
    bool reached = false;
    /// False when the target's backward orbit left the window before leaving the curve.
    bool qualifying = true;
    Schedule schedule;
    State end;
    double error = 0.0;
    std::string detail;
};

/// Two-phase steering inside enc omega: main dose toward the pivot, alternate dose until the backward
/// main-dose orbit of x1 is met, then main dose for the remaining time. Verified by re-integration.
SteeringResult steer(const OmegaCurve& omega, const Landscape& L, const State& x0, const State& x1,
                     const SteeringOptions& opts = {});

struct ControllabilityOptions {
    std::size_t pairs = 50;
    SteeringOptions steering;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};
VerificationReport verify_controllability(const OmegaCurve& omega, const Landscape& L,
                                          const ControllabilityOptions& opts = {});

struct NoReturnOptions {
    /// Number of exited trajectories to collect.
    std::size_t exits = 100;
    std::size_t max_attempts = 5000;
    double exit_horizon = 2e4;
    double horizon = 2e4;
    /// Distance outside that counts as exited, and inside that counts as re-entered.
    double exit_tol = 1e-6;
    double reentry_tol = 1e-6;
    ScheduleSampler sampler;
    StepControl step = long_run_step();
    std::uint64_t seed = 1;
    unsigned threads = 0;
};
VerificationReport verify_no_return(const OmegaCurve& omega, const Landscape& L, const NoReturnOptions& opts = {});

struct CurativeOptions {
    GridSpec u{{-0.5, 1.5}, 41};
    GridSpec n{{0.0, 1.2}, 25};
    /// Random schedules tried after the constant extremal doses.
    std::size_t schedule_budget = 10;
    double horizon = 5000.0;
    double eta = kEta;
    ScheduleSampler sampler;
    StepControl step = long_run_step();
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

/// Lower-bound indicator of the curative set on a grid; unmarked points are unknown, not certified.
struct CurativeField {
    GridSpec u;
    GridSpec n;
    /// Row-major over (n, u): mark[j * u.points + i] for trait node i and population node j.
    std::vector<std::uint8_t> curative;

    bool at(std::size_t i, std::size_t j) const { return curative[j * u.points + i] != 0; }
    double fraction() const;
};
CurativeField estimate_curative_set(const Landscape& L, const DoseRange& A, const CurativeOptions& opts = {});
/// CSV with columns u,n,curative.
void write_curative_csv(std::ostream& os, const CurativeField& f);

struct LimitOptions {
    std::size_t points = 100;
    /// Random schedules per start.
    std::size_t schedules = 1;
    double horizon = 0.0;  // 0 means 500 / epsilon
    Window window;
    double tolerance = 1e-2;
    /// Fraction of the horizon at the end over which the distance must stay below tolerance.
    double tail = 0.2;
    double eta = kEta;
    ScheduleSampler sampler;
    StepControl step = long_run_step();
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

/// Distance to the nearest closed enclosed region (zero inside any curve).
double distance_to_omegas(const State& x, const std::vector<OmegaCurve>& omegas);

VerificationReport verify_limit_sets(const Landscape& L, const DoseRange& A, const std::vector<OmegaCurve>& omegas,
                                     const LimitOptions& opts = {});

/// Membership in B_delta using h(u, a+ + delta) and h(u, a- - delta) as stand-ins for the perturbed graphs,
/// widened by collar * epsilon.
bool b_delta_contains(const State& x, double delta, const Landscape& L, const DoseRange& A, double collar = 5.0);

struct BDeltaOptions {
    std::size_t points = 100;
    double delta = 0.0;
    double collar = 5.0;
    double horizon = 3000.0;
    Window window;
    ScheduleSampler sampler;
    StepControl step = long_run_step();
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

/// Starts drawn from B_delta (without collar) under random schedules must stay in B_delta up to the collar.
VerificationReport verify_b_delta_invariance(const Landscape& L, const DoseRange& A, const BDeltaOptions& opts = {});

struct SweepEntry {
    double parameter = 0.0;
    DoseRange range;
    bool hyperbolic = true;
    /// Set when the range was skipped (non-hyperbolic or construction failure).
    std::string skipped;
    std::vector<Component> components;
    std::vector<OmegaCurve> curves;
};

struct MergeEvent {
    /// Adjacent parameters bracketing the merge.
    double before = 0.0;
    double after = 0.0;
    /// Indices of components at `before` that fall into one component at `after`.
    std::vector<std::size_t> colliding;
    std::size_t into = 0;
};

struct SweepResult {
    std::vector<SweepEntry> entries;
    std::vector<MergeEvent> merges;
};

/// Components and curves for A^delta = [a- - delta, a+ + delta] at each delta (sorted ascending).
SweepResult bifurcation_sweep(const Landscape& L, const DoseRange& base, std::vector<double> deltas,
                              const OmegaOptions& opts = {});
/// Same for an explicit increasing family of ranges; entry parameters are the list positions.
SweepResult sweep_ranges(const Landscape& L, const std::vector<DoseRange>& ranges, const OmegaOptions& opts = {});

/// Vertices of curves at entry k not strictly inside some curve at a later entry, summed over all pairs.
std::size_t nesting_violations(const SweepResult& s, double tol = 1e-9);

nlohmann::json to_json(const SweepResult& s);

}  // namespace evoctl
