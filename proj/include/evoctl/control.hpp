#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "evoctl/controllable_sets.hpp"

namespace evoctl {

enum class ExitSide { none, left, right };
std::string to_string(ExitSide s);

struct ControlOptions {
    double T = 30.0;
    /// Node spacing on [0, T] (rounded so the nodes divide T evenly); the dose is constant between nodes.
    double dt = 0.02;
    double tol_ctrl = 1e-4;
    /// Shooting stops once |n(T) - n(0)| is below this.
    double tol_residual = 1e-6;
    std::size_t max_iter = 200;
    /// Weight kept on the old control in the relaxed update.
    double relax = 0.5;
    std::size_t max_shoot = 200;
    /// |switching function| below this counts as singular.
    double singular_tol = 1e-6;
    System system = System::full;
    /// Fixes the multiplier instead of shooting for n(T) = n(0) (nullopt = shoot).
    std::optional<double> fixed_multiplier;
};

struct IterationRecord {
    std::size_t shot = 0;
    std::size_t iteration = 0;
    double multiplier = 0.0;
    /// int alpha dt and the penalised value int alpha dt + multiplier * n(T).
    double objective = 0.0;
    double augmented = 0.0;
    /// Mean |alpha_new - alpha_old| over the nodes.
    double change = 0.0;
    double residual = 0.0;
    /// Weight given to the bang-bang candidate in the accepted step.
    double step = 0.0;
};

struct OptimalRun {
    double T = 0.0;
    DoseRange range;
    System system = System::full;
    std::vector<double> t;
    /// dose[i] acts on [t[i], t[i+1]); the last entry repeats the previous one.
    std::vector<double> dose;
    std::vector<State> x;
    std::vector<Vec2> lambda;
    std::vector<double> switching;
    double objective = 0.0;
    double multiplier = 0.0;
    /// n(T) - n(0).
    double residual = 0.0;
    bool converged = false;
    /// Empty on success; otherwise why the solve failed (infeasible, no_convergence).
    std::string failure;
    double singular_fraction = 0.0;
    std::vector<IterationRecord> history;
    ExitSide exit = ExitSide::none;
    double exit_time = 0.0;

    const State& start() const { return x.front(); }
    const State& end() const { return x.back(); }
    /// Piecewise-constant schedule with equal consecutive doses merged.
    Schedule schedule() const;
};

/// Fixed-step RK4 states at the nodes under a per-interval dose.
std::vector<State> integrate_nodes(const State& x0, const std::vector<double>& t, const std::vector<double>& dose,
                                   System system, const Landscape& L);

/// Costate lambda' = -J(x, alpha)^T lambda backwards from lambda(T) = terminal.
std::vector<Vec2> integrate_adjoint(const std::vector<double>& t, const std::vector<State>& x,
                                    const std::vector<double>& dose, const Vec2& terminal, System system,
                                    const Landscape& L);

/// Forward-backward sweep for min int alpha dt s.t. n(T) = n(0), with H = alpha + lambda . f(x, alpha)
/// and lambda(T) = (0, nu); nu is found by shooting on n(T) - n(0).
OptimalRun fbsm_solve(const State& x0, const DoseRange& A, const Landscape& L, const ControlOptions& opts = {});

/// Side through which the trajectory leaves enc omega (nearest stable-manifold piece); none if it stays.
struct ExitEvent {
    ExitSide side = ExitSide::none;
    double time = 0.0;
    State at;
};
ExitEvent classify_exit(const std::vector<double>& t, const std::vector<State>& x, const OmegaCurve& omega,
                        double tol = 1e-6);

struct CycleReport {
    std::vector<double> t;
    std::vector<State> x;
    std::vector<double> dose;
    /// |n(kT) - n((k-1)T)| for each cycle.
    std::vector<double> return_error;
    double max_return_error = 0.0;
};

/// Repeats the run's schedule n_cycles times from its start state.
CycleReport run_cycles(const OptimalRun& run, std::size_t n_cycles, const Landscape& L);

struct ExperimentOptions {
    ControlOptions control;
    std::size_t max_periods = 60;
    /// Periods solved after the exit before stopping.
    std::size_t periods_after_exit = 20;
    /// Dose and duration of the continuation after a failed solve (dose 0 means L.max_dose).
    double fallback_dose = 0.0;
    double fallback_time = 300.0;
    double exit_tol = 1e-6;
};

/// Receding-horizon experiment: solve on [0, T], restart from x(T), repeat.
struct PeriodicExperiment {
    std::vector<OptimalRun> periods;
    ExitSide exit = ExitSide::none;
    double exit_time = 0.0;
    State exit_state;
    bool failed = false;
    std::size_t failed_period = 0;
    std::string failure;
    /// Trajectory under the fallback dose from the failure point.
    Trajectory continuation;
};
PeriodicExperiment run_experiment(const State& x0, const DoseRange& A, const Landscape& L, const OmegaCurve& omega,
                                  const ExperimentOptions& opts = {});

struct SplitOptions {
    /// Horizons and rate parameters tried; each pair rebuilds the landscape and its curves.
    std::vector<double> T_values{20.0, 21.0, 22.0, 25.0, 30.0};
    std::vector<double> epsilon_values{0.01};
    Interval u_bracket{0.27, 0.31};
    double n0 = 0.32;
    /// Bisection stops when the bracket is narrower than this.
    double u_tol = 1e-5;
    ExperimentOptions experiment;
    unsigned threads = 0;
};

/// Left/right transition boundary in u0 for one (T, epsilon).
struct SplitPoint {
    double T = 0.0;
    double epsilon = 0.0;
    bool bracketed = false;
    /// Adjacent starts classified differently after bisection.
    double u_a = 0.0;
    double u_b = 0.0;
    ExitSide side_a = ExitSide::none;
    ExitSide side_b = ExitSide::none;
    double split() const { return 0.5 * (u_a + u_b); }
    std::string detail;
};

/// Exit side of the experiment started at (u0, n0); stops at the first exit or failure.
ExitSide exit_side(const State& x0, const DoseRange& A, const Landscape& L, const OmegaCurve& omega,
                   const ExperimentOptions& opts = {});

/// Omega curve of the component whose u-interval contains u (throws OmegaError if none does).
OmegaCurve curve_containing(double u, const DoseRange& A, const Landscape& L, const OmegaOptions& opts = {});

/// For every (T, epsilon) in the search set, bisects u0 between the bracket ends when they exit on different sides.
std::vector<SplitPoint> split_search(const Landscape& L, const DoseRange& A, const SplitOptions& opts = {});

nlohmann::json to_json(const SplitPoint& s);

/// CSV with columns t,u,n,alpha,lambda1,lambda2 at 17 significant digits.
void write_run_csv(std::ostream& os, const OptimalRun& run);
void write_cycles_csv(std::ostream& os, const CycleReport& c);
/// Convergence summary (no trajectories).
nlohmann::json to_json(const OptimalRun& run);
nlohmann::json to_json(const PeriodicExperiment& e);

}  // namespace evoctl
